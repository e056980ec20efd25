use std::collections::BTreeMap;
use std::path::PathBuf;

use ccpc::shapes::{generate_dataset, write_dataset, LabeledCloud, ShapeFamily};
use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::config::{command_args, prepare_out, required, write_manifest, MANIFEST_FILE};
use crate::error::{CliError, CliResult};

/// Generate a synthetic labeled dataset.
#[derive(Parser, Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataArgs {
    /// box, long_tail_box, table or lamp.
    #[arg(long, default_value = "box")]
    pub family: String,
    #[arg(long, default_value_t = 500)]
    pub count: usize,
    /// Points per cloud (family default when absent).
    #[arg(long)]
    pub n_points: Option<usize>,
    /// Full family description; overrides `family` (config files only).
    #[arg(skip)]
    pub family_spec: Option<ShapeFamily>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON args or a previous manifest.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

command_args!(GenDataArgs, "gen-data");

pub fn family_by_name(name: &str) -> CliResult<ShapeFamily> {
    match name {
        "box" => Ok(ShapeFamily::boxes()),
        "long_tail_box" => Ok(ShapeFamily::long_tailed_boxes()),
        "table" => Ok(ShapeFamily::tables()),
        "lamp" => Ok(ShapeFamily::lamps()),
        other => Err(CliError::usage(format!(
            "unknown family {other:?} (box, long_tail_box, table, lamp)"
        ))),
    }
}

/// Per-axis min, mean and max of the labels, one line per axis.
pub fn label_summary(data: &[LabeledCloud]) -> String {
    let Some(first) = data.first() else {
        return "empty dataset".into();
    };
    (0..first.label.dim())
        .map(|k| {
            let v: Vec<f64> = data.iter().map(|c| c.label[k] as f64).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            format!("label[{k}]: min {lo:.4} mean {mean:.4} max {hi:.4}")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn run(mut args: GenDataArgs) -> CliResult<()> {
    let out = required(&args.out, "--out")?.to_path_buf();
    let mut family = match &args.family_spec {
        Some(spec) => spec.clone(),
        None => family_by_name(&args.family)?,
    };
    if let Some(n) = args.n_points {
        family.n_points = n;
    }
    family.validate()?;
    let seed = args.seed.unwrap_or(0);
    args.seed = Some(seed);
    prepare_out(&out, &[])?;
    let data = generate_dataset(&family, args.count, seed)?;
    write_dataset(&out, &data)?;
    write_manifest(&out.join(MANIFEST_FILE), &args, BTreeMap::new())?;
    println!("wrote {} clouds of {} points to {}", data.len(), family.n_points, out.display());
    println!("{}", label_summary(&data));
    Ok(())
}
