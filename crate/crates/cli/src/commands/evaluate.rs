use std::collections::BTreeMap;
use std::path::PathBuf;

use ccpc::metrics::{FeatureExtractor, MetricReport};
use ccpc::shapes::{read_dataset, ConditionVector, LabeledCloud, PointCloud};
use ccpc::training::dataset_hash;
use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::config::{absolute, command_args, prepare_out, required, write_manifest, write_text, MANIFEST_FILE};
use crate::error::{CliError, CliResult};

/// Compare a generated dataset against a reference dataset.
#[derive(Parser, Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    /// Generated clouds (e.g. `<sample out>/clouds`); their labels are the MSE targets.
    #[arg(long)]
    pub gen: Option<PathBuf>,
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Use at most this many clouds from each side (EMD is cubic in the point count).
    #[arg(long, default_value_t = 64)]
    pub limit: usize,
    /// Skip the dimension MSE.
    #[arg(long)]
    pub no_mse: bool,
    /// Seed of the FPD feature extractor.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

command_args!(EvaluateArgs, "evaluate");

/// Names the first pair of clouds whose point counts differ.
pub fn check_point_counts(gen: &[LabeledCloud], refs: &[LabeledCloud]) -> CliResult<()> {
    let Some(first) = gen.first() else {
        return Ok(());
    };
    let n = first.cloud.len();
    for (side, set) in [("gen", gen), ("ref", refs)] {
        if let Some((i, c)) = set.iter().enumerate().find(|(_, c)| c.cloud.len() != n) {
            return Err(CliError::usage(format!(
                "EMD needs equal point counts: gen cloud 0 has {n} points, {side} cloud {i} has {}",
                c.cloud.len()
            )));
        }
    }
    Ok(())
}

pub fn run(mut args: EvaluateArgs) -> CliResult<()> {
    let out = required(&args.out, "--out")?.to_path_buf();
    let gen_dir = absolute(required(&args.gen, "--gen")?)?;
    let ref_dir = absolute(required(&args.reference, "--ref")?)?;
    args.gen = Some(gen_dir.clone());
    args.reference = Some(ref_dir.clone());
    let seed = args.seed.unwrap_or(0);
    args.seed = Some(seed);
    if args.limit == 0 {
        return Err(CliError::usage("--limit must be positive"));
    }
    let mut gen = read_dataset(&gen_dir)?;
    let mut refs = read_dataset(&ref_dir)?;
    let mut inputs = BTreeMap::new();
    inputs.insert(gen_dir.display().to_string(), dataset_hash(&gen));
    inputs.insert(ref_dir.display().to_string(), dataset_hash(&refs));
    gen.truncate(args.limit);
    refs.truncate(args.limit);
    if gen.len() < 2 || refs.len() < 2 {
        return Err(CliError::usage("evaluation needs at least 2 clouds on each side"));
    }
    check_point_counts(&gen, &refs)?;
    let targets: Option<Vec<ConditionVector>> =
        (!args.no_mse && gen.iter().all(|c| c.label.dim() == 3)).then(|| gen.iter().map(|c| c.label.clone()).collect());
    let gen_clouds: Vec<PointCloud> = gen.into_iter().map(|c| c.cloud).collect();
    let ref_clouds: Vec<PointCloud> = refs.into_iter().map(|c| c.cloud).collect();
    let report = MetricReport::compute(&gen_clouds, targets.as_deref(), &ref_clouds, &FeatureExtractor::new(seed))?;

    prepare_out(&out, &[&gen_dir, &ref_dir])?;
    let json = serde_json::to_string_pretty(&report)?;
    write_text(&out.join("report.json"), &json)?;
    write_text(
        &out.join("report.csv"),
        &format!("{}\n{}\n", MetricReport::CSV_HEADER, report.csv_row()),
    )?;
    write_manifest(&out.join(MANIFEST_FILE), &args, inputs)?;
    println!("{json}");
    Ok(())
}
