use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use ccpc::conditioning::{project_labels, LabelKde, SigmaRegionModel};
use ccpc::metrics::FeatureExtractor;
use ccpc::shapes::{read_dataset, PointCloud};
use ccpc::training::{dataset_hash, evaluate_regions, region_targets};
use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::config::{absolute, command_args, prepare_out, required, write_manifest, write_text, MANIFEST_FILE};
use crate::error::{CliError, CliResult};
use crate::run::load_run;
use crate::svg::region_scatter;

const AXIS_NAMES: [&str; 3] = ["width (x)", "depth (y)", "height (z)"];

/// Classify a dataset's labels into density regions and plot them.
#[derive(Parser, Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionReportArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Fit and plot only these label coordinates, e.g. `0,2` for width and height.
    #[arg(long, value_delimiter = ',')]
    pub project: Option<Vec<usize>>,
    #[arg(long, default_value_t = ccpc::conditioning::DEFAULT_K)]
    pub k: usize,
    /// Also sample each region from `--run` and report MSE and FPD per region.
    /// Regions for this step are always fitted on the full label.
    #[arg(long)]
    pub generate: bool,
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub epoch: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub per_region: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

command_args!(RegionReportArgs, "region-report");

pub fn run(mut args: RegionReportArgs) -> CliResult<()> {
    let out = required(&args.out, "--out")?.to_path_buf();
    let data_dir = absolute(required(&args.dataset, "--dataset")?)?;
    args.dataset = Some(data_dir.clone());
    let seed = args.seed.unwrap_or(0);
    args.seed = Some(seed);
    let data = read_dataset(&data_dir)?;
    if data.len() < args.k.max(2) {
        return Err(CliError::usage(format!(
            "dataset has {} labels; the region model needs at least k = {}",
            data.len(),
            args.k
        )));
    }
    let full: Vec<Vec<f64>> = data
        .iter()
        .map(|c| c.label.as_slice().iter().map(|&v| v as f64).collect())
        .collect();
    let dims: Vec<usize> = args.project.clone().unwrap_or_else(|| (0..full[0].len()).collect());
    let rows = project_labels(&full, &dims)?;
    let kde = LabelKde::fit_rows(&rows)?;
    let model = SigmaRegionModel::fit(&kde, &rows, args.k)?;

    prepare_out(&out, &[&data_dir])?;
    let mut csv = String::from("index");
    for &k in &dims {
        write!(csv, ",y{k}").unwrap();
    }
    csv.push_str(",density,region\n");
    for (i, row) in rows.iter().enumerate() {
        write!(csv, "{i}").unwrap();
        for v in row {
            write!(csv, ",{v}").unwrap();
        }
        writeln!(csv, ",{},{}", model.densities()[i], model.regions()[i]).unwrap();
    }
    write_text(&out.join("regions.csv"), &csv)?;
    let names: Vec<String> = dims
        .iter()
        .map(|&k| AXIS_NAMES.get(k).map_or(format!("y{k}"), |n| n.to_string()))
        .collect();
    write_text(&out.join("regions.svg"), &region_scatter(&rows, model.regions(), &names))?;
    let counts = model.counts();
    for (r, n) in counts.iter().enumerate() {
        println!("region {}: {n} labels ({:.1}%)", r + 1, 100.0 * *n as f64 / rows.len() as f64);
    }

    let mut inputs = BTreeMap::new();
    inputs.insert(data_dir.display().to_string(), dataset_hash(&data));
    if args.generate {
        let run_dir = absolute(required(&args.run, "--run")?)?;
        args.run = Some(run_dir.clone());
        let loaded = load_run(&run_dir, args.epoch)?;
        args.epoch = Some(loaded.epoch);
        let full_kde = LabelKde::fit_rows(&full)?;
        let full_model = SigmaRegionModel::fit(&full_kde, &full, args.k)?;
        let targets = region_targets(&full_model, &full_kde, args.per_region, seed, true)?;
        let refs: Vec<PointCloud> = data.iter().map(|c| c.cloud.clone()).collect();
        let extractor = FeatureExtractor::new(seed);
        let evals = evaluate_regions(&loaded.generator, &targets, Some((&refs, &extractor)), 16, seed)?;
        let mut table = String::from("region,samples,mse_percent,fpd\n");
        for e in &evals {
            let fpd = e.fpd.map_or(String::new(), |f| f.to_string());
            writeln!(table, "{},{},{},{fpd}", e.region, e.samples, e.mse).unwrap();
            println!(
                "region {}: {} samples, MSE {:.4}%, FPD {}",
                e.region,
                e.samples,
                e.mse,
                e.fpd.map_or("-".into(), |f| format!("{f:.5}"))
            );
        }
        write_text(&out.join("region_eval.csv"), &table)?;
    }
    write_manifest(&out.join(MANIFEST_FILE), &args, inputs)?;
    Ok(())
}
