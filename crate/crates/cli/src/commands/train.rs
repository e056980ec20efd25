use std::collections::BTreeMap;
use std::path::PathBuf;

use ccpc::conditioning::SamplingStrategy;
use ccpc::shapes::read_dataset;
use ccpc::training::{dataset_hash, train, LossVariant, TrainConfig};
use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::config::{absolute, command_args, prepare_out, required, write_manifest};
use crate::error::{CliError, CliResult};

/// Resolved run config written next to the training outputs.
pub const RUN_FILE: &str = "run.json";

/// Train a generator/discriminator pair on a dataset directory.
#[derive(Parser, Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Validation dataset; without it the last `val_fraction` of `dataset` is held out.
    #[arg(long)]
    pub val_dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// main, variant_a, variant_b, vanilla_cgan, regression_cgan or unconditioned.
    #[arg(long, default_value = "main")]
    pub variant: String,
    /// kde, dataset or uniform.
    #[arg(long, default_value = "kde")]
    pub strategy: String,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Complete training config; `variant` and `strategy` are ignored when present.
    #[arg(skip)]
    pub train: Option<TrainConfig>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

command_args!(TrainArgs, "train");

pub fn run(mut args: TrainArgs) -> CliResult<()> {
    let out = required(&args.out, "--out")?.to_path_buf();
    let data_dir = absolute(required(&args.dataset, "--dataset")?)?;
    let mut data = read_dataset(&data_dir)?;
    let val = match &args.val_dataset {
        Some(dir) => {
            let dir = absolute(dir)?;
            args.val_dataset = Some(dir.clone());
            read_dataset(&dir)?
        }
        None => {
            if !(0.0..1.0).contains(&args.val_fraction) {
                return Err(CliError::usage("val_fraction must be in [0, 1)"));
            }
            let held = (data.len() as f64 * args.val_fraction).ceil() as usize;
            data.split_off(data.len() - held)
        }
    };
    if data.is_empty() || val.is_empty() {
        return Err(CliError::usage(format!(
            "need nonempty training and validation sets, got {} and {}",
            data.len(),
            val.len()
        )));
    }
    args.dataset = Some(data_dir.clone());

    let mut config = match &args.train {
        Some(c) => c.clone(),
        None => {
            let variant: LossVariant = args.variant.parse()?;
            let strategy: SamplingStrategy = args.strategy.parse()?;
            TrainConfig::desk(variant, strategy, data[0].label.dim())
        }
    };
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(e) = args.eval_every {
        config.eval_every = e;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    args.seed = Some(config.seed);
    config.validate()?;
    args.train = Some(config.clone());

    prepare_out(&out, &[&data_dir])?;
    let mut inputs = BTreeMap::new();
    inputs.insert(data_dir.display().to_string(), dataset_hash(&data));
    if let Some(v) = &args.val_dataset {
        inputs.insert(v.display().to_string(), dataset_hash(&val));
    }
    write_manifest(&out.join(RUN_FILE), &args, inputs)?;
    log::info!(
        "training {} on {} clouds ({} held out) for {} epochs",
        config.variant.name(),
        data.len(),
        val.len(),
        config.epochs
    );
    let outcome = train(config, &data, &val, Some(&out))?;
    match outcome.selected {
        Some(i) => {
            let cp = &outcome.checkpoints[i];
            println!(
                "selected epoch {} (FPD {:.5}, MSE {}, score {:.5}) in {}",
                cp.epoch,
                cp.fpd,
                cp.mse.map_or("-".into(), |m| format!("{m:.4}%")),
                cp.score,
                out.display()
            );
        }
        None => println!("no checkpoint evaluated; outputs in {}", out.display()),
    }
    Ok(())
}
