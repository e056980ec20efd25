//! Loading trained generators back from a `train` run directory.

use std::fs;
use std::path::Path;

use ccpc::models::{GeneratorConfig, TreeGcnGenerator};
use ccpc::shapes::{read_dataset, LabeledCloud};
use ccpc::tensor::load_checkpoint;
use ccpc::training::RunManifest;

use crate::commands::train::{TrainArgs, RUN_FILE};
use crate::config::resolve;
use crate::error::{CliError, CliResult};

pub struct LoadedRun {
    pub generator: TreeGcnGenerator<f32>,
    pub epoch: usize,
    pub args: Option<TrainArgs>,
}

impl LoadedRun {
    /// The training set the run was fitted on, when `run.json` names one.
    pub fn training_set(&self) -> CliResult<Option<Vec<LabeledCloud>>> {
        match self.args.as_ref().and_then(|a| a.dataset.as_deref()) {
            Some(dir) => Ok(Some(read_dataset(dir)?)),
            None => Ok(None),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// The checkpoint of `epoch`, or the selected one when `epoch` is `None`.
pub fn load_run(dir: &Path, epoch: Option<usize>) -> CliResult<LoadedRun> {
    let config: GeneratorConfig = read_json(&dir.join("model.json"))?;
    let manifest: RunManifest = read_json(&dir.join("manifest.json"))?;
    let epoch = match epoch.or(manifest.selected_epoch) {
        Some(e) => e,
        None => return Err(CliError::usage(format!("{} has no selected checkpoint", dir.display()))),
    };
    let file = manifest
        .checkpoints
        .iter()
        .find(|c| c.epoch == epoch)
        .and_then(|c| c.path.clone())
        .ok_or_else(|| CliError::usage(format!("no checkpoint for epoch {epoch} in {}", dir.display())))?;
    let stored = load_checkpoint::<f32>(&dir.join(file))?;
    let mut generator = TreeGcnGenerator::new(config, 0)?;
    let copied = generator.params.copy_matching(&stored)?;
    if copied != generator.params.len() || stored.len() != copied {
        return Err(CliError::usage(format!(
            "checkpoint for epoch {epoch} does not match model.json ({copied} of {} parameters)",
            generator.params.len()
        )));
    }
    let run_file = dir.join(RUN_FILE);
    let args = if run_file.exists() {
        Some(resolve(TrainArgs {
            config: Some(run_file),
            ..Default::default()
        })?)
    } else {
        None
    };
    log::info!("loaded {} epoch {epoch}", dir.display());
    Ok(LoadedRun { generator, epoch, args })
}
