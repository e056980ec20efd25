//! `--config` loading, flag overrides and per-command manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

pub trait CommandArgs: Serialize + DeserializeOwned + Clone {
    const NAME: &'static str;
    fn config(&self) -> Option<&Path>;
    /// Copies `--seed` and `--out` from the command line when they were given.
    fn apply_overrides(&mut self, cli: &Self);
}

macro_rules! command_args {
    ($t:ty, $name:literal) => {
        impl Default for $t {
            fn default() -> Self {
                <$t as clap::Parser>::parse_from(["ccpc"])
            }
        }

        impl $crate::config::CommandArgs for $t {
            const NAME: &'static str = $name;

            fn config(&self) -> Option<&std::path::Path> {
                self.config.as_deref()
            }

            fn apply_overrides(&mut self, cli: &Self) {
                if cli.seed.is_some() {
                    self.seed = cli.seed;
                }
                if cli.out.is_some() {
                    self.out = cli.out.clone();
                }
            }
        }
    };
}
pub(crate) use command_args;

/// What every command leaves next to its outputs; `--config` accepts it back.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandManifest {
    pub command: String,
    pub version: String,
    pub args: serde_json::Value,
    /// Input path -> content hash.
    pub inputs: BTreeMap<String, String>,
}

/// The command-line arguments, or the config file with `--seed`/`--out`
/// from the command line applied on top.
pub fn resolve<A: CommandArgs>(cli: A) -> CliResult<A> {
    let Some(path) = cli.config() else {
        return Ok(cli);
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let args = if value.get("command").is_some() {
        let manifest: CommandManifest = serde_json::from_value(value)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if manifest.command != A::NAME {
            return Err(CliError::usage(format!(
                "{} is a manifest of `{}`, not `{}`",
                path.display(),
                manifest.command,
                A::NAME
            )));
        }
        manifest.args
    } else {
        value
    };
    let mut resolved: A =
        serde_json::from_value(args).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    resolved.apply_overrides(&cli);
    Ok(resolved)
}

pub fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| CliError::usage(format!("missing {flag}")))
}

/// Creates `out`, refusing to write into any of the input directories.
pub fn prepare_out(out: &Path, inputs: &[&Path]) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let out_c = out.canonicalize().map_err(|e| CliError::io(out, e))?;
    for input in inputs {
        if input.canonicalize().is_ok_and(|c| c == out_c) {
            return Err(CliError::usage(format!(
                "output directory {} is also an input",
                out.display()
            )));
        }
    }
    Ok(())
}

pub fn absolute(path: &Path) -> CliResult<PathBuf> {
    path.canonicalize().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_manifest<A: CommandArgs>(
    path: &Path,
    args: &A,
    inputs: BTreeMap<String, String>,
) -> CliResult<()> {
    let manifest = CommandManifest {
        command: A::NAME.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        args: serde_json::to_value(args)?,
        inputs,
    };
    write_text(path, &serde_json::to_string_pretty(&manifest)?)
}
