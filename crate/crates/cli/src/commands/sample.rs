use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use ccpc::baselines::{b1_resample, b2_scale};
use ccpc::conditioning::{LabelKde, Region, SigmaRegionModel, DEFAULT_K, DEFAULT_REGION_BUDGET};
use ccpc::metrics::extents;
use ccpc::models::TreeGcnGenerator;
use ccpc::shapes::{read_dataset, write_dataset, write_ply, ConditionVector, FamilyKind, LabeledCloud, PointCloud};
use ccpc::tensor::Tensor;
use ccpc::training::dataset_hash;
use clap::{Parser, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{absolute, command_args, prepare_out, required, write_manifest, write_text, MANIFEST_FILE};
use crate::error::{CliError, CliResult};
use crate::run::load_run;

const BATCH: usize = 16;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SampleMode {
    /// One label, a fresh latent per cloud.
    FixedYSweepZ,
    /// One latent, one label axis swept over `--from..--to`.
    FixedZSweepY,
    /// One latent, two label axes swept on a `steps x steps` lattice.
    Grid,
    /// KDE labels that classify into `--region`.
    Region,
    /// B1 or B2 outputs for `--y` or a target dataset.
    Baseline,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    B1,
    B2,
}

/// Generate clouds from a trained run.
#[derive(Parser, Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Checkpoint epoch; the selected one by default.
    #[arg(long)]
    pub epoch: Option<usize>,
    #[arg(long, value_enum, default_value = "fixed_y_sweep_z")]
    pub mode: SampleMode,
    /// Base label, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub y: Vec<f32>,
    #[arg(long, default_value_t = 5)]
    pub count: usize,
    /// Swept label axis for fixed_z_sweep_y.
    #[arg(long, default_value_t = 2)]
    pub axis: usize,
    /// The two swept axes for grid (columns, rows).
    #[arg(long, value_delimiter = ',', default_value = "0,2")]
    pub axes: Vec<usize>,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub from: f32,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub to: f32,
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
    #[arg(long, default_value_t = 3)]
    pub region: Region,
    /// Labels for region mode; the run's training set by default.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "b2")]
    pub baseline: Baseline,
    /// B1 candidates per target.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Baseline targets taken from this dataset's labels instead of `--y`.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

command_args!(SampleArgs, "sample");

fn linspace(from: f32, to: f32, steps: usize) -> Vec<f32> {
    match steps {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..steps)
            .map(|i| from + (to - from) * i as f32 / (steps - 1) as f32)
            .collect(),
    }
}

fn latent<R: Rng>(dim: usize, rng: &mut R) -> Vec<f32> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// One cloud per `(z, y)` pair, in batches.
fn generate(gen: &TreeGcnGenerator<f32>, zs: &[Vec<f32>], labels: &[ConditionVector]) -> CliResult<Vec<PointCloud>> {
    let (dim, n) = (gen.config.latent_dim, gen.config.num_points());
    let mut clouds = Vec::with_capacity(zs.len());
    for start in (0..zs.len()).step_by(BATCH) {
        let end = (start + BATCH).min(zs.len());
        let b = end - start;
        let z = Tensor::new([b, dim], zs[start..end].concat())?;
        let y = if gen.config.is_conditional() {
            let d = gen.config.label_dim;
            let flat = labels[start..end].iter().flat_map(|y| y.as_slice().iter().copied()).collect();
            Some(Tensor::new([b, d], flat)?)
        } else {
            None
        };
        let out = gen.generate(&z, y.as_ref())?;
        for c in out.data().chunks(n * 3) {
            clouds.push(PointCloud::from_flat(c)?);
        }
    }
    Ok(clouds)
}

fn check_label(y: &[f32], dim: usize) -> CliResult<ConditionVector> {
    if y.len() != dim {
        return Err(CliError::usage(format!("--y needs {dim} values, got {}", y.len())));
    }
    Ok(ConditionVector::new(y.to_vec()))
}

pub fn run(mut args: SampleArgs) -> CliResult<()> {
    let out = required(&args.out, "--out")?.to_path_buf();
    let run_dir = absolute(required(&args.run, "--run")?)?;
    args.run = Some(run_dir.clone());
    let seed = args.seed.unwrap_or(0);
    args.seed = Some(seed);
    let loaded = load_run(&run_dir, args.epoch)?;
    args.epoch = Some(loaded.epoch);
    let gen = &loaded.generator;
    let d = gen.config.label_dim;
    let conditional = gen.config.is_conditional();
    if !conditional && args.mode != SampleMode::Baseline {
        return Err(CliError::usage(format!(
            "{:?} mode needs a conditional generator; this run is unconditioned",
            args.mode
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zdim = gen.config.latent_dim;
    let mut inputs = BTreeMap::new();
    let train_data = loaded.training_set()?;
    let mut family = train_data.as_ref().and_then(|d| d.first()).map_or(FamilyKind::Box, |c| c.family);
    let mut regions: Option<Vec<Region>> = None;

    let (labels, clouds) = match args.mode {
        SampleMode::FixedYSweepZ => {
            let y = check_label(&args.y, d)?;
            let zs: Vec<_> = (0..args.count).map(|_| latent(zdim, &mut rng)).collect();
            let labels = vec![y; args.count];
            let clouds = generate(gen, &zs, &labels)?;
            (labels, clouds)
        }
        SampleMode::FixedZSweepY => {
            let base = check_label(&args.y, d)?;
            if args.axis >= d {
                return Err(CliError::usage(format!("--axis {} out of range for labels of dim {d}", args.axis)));
            }
            let labels: Vec<_> = linspace(args.from, args.to, args.steps)
                .into_iter()
                .map(|v| {
                    let mut y = base.clone();
                    y.0[args.axis] = v;
                    y
                })
                .collect();
            let z = latent(zdim, &mut rng);
            let clouds = generate(gen, &vec![z; labels.len()], &labels)?;
            (labels, clouds)
        }
        SampleMode::Grid => {
            let base = check_label(&args.y, d)?;
            let [a, b] = args.axes[..] else {
                return Err(CliError::usage("--axes needs two axes"));
            };
            if a >= d || b >= d || a == b {
                return Err(CliError::usage(format!("--axes {a},{b} invalid for labels of dim {d}")));
            }
            let values = linspace(args.from, args.to, args.steps);
            let mut labels = Vec::new();
            for &row in &values {
                for &col in &values {
                    let mut y = base.clone();
                    y.0[a] = col;
                    y.0[b] = row;
                    labels.push(y);
                }
            }
            let z = latent(zdim, &mut rng);
            let clouds = generate(gen, &vec![z; labels.len()], &labels)?;
            (labels, clouds)
        }
        SampleMode::Region => {
            let data = match &args.dataset {
                Some(dir) => {
                    let dir = absolute(dir)?;
                    args.dataset = Some(dir.clone());
                    read_dataset(&dir)?
                }
                None => train_data
                    .clone()
                    .ok_or_else(|| CliError::usage("region mode needs --dataset (no run.json in the run)"))?,
            };
            inputs.insert("region_labels".into(), dataset_hash(&data));
            if let Some(c) = data.first() {
                family = c.family;
            }
            let rows: Vec<Vec<f64>> = data
                .iter()
                .map(|c| c.label.as_slice().iter().map(|&v| v as f64).collect())
                .collect();
            let kde = LabelKde::fit_rows(&rows)?;
            let model = SigmaRegionModel::fit(&kde, &rows, DEFAULT_K)?;
            let mut labels = Vec::with_capacity(args.count);
            for _ in 0..args.count {
                labels.push(region_label(&model, &kde, args.region, &mut rng)?);
            }
            regions = Some(labels.iter().map(|y| model.classify(&as_f64(y))).collect());
            let zs: Vec<_> = (0..labels.len()).map(|_| latent(zdim, &mut rng)).collect();
            let clouds = generate(gen, &zs, &labels)?;
            (labels, clouds)
        }
        SampleMode::Baseline => {
            let targets: Vec<ConditionVector> = match &args.targets {
                Some(dir) => {
                    let dir = absolute(dir)?;
                    args.targets = Some(dir.clone());
                    let data = read_dataset(&dir)?;
                    inputs.insert(dir.display().to_string(), dataset_hash(&data));
                    if let Some(c) = data.first() {
                        family = c.family;
                    }
                    data.into_iter().take(args.count).map(|c| c.label).collect()
                }
                None => vec![check_label(&args.y, 3)?; args.count],
            };
            if targets.iter().any(|y| y.dim() != 3) {
                return Err(CliError::usage("baselines need 3-d extent targets"));
            }
            let clouds = match args.baseline {
                Baseline::B1 => {
                    if conditional {
                        return Err(CliError::usage("b1 needs an unconditioned run"));
                    }
                    targets
                        .iter()
                        .map(|y| b1_resample(gen, y, args.k, &mut rng).map_err(CliError::from))
                        .collect::<CliResult<Vec<_>>>()?
                }
                Baseline::B2 => {
                    let zs: Vec<_> = (0..targets.len()).map(|_| latent(zdim, &mut rng)).collect();
                    generate(gen, &zs, &targets)?
                        .iter()
                        .zip(&targets)
                        .map(|(c, y)| b2_scale(c, y).map_err(CliError::from))
                        .collect::<CliResult<Vec<_>>>()?
                }
            };
            (targets, clouds)
        }
    };

    prepare_out(&out, &[&run_dir])?;
    let mut csv = String::from("index");
    for k in 0..labels.first().map_or(0, |y| y.dim()) {
        write!(csv, ",y{k}").unwrap();
    }
    csv.push_str(",extent_x,extent_y,extent_z");
    if regions.is_some() {
        csv.push_str(",region");
    }
    csv.push('\n');
    for (i, (y, c)) in labels.iter().zip(&clouds).enumerate() {
        write_ply(&out.join(format!("cloud_{i:04}.ply")), c, None)?;
        write!(csv, "{i}").unwrap();
        for v in y.as_slice() {
            write!(csv, ",{v}").unwrap();
        }
        for e in extents(c) {
            write!(csv, ",{e}").unwrap();
        }
        if let Some(r) = &regions {
            write!(csv, ",{}", r[i]).unwrap();
        }
        csv.push('\n');
    }
    write_text(&out.join("samples.csv"), &csv)?;
    let dataset: Vec<LabeledCloud> = labels
        .into_iter()
        .zip(clouds)
        .map(|(label, cloud)| LabeledCloud {
            family,
            cloud,
            label,
            part_ids: None,
        })
        .collect();
    write_dataset(&out.join("clouds"), &dataset)?;
    write_manifest(&out.join(MANIFEST_FILE), &args, inputs)?;
    println!("wrote {} clouds to {}", dataset.len(), out.display());
    Ok(())
}

fn as_f64(y: &ConditionVector) -> Vec<f64> {
    y.as_slice().iter().map(|&v| v as f64).collect()
}

/// Rejection-samples a KDE label whose `f32` rounding classifies into `region`,
/// so the written label re-classifies the same way.
fn region_label<R: Rng>(
    model: &SigmaRegionModel,
    kde: &LabelKde,
    region: Region,
    rng: &mut R,
) -> CliResult<ConditionVector> {
    if !(1..=3).contains(&region) {
        return Err(CliError::usage(format!("--region must be 1, 2 or 3, got {region}")));
    }
    for _ in 0..DEFAULT_REGION_BUDGET {
        let y = ConditionVector::new(kde.sample(rng, true).into_iter().map(|v| v as f32).collect());
        if model.classify(&as_f64(&y)) == region {
            return Ok(y);
        }
    }
    Err(ccpc::Error::RegionUnsampleable {
        region,
        attempts: DEFAULT_REGION_BUDGET,
    }
    .into())
}
