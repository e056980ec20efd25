use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::losses::*;
use super::TrainConfig;
use crate::conditioning::{sample_label, LabelKde, LabelSource};
use crate::error::{Error, Result};
use crate::metrics::{dimension_mse, fpd, selection_score, FeatureExtractor};
use crate::models::{DiscVariant, PointNetDiscriminator, TreeGcnGenerator};
use crate::shapes::{ConditionVector, LabelKind, LabeledCloud, PointCloud, ShapeFamily};
use crate::tensor::{save_checkpoint, Adam, ParamStore, Tape, Tensor};

const GEN_SEED_SALT: u64 = 0x4745_4e00;
const DISC_SEED_SALT: u64 = 0x4449_5300;
const TRAIN_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;

/// One line of `records.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_g: f64,
    pub loss_d: f64,
    pub fpd: Option<f64>,
    pub mse: Option<f64>,
    pub score: Option<f64>,
}

/// An evaluated, saved generator state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub epoch: usize,
    pub fpd: f64,
    /// Dimension MSE in percent; absent for unconditioned or part-ratio runs.
    pub mse: Option<f64>,
    /// `fpd * mse`, or `fpd` alone when there is no MSE.
    pub score: f64,
    pub path: Option<String>,
}

impl CheckpointRecord {
    pub fn new(epoch: usize, fpd: f64, mse: Option<f64>) -> Self {
        CheckpointRecord {
            epoch,
            fpd,
            mse,
            score: mse.map_or(fpd, |m| selection_score(fpd, m)),
            path: None,
        }
    }
}

/// Index of the lowest-score checkpoint (earliest on ties).
pub fn select_checkpoint(records: &[CheckpointRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        if best.is_none_or(|b| r.score < records[b].score) {
            best = Some(i);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub dataset_hash: String,
    pub train_count: usize,
    pub val_count: usize,
    pub checkpoints: Vec<CheckpointRecord>,
    pub selected_epoch: Option<usize>,
}

/// FNV-1a over families, labels and points; stable across platforms.
pub fn dataset_hash(clouds: &[LabeledCloud]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for c in clouds {
        eat(&[c.family.index() as u8]);
        for v in c.label.as_slice() {
            eat(&v.to_le_bytes());
        }
        for p in c.cloud.points() {
            for v in p {
                eat(&v.to_le_bytes());
            }
        }
    }
    format!("{h:016x}")
}

pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    pub checkpoints: Vec<CheckpointRecord>,
    pub selected: Option<usize>,
    /// Generator at the selected checkpoint.
    pub best_generator: TreeGcnGenerator<f32>,
    pub generator: TreeGcnGenerator<f32>,
    pub discriminator: PointNetDiscriminator<f32>,
}

/// Mutable state of one training run.
pub struct Trainer<'a> {
    pub config: TrainConfig,
    pub generator: TreeGcnGenerator<f32>,
    pub discriminator: PointNetDiscriminator<f32>,
    /// `[v_adv, v_reg]` of each network (unused for unweighted variants).
    pub g_weights: ParamStore<f32>,
    pub d_weights: ParamStore<f32>,
    adam_g: Adam,
    adam_gw: Adam,
    adam_d: Adam,
    adam_dw: Adam,
    rng: ChaCha8Rng,
    train: &'a [LabeledCloud],
    val: &'a [LabeledCloud],
    labels: Vec<ConditionVector>,
    kde: Option<LabelKde>,
    extractor: FeatureExtractor,
    n_points: usize,
    label_dim: usize,
    has_extents: bool,
    pub step: usize,
}

fn loss_weights() -> ParamStore<f32> {
    let mut s = ParamStore::new();
    s.add("v_adv", Tensor::scalar(0.0));
    s.add("v_reg", Tensor::scalar(0.0));
    s
}

fn stack_points(clouds: &[&PointCloud]) -> Tensor<f32> {
    let n = clouds[0].len();
    let data = clouds.iter().flat_map(|c| c.to_flat()).collect();
    Tensor::new([clouds.len() * n, 3], data).expect("equal point counts checked")
}

fn stack_labels(labels: &[&ConditionVector]) -> Tensor<f32> {
    let d = labels[0].dim();
    let data = labels.iter().flat_map(|y| y.as_slice().iter().copied()).collect();
    Tensor::new([labels.len(), d], data).expect("equal label dims checked")
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, train: &'a [LabeledCloud], val: &'a [LabeledCloud]) -> Result<Self> {
        config.validate()?;
        let first = train
            .first()
            .ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
        let val = if val.is_empty() { train } else { val };
        let n_points = config.generator.num_points();
        let label_dim = config.generator.label_dim;
        for c in train.iter().chain(val) {
            if c.cloud.len() != n_points {
                return Err(Error::InvalidArgument(format!(
                    "dataset clouds have {} points, generator emits {n_points}",
                    c.cloud.len()
                )));
            }
            if label_dim > 0 && c.label.dim() != label_dim {
                return Err(Error::InvalidArgument(format!(
                    "dataset labels have d = {}, config expects {label_dim}",
                    c.label.dim()
                )));
            }
        }
        let has_extents = label_dim == 3 && ShapeFamily::for_kind(first.family).label_kind == LabelKind::Dimensions;
        if config.variant.measures_extents() && !has_extents {
            return Err(Error::InvalidArgument(format!(
                "{} needs extent labels",
                config.variant.name()
            )));
        }
        let labels: Vec<ConditionVector> = train.iter().map(|c| c.label.clone()).collect();
        let kde = if label_dim > 0 && train.len() >= 2 {
            Some(LabelKde::fit(&labels)?)
        } else {
            None
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(TRAIN_STREAM);
        let adam = || Adam::with_betas(config.lr, config.beta1, config.beta2, 1e-8);
        Ok(Trainer {
            generator: TreeGcnGenerator::new(config.generator.clone(), config.seed ^ GEN_SEED_SALT)?,
            discriminator: PointNetDiscriminator::new(config.discriminator.clone(), config.seed ^ DISC_SEED_SALT)?,
            g_weights: loss_weights(),
            d_weights: loss_weights(),
            adam_g: adam(),
            adam_gw: adam(),
            adam_d: adam(),
            adam_dw: adam(),
            rng,
            train,
            val,
            labels,
            kde,
            extractor: FeatureExtractor::new(config.fpd_seed),
            n_points,
            label_dim,
            has_extents,
            step: 0,
            config,
        })
    }

    fn sample_latent(&mut self, batch: usize) -> Tensor<f32> {
        let dim = self.config.generator.latent_dim;
        let data = (0..batch * dim).map(|_| self.rng.sample(StandardNormal)).collect();
        Tensor::new([batch, dim], data).expect("length matches")
    }

    fn sample_conditions(&mut self, batch: usize) -> Result<Option<Tensor<f32>>> {
        if self.label_dim == 0 {
            return Ok(None);
        }
        let source = LabelSource {
            dim: self.label_dim,
            labels: Some(&self.labels),
            kde: self.kde.as_ref(),
            clamp: self.config.clamp_labels,
        };
        let ys = (0..batch)
            .map(|_| sample_label(self.config.strategy, &source, &mut self.rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(stack_labels(&ys.iter().collect::<Vec<_>>())))
    }

    fn non_finite(&self, epoch: usize, loss_g: f64, loss_d: f64) -> Error {
        Error::NonFinite {
            epoch,
            step: self.step,
            seed: self.config.seed,
            loss_g,
            loss_d,
        }
    }

    /// One critic update on the real clouds `idx`; returns the loss.
    pub fn discriminator_step(&mut self, idx: &[usize]) -> Result<f64> {
        let b = idx.len();
        let x_real = stack_points(&idx.iter().map(|&i| &self.train[i].cloud).collect::<Vec<_>>());
        let y_real = (self.label_dim > 0).then(|| stack_labels(&idx.iter().map(|&i| &self.labels[i]).collect::<Vec<_>>()));
        let y_cond = self.sample_conditions(b)?;
        let z = self.sample_latent(b);
        let x_gen = self.generator.generate(&z, y_cond.as_ref())?;
        let u: Vec<f64> = (0..b).map(|_| self.rng.random::<f64>()).collect();

        let cfg = &self.config;
        let variant = cfg.variant;
        let disc = &self.discriminator;
        let takes = disc.config.variant.takes_label();
        let tape = Tape::new();
        let pd = disc.params.bind(&tape);
        let wd = self.d_weights.bind(&tape);
        let xr = tape.var(x_real.clone());
        let xg = tape.var(x_gen.clone());
        let yr = y_real.clone().map(|t| tape.var(t));
        let yc = y_cond.clone().map(|t| tape.var(t));
        let out_r = disc.forward(&pd, &xr, b, if takes { yr.as_ref() } else { None })?;
        let out_g = disc.forward(&pd, &xg, b, if takes { yc.as_ref() } else { None })?;
        // a label-consuming critic sees labels interpolated like the points
        let y_mix = match (takes, &y_real, &y_cond) {
            (true, Some(r), Some(c)) => {
                let w = Tensor::new(
                    [b, self.label_dim],
                    u.iter().flat_map(|&w| std::iter::repeat_n(w as f32, self.label_dim)).collect(),
                )?;
                Some(tape.var(c.add(&w.mul(&r.sub(c)?)?)?))
            }
            _ => None,
        };
        let gp = gradient_penalty(&tape, &x_real, &x_gen, &u, |x| {
            Ok(disc.forward(&pd, x, b, y_mix.as_ref())?.score)
        })?;
        let y_gen = if variant == LossVariant::VariantA {
            Some(measured_extents(&xg, b)?)
        } else {
            None
        };
        let terms = DiscriminatorTerms {
            score_real: out_r.score,
            score_gen: out_g.score,
            gp,
            y_real: yr,
            y_hat_real: out_r.y_hat,
            y_cond: yc,
            y_hat_gen: out_g.y_hat,
            y_gen,
        };
        let weights = variant.weighted().then(|| LossWeights {
            v_adv: wd[0],
            v_reg: wd[1],
        });
        let loss = discriminator_loss(variant, &terms, weights, cfg.lambda_gp)?;
        let value = loss.item() as f64;
        if !value.is_finite() {
            return Err(self.non_finite(0, f64::NAN, value));
        }
        let mut wrt = pd.clone();
        if weights.is_some() {
            wrt.extend_from_slice(&wd);
        }
        let grads = tape.grad(loss, &wrt)?;
        let np = pd.len();
        self.discriminator.params.accumulate_values(&grads[..np])?;
        self.adam_d.step(&mut self.discriminator.params)?;
        if weights.is_some() {
            self.d_weights.accumulate_values(&grads[np..])?;
            self.adam_dw.step(&mut self.d_weights)?;
        }
        Ok(value)
    }

    /// One generator update on a fresh batch of `batch` samples.
    pub fn generator_step(&mut self, batch: usize) -> Result<f64> {
        let y_cond = self.sample_conditions(batch)?;
        let z = self.sample_latent(batch);
        let cfg = &self.config;
        let variant = cfg.variant;
        let disc = &self.discriminator;
        let tape = Tape::new();
        let pg = self.generator.params.bind(&tape);
        let wg = self.g_weights.bind(&tape);
        let pd = disc.params.bind(&tape);
        let zv = tape.var(z);
        let yc = y_cond.map(|t| tape.var(t));
        let xg = self.generator.forward(&pg, &zv, yc.as_ref())?;
        let takes = disc.config.variant.takes_label();
        let out = disc.forward(&pd, &xg, batch, if takes { yc.as_ref() } else { None })?;
        let y_gen = if variant.measures_extents() {
            Some(measured_extents(&xg, batch)?)
        } else {
            None
        };
        let terms = GeneratorTerms {
            score_gen: out.score,
            y_cond: yc,
            y_hat_gen: out.y_hat,
            y_gen,
        };
        let weights = variant.weighted().then(|| LossWeights {
            v_adv: wg[0],
            v_reg: wg[1],
        });
        let loss = generator_loss(variant, &terms, weights, cfg.lambda_reg)?;
        let value = loss.item() as f64;
        if !value.is_finite() {
            return Err(self.non_finite(0, value, f64::NAN));
        }
        let mut wrt = pg.clone();
        if weights.is_some() {
            wrt.extend_from_slice(&wg);
        }
        let grads = tape.grad(loss, &wrt)?;
        let np = pg.len();
        self.generator.params.accumulate_values(&grads[..np])?;
        self.adam_g.step(&mut self.generator.params)?;
        if weights.is_some() {
            self.g_weights.accumulate_values(&grads[np..])?;
            self.adam_gw.step(&mut self.g_weights)?;
        }
        Ok(value)
    }

    /// One pass over the shuffled training set; returns mean `(L_G, L_D)`.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<(f64, f64)> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut sum_g, mut sum_d, mut n_g, mut n_d) = (0.0, 0.0, 0usize, 0usize);
        for chunk in order.chunks(self.config.batch_size) {
            for _ in 0..self.config.critic_iters {
                let ld = self.discriminator_step(chunk).map_err(|e| self.with_epoch(e, epoch))?;
                sum_d += ld;
                n_d += 1;
            }
            let lg = self.generator_step(chunk.len()).map_err(|e| self.with_epoch(e, epoch))?;
            sum_g += lg;
            n_g += 1;
            self.step += 1;
        }
        let (lg, ld) = (sum_g / n_g as f64, sum_d / n_d as f64);
        if !(lg.is_finite() && ld.is_finite()) {
            return Err(self.non_finite(epoch, lg, ld));
        }
        Ok((lg, ld))
    }

    fn with_epoch(&self, e: Error, epoch: usize) -> Error {
        match e {
            Error::NonFinite { loss_g, loss_d, .. } => self.non_finite(epoch, loss_g, loss_d),
            other => other,
        }
    }

    /// Generates one cloud per validation label (or unconditioned draws)
    /// with a fixed latent stream; returns `(clouds, targets)`.
    pub fn generate_eval_set(&self) -> Result<(Vec<PointCloud>, Option<Vec<ConditionVector>>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(EVAL_STREAM);
        let count = if self.label_dim > 0 {
            self.config.eval_samples.min(self.val.len()).max(2.min(self.val.len()))
        } else {
            self.config.eval_samples
        };
        let targets: Option<Vec<ConditionVector>> =
            (self.label_dim > 0).then(|| self.val.iter().take(count).map(|c| c.label.clone()).collect());
        let mut clouds = Vec::with_capacity(count);
        let dim = self.config.generator.latent_dim;
        let n = self.n_points;
        for start in (0..count).step_by(self.config.batch_size) {
            let b = self.config.batch_size.min(count - start);
            let z = Tensor::new([b, dim], (0..b * dim).map(|_| rng.sample(StandardNormal)).collect())?;
            let y = targets
                .as_ref()
                .map(|t| stack_labels(&t[start..start + b].iter().collect::<Vec<_>>()));
            let out = self.generator.generate(&z, y.as_ref())?;
            for s in 0..b {
                let flat = &out.data()[s * n * 3..(s + 1) * n * 3];
                clouds.push(
                    PointCloud::from_flat(flat).map_err(|_| self.non_finite(0, f64::NAN, f64::NAN))?,
                );
            }
        }
        Ok((clouds, targets))
    }

    /// `(FPD against the validation clouds, dimension MSE %)`.
    pub fn evaluate(&self) -> Result<(f64, Option<f64>)> {
        let (clouds, targets) = self.generate_eval_set()?;
        let refs: Vec<PointCloud> = self.val.iter().map(|c| c.cloud.clone()).collect();
        let f = fpd(&clouds, &refs, &self.extractor)?;
        let mse = match targets {
            Some(t) if self.has_extents => Some(dimension_mse(&clouds, &t)?),
            _ => None,
        };
        Ok((f, mse))
    }
}

/// Runs the configured number of epochs, evaluating every `eval_every`
/// epochs and after the last one. With `out_dir`, writes generator
/// checkpoints, `records.csv`, `model.json` and `manifest.json` there.
pub fn train(
    config: TrainConfig,
    train_set: &[LabeledCloud],
    val_set: &[LabeledCloud],
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), train_set, val_set)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let sidecar = serde_json::to_string_pretty(&config.generator)?;
        let path = dir.join("model.json");
        fs::write(&path, sidecar).map_err(|e| Error::io(path, e))?;
    }
    let mut records = Vec::with_capacity(config.epochs);
    let mut checkpoints: Vec<CheckpointRecord> = Vec::new();
    let mut best: Option<(f64, ParamStore<f32>)> = None;
    for epoch in 1..=config.epochs {
        let (loss_g, loss_d) = trainer.run_epoch(epoch)?;
        let mut rec = EpochRecord {
            epoch,
            loss_g,
            loss_d,
            fpd: None,
            mse: None,
            score: None,
        };
        if epoch % config.eval_every == 0 || epoch == config.epochs {
            let (f, mse) = trainer.evaluate()?;
            let mut cp = CheckpointRecord::new(epoch, f, mse);
            if let Some(dir) = out_dir {
                let name = format!("gen_epoch{epoch:05}.ccpc");
                save_checkpoint(&dir.join(&name), &trainer.generator.params)?;
                cp.path = Some(name);
            }
            log::info!(
                "epoch {epoch}: L_G {loss_g:.4} L_D {loss_d:.4} FPD {f:.4} MSE {} score {:.4}",
                mse.map_or("-".to_string(), |m| format!("{m:.4}")),
                cp.score
            );
            rec.fpd = Some(f);
            rec.mse = mse;
            rec.score = Some(cp.score);
            if best.as_ref().is_none_or(|(s, _)| cp.score < *s) {
                best = Some((cp.score, trainer.generator.params.clone()));
            }
            checkpoints.push(cp);
        }
        records.push(rec);
        if let Some(dir) = out_dir {
            write_records(&dir.join("records.csv"), &records)?;
        }
    }
    let selected = select_checkpoint(&checkpoints);
    let mut best_generator = trainer.generator.clone();
    if let Some((_, params)) = best {
        best_generator.params = params;
    }
    if let Some(dir) = out_dir {
        save_checkpoint(&dir.join("disc_final.ccpc"), &trainer.discriminator.params)?;
        let manifest = RunManifest {
            config: config.clone(),
            dataset_hash: dataset_hash(train_set),
            train_count: train_set.len(),
            val_count: val_set.len(),
            checkpoints: checkpoints.clone(),
            selected_epoch: selected.map(|i| checkpoints[i].epoch),
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(TrainOutcome {
        records,
        checkpoints,
        selected,
        best_generator,
        generator: trainer.generator,
        discriminator: trainer.discriminator,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// `epoch,loss_g,loss_d,fpd,mse,score` with exact (round-trip) floats.
pub fn write_records(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,loss_g,loss_d,fpd,mse,score\n");
    for r in records {
        out.push_str(&format!(
            "{},{:e},{:e},{},{},{}\n",
            r.epoch,
            r.loss_g,
            r.loss_d,
            opt(r.fpd),
            opt(r.mse),
            opt(r.score)
        ));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("epoch,loss_g,loss_d,fpd,mse,score") {
        return Err(Error::malformed(path, "unexpected records header"));
    }
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::malformed(path, format!("bad number {s:?}")))
        }
    };
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::malformed(path, format!("expected 6 fields in {line:?}")));
            }
            Ok(EpochRecord {
                epoch: f[0].parse().map_err(|_| Error::malformed(path, "bad epoch"))?,
                loss_g: num(f[1])?.unwrap_or(f64::NAN),
                loss_d: num(f[2])?.unwrap_or(f64::NAN),
                fpd: num(f[3])?,
                mse: num(f[4])?,
                score: num(f[5])?,
            })
        })
        .collect()
}

/// Supervised fit of the feature extractor and regression head of a
/// dual-head discriminator on `(cloud, label)` pairs. Returns the batch
/// regression loss after every step.
pub fn fit_regression_head(
    disc: &mut PointNetDiscriminator<f32>,
    data: &[LabeledCloud],
    steps: usize,
    batch: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if disc.config.variant != DiscVariant::DualHead {
        return Err(Error::InvalidArgument("regression fit needs a dual-head discriminator".into()));
    }
    if data.is_empty() || batch == 0 {
        return Err(Error::InvalidArgument("regression fit needs data and a positive batch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(lr);
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..data.len())).collect();
        let x = stack_points(&idx.iter().map(|&i| &data[i].cloud).collect::<Vec<_>>());
        let y = stack_labels(&idx.iter().map(|&i| &data[i].label).collect::<Vec<_>>());
        let tape = Tape::new();
        let p = disc.params.bind(&tape);
        let out = disc.forward(&p, &tape.var(x), batch, None)?;
        let y_hat = out.y_hat.expect("dual head");
        let loss = reg_loss(&tape.var(y), &y_hat)?;
        let value = loss.item() as f64;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                epoch: 0,
                step: losses.len(),
                seed,
                loss_g: f64::NAN,
                loss_d: value,
            });
        }
        disc.params.accumulate_grad(&tape, loss, &p)?;
        adam.step(&mut disc.params)?;
        losses.push(value);
    }
    Ok(losses)
}

