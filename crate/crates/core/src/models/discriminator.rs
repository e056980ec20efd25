use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Linear, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::tensor::{Element, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscVariant {
    /// Adversarial score plus a regression head predicting the label.
    DualHead,
    /// Label concatenated to the pooled features before the score head.
    VanillaConcat,
    /// Score plus `<linear(y), pooled features>`.
    Projection,
    Unconditioned,
}

impl DiscVariant {
    pub fn takes_label(self) -> bool {
        matches!(self, DiscVariant::VanillaConcat | DiscVariant::Projection)
    }

    pub fn name(self) -> &'static str {
        match self {
            DiscVariant::DualHead => "dual_head",
            DiscVariant::VanillaConcat => "vanilla_concat",
            DiscVariant::Projection => "projection",
            DiscVariant::Unconditioned => "unconditioned",
        }
    }
}

impl FromStr for DiscVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            DiscVariant::DualHead,
            DiscVariant::VanillaConcat,
            DiscVariant::Projection,
            DiscVariant::Unconditioned,
        ]
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown discriminator variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub variant: DiscVariant,
    pub label_dim: usize,
    /// Per-point linear stages, each followed by LeakyReLU.
    pub point_widths: Vec<usize>,
    /// Hidden widths of each head; heads are linear maps without activations.
    pub head_widths: Vec<usize>,
}

impl DiscriminatorConfig {
    pub fn desk(variant: DiscVariant, label_dim: usize) -> Self {
        DiscriminatorConfig {
            variant,
            label_dim,
            point_widths: vec![8, 16, 32, 64],
            head_widths: vec![64, 64],
        }
    }

    pub fn full(variant: DiscVariant, label_dim: usize) -> Self {
        DiscriminatorConfig {
            variant,
            label_dim,
            point_widths: vec![64, 128, 256, 512, 1024],
            head_widths: vec![512, 512],
        }
    }

    pub fn feature_width(&self) -> usize {
        *self.point_widths.last().expect("validated")
    }

    pub fn validate(&self) -> Result<()> {
        if self.point_widths.is_empty() || self.point_widths.contains(&0) || self.head_widths.contains(&0) {
            return Err(Error::InvalidArgument(
                "discriminator widths must be nonempty and positive".into(),
            ));
        }
        let needs_label = self.variant != DiscVariant::Unconditioned;
        if needs_label != (self.label_dim > 0) {
            return Err(Error::InvalidArgument(format!(
                "{} discriminator with label_dim {}",
                self.variant.name(),
                self.label_dim
            )));
        }
        Ok(())
    }
}

/// Score `[B]` and, for the dual-head variant, the label estimate `[B, d]`.
pub struct DiscOutput<'t, T: Element> {
    pub score: Var<'t, T>,
    pub y_hat: Option<Var<'t, T>>,
}

#[derive(Clone, Debug)]
pub struct PointNetDiscriminator<T: Element = f32> {
    pub config: DiscriminatorConfig,
    pub params: ParamStore<T>,
    points: Vec<Linear>,
    adv: Vec<Linear>,
    reg: Vec<Linear>,
    proj: Option<Linear>,
}

fn head<T: Element>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    input: usize,
    hidden: &[usize],
    output: usize,
) -> Vec<Linear> {
    let mut widths = vec![input];
    widths.extend_from_slice(hidden);
    widths.push(output);
    widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| Linear::new(store, rng, &format!("{name}.{i}"), w[0], w[1], true))
        .collect()
}

impl<T: Element> PointNetDiscriminator<T> {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut fan_in = 3;
        let mut points = Vec::new();
        for (i, &w) in config.point_widths.iter().enumerate() {
            points.push(Linear::new(&mut params, &mut rng, &format!("d.point.{i}"), fan_in, w, true));
            fan_in = w;
        }
        let feat = config.feature_width();
        let d = config.label_dim;
        let adv_in = if config.variant == DiscVariant::VanillaConcat { feat + d } else { feat };
        let adv = head(&mut params, &mut rng, "d.adv", adv_in, &config.head_widths, 1);
        let reg = if config.variant == DiscVariant::DualHead {
            head(&mut params, &mut rng, "d.reg", feat, &config.head_widths, d)
        } else {
            Vec::new()
        };
        let proj = (config.variant == DiscVariant::Projection)
            .then(|| Linear::new(&mut params, &mut rng, "d.proj", d, feat, true));
        Ok(PointNetDiscriminator {
            config,
            params,
            points,
            adv,
            reg,
            proj,
        })
    }

    /// Max-pooled per-point features `[B, F]` of `x: [B * N, 3]`.
    pub fn features<'t>(&self, p: &[Var<'t, T>], x: &Var<'t, T>, batch: usize) -> Result<Var<'t, T>> {
        let xs = x.shape();
        if xs.len() != 2 || xs[1] != 3 || batch == 0 || !xs[0].is_multiple_of(batch) {
            return Err(Error::Dimension {
                op: "discriminator input",
                lhs: xs,
                rhs: vec![batch, 0, 3],
            });
        }
        let n = xs[0] / batch;
        let mut h = *x;
        for layer in &self.points {
            h = layer.forward(p, &h)?.leaky_relu(T::from_f64(LEAKY_SLOPE));
        }
        h.reshape([batch, n, self.config.feature_width()])?.max_axis(1)
    }

    pub fn forward<'t>(
        &self,
        p: &[Var<'t, T>],
        x: &Var<'t, T>,
        batch: usize,
        y: Option<&Var<'t, T>>,
    ) -> Result<DiscOutput<'t, T>> {
        let variant = self.config.variant;
        let y = match (variant.takes_label(), y) {
            (true, Some(y)) => {
                let ys = y.shape();
                if ys != [batch, self.config.label_dim] {
                    return Err(Error::Dimension {
                        op: "discriminator label",
                        lhs: ys,
                        rhs: vec![batch, self.config.label_dim],
                    });
                }
                Some(*y)
            }
            (false, None) => None,
            (true, None) => {
                return Err(Error::InvalidArgument(format!("{} discriminator needs a label", variant.name())))
            }
            (false, Some(_)) => {
                return Err(Error::InvalidArgument(format!("{} discriminator takes no label", variant.name())))
            }
        };
        let f = self.features(p, x, batch)?;
        let adv_in = match (variant, y) {
            (DiscVariant::VanillaConcat, Some(y)) => Var::concat_cols(&[f, y])?,
            _ => f,
        };
        let mut score = run_head(&self.adv, p, adv_in)?;
        if let (Some(proj), Some(y)) = (&self.proj, y) {
            let inner = proj.forward(p, &y)?.mul(&f)?.sum_axis(1)?.reshape([batch, 1])?;
            score = score.add(&inner)?;
        }
        let y_hat = if self.reg.is_empty() {
            None
        } else {
            Some(run_head(&self.reg, p, f)?)
        };
        Ok(DiscOutput {
            score: score.reshape([batch])?,
            y_hat,
        })
    }

    /// Plain-tensor convenience returning `(scores, y_hat)`.
    pub fn evaluate(&self, x: &Tensor<T>, batch: usize, y: Option<&Tensor<T>>) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
        let tape = Tape::new();
        let p = self.params.bind(&tape);
        let x = tape.var(x.clone());
        let y = y.map(|y| tape.var(y.clone()));
        let out = self.forward(&p, &x, batch, y.as_ref())?;
        let score = (*out.score.value()).clone();
        Ok((score, out.y_hat.map(|v| (*v.value()).clone())))
    }
}

fn run_head<'t, T: Element>(layers: &[Linear], p: &[Var<'t, T>], x: Var<'t, T>) -> Result<Var<'t, T>> {
    layers.iter().try_fold(x, |h, l| l.forward(p, &h))
}
