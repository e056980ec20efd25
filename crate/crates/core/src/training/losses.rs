use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::DiscVariant;
use crate::tensor::{Element, Tape, Tensor, Var};

/// Which generator/discriminator objective pair to train.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// Adversarial plus regression of `y_cond` from generated clouds, with
    /// learned loss weights.
    Main,
    /// Generator regression against measured extents of its own output;
    /// discriminator also regresses those measured extents.
    VariantA,
    /// Discriminator additionally regresses `y_cond` from generated clouds.
    VariantB,
    /// Purely adversarial with a label-consuming discriminator.
    VanillaCgan,
    /// Unconditioned discriminator, generator penalized on measured extents.
    RegressionCgan,
    /// No labels anywhere; the backbone for the resampling baseline.
    Unconditioned,
}

impl LossVariant {
    pub const ALL: [LossVariant; 6] = [
        LossVariant::Main,
        LossVariant::VariantA,
        LossVariant::VariantB,
        LossVariant::VanillaCgan,
        LossVariant::RegressionCgan,
        LossVariant::Unconditioned,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Main => "main",
            LossVariant::VariantA => "variant_a",
            LossVariant::VariantB => "variant_b",
            LossVariant::VanillaCgan => "vanilla_cgan",
            LossVariant::RegressionCgan => "regression_cgan",
            LossVariant::Unconditioned => "unconditioned",
        }
    }

    pub fn accepts(self, disc: DiscVariant) -> bool {
        match self {
            LossVariant::Main | LossVariant::VariantA | LossVariant::VariantB => disc == DiscVariant::DualHead,
            LossVariant::VanillaCgan => disc.takes_label(),
            LossVariant::RegressionCgan | LossVariant::Unconditioned => disc == DiscVariant::Unconditioned,
        }
    }

    pub fn conditional_generator(self) -> bool {
        self != LossVariant::Unconditioned
    }

    /// Whether the learned `e^v` weighting applies.
    pub fn weighted(self) -> bool {
        matches!(self, LossVariant::Main | LossVariant::VariantA | LossVariant::VariantB)
    }

    /// Whether the generator loss needs extents measured on its output.
    pub fn measures_extents(self) -> bool {
        matches!(self, LossVariant::VariantA | LossVariant::RegressionCgan)
    }
}

impl std::str::FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown loss variant {s:?}")))
    }
}

/// `-mean(scores_gen)`.
pub fn adv_loss_generator<'t, T: Element>(scores_gen: &Var<'t, T>) -> Result<Var<'t, T>> {
    Ok(scores_gen.mean()?.neg())
}

/// `mean(scores_gen) - mean(scores_real) + lambda_gp * gp`.
pub fn adv_loss_discriminator<'t, T: Element>(
    scores_gen: &Var<'t, T>,
    scores_real: &Var<'t, T>,
    gp: &Var<'t, T>,
    lambda_gp: f64,
) -> Result<Var<'t, T>> {
    scores_gen
        .mean()?
        .sub(&scores_real.mean()?)?
        .add(&gp.scale(T::from_f64(lambda_gp)))
}

/// Mean over rows of `||y - y_hat||_2`.
pub fn reg_loss<'t, T: Element>(y: &Var<'t, T>, y_hat: &Var<'t, T>) -> Result<Var<'t, T>> {
    if y.shape() != y_hat.shape() || y.shape().len() != 2 {
        return Err(Error::Dimension {
            op: "reg_loss",
            lhs: y.shape(),
            rhs: y_hat.shape(),
        });
    }
    y.sub(y_hat)?.l2_norm(1)?.mean()
}

/// `L e^v + v`.
pub fn weighted<'t, T: Element>(loss: &Var<'t, T>, v: &Var<'t, T>) -> Result<Var<'t, T>> {
    loss.mul(&v.exp())?.add(v)
}

/// Per-sample interpolation weights broadcast to every coordinate of a
/// `[B * N, 3]` point batch.
pub fn interpolation_weights<T: Element>(u: &[f64], points_per_sample: usize) -> Tensor<T> {
    let data = u
        .iter()
        .flat_map(|&w| std::iter::repeat_n(T::from_f64(w), points_per_sample * 3))
        .collect();
    Tensor::new([u.len() * points_per_sample, 3], data).expect("length matches")
}

/// WGAN-GP term `mean_b (||grad_x D(x_hat_b)||_2 - 1)^2` with
/// `x_hat = u x_real + (1 - u) x_gen`, one `u` per sample.
///
/// `critic` maps a `[B * N, 3]` batch to scores `[B]`. The returned value
/// stays differentiable with respect to whatever `critic` closes over.
pub fn gradient_penalty<'t, T: Element>(
    tape: &'t Tape<T>,
    x_real: &Tensor<T>,
    x_gen: &Tensor<T>,
    u: &[f64],
    critic: impl FnOnce(&Var<'t, T>) -> Result<Var<'t, T>>,
) -> Result<Var<'t, T>> {
    if x_real.shape() != x_gen.shape() || x_real.rank() != 2 || x_real.shape()[1] != 3 {
        return Err(Error::Dimension {
            op: "gradient_penalty",
            lhs: x_real.shape().to_vec(),
            rhs: x_gen.shape().to_vec(),
        });
    }
    let batch = u.len();
    let rows = x_real.shape()[0];
    if batch == 0 || !rows.is_multiple_of(batch) {
        return Err(Error::InvalidArgument(format!(
            "{batch} interpolation weights for {rows} points"
        )));
    }
    let w = interpolation_weights::<T>(u, rows / batch);
    let x_hat = x_gen.add(&w.mul(&x_real.sub(x_gen)?)?)?;
    let x_hat = tape.var(x_hat);
    let scores = critic(&x_hat)?;
    let total = scores.sum()?;
    let g = tape.grad(total, &[x_hat])?[0];
    let norms = g.reshape([batch, rows / batch * 3])?.l2_norm(1)?;
    norms.add_scalar(-T::one()).square()?.mean()
}

/// Learned-weight slots of one network; `None` for unweighted variants.
#[derive(Clone, Copy)]
pub struct LossWeights<'t, T: Element> {
    pub v_adv: Var<'t, T>,
    pub v_reg: Var<'t, T>,
}

fn combine<'t, T: Element>(
    adv: Var<'t, T>,
    reg: Option<Var<'t, T>>,
    weights: Option<LossWeights<'t, T>>,
    lambda_reg: f64,
) -> Result<Var<'t, T>> {
    match (reg, weights) {
        (None, None) => Ok(adv),
        (None, Some(w)) => weighted(&adv, &w.v_adv),
        (Some(r), None) => adv.add(&r.scale(T::from_f64(lambda_reg))),
        (Some(r), Some(w)) => weighted(&adv, &w.v_adv)?.add(&weighted(&r, &w.v_reg)?),
    }
}

/// Generator-side quantities of one batch.
pub struct GeneratorTerms<'t, T: Element> {
    pub score_gen: Var<'t, T>,
    pub y_cond: Option<Var<'t, T>>,
    pub y_hat_gen: Option<Var<'t, T>>,
    /// Extents measured on the generated clouds.
    pub y_gen: Option<Var<'t, T>>,
}

/// Discriminator-side quantities of one batch.
pub struct DiscriminatorTerms<'t, T: Element> {
    pub score_real: Var<'t, T>,
    pub score_gen: Var<'t, T>,
    pub gp: Var<'t, T>,
    pub y_real: Option<Var<'t, T>>,
    pub y_hat_real: Option<Var<'t, T>>,
    pub y_cond: Option<Var<'t, T>>,
    pub y_hat_gen: Option<Var<'t, T>>,
    pub y_gen: Option<Var<'t, T>>,
}

fn need<'t, T: Element>(v: Option<Var<'t, T>>, what: &str, variant: LossVariant) -> Result<Var<'t, T>> {
    v.ok_or_else(|| Error::InvalidArgument(format!("{} loss needs {what}", variant.name())))
}

pub fn generator_loss<'t, T: Element>(
    variant: LossVariant,
    t: &GeneratorTerms<'t, T>,
    weights: Option<LossWeights<'t, T>>,
    lambda_reg: f64,
) -> Result<Var<'t, T>> {
    if weights.is_some() != variant.weighted() {
        return Err(Error::InvalidArgument(format!(
            "{} loss {} learned weights",
            variant.name(),
            if variant.weighted() { "needs" } else { "takes no" }
        )));
    }
    let adv = adv_loss_generator(&t.score_gen)?;
    let reg = match variant {
        LossVariant::Main | LossVariant::VariantB => Some(reg_loss(
            &need(t.y_cond, "y_cond", variant)?,
            &need(t.y_hat_gen, "y_hat_gen", variant)?,
        )?),
        LossVariant::VariantA | LossVariant::RegressionCgan => Some(reg_loss(
            &need(t.y_cond, "y_cond", variant)?,
            &need(t.y_gen, "y_gen", variant)?,
        )?),
        LossVariant::VanillaCgan | LossVariant::Unconditioned => None,
    };
    combine(adv, reg, weights, lambda_reg)
}

pub fn discriminator_loss<'t, T: Element>(
    variant: LossVariant,
    t: &DiscriminatorTerms<'t, T>,
    weights: Option<LossWeights<'t, T>>,
    lambda_gp: f64,
) -> Result<Var<'t, T>> {
    if weights.is_some() != variant.weighted() {
        return Err(Error::InvalidArgument(format!(
            "{} loss {} learned weights",
            variant.name(),
            if variant.weighted() { "needs" } else { "takes no" }
        )));
    }
    let adv = adv_loss_discriminator(&t.score_gen, &t.score_real, &t.gp, lambda_gp)?;
    let real = || -> Result<Var<'t, T>> {
        reg_loss(
            &need(t.y_real, "y_real", variant)?,
            &need(t.y_hat_real, "y_hat_real", variant)?,
        )
    };
    let half = T::from_f64(0.5);
    let reg = match variant {
        LossVariant::Main => Some(real()?),
        LossVariant::VariantA => {
            let fake = reg_loss(
                &need(t.y_gen, "y_gen", variant)?,
                &need(t.y_hat_gen, "y_hat_gen", variant)?,
            )?;
            Some(real()?.add(&fake)?.scale(half))
        }
        LossVariant::VariantB => {
            let fake = reg_loss(
                &need(t.y_cond, "y_cond", variant)?,
                &need(t.y_hat_gen, "y_hat_gen", variant)?,
            )?;
            Some(real()?.add(&fake)?.scale(half))
        }
        _ => None,
    };
    combine(adv, reg, weights, 0.0)
}

/// Per-axis extents `max - min` of each sample of a `[B * N, 3]` batch,
/// differentiable through the extreme points.
pub fn measured_extents<'t, T: Element>(points: &Var<'t, T>, batch: usize) -> Result<Var<'t, T>> {
    let rows = points.shape()[0];
    let x = points.reshape([batch, rows / batch, 3])?;
    x.max_axis(1)?.sub(&x.min_axis(1)?)
}
