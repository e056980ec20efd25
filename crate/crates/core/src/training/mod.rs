//! Losses, the alternating WGAN-GP training loop, checkpoint selection and
//! region-stratified evaluation of trained generators.

mod evaluation;
mod losses;
mod trainer;

pub use evaluation::{evaluate_regions, generate_for_labels, region_targets, RegionEval};
pub use losses::{
    adv_loss_discriminator, adv_loss_generator, discriminator_loss, generator_loss, gradient_penalty,
    interpolation_weights, measured_extents, reg_loss, weighted, DiscriminatorTerms, GeneratorTerms, LossVariant,
    LossWeights,
};
pub use trainer::{
    dataset_hash, fit_regression_head, read_records, select_checkpoint, train, write_records, CheckpointRecord,
    EpochRecord, RunManifest, TrainOutcome, Trainer,
};

use serde::{Deserialize, Serialize};

use crate::conditioning::SamplingStrategy;
use crate::error::{Error, Result};
use crate::models::{DiscVariant, DiscriminatorConfig, GeneratorConfig};

/// Everything that determines a training run besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: LossVariant,
    pub strategy: SamplingStrategy,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_gp: f64,
    /// Fixed weight of the regression term for `RegressionCgan`.
    pub lambda_reg: f64,
    pub critic_iters: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Evaluate and checkpoint every this many epochs (and after the last).
    pub eval_every: usize,
    /// Validation clouds generated per evaluation.
    pub eval_samples: usize,
    pub fpd_seed: u64,
    pub clamp_labels: bool,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults for a label of dimension `label_dim`.
    pub fn desk(variant: LossVariant, strategy: SamplingStrategy, label_dim: usize) -> Self {
        let disc_variant = match variant {
            LossVariant::Main | LossVariant::VariantA | LossVariant::VariantB => DiscVariant::DualHead,
            LossVariant::VanillaCgan => DiscVariant::VanillaConcat,
            LossVariant::RegressionCgan | LossVariant::Unconditioned => DiscVariant::Unconditioned,
        };
        let mut generator = GeneratorConfig::desk(label_dim);
        if !variant.conditional_generator() {
            generator = generator.unconditioned();
        }
        let disc_label = if disc_variant == DiscVariant::Unconditioned { 0 } else { label_dim };
        TrainConfig {
            variant,
            strategy,
            generator,
            discriminator: DiscriminatorConfig::desk(disc_variant, disc_label),
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            lambda_gp: 10.0,
            lambda_reg: 1.0,
            critic_iters: 1,
            batch_size: 16,
            epochs: 300,
            eval_every: 50,
            eval_samples: 100,
            fpd_seed: 0,
            clamp_labels: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        self.generator.validate()?;
        self.discriminator.validate()?;
        if !(self.lr > 0.0 && self.lambda_gp >= 0.0 && self.lambda_reg >= 0.0) {
            return bad("lr must be positive, lambda_gp and lambda_reg nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if self.critic_iters == 0 || self.batch_size == 0 || self.eval_every == 0 || self.eval_samples < 2 {
            return bad("critic_iters, batch_size, eval_every must be positive and eval_samples >= 2".into());
        }
        if !self.variant.accepts(self.discriminator.variant) {
            return bad(format!(
                "loss variant {} cannot train a {} discriminator",
                self.variant.name(),
                self.discriminator.variant.name()
            ));
        }
        if self.variant.conditional_generator() != self.generator.is_conditional() {
            return bad(format!(
                "loss variant {} needs a {} generator",
                self.variant.name(),
                if self.variant.conditional_generator() { "conditional" } else { "unconditioned" }
            ));
        }
        if self.discriminator.label_dim > 0 && self.discriminator.label_dim != self.generator.label_dim {
            return bad("generator and discriminator label dimensions differ".into());
        }
        Ok(())
    }
}
