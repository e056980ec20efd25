//! Training-label distribution: KDE fit, the three label-sampling
//! strategies, and the density-region model used for stratified evaluation.

mod kde;
mod regions;

pub use kde::{LabelKde, BANDWIDTH_FLOOR};
pub use regions::{project_labels, Region, SigmaRegionModel, Vote, DEFAULT_K, DEFAULT_REGION_BUDGET};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shapes::ConditionVector;

/// How `y_cond` is drawn for each generated sample during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// i.i.d. `U[0, 1]` per dimension.
    UniformRandom,
    /// A training label chosen uniformly.
    DatasetResample,
    /// A draw from the label KDE.
    KdeSample,
}

impl std::str::FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform_random" => Ok(SamplingStrategy::UniformRandom),
            "dataset" | "dataset_resample" => Ok(SamplingStrategy::DatasetResample),
            "kde" | "kde_sample" => Ok(SamplingStrategy::KdeSample),
            other => Err(Error::InvalidArgument(format!("unknown sampling strategy {other:?}"))),
        }
    }
}

/// Everything a strategy may need, borrowed from the training setup.
#[derive(Clone, Copy)]
pub struct LabelSource<'a> {
    pub dim: usize,
    pub labels: Option<&'a [ConditionVector]>,
    pub kde: Option<&'a LabelKde>,
    /// Clamp KDE draws into `[0, 1]^d`.
    pub clamp: bool,
}

pub fn sample_label<R: Rng + ?Sized>(
    strategy: SamplingStrategy,
    source: &LabelSource<'_>,
    rng: &mut R,
) -> Result<ConditionVector> {
    match strategy {
        SamplingStrategy::UniformRandom => {
            Ok(ConditionVector((0..source.dim).map(|_| rng.random::<f32>()).collect()))
        }
        SamplingStrategy::DatasetResample => {
            let labels = source
                .labels
                .filter(|l| !l.is_empty())
                .ok_or_else(|| Error::InvalidArgument("dataset resampling needs training labels".into()))?;
            Ok(labels[rng.random_range(0..labels.len())].clone())
        }
        SamplingStrategy::KdeSample => {
            let kde = source
                .kde
                .ok_or_else(|| Error::InvalidArgument("KDE sampling needs a fitted KDE".into()))?;
            Ok(ConditionVector(
                kde.sample(rng, source.clamp).into_iter().map(|v| v as f32).collect(),
            ))
        }
    }
}
