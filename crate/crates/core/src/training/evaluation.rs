use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conditioning::{LabelKde, Region, SigmaRegionModel, DEFAULT_REGION_BUDGET};
use crate::error::{Error, Result};
use crate::metrics::{dimension_mse, fpd, FeatureExtractor};
use crate::models::TreeGcnGenerator;
use crate::shapes::{ConditionVector, PointCloud};
use crate::tensor::Tensor;

/// Generates one cloud per label, `batch` at a time, with latents drawn from
/// `rng` in order. Unconditioned generators ignore the labels' values but
/// still emit one cloud each.
pub fn generate_for_labels<R: Rng + ?Sized>(
    generator: &TreeGcnGenerator<f32>,
    labels: &[ConditionVector],
    batch: usize,
    rng: &mut R,
) -> Result<Vec<PointCloud>> {
    if batch == 0 {
        return Err(Error::InvalidArgument("batch must be positive".into()));
    }
    let dim = generator.config.latent_dim;
    let n = generator.config.num_points();
    let mut clouds = Vec::with_capacity(labels.len());
    for chunk in labels.chunks(batch) {
        let b = chunk.len();
        let z = Tensor::new([b, dim], (0..b * dim).map(|_| rng.sample(StandardNormal)).collect())?;
        let y = if generator.config.is_conditional() {
            let d = chunk[0].dim();
            Some(Tensor::new([b, d], chunk.iter().flat_map(|y| y.as_slice().iter().copied()).collect())?)
        } else {
            None
        };
        let out = generator.generate(&z, y.as_ref())?;
        for cloud in out.data().chunks(n * 3) {
            clouds.push(PointCloud::from_flat(cloud)?);
        }
    }
    Ok(clouds)
}

/// `per_region` KDE draws classified into each region, regions 1..3 in order.
pub fn region_targets(
    model: &SigmaRegionModel,
    kde: &LabelKde,
    per_region: usize,
    seed: u64,
    clamp: bool,
) -> Result<[Vec<ConditionVector>; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |region: Region| -> Result<Vec<ConditionVector>> {
        (0..per_region)
            .map(|_| {
                let y = model.sample_from_region(kde, region, &mut rng, DEFAULT_REGION_BUDGET, clamp)?;
                Ok(ConditionVector::new(y.into_iter().map(|v| v as f32).collect()))
            })
            .collect()
    };
    Ok([draw(1)?, draw(2)?, draw(3)?])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionEval {
    pub region: Region,
    pub samples: usize,
    pub mse: f64,
    pub fpd: Option<f64>,
}

/// Dimension MSE (and FPD against `refs` when given) of clouds generated for
/// each region's targets.
pub fn evaluate_regions(
    generator: &TreeGcnGenerator<f32>,
    targets: &[Vec<ConditionVector>; 3],
    refs: Option<(&[PointCloud], &FeatureExtractor)>,
    batch: usize,
    seed: u64,
) -> Result<[RegionEval; 3]> {
    let eval = |r: usize| -> Result<RegionEval> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64 + 1);
        let clouds = generate_for_labels(generator, &targets[r], batch, &mut rng)?;
        let fpd = match refs {
            Some((refs, extractor)) => Some(fpd(&clouds, refs, extractor)?),
            None => None,
        };
        Ok(RegionEval {
            region: r as Region + 1,
            samples: clouds.len(),
            mse: dimension_mse(&clouds, &targets[r])?,
            fpd,
        })
    };
    Ok([eval(0)?, eval(1)?, eval(2)?])
}
