//! Non-learned reference methods: re-sample-and-select over an unconditioned
//! generator (B1) and per-axis affine scaling to the target extents (B2).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::metrics::extents;
use crate::models::TreeGcnGenerator;
use crate::shapes::{ConditionVector, PointCloud};
use crate::tensor::Tensor;

pub const DEFAULT_B1_CANDIDATES: usize = 10;

/// Squared extent error `sum_k (extent_k - y_k)^2`.
pub fn extent_error(cloud: &PointCloud, y: &ConditionVector) -> f64 {
    let e = extents(cloud);
    (0..3).map(|k| (e[k] - y[k] as f64).powi(2)).sum()
}

/// Draws `count` clouds from an unconditioned generator, one latent row per
/// cloud taken from `rng` in order.
pub fn sample_unconditioned<R: Rng + ?Sized>(
    generator: &TreeGcnGenerator<f32>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<PointCloud>> {
    if generator.config.is_conditional() {
        return Err(Error::InvalidArgument("expected an unconditioned generator".into()));
    }
    let dim = generator.config.latent_dim;
    let n = generator.config.num_points();
    let z = Tensor::new([count, dim], (0..count * dim).map(|_| rng.sample(StandardNormal)).collect())?;
    let out = generator.generate(&z, None)?;
    out.data().chunks(n * 3).map(PointCloud::from_flat).collect()
}

/// B1: generates `k` candidates and returns the index and cloud with the
/// smallest extent error against `y` (first wins ties).
pub fn b1_select<R: Rng + ?Sized>(
    generator: &TreeGcnGenerator<f32>,
    y: &ConditionVector,
    k: usize,
    rng: &mut R,
) -> Result<(usize, PointCloud)> {
    if k == 0 {
        return Err(Error::InvalidArgument("B1 needs k >= 1".into()));
    }
    if y.dim() != 3 {
        return Err(Error::InvalidArgument(format!("B1 needs 3-d extent targets, got d = {}", y.dim())));
    }
    let candidates = sample_unconditioned(generator, k, rng)?;
    let mut best = 0;
    let mut best_err = f64::INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let err = extent_error(c, y);
        if err < best_err {
            best = i;
            best_err = err;
        }
    }
    let cloud = candidates.into_iter().nth(best).expect("k >= 1");
    Ok((best, cloud))
}

pub fn b1_resample<R: Rng + ?Sized>(
    generator: &TreeGcnGenerator<f32>,
    y: &ConditionVector,
    k: usize,
    rng: &mut R,
) -> Result<PointCloud> {
    Ok(b1_select(generator, y, k, rng)?.1)
}

/// B2: maps each axis so its extent becomes `y`, keeping the bounding-box
/// midpoint in place.
pub fn b2_scale(cloud: &PointCloud, y: &ConditionVector) -> Result<PointCloud> {
    if y.dim() != 3 {
        return Err(Error::InvalidArgument(format!("B2 needs 3-d extent targets, got d = {}", y.dim())));
    }
    let (lo, hi) = cloud.bounds();
    let mut scale = [0.0f64; 3];
    let mut mid = [0.0f64; 3];
    for k in 0..3 {
        let extent = hi[k] as f64 - lo[k] as f64;
        if extent <= 0.0 {
            return Err(Error::DegenerateAxis { axis: k });
        }
        scale[k] = y[k] as f64 / extent;
        mid[k] = 0.5 * (lo[k] as f64 + hi[k] as f64);
    }
    let points = cloud
        .points()
        .iter()
        .map(|p| [0, 1, 2].map(|k| ((p[k] as f64 - mid[k]) * scale[k] + mid[k]) as f32))
        .collect();
    PointCloud::new(points)
}
