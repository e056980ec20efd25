//! Evaluation metrics: dimension MSE, Chamfer and Earth Mover's distances,
//! MMD, coverage, voxel JSD, Fréchet point distance and the checkpoint
//! selection score.

mod assignment;
mod fpd;

pub use assignment::min_cost_assignment;
pub use fpd::{fpd, frechet_distance, FeatureExtractor, GaussianStats, FPD_FEATURES};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shapes::{ConditionVector, PointCloud};

/// Voxels per axis for [`jsd`].
pub const JSD_RESOLUTION: usize = 28;

fn sq_dist(a: &[f32; 3], b: &[f32; 3]) -> f64 {
    (0..3).map(|k| (a[k] as f64 - b[k] as f64).powi(2)).sum()
}

/// Per-axis extents in `f64`.
pub fn extents(cloud: &PointCloud) -> [f64; 3] {
    let (lo, hi) = cloud.bounds();
    [0, 1, 2].map(|k| hi[k] as f64 - lo[k] as f64)
}

/// `100 * mean((extent - y)^2)` over clouds and axes.
pub fn dimension_mse(clouds: &[PointCloud], targets: &[ConditionVector]) -> Result<f64> {
    if clouds.is_empty() || clouds.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "dimension MSE needs matching nonempty inputs, got {} clouds and {} targets",
            clouds.len(),
            targets.len()
        )));
    }
    let mut sum = 0.0;
    for (c, y) in clouds.iter().zip(targets) {
        if y.dim() != 3 {
            return Err(Error::InvalidArgument(format!(
                "dimension MSE needs 3-d extent labels, got d = {}",
                y.dim()
            )));
        }
        let e = extents(c);
        sum += (0..3).map(|k| (e[k] - y[k] as f64).powi(2)).sum::<f64>();
    }
    Ok(100.0 * sum / (3 * clouds.len()) as f64)
}

/// Symmetric Chamfer distance with squared point distances.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    let one_way = |x: &PointCloud, y: &PointCloud| {
        x.points()
            .iter()
            .map(|p| y.points().iter().map(|q| sq_dist(p, q)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / x.len() as f64
    };
    one_way(a, b) + one_way(b, a)
}

/// Mean Euclidean distance under the optimal one-to-one matching.
pub fn emd(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let n = a.len();
    if b.len() != n {
        return Err(Error::Dimension {
            op: "emd",
            lhs: vec![n, 3],
            rhs: vec![b.len(), 3],
        });
    }
    let cost: Vec<f64> = a
        .points()
        .iter()
        .flat_map(|p| b.points().iter().map(move |q| sq_dist(p, q).sqrt()))
        .collect();
    Ok(min_cost_assignment(n, &cost).0 / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudDistance {
    Chamfer,
    Emd,
}

impl CloudDistance {
    pub fn eval(self, a: &PointCloud, b: &PointCloud) -> Result<f64> {
        match self {
            CloudDistance::Chamfer => Ok(chamfer(a, b)),
            CloudDistance::Emd => emd(a, b),
        }
    }
}

/// Row-major `[gen, ref]` distance matrix.
pub fn distance_matrix(gen: &[PointCloud], refs: &[PointCloud], dist: CloudDistance) -> Result<Vec<f64>> {
    if dist == CloudDistance::Emd {
        for (i, g) in gen.iter().enumerate() {
            if let Some(j) = refs.iter().position(|r| r.len() != g.len()) {
                return Err(Error::InvalidArgument(format!(
                    "EMD needs equal point counts: generated cloud {i} has {} points, reference cloud {j} has {}",
                    g.len(),
                    refs[j].len()
                )));
            }
        }
    }
    (0..gen.len() * refs.len())
        .into_par_iter()
        .map(|k| dist.eval(&gen[k / refs.len()], &refs[k % refs.len()]))
        .collect()
}

fn check_sets(gen: usize, refs: usize) -> Result<()> {
    if gen == 0 || refs == 0 {
        return Err(Error::InvalidArgument("metric needs nonempty sets".into()));
    }
    Ok(())
}

/// Mean over reference clouds of the distance to the closest generated one,
/// from a `[gen, ref]` matrix.
pub fn mmd_from_matrix(matrix: &[f64], gen: usize, refs: usize) -> Result<f64> {
    check_sets(gen, refs)?;
    let total: f64 = (0..refs)
        .map(|j| (0..gen).map(|i| matrix[i * refs + j]).fold(f64::INFINITY, f64::min))
        .sum();
    Ok(total / refs as f64)
}

/// Fraction of reference clouds that are the nearest reference of at least
/// one generated cloud (first index wins ties).
pub fn coverage_from_matrix(matrix: &[f64], gen: usize, refs: usize) -> Result<f64> {
    check_sets(gen, refs)?;
    let mut hit = vec![false; refs];
    for i in 0..gen {
        let row = &matrix[i * refs..(i + 1) * refs];
        let mut best = 0;
        for j in 1..refs {
            if row[j] < row[best] {
                best = j;
            }
        }
        hit[best] = true;
    }
    Ok(hit.iter().filter(|&&h| h).count() as f64 / refs as f64)
}

pub fn mmd(gen: &[PointCloud], refs: &[PointCloud], dist: CloudDistance) -> Result<f64> {
    check_sets(gen.len(), refs.len())?;
    mmd_from_matrix(&distance_matrix(gen, refs, dist)?, gen.len(), refs.len())
}

pub fn coverage(gen: &[PointCloud], refs: &[PointCloud], dist: CloudDistance) -> Result<f64> {
    check_sets(gen.len(), refs.len())?;
    coverage_from_matrix(&distance_matrix(gen, refs, dist)?, gen.len(), refs.len())
}

/// Normalized occupancy histogram of all points on a `res^3` grid over the
/// unit cube; points outside are clamped into the border voxels.
pub fn voxel_distribution(clouds: &[PointCloud], res: usize) -> Vec<f64> {
    let mut hist = vec![0.0f64; res * res * res];
    let cell = |x: f32| ((x as f64 * res as f64).floor().max(0.0) as usize).min(res - 1);
    let mut total = 0.0;
    for c in clouds {
        for p in c.points() {
            hist[(cell(p[0]) * res + cell(p[1])) * res + cell(p[2])] += 1.0;
            total += 1.0;
        }
    }
    if total > 0.0 {
        hist.iter_mut().for_each(|h| *h /= total);
    }
    hist
}

/// Jensen-Shannon divergence (natural log) between two histograms.
pub fn jsd_histograms(p: &[f64], q: &[f64]) -> f64 {
    let kl_to_mid = |a: f64, b: f64| if a > 0.0 { a * (2.0 * a / (a + b)).ln() } else { 0.0 };
    let v: f64 = p.iter().zip(q).map(|(&a, &b)| 0.5 * kl_to_mid(a, b) + 0.5 * kl_to_mid(b, a)).sum();
    v.max(0.0)
}

pub fn jsd(gen: &[PointCloud], refs: &[PointCloud]) -> Result<f64> {
    check_sets(gen.len(), refs.len())?;
    Ok(jsd_histograms(
        &voxel_distribution(gen, JSD_RESOLUTION),
        &voxel_distribution(refs, JSD_RESOLUTION),
    ))
}

/// Checkpoint selection score, `FPD * MSE%`.
pub fn selection_score(fpd: f64, mse_percent: f64) -> f64 {
    fpd * mse_percent
}

/// All Table-1 style metrics for one generated set against a reference set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Absent when the generated clouds have no target labels.
    pub mse_percent: Option<f64>,
    pub fpd: f64,
    pub mmd_cd: f64,
    pub mmd_emd: f64,
    pub cov_cd: f64,
    pub cov_emd: f64,
    pub jsd: f64,
    pub score: Option<f64>,
}

impl MetricReport {
    pub fn compute(
        gen: &[PointCloud],
        targets: Option<&[ConditionVector]>,
        refs: &[PointCloud],
        extractor: &FeatureExtractor,
    ) -> Result<Self> {
        check_sets(gen.len(), refs.len())?;
        let mse_percent = targets.map(|t| dimension_mse(gen, t)).transpose()?;
        let fpd = fpd(gen, refs, extractor)?;
        let cd = distance_matrix(gen, refs, CloudDistance::Chamfer)?;
        let em = distance_matrix(gen, refs, CloudDistance::Emd)?;
        let (g, r) = (gen.len(), refs.len());
        Ok(MetricReport {
            mse_percent,
            fpd,
            mmd_cd: mmd_from_matrix(&cd, g, r)?,
            mmd_emd: mmd_from_matrix(&em, g, r)?,
            cov_cd: coverage_from_matrix(&cd, g, r)?,
            cov_emd: coverage_from_matrix(&em, g, r)?,
            jsd: jsd(gen, refs)?,
            score: mse_percent.map(|m| selection_score(fpd, m)),
        })
    }

    pub const CSV_HEADER: &'static str = "mse_percent,fpd,mmd_cd,mmd_emd,cov_cd,cov_emd,jsd,score";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            opt(self.mse_percent),
            self.fpd,
            self.mmd_cd,
            self.mmd_emd,
            self.cov_cd,
            self.cov_emd,
            self.jsd,
            opt(self.score)
        )
    }
}
