use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shapes::ConditionVector;

/// Smallest bandwidth used when a label dimension has (near) zero spread.
pub const BANDWIDTH_FLOOR: f64 = 1e-3;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Product-Gaussian kernel density estimate over training labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelKde {
    dim: usize,
    /// Row-major `[M, dim]`.
    samples: Vec<f64>,
    bandwidth: Vec<f64>,
}

impl LabelKde {
    pub fn fit(labels: &[ConditionVector]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|y| y.as_slice().iter().map(|&v| v as f64).collect())
            .collect();
        Self::fit_rows(&rows)
    }

    /// Fits with Scott's rule, `h_j = sigma_j * M^(-1/(d+4))`, floored at
    /// [`BANDWIDTH_FLOOR`].
    pub fn fit_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "KDE needs at least 2 labels, got {m}"
            )));
        }
        let dim = rows[0].len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("labels must share a nonzero dimension".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite label".into()));
        }
        let factor = (m as f64).powf(-1.0 / (dim as f64 + 4.0));
        let bandwidth = (0..dim)
            .map(|j| {
                let mean = rows.iter().map(|r| r[j]).sum::<f64>() / m as f64;
                let var =
                    rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
                (var.sqrt() * factor).max(BANDWIDTH_FLOOR)
            })
            .collect();
        Ok(LabelKde {
            dim,
            samples: rows.iter().flatten().copied().collect(),
            bandwidth,
        })
    }

    /// Builds a KDE with explicit bandwidths.
    pub fn with_bandwidth(rows: &[Vec<f64>], bandwidth: Vec<f64>) -> Result<Self> {
        let mut kde = Self::fit_rows(rows)?;
        if bandwidth.len() != kde.dim || bandwidth.iter().any(|&h| !h.is_finite() || h <= 0.0) {
            return Err(Error::InvalidArgument("bandwidths must be positive, one per dimension".into()));
        }
        kde.bandwidth = bandwidth;
        Ok(kde)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn sample_row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn density(&self, y: &[f64]) -> f64 {
        assert_eq!(y.len(), self.dim, "query dimension");
        let norm: f64 = self.bandwidth.iter().map(|h| INV_SQRT_2PI / h).product();
        let sum: f64 = self
            .samples
            .chunks_exact(self.dim)
            .map(|s| {
                let q: f64 = s
                    .iter()
                    .zip(y)
                    .zip(&self.bandwidth)
                    .map(|((si, yi), h)| ((yi - si) / h).powi(2))
                    .sum();
                (-0.5 * q).exp()
            })
            .sum();
        norm * sum / self.len() as f64
    }

    /// Picks a training label uniformly and perturbs each coordinate with
    /// `N(0, h_j^2)`; optionally clamps to the unit cube.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, clamp: bool) -> Vec<f64> {
        let i = rng.random_range(0..self.len());
        self.sample_row(i)
            .iter()
            .zip(&self.bandwidth)
            .map(|(&s, &h)| {
                let z: f64 = StandardNormal.sample(rng);
                let v = s + h * z;
                if clamp {
                    v.clamp(0.0, 1.0)
                } else {
                    v
                }
            })
            .collect()
    }
}
