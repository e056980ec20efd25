use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{xavier_uniform, LEAKY_SLOPE};
use crate::shapes::PointCloud;
use crate::tensor::Tensor;

/// Default feature width of the FPD extractor.
pub const FPD_FEATURES: usize = 128;

/// Frozen PointNet with seeded random weights: per-point linear maps with
/// LeakyReLU, then a max-pool over points.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub seed: u64,
    pub widths: Vec<usize>,
    #[serde(skip)]
    layers: Vec<(Tensor<f64>, Tensor<f64>)>,
}

impl PartialEq for FeatureExtractor {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed && self.widths == other.widths
    }
}

impl FeatureExtractor {
    pub fn new(seed: u64) -> Self {
        Self::with_widths(seed, vec![64, FPD_FEATURES])
    }

    pub fn with_widths(seed: u64, widths: Vec<usize>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = 3;
        let mut layers = Vec::new();
        for &w in &widths {
            let weight = xavier_uniform(fan_in, w, &mut rng);
            // small random biases so the pooled features are not all
            // positively homogeneous in the coordinates
            let bias = xavier_uniform(1, w, &mut rng).reshape([w]).expect("same length");
            layers.push((weight, bias));
            fan_in = w;
        }
        FeatureExtractor { seed, widths, layers }
    }

    pub fn dim(&self) -> usize {
        *self.widths.last().unwrap_or(&3)
    }

    pub fn features(&self, cloud: &PointCloud) -> Vec<f64> {
        let flat: Vec<f64> = cloud.to_flat().iter().map(|&v| v as f64).collect();
        let mut h = Tensor::new([cloud.len(), 3], flat).expect("n x 3");
        for (w, b) in &self.layers {
            h = h
                .matmul(w)
                .and_then(|t| t.add(b))
                .expect("extractor shapes are consistent")
                .leaky_relu(LEAKY_SLOPE);
        }
        let (pooled, _) = h.max_axis(0).expect("nonempty cloud");
        pooled.into_data()
    }

    pub fn features_of(&self, clouds: &[PointCloud]) -> Vec<Vec<f64>> {
        clouds.par_iter().map(|c| self.features(c)).collect()
    }
}

/// Mean and unbiased covariance of a feature set.
#[derive(Clone, Debug)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        let n = features.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "Fréchet distance needs at least 2 samples per set, got {n}"
            )));
        }
        let d = features[0].len();
        if features.iter().any(|f| f.len() != d) {
            return Err(Error::InvalidArgument("feature vectors differ in length".into()));
        }
        let x = DMatrix::from_fn(n, d, |i, j| features[i][j]);
        let mean = DVector::from_fn(d, |j, _| x.column(j).sum() / n as f64);
        let mut centered = x;
        for j in 0..d {
            let m = mean[j];
            centered.column_mut(j).iter_mut().for_each(|v| *v -= m);
        }
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        Ok(GaussianStats { mean, cov })
    }
}

fn psd_sqrt(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clamped = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    (q * DMatrix::from_diagonal(&roots) * q.transpose(), clamped)
}

/// `|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)`.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> f64 {
    let diff = (&a.mean - &b.mean).norm_squared();
    let (s1, c1) = psd_sqrt(&a.cov);
    let inner = &s1 * &b.cov * &s1;
    let sym = (&inner + inner.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let c2 = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
    if c1 + c2 > 0 {
        log::debug!("clamped {} negative covariance eigenvalues to 0 in FPD", c1 + c2);
    }
    let cross: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();
    (diff + a.cov.trace() + b.cov.trace() - 2.0 * cross).max(0.0)
}

/// Fréchet point distance between two cloud sets under `extractor`.
pub fn fpd(gen: &[PointCloud], refs: &[PointCloud], extractor: &FeatureExtractor) -> Result<f64> {
    let a = GaussianStats::fit(&extractor.features_of(gen))?;
    let b = GaussianStats::fit(&extractor.features_of(refs))?;
    Ok(frechet_distance(&a, &b))
}
