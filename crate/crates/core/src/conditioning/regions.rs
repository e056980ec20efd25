use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LabelKde;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_REGION_BUDGET: usize = 100_000;

/// Fraction of training samples below the inner and outer thresholds.
const OUTER_QUANTILE: f64 = 0.05;
const INNER_QUANTILE: f64 = 0.32;

/// How the k nearest training labels are turned into a region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vote {
    /// One vote per neighbor.
    Majority,
    /// Each neighbor's vote is divided by the training size of its region, so
    /// the 5 % band can win where its samples are locally over-represented.
    #[default]
    Balanced,
}

/// Density band of a label: 1 = densest 68 %, 2 = next 27 %, 3 = sparsest 5 %.
pub type Region = u8;

/// Density-quantile partition of the training labels plus a k-NN classifier
/// that extends it to arbitrary queries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaRegionModel {
    dim: usize,
    labels: Vec<f64>,
    densities: Vec<f64>,
    regions: Vec<Region>,
    pub t_inner: f64,
    pub t_outer: f64,
    pub k: usize,
    #[serde(default)]
    pub vote: Vote,
}

impl SigmaRegionModel {
    /// Evaluates the KDE at every training label and splits them at the 32nd
    /// and 5th density percentiles.
    pub fn fit(kde: &LabelKde, labels: &[Vec<f64>], k: usize) -> Result<Self> {
        let m = labels.len();
        if k == 0 || m < k {
            return Err(Error::InvalidArgument(format!(
                "region model needs at least k = {k} labels, got {m}"
            )));
        }
        let dim = kde.dim();
        if labels.iter().any(|l| l.len() != dim) {
            return Err(Error::InvalidArgument("label dimension differs from KDE".into()));
        }
        let densities: Vec<f64> = labels.iter().map(|l| kde.density(l)).collect();
        let mut sorted = densities.clone();
        sorted.sort_by(f64::total_cmp);
        let at = |q: f64| sorted[((q * m as f64).floor() as usize).min(m - 1)];
        let t_inner = at(INNER_QUANTILE);
        let t_outer = at(OUTER_QUANTILE);
        let regions = densities
            .iter()
            .map(|&d| {
                if d >= t_inner {
                    1
                } else if d >= t_outer {
                    2
                } else {
                    3
                }
            })
            .collect();
        Ok(SigmaRegionModel {
            dim,
            labels: labels.iter().flatten().copied().collect(),
            densities,
            regions,
            t_inner,
            t_outer,
            k,
            vote: Vote::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn label(&self, i: usize) -> &[f64] {
        &self.labels[i * self.dim..(i + 1) * self.dim]
    }

    /// Number of training samples in regions 1, 2, 3.
    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for &r in &self.regions {
            c[r as usize - 1] += 1;
        }
        c
    }

    pub fn with_vote(mut self, vote: Vote) -> Self {
        self.vote = vote;
        self
    }

    /// Winning region among the `k` nearest training labels under `self.vote`.
    /// Distance ties are ordered by label coordinates so the result does not
    /// depend on the training order; vote ties go to the outer region.
    pub fn classify(&self, y: &[f64]) -> Region {
        assert_eq!(y.len(), self.dim, "query dimension");
        let mut order: Vec<(f64, usize)> = (0..self.len())
            .map(|i| {
                let d2 = self.label(i).iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.total_cmp(&b.0).then_with(|| {
                self.label(a.1)
                    .iter()
                    .zip(self.label(b.1))
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        };
        let k = self.k.min(order.len());
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, cmp);
        }
        let mut votes = [0u128; 3];
        for &(_, i) in &order[..k] {
            votes[self.regions[i] as usize - 1] += 1;
        }
        if self.vote == Vote::Balanced {
            // votes_r / count_r compared exactly by scaling with the other counts
            let c = self.counts().map(|c| c as u128);
            votes = [votes[0] * c[1] * c[2], votes[1] * c[0] * c[2], votes[2] * c[0] * c[1]];
        }
        let best = *votes.iter().max().expect("three regions");
        (1..=3u8).rev().find(|&r| votes[r as usize - 1] == best).expect("some region has max votes")
    }

    /// Rejection-samples KDE draws until one classifies into `region`.
    pub fn sample_from_region<R: Rng + ?Sized>(
        &self,
        kde: &LabelKde,
        region: Region,
        rng: &mut R,
        budget: usize,
        clamp: bool,
    ) -> Result<Vec<f64>> {
        if !(1..=3).contains(&region) {
            return Err(Error::InvalidArgument(format!("region must be 1, 2 or 3, got {region}")));
        }
        for _ in 0..budget {
            let y = kde.sample(rng, clamp);
            if self.classify(&y) == region {
                return Ok(y);
            }
        }
        Err(Error::RegionUnsampleable {
            region,
            attempts: budget,
        })
    }
}

/// Keeps only the listed coordinates of each label (e.g. width and height for
/// a 2-d region plot).
pub fn project_labels(labels: &[Vec<f64>], dims: &[usize]) -> Result<Vec<Vec<f64>>> {
    labels
        .iter()
        .map(|l| {
            dims.iter()
                .map(|&d| {
                    l.get(d).copied().ok_or_else(|| {
                        Error::InvalidArgument(format!("projection dimension {d} out of range"))
                    })
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn blob(m: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| {
                (0..dim)
                    .map(|_| 0.5 + 0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn hundred_labels_split_68_27_5() {
        let labels = blob(100, 3, 2);
        let kde = LabelKde::fit_rows(&labels).unwrap();
        let model = SigmaRegionModel::fit(&kde, &labels, DEFAULT_K).unwrap();
        let [a, b, c] = model.counts();
        assert!((a as i64 - 68).abs() <= 1 && (b as i64 - 27).abs() <= 1 && (c as i64 - 5).abs() <= 1);
        assert!(model.t_inner > model.t_outer);
    }

    #[test]
    fn identical_labels_all_inner() {
        let labels = vec![vec![0.4, 0.4]; 30];
        let kde = LabelKde::fit_rows(&labels).unwrap();
        let model = SigmaRegionModel::fit(&kde, &labels, DEFAULT_K).unwrap();
        assert_eq!(model.counts(), [30, 0, 0]);
    }

    #[test]
    fn too_few_labels() {
        let labels = blob(10, 2, 1);
        let kde = LabelKde::fit_rows(&labels).unwrap();
        assert!(SigmaRegionModel::fit(&kde, &labels, 20).is_err());
    }

    #[test]
    fn far_query_is_outer() {
        // 1-d so the 20 labels nearest a far point are the extreme tail, which
        // lies entirely in region 3 (25 samples per tail)
        let labels = blob(1000, 1, 5);
        let kde = LabelKde::fit_rows(&labels).unwrap();
        let model = SigmaRegionModel::fit(&kde, &labels, DEFAULT_K).unwrap();
        assert_eq!(model.classify(&[5.0]), 3);
        assert_eq!(model.classify(&[-5.0]), 3);
        let center = labels
            .iter()
            .zip(model.densities())
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(model.classify(center), 1);
    }

    #[test]
    fn accepted_samples_match_region() {
        let labels = blob(300, 2, 8);
        let kde = LabelKde::fit_rows(&labels).unwrap();
        let model = SigmaRegionModel::fit(&kde, &labels, DEFAULT_K).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for region in 1..=3 {
            for _ in 0..20 {
                let y = model
                    .sample_from_region(&kde, region, &mut rng, DEFAULT_REGION_BUDGET, false)
                    .unwrap();
                assert_eq!(model.classify(&y), region);
            }
        }
        assert!(model.sample_from_region(&kde, 4, &mut rng, 10, false).is_err());
    }

    fn oracle(model: &SigmaRegionModel, y: &[f64]) -> Region {
        let mut all: Vec<(f64, Vec<f64>, Region)> = (0..model.len())
            .map(|i| {
                let l = model.label(i).to_vec();
                let d: f64 = l.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, l, model.regions()[i])
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()));
        let counts = model.counts();
        let mut score = [0.0f64; 3];
        for (_, _, r) in &all[..model.k] {
            let w = match model.vote {
                Vote::Majority => 1.0,
                Vote::Balanced => 1.0 / counts[*r as usize - 1] as f64,
            };
            score[*r as usize - 1] += w;
        }
        let best = score.iter().cloned().fold(f64::MIN, f64::max);
        (1..=3u8).rev().find(|&r| (score[r as usize - 1] - best).abs() < 1e-12).unwrap()
    }

    #[test]
    fn matches_sorting_oracle_for_both_votes() {
        let labels = blob(250, 3, 11);
        let kde = LabelKde::fit_rows(&labels).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for vote in [Vote::Majority, Vote::Balanced] {
            let model = SigmaRegionModel::fit(&kde, &labels, DEFAULT_K).unwrap().with_vote(vote);
            for _ in 0..200 {
                let y = kde.sample(&mut rng, false);
                assert_eq!(model.classify(&y), oracle(&model, &y));
            }
        }
    }

    #[test]
    fn projection() {
        let p = project_labels(&[vec![1.0, 2.0, 3.0]], &[2, 0]).unwrap();
        assert_eq!(p, vec![vec![3.0, 1.0]]);
        assert!(project_labels(&[vec![1.0]], &[1]).is_err());
    }
}
