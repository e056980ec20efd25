mod common;

use ccpc::conditioning::{sample_label, LabelKde, LabelSource, SamplingStrategy, SigmaRegionModel, Vote, DEFAULT_K};
use ccpc::shapes::{generate_dataset, ConditionVector, ShapeFamily};
use common::rng;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn rows(labels: &[ConditionVector]) -> Vec<Vec<f64>> {
    labels.iter().map(|y| y.as_slice().iter().map(|&v| v as f64).collect()).collect()
}

#[test]
fn kde_draws_follow_the_mixture_marginals() {
    let mut r = rng(1);
    let train: Vec<Vec<f64>> = (0..50).map(|_| vec![r.random_range(0.2..0.8), r.random_range(0.0..1.0)]).collect();
    let kde = LabelKde::fit_rows(&train).unwrap();
    let n = 4000;
    for axis in 0..2 {
        let h = kde.bandwidth()[axis];
        let cdf = |x: f64| {
            train
                .iter()
                .map(|s| Normal::new(s[axis], h).unwrap().cdf(x))
                .sum::<f64>()
                / train.len() as f64
        };
        let mut draws: Vec<f64> = (0..n).map(|_| kde.sample(&mut r, false)[axis]).collect();
        draws.sort_by(f64::total_cmp);
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // Kolmogorov critical value at alpha = 0.001
        assert!(ks < 1.95 / (n as f64).sqrt(), "axis {axis}: D = {ks}");
    }
}

#[test]
fn kde_density_integrates_to_one() {
    let mut r = rng(2);
    let train: Vec<Vec<f64>> = (0..30).map(|_| vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)]).collect();
    let kde = LabelKde::fit_rows(&train).unwrap();
    let (lo, hi, steps) = (-1.0, 2.0, 600);
    let dx = (hi - lo) / steps as f64;
    let mut total = 0.0;
    for i in 0..steps {
        for j in 0..steps {
            let y = [lo + (i as f64 + 0.5) * dx, lo + (j as f64 + 0.5) * dx];
            total += kde.density(&y) * dx * dx;
        }
    }
    assert!((total - 1.0).abs() < 1e-3, "{total}");
}

#[test]
fn regions_split_a_thousand_labels_68_27_5() {
    let data = generate_dataset(&ShapeFamily::boxes(), 1000, 3).unwrap();
    let labels: Vec<_> = data.iter().map(|c| c.label.clone()).collect();
    let kde = LabelKde::fit(&labels).unwrap();
    let model = SigmaRegionModel::fit(&kde, &rows(&labels), DEFAULT_K).unwrap();
    let [a, b, c] = model.counts();
    assert!(a.abs_diff(680) <= 1 && b.abs_diff(270) <= 1 && c.abs_diff(50) <= 1, "{a}/{b}/{c}");
}

#[test]
fn region_sampling_only_returns_the_requested_region() {
    let data = generate_dataset(&ShapeFamily::boxes(), 300, 4).unwrap();
    let labels: Vec<_> = data.iter().map(|c| c.label.clone()).collect();
    let kde = LabelKde::fit(&labels).unwrap();
    for vote in [Vote::Balanced, Vote::Majority] {
        let model = SigmaRegionModel::fit(&kde, &rows(&labels), DEFAULT_K).unwrap().with_vote(vote);
        let mut r = rng(5);
        for region in 1..=2 {
            for _ in 0..20 {
                let y = model.sample_from_region(&kde, region, &mut r, 100_000, true).unwrap();
                assert_eq!(model.classify(&y), region);
            }
        }
    }
}

#[test]
fn inner_region_accepts_more_often_than_outer_on_blob_labels() {
    let mut r = rng(6);
    let normal = Normal::new(0.5, 0.1).unwrap();
    let train: Vec<Vec<f64>> = (0..400)
        .map(|_| (0..2).map(|_| normal.inverse_cdf(r.random_range(0.001..0.999))).collect())
        .collect();
    let kde = LabelKde::fit_rows(&train).unwrap();
    let model = SigmaRegionModel::fit(&kde, &train, DEFAULT_K).unwrap();
    let mut hits = [0usize; 3];
    for _ in 0..2000 {
        hits[model.classify(&kde.sample(&mut r, false)) as usize - 1] += 1;
    }
    assert!(hits[0] > 4 * hits[2], "{hits:?}");
}

#[test]
fn strategies_draw_from_their_sources() {
    let labels = vec![ConditionVector::new(vec![0.1, 0.2, 0.3]), ConditionVector::new(vec![0.7, 0.8, 0.9])];
    let kde = LabelKde::fit(&labels).unwrap();
    let source = LabelSource { dim: 3, labels: Some(&labels), kde: Some(&kde), clamp: true };
    let mut r = rng(7);
    for _ in 0..50 {
        let u = sample_label(SamplingStrategy::UniformRandom, &source, &mut r).unwrap();
        assert!(u.in_unit_cube());
        let d = sample_label(SamplingStrategy::DatasetResample, &source, &mut r).unwrap();
        assert!(labels.contains(&d));
        let k = sample_label(SamplingStrategy::KdeSample, &source, &mut r).unwrap();
        assert!(k.in_unit_cube());
    }
    let empty = LabelSource { dim: 3, labels: None, kde: None, clamp: true };
    assert!(sample_label(SamplingStrategy::KdeSample, &empty, &mut r).is_err());
    assert!(sample_label(SamplingStrategy::DatasetResample, &empty, &mut r).is_err());
}
