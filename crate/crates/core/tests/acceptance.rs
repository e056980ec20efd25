//! One PASS/FAIL line per acceptance criterion.
//!
//! `CCPC_ACCEPTANCE_ONLY=1,2,5` runs a subset; `CCPC_ACCEPTANCE_STRICT=1`
//! exits non-zero when any criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use ccpc::baselines::{b1_resample, b2_scale, sample_unconditioned};
use ccpc::conditioning::{LabelKde, SamplingStrategy, SigmaRegionModel, DEFAULT_K};
use ccpc::metrics::{dimension_mse, fpd, frechet_distance, FeatureExtractor, GaussianStats};
use ccpc::models::{DiscriminatorConfig, DiscVariant, GeneratorConfig, PointNetDiscriminator, TreeGcnGenerator};
use ccpc::shapes::{generate_dataset, write_dataset, ConditionVector, LabeledCloud, ShapeFamily};
use ccpc::tensor::Tensor;
use ccpc::training::{
    evaluate_regions, fit_regression_head, region_targets, train, LossVariant, RunManifest, TrainConfig,
    TrainOutcome,
};
use common::{gp_second_order_err, gradient_suite, metric_suite, EMD_TOL, GP_TOL, GRAD_TOL, METRIC_TOL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

const SEEDS: [u64; 3] = [0, 1, 2];
const B2_MSE_TOL: f64 = 1e-6;
const REGION_SPLIT: [usize; 3] = [680, 270, 50];
const REGION_SPLIT_TOL: usize = 1;
const FPD_IDENTITY_TOL: f64 = 1e-6;
const FPD_UNIT_SHIFT_TOL: f64 = 1e-3;
const REG_HEAD_MSE: f64 = 1.0;
const REG_HEAD_STEPS: usize = 500;
const REG_HEAD_LR: f64 = 1e-3;
const COND_MSE: f64 = 5.0;
const B1_K: usize = 10;
const PER_REGION: usize = 1000;
const TRAIN_SIZE: usize = 500;
const VAL_SIZE: usize = 100;

/// Number, runtime budget in seconds, check.
type Criterion = (u32, u64, fn() -> Verdict);

struct Verdict {
    ok: bool,
    detail: String,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn labels_of(data: &[LabeledCloud]) -> Vec<ConditionVector> {
    data.iter().map(|c| c.label.clone()).collect()
}

fn rows_of(labels: &[ConditionVector]) -> Vec<Vec<f64>> {
    labels.iter().map(|y| y.as_slice().iter().map(|&v| v as f64).collect()).collect()
}

fn fmt3(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/")
}

fn criterion_1() -> Verdict {
    let g = TreeGcnGenerator::<f32>::new(GeneratorConfig::desk(3).unconditioned(), 1).unwrap();
    let clouds = sample_unconditioned(&g, 200, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let targets = labels_of(&generate_dataset(&ShapeFamily::boxes(), 200, 3).unwrap());
    let scaled: Vec<_> = clouds.iter().zip(&targets).map(|(c, y)| b2_scale(c, y).unwrap()).collect();
    let mse = dimension_mse(&scaled, &targets).unwrap();
    Verdict {
        ok: mse.abs() < B2_MSE_TOL,
        detail: format!("B2 dimension MSE over 200 clouds = {mse:.3e}% (tol {B2_MSE_TOL:e})"),
    }
}

fn criterion_2() -> Verdict {
    let labels = labels_of(&generate_dataset(&ShapeFamily::boxes(), 1000, 4).unwrap());
    let kde = LabelKde::fit(&labels).unwrap();
    let counts = SigmaRegionModel::fit(&kde, &rows_of(&labels), DEFAULT_K).unwrap().counts();
    let ok = counts.iter().zip(REGION_SPLIT).all(|(&c, e)| c.abs_diff(e) <= REGION_SPLIT_TOL);
    Verdict {
        ok,
        detail: format!("region counts {counts:?}, expected {REGION_SPLIT:?} +-{REGION_SPLIT_TOL}"),
    }
}

fn criterion_3() -> Verdict {
    let suite = gradient_suite();
    let worst = suite.iter().cloned().fold((String::new(), 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
    let failed = suite.iter().filter(|(_, e)| e.is_nan() || *e >= GRAD_TOL).count();
    let gp = SEEDS.iter().map(|&s| gp_second_order_err(s)).fold(0.0, f64::max);
    Verdict {
        ok: failed == 0 && gp < GP_TOL,
        detail: format!(
            "{} checks, {failed} over {GRAD_TOL:e}, worst {} = {:.2e}; GP second order {gp:.2e} (tol {GP_TOL:e})",
            suite.len(),
            worst.0,
            worst.1
        ),
    }
}

fn criterion_4() -> Verdict {
    let suite = metric_suite(100, 11);
    let ok = suite.iter().all(|(n, e)| *e <= if n == "emd" { EMD_TOL } else { METRIC_TOL });
    let detail = suite.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    Verdict {
        ok,
        detail: format!("worst abs error over 100 trials: {detail}"),
    }
}

fn criterion_5() -> Verdict {
    let clouds: Vec<_> = generate_dataset(&ShapeFamily::boxes(), 100, 5).unwrap().into_iter().map(|c| c.cloud).collect();
    let same = fpd(&clouds, &clouds, &FeatureExtractor::new(0)).unwrap();
    let std = Normal::new(0.0, 1.0).unwrap();
    let n = 20_000;
    let feats = |mu: f64| -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![mu + std.inverse_cdf((i as f64 + 0.5) / n as f64)]).collect()
    };
    let shifted = frechet_distance(
        &GaussianStats::fit(&feats(0.0)).unwrap(),
        &GaussianStats::fit(&feats(1.0)).unwrap(),
    );
    Verdict {
        ok: same.abs() <= FPD_IDENTITY_TOL && (shifted - 1.0).abs() <= FPD_UNIT_SHIFT_TOL,
        detail: format!("FPD(identical) = {same:.2e}, FPD(N(0,1), N(1,1)) = {shifted:.6}"),
    }
}

fn regression_head_mse(seed: u64, train_set: &[LabeledCloud], test_set: &[LabeledCloud]) -> (f64, Vec<f64>) {
    let mut d = PointNetDiscriminator::<f32>::new(DiscriminatorConfig::desk(DiscVariant::DualHead, 3), seed).unwrap();
    let losses = fit_regression_head(&mut d, train_set, REG_HEAD_STEPS, 16, REG_HEAD_LR, seed).unwrap();
    let n = test_set[0].cloud.len();
    let x = Tensor::new([test_set.len() * n, 3], test_set.iter().flat_map(|c| c.cloud.to_flat()).collect()).unwrap();
    let y_hat = d.evaluate(&x, test_set.len(), None).unwrap().1.unwrap();
    let se: f64 = test_set
        .iter()
        .enumerate()
        .flat_map(|(i, c)| (0..3).map(move |k| (i, k, c.label[k])))
        .map(|(i, k, y)| (y_hat.data()[i * 3 + k] as f64 - y as f64).powi(2))
        .sum();
    (100.0 * se / (3 * test_set.len()) as f64, losses)
}

fn criterion_6() -> Verdict {
    let train_set = generate_dataset(&ShapeFamily::boxes(), TRAIN_SIZE, 6).unwrap();
    let test_set = generate_dataset(&ShapeFamily::boxes(), 200, 7).unwrap();
    let mses: Vec<f64> = SEEDS.iter().map(|&s| regression_head_mse(s, &train_set, &test_set).0).collect();
    let med = median(mses.clone());
    Verdict {
        ok: med < REG_HEAD_MSE,
        detail: format!(
            "held-out MSE per seed {}%, median {med:.4}% (< {REG_HEAD_MSE}%) after {REG_HEAD_STEPS} steps",
            fmt3(&mses)
        ),
    }
}

fn run(variant: LossVariant, strategy: SamplingStrategy, seed: u64, data: &[LabeledCloud], val: &[LabeledCloud]) -> TrainOutcome {
    let mut config = TrainConfig::desk(variant, strategy, 3);
    config.seed = seed;
    train(config, data, val, None).unwrap_or_else(|e| panic!("{} seed {seed}: {e}", variant.name()))
}

fn selected_mse(o: &TrainOutcome) -> f64 {
    o.checkpoints[o.selected.expect("evaluated")].mse.expect("extent labels")
}

fn criterion_7() -> Verdict {
    let family = ShapeFamily::boxes();
    let data = generate_dataset(&family, TRAIN_SIZE, 70).unwrap();
    let val = generate_dataset(&family, VAL_SIZE, 71).unwrap();
    let labels = labels_of(&data);
    let kde = LabelKde::fit(&labels).unwrap();
    let regions = SigmaRegionModel::fit(&kde, &rows_of(&labels), DEFAULT_K).unwrap();
    let val_labels = labels_of(&val);

    let jobs: Vec<(u64, bool)> = SEEDS.iter().flat_map(|&s| [(s, true), (s, false)]).collect();
    let outcomes: Vec<TrainOutcome> = jobs
        .par_iter()
        .map(|&(s, cond)| {
            let variant = if cond { LossVariant::Main } else { LossVariant::Unconditioned };
            run(variant, SamplingStrategy::KdeSample, s, &data, &val)
        })
        .collect();

    let (mut mse, mut b1, mut per_region) = (Vec::new(), Vec::new(), [Vec::new(), Vec::new(), Vec::new()]);
    for (i, &s) in SEEDS.iter().enumerate() {
        let (cond, uncond) = (&outcomes[2 * i], &outcomes[2 * i + 1]);
        mse.push(selected_mse(cond));
        let targets = region_targets(&regions, &kde, PER_REGION, 100 + s, true).unwrap();
        let eval = evaluate_regions(&cond.best_generator, &targets, None, 16, 200 + s).unwrap();
        for r in 0..3 {
            per_region[r].push(eval[r].mse);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(300 + s);
        let picks: Vec<_> = val_labels
            .iter()
            .map(|y| b1_resample(&uncond.best_generator, y, B1_K, &mut rng).unwrap())
            .collect();
        b1.push(dimension_mse(&picks, &val_labels).unwrap());
    }
    let (m, b) = (median(mse.clone()), median(b1.clone()));
    let r = per_region.clone().map(median);
    let ok = m < COND_MSE && r[0] <= r[1] && r[1] <= r[2] && b > m;
    Verdict {
        ok,
        detail: format!(
            "selected MSE {}% (median {m:.3} < {COND_MSE}); region MSE medians {:.3}/{:.3}/{:.3} (seeds r1 {}, r2 {}, r3 {}); B1(k={B1_K}) MSE {}% (median {b:.3} > {m:.3})",
            fmt3(&mse),
            r[0],
            r[1],
            r[2],
            fmt3(&per_region[0]),
            fmt3(&per_region[1]),
            fmt3(&per_region[2]),
            fmt3(&b1)
        ),
    }
}

fn criterion_8() -> Verdict {
    let family = ShapeFamily::long_tailed_boxes();
    let data = generate_dataset(&family, TRAIN_SIZE, 80).unwrap();
    let val = generate_dataset(&family, VAL_SIZE, 81).unwrap();
    let labels = labels_of(&data);
    let kde = LabelKde::fit(&labels).unwrap();
    let regions = SigmaRegionModel::fit(&kde, &rows_of(&labels), DEFAULT_K).unwrap();

    let strategies = [SamplingStrategy::KdeSample, SamplingStrategy::DatasetResample];
    let jobs: Vec<(u64, SamplingStrategy)> = SEEDS.iter().flat_map(|&s| strategies.map(|st| (s, st))).collect();
    let r3: Vec<f64> = jobs
        .par_iter()
        .map(|&(s, st)| {
            let o = run(LossVariant::Main, st, s, &data, &val);
            let targets = region_targets(&regions, &kde, PER_REGION, 400 + s, true).unwrap();
            evaluate_regions(&o.best_generator, &targets, None, 16, 500 + s).unwrap()[2].mse
        })
        .collect();
    let kde_r3: Vec<f64> = r3.iter().step_by(2).copied().collect();
    let ds_r3: Vec<f64> = r3.iter().skip(1).step_by(2).copied().collect();
    let (k, d) = (median(kde_r3.clone()), median(ds_r3.clone()));
    Verdict {
        ok: k <= d,
        detail: format!(
            "region-3 MSE KDE {}% (median {k:.3}) vs dataset resampling {}% (median {d:.3})",
            fmt3(&kde_r3),
            fmt3(&ds_r3)
        ),
    }
}

fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = fs::read_dir(a).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in &names {
        if fs::read(a.join(name)).ok() != fs::read(b.join(name)).ok() {
            return Err(format!("{name:?} differs"));
        }
    }
    Ok(names.len())
}

fn criterion_9() -> Verdict {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let dir = tempfile::tempdir().unwrap();
        let family = ShapeFamily::boxes();
        let mut notes = Vec::new();
        let mut ok = true;

        let (d1, d2) = (dir.path().join("data1"), dir.path().join("data2"));
        write_dataset(&d1, &generate_dataset(&family, 64, 90).unwrap()).unwrap();
        write_dataset(&d2, &generate_dataset(&family, 64, 90).unwrap()).unwrap();
        match same_tree(&d1, &d2) {
            Ok(n) => notes.push(format!("dataset {n} files identical")),
            Err(e) => {
                ok = false;
                notes.push(format!("dataset {e}"))
            }
        }

        let small = generate_dataset(&family, 64, 91).unwrap();
        let (a, _) = regression_head_mse(0, &small, &small[..16]);
        let (b, la) = regression_head_mse(0, &small, &small[..16]);
        let (_, lb) = regression_head_mse(0, &small, &small[..16]);
        let same_fit = a.to_bits() == b.to_bits() && la.iter().map(|v| v.to_bits()).eq(lb.iter().map(|v| v.to_bits()));
        ok &= same_fit;
        notes.push(format!("regression fit {}", if same_fit { "bit-identical" } else { "differs" }));

        let val = generate_dataset(&family, 16, 92).unwrap();
        let mut config = TrainConfig::desk(LossVariant::Main, SamplingStrategy::KdeSample, 3);
        config.epochs = 4;
        config.eval_every = 2;
        config.eval_samples = 16;
        config.seed = 9;
        let (r1, r2) = (dir.path().join("run1"), dir.path().join("run2"));
        train(config, &small, &val, Some(&r1)).unwrap();
        let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(r1.join("manifest.json")).unwrap()).unwrap();
        train(manifest.config, &small, &val, Some(&r2)).unwrap();
        match same_tree(&r1, &r2) {
            Ok(n) => notes.push(format!("training rerun from manifest: {n} files identical")),
            Err(e) => {
                ok = false;
                notes.push(format!("training rerun {e}"))
            }
        }
        Verdict { ok, detail: notes.join("; ") }
    })
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("CCPC_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let strict = std::env::var("CCPC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [Criterion; 9] = [
        (1, 5, criterion_1),
        (2, 5, criterion_2),
        (3, 60, criterion_3),
        (4, 60, criterion_4),
        (5, 5, criterion_5),
        (6, 120, criterion_6),
        (7, 30 * 60, criterion_7),
        (8, 60 * 60, criterion_8),
        (9, 60, criterion_9),
    ];
    let mut failed = 0;
    for (n, budget, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let v = f();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= Duration::from_secs(budget);
        let ok = v.ok && in_budget;
        failed += usize::from(!ok);
        println!(
            "criterion {n}: {} | {} | runtime {:.1}s {} {budget}s",
            if ok { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64(),
            if in_budget { "<=" } else { ">" }
        );
    }
    println!("acceptance: {failed} failing");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
