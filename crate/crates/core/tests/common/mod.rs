//! Oracles shared by the integration suites and the acceptance target.
#![allow(dead_code)]

use std::rc::Rc;

use ccpc::conditioning::LabelKde;
use ccpc::metrics::{chamfer, coverage, emd, jsd, mmd, CloudDistance, JSD_RESOLUTION};
use ccpc::models::{
    DiscVariant, DiscriminatorConfig, GeneratorConfig, PointNetDiscriminator, TreeGcnGenerator, LEAKY_SLOPE,
};
use ccpc::shapes::PointCloud;
use ccpc::tensor::{Tape, Tensor, Var};
use ccpc::training::{
    discriminator_loss, generator_loss, gradient_penalty, measured_extents, reg_loss, weighted, DiscriminatorTerms,
    GeneratorTerms, LossVariant, LossWeights,
};
use ccpc::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-4;
pub const GP_TOL: f64 = 1e-3;
pub const METRIC_TOL: f64 = 1e-9;
pub const EMD_TOL: f64 = 1e-12;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn random_cloud(n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    PointCloud::new((0..n).map(|_| [0, 1, 2].map(|_| rng.random_range(-0.2f32..1.2))).collect()).unwrap()
}

type Graph = dyn for<'t> Fn(&[Var<'t, f64>]) -> Result<Var<'t, f64>>;

fn contracted<'t>(tape: &'t Tape<f64>, inputs: &[Tensor<f64>], f: &Graph, w: &Tensor<f64>) -> (Vec<Var<'t, f64>>, Var<'t, f64>) {
    let vars: Vec<Var<'t, f64>> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    let out = f(&vars).unwrap();
    let loss = out.mul(&tape.var(w.clone())).unwrap().sum().unwrap();
    (vars, loss)
}

/// Largest per-input relative error `|g_tape - g_fd| / max(|g_tape|, |g_fd|)`
/// (Euclidean norms over each input) of `sum(f(inputs) * w)` for a random
/// fixed `w`, against central differences.
pub fn grad_rel_err(inputs: &[Tensor<f64>], f: &Graph, seed: u64) -> f64 {
    let probe = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| probe.var(t.clone())).collect();
    let shape = f(&vars).unwrap().shape();
    let w = uniform(&shape, -1.0, 1.0, &mut rng(seed));

    let tape = Tape::new();
    let (vars, loss) = contracted(&tape, inputs, f, &w);
    let analytic: Vec<Vec<f64>> = tape
        .grad(loss, &vars)
        .unwrap()
        .iter()
        .map(|g| g.value().data().to_vec())
        .collect();

    let eval = |xs: &[Tensor<f64>]| {
        let tape = Tape::new();
        contracted(&tape, xs, f, &w).1.item()
    };
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.numel()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let mut xs = inputs.to_vec();
            xs[i].data_mut()[j] = input.data()[j] + FD_STEP;
            let up = eval(&xs);
            xs[i].data_mut()[j] = input.data()[j] - FD_STEP;
            let down = eval(&xs);
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        let diff: f64 = analytic[i].iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale = norm(&analytic[i]).max(norm(&numeric));
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        }
    }
    worst
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn index(len: usize, count: usize, rng: &mut ChaCha8Rng) -> Rc<[usize]> {
    (0..count).map(|_| rng.random_range(0..len)).collect()
}

fn tiny_generator(label_dim: usize, seed: u64) -> TreeGcnGenerator<f64> {
    let config = GeneratorConfig {
        latent_dim: 3,
        label_dim,
        latent_embed: 3,
        label_embed: if label_dim > 0 { 2 } else { 0 },
        widths: vec![4, 5, 3],
        branching: vec![1, 2, 3],
        support: 2,
    };
    TreeGcnGenerator::new(config, seed).unwrap()
}

fn tiny_discriminator(variant: DiscVariant, label_dim: usize, seed: u64) -> PointNetDiscriminator<f64> {
    let config = DiscriminatorConfig {
        variant,
        label_dim,
        point_widths: vec![4, 6],
        head_widths: vec![5],
    };
    PointNetDiscriminator::new(config, seed).unwrap()
}

fn params_of(store: &ccpc::tensor::ParamStore<f64>) -> Vec<Tensor<f64>> {
    store.iter().map(|p| p.value.clone()).collect()
}

/// `(name, relative error)` for every primitive op, layer and loss.
pub fn gradient_suite() -> Vec<(String, f64)> {
    let mut r = rng(1);
    let mut out: Vec<(String, f64)> = Vec::new();
    let mut check = |name: &str, inputs: Vec<Tensor<f64>>, f: &Graph| {
        let err = grad_rel_err(&inputs, f, out.len() as u64 + 100);
        out.push((name.to_string(), err));
    };
    let a = uniform(&[3, 4], -1.0, 1.0, &mut r);
    let b = uniform(&[3, 4], -1.0, 1.0, &mut r);
    let row = uniform(&[4], -1.0, 1.0, &mut r);
    let pos = uniform(&[3, 4], 0.5, 2.0, &mut r);

    check("add", vec![a.clone(), b.clone()], &|v| v[0].add(&v[1]));
    check("add_broadcast", vec![a.clone(), row.clone()], &|v| v[0].add(&v[1]));
    check("sub", vec![a.clone(), b.clone()], &|v| v[0].sub(&v[1]));
    check("sub_broadcast", vec![row.clone(), a.clone()], &|v| v[0].sub(&v[1]));
    check("mul", vec![a.clone(), b.clone()], &|v| v[0].mul(&v[1]));
    check("mul_broadcast", vec![a.clone(), row.clone()], &|v| v[0].mul(&v[1]));
    check("scale", vec![a.clone()], &|v| Ok(v[0].scale(-1.7)));
    check("neg", vec![a.clone()], &|v| Ok(v[0].neg()));
    check("add_scalar", vec![a.clone()], &|v| Ok(v[0].add_scalar(0.3)));
    check("exp", vec![a.clone()], &|v| Ok(v[0].exp()));
    check("sqrt", vec![pos.clone()], &|v| Ok(v[0].sqrt()));
    check("safe_recip", vec![pos.clone()], &|v| Ok(v[0].safe_recip()));
    check("leaky_relu", vec![a.clone()], &|v| Ok(v[0].leaky_relu(LEAKY_SLOPE)));
    check("square", vec![a.clone()], &|v| v[0].square());
    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        let x = uniform(if ta { &[4, 3] } else { &[3, 4] }, -1.0, 1.0, &mut r);
        let y = uniform(if tb { &[5, 4] } else { &[4, 5] }, -1.0, 1.0, &mut r);
        check(&format!("matmul_t({ta},{tb})"), vec![x, y], &move |v| v[0].matmul_t(&v[1], ta, tb));
    }
    check("sum", vec![a.clone()], &|v| v[0].sum());
    check("mean", vec![a.clone()], &|v| v[0].mean());
    let cube = uniform(&[2, 3, 4], -1.0, 1.0, &mut r);
    for axis in 0..3 {
        check(&format!("sum_axis({axis})"), vec![cube.clone()], &move |v| v[0].sum_axis(axis));
        check(&format!("mean_axis({axis})"), vec![cube.clone()], &move |v| v[0].mean_axis(axis));
        check(&format!("max_axis({axis})"), vec![cube.clone()], &move |v| v[0].max_axis(axis));
        check(&format!("min_axis({axis})"), vec![cube.clone()], &move |v| v[0].min_axis(axis));
        check(&format!("expand_axis({axis})"), vec![a.clone()], &move |v| v[0].expand_axis(axis, 2));
    }
    check("sum_to", vec![cube.clone()], &|v| v[0].sum_to(&[3, 4]));
    check("broadcast_to", vec![row.clone()], &|v| v[0].broadcast_to(&[2, 3, 4]));
    let gi = index(12, 7, &mut r);
    check("gather", vec![a.clone()], &move |v| v[0].gather(gi.clone(), vec![7]));
    let si = index(5, 12, &mut r);
    check("scatter_add", vec![a.clone()], &move |v| v[0].scatter_add(si.clone(), vec![5]));
    check("reshape", vec![a.clone()], &|v| v[0].reshape([2, 6]));
    check("l2_norm", vec![a.clone()], &|v| v[0].l2_norm(1));
    check("concat_cols", vec![a.clone(), uniform(&[3, 2], -1.0, 1.0, &mut r)], &|v| {
        Var::concat_cols(&[v[0], v[1]])
    });
    check("repeat_rows", vec![a.clone()], &|v| v[0].repeat_rows(3));
    check("second_order(x^3)", vec![a.clone()], &|v| {
        let cube = v[0].mul(&v[0])?.mul(&v[0])?.sum()?;
        Ok(v[0].tape().grad(cube, &[v[0]])?[0])
    });

    // layers
    let gen = tiny_generator(2, 3);
    let np = gen.params.len();
    let mut inputs = params_of(&gen.params);
    inputs.push(uniform(&[2, 3], -1.0, 1.0, &mut r));
    inputs.push(uniform(&[2, 2], 0.0, 1.0, &mut r));
    let g = gen.clone();
    check("generator(params, z, y)", inputs, &move |v| g.forward(&v[..np], &v[np], Some(&v[np + 1])));
    let gen_u = tiny_generator(0, 4);
    let npu = gen_u.params.len();
    let mut inputs = params_of(&gen_u.params);
    inputs.push(uniform(&[2, 3], -1.0, 1.0, &mut r));
    check("generator_unconditioned", inputs, &move |v| gen_u.forward(&v[..npu], &v[npu], None));

    let x = uniform(&[2 * 5, 3], 0.0, 1.0, &mut r);
    let y = uniform(&[2, 2], 0.0, 1.0, &mut r);
    for variant in [DiscVariant::DualHead, DiscVariant::VanillaConcat, DiscVariant::Projection, DiscVariant::Unconditioned] {
        let label_dim = if variant.takes_label() || variant == DiscVariant::DualHead { 2 } else { 0 };
        let disc = tiny_discriminator(variant, label_dim, 5);
        let np = disc.params.len();
        let mut inputs = params_of(&disc.params);
        inputs.push(x.clone());
        inputs.push(y.clone());
        let d = disc.clone();
        check(&format!("discriminator_score({})", variant.name()), inputs.clone(), &move |v| {
            let y = variant.takes_label().then_some(&v[np + 1]);
            Ok(d.forward(&v[..np], &v[np], 2, y)?.score)
        });
        if variant == DiscVariant::DualHead {
            check("discriminator_regression(dual_head)", inputs, &move |v| {
                Ok(disc.forward(&v[..np], &v[np], 2, None)?.y_hat.expect("dual head"))
            });
        }
    }

    // losses
    let y1 = uniform(&[4, 3], 0.0, 1.0, &mut r);
    let y2 = uniform(&[4, 3], 0.0, 1.0, &mut r);
    check("reg_loss", vec![y1.clone(), y2.clone()], &|v| reg_loss(&v[0], &v[1]));
    check("weighted", vec![Tensor::scalar(0.7), Tensor::scalar(-0.4)], &|v| weighted(&v[0], &v[1]));
    check("measured_extents", vec![uniform(&[2 * 6, 3], 0.0, 1.0, &mut r)], &|v| measured_extents(&v[0], 2));

    let disc = tiny_discriminator(DiscVariant::DualHead, 3, 6);
    let np = disc.params.len();
    let xr = uniform(&[2 * 5, 3], 0.0, 1.0, &mut r);
    let xg = uniform(&[2 * 5, 3], 0.0, 1.0, &mut r);
    let (yr, yc) = (uniform(&[2, 3], 0.0, 1.0, &mut r), uniform(&[2, 3], 0.0, 1.0, &mut r));
    for variant in [LossVariant::Main, LossVariant::VariantA, LossVariant::VariantB] {
        // the critic side treats both point batches as constants
        let mut inputs = params_of(&disc.params);
        inputs.extend([yr.clone(), yc.clone(), Tensor::scalar(0.2), Tensor::scalar(-0.3)]);
        let (d, xr, xf) = (disc.clone(), xr.clone(), xg.clone());
        check(&format!("discriminator_loss({})", variant.name()), inputs, &move |v| {
            let p = &v[..np];
            let tape = v[0].tape();
            let (real, fake) = (tape.var(xr.clone()), tape.var(xf.clone()));
            let out_r = d.forward(p, &real, 2, None)?;
            let out_g = d.forward(p, &fake, 2, None)?;
            let gp = gradient_penalty(tape, &xr, &xf, &[0.3, 0.8], |x| Ok(d.forward(p, x, 2, None)?.score))?;
            let terms = DiscriminatorTerms {
                score_real: out_r.score,
                score_gen: out_g.score,
                gp,
                y_real: Some(v[np]),
                y_hat_real: out_r.y_hat,
                y_cond: Some(v[np + 1]),
                y_hat_gen: out_g.y_hat,
                y_gen: Some(measured_extents(&fake, 2)?),
            };
            let w = LossWeights { v_adv: v[np + 2], v_reg: v[np + 3] };
            discriminator_loss(variant, &terms, Some(w), 10.0)
        });
        let mut inputs = params_of(&disc.params);
        inputs.extend([xg.clone(), yc.clone(), Tensor::scalar(0.2), Tensor::scalar(-0.3)]);
        let d = disc.clone();
        check(&format!("generator_loss({})", variant.name()), inputs, &move |v| {
            let out = d.forward(&v[..np], &v[np], 2, None)?;
            let terms = GeneratorTerms {
                score_gen: out.score,
                y_cond: Some(v[np + 1]),
                y_hat_gen: out.y_hat,
                y_gen: Some(measured_extents(&v[np], 2)?),
            };
            let w = LossWeights { v_adv: v[np + 2], v_reg: v[np + 3] };
            generator_loss(variant, &terms, Some(w), 1.0)
        });
    }
    out
}

/// Relative error of the gradient-penalty gradient with respect to the
/// parameters of a two-layer critic (a second-order quantity).
pub fn gp_second_order_err(seed: u64) -> f64 {
    let mut r = rng(seed);
    let config = DiscriminatorConfig {
        variant: DiscVariant::Unconditioned,
        label_dim: 0,
        point_widths: vec![4, 6],
        head_widths: vec![],
    };
    let disc = PointNetDiscriminator::<f64>::new(config, seed).unwrap();
    let np = disc.params.len();
    let xr = uniform(&[3 * 4, 3], 0.0, 1.0, &mut r);
    let xg = uniform(&[3 * 4, 3], 0.0, 1.0, &mut r);
    let u = [0.2, 0.5, 0.9];
    let inputs = params_of(&disc.params);
    assert_eq!(inputs.len(), np);
    grad_rel_err(
        &inputs,
        &move |v| gradient_penalty(v[0].tape(), &xr, &xg, &u, |x| Ok(disc.forward(v, x, 3, None)?.score)),
        seed,
    )
}

fn sq(a: &[f32; 3], b: &[f32; 3]) -> f64 {
    let mut s = 0.0;
    for k in 0..3 {
        let d = a[k] as f64 - b[k] as f64;
        s += d * d;
    }
    s
}

pub fn chamfer_loop(a: &PointCloud, b: &PointCloud) -> f64 {
    let mut ab = 0.0;
    for p in a.points() {
        let mut best = f64::MAX;
        for q in b.points() {
            best = best.min(sq(p, q));
        }
        ab += best;
    }
    let mut ba = 0.0;
    for q in b.points() {
        let mut best = f64::MAX;
        for p in a.points() {
            best = best.min(sq(p, q));
        }
        ba += best;
    }
    ab / a.len() as f64 + ba / b.len() as f64
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

pub fn emd_brute(a: &PointCloud, b: &PointCloud) -> f64 {
    let n = a.len();
    let mut best = f64::MAX;
    for perm in permutations(n) {
        let cost: f64 = (0..n).map(|i| sq(&a.points()[i], &b.points()[perm[i]]).sqrt()).sum();
        best = best.min(cost);
    }
    best / n as f64
}

pub fn mmd_loop(gen: &[PointCloud], refs: &[PointCloud]) -> f64 {
    let mut total = 0.0;
    for r in refs {
        let mut best = f64::MAX;
        for g in gen {
            best = best.min(chamfer_loop(g, r));
        }
        total += best;
    }
    total / refs.len() as f64
}

pub fn coverage_loop(gen: &[PointCloud], refs: &[PointCloud]) -> f64 {
    let mut covered = vec![false; refs.len()];
    for g in gen {
        let d: Vec<f64> = refs.iter().map(|r| chamfer_loop(g, r)).collect();
        let mut best = 0;
        for j in 0..d.len() {
            if d[j] < d[best] {
                best = j;
            }
        }
        covered[best] = true;
    }
    covered.iter().filter(|c| **c).count() as f64 / refs.len() as f64
}

fn voxel(v: f32, res: usize) -> usize {
    let x = v as f64 * res as f64;
    if x < 0.0 {
        0
    } else if x >= res as f64 {
        res - 1
    } else {
        x as usize
    }
}

/// `H(M) - (H(P) + H(Q)) / 2` over the voxel occupancy distributions.
pub fn jsd_loop(gen: &[PointCloud], refs: &[PointCloud]) -> f64 {
    let res = JSD_RESOLUTION;
    let hist = |set: &[PointCloud]| {
        let mut h = vec![0.0; res * res * res];
        let mut n = 0.0;
        for c in set {
            for p in c.points() {
                h[voxel(p[0], res) * res * res + voxel(p[1], res) * res + voxel(p[2], res)] += 1.0;
                n += 1.0;
            }
        }
        h.into_iter().map(|v| v / n).collect::<Vec<f64>>()
    };
    let entropy = |h: &[f64]| -> f64 { h.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum() };
    let (p, q) = (hist(gen), hist(refs));
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
    entropy(&m) - 0.5 * (entropy(&p) + entropy(&q))
}

pub fn kde_loop(rows: &[Vec<f64>], h: &[f64], y: &[f64]) -> f64 {
    let mut total = 0.0;
    for row in rows {
        let mut k = 1.0;
        for j in 0..y.len() {
            let t = (y[j] - row[j]) / h[j];
            k *= (-t * t / 2.0).exp() / (h[j] * (2.0 * std::f64::consts::PI).sqrt());
        }
        total += k;
    }
    total / rows.len() as f64
}

/// `(name, worst absolute error)` over `trials` randomized instances of each
/// metric against its loop oracle.
pub fn metric_suite(trials: usize, seed: u64) -> Vec<(String, f64)> {
    let mut r = rng(seed);
    let mut worst = [0.0f64; 6];
    for _ in 0..trials {
        let n = r.random_range(2..=6);
        let (a, b) = (random_cloud(n, &mut r), random_cloud(n, &mut r));
        worst[0] = worst[0].max((emd(&a, &b).unwrap() - emd_brute(&a, &b)).abs());

        let (na, nb) = (r.random_range(2..12), r.random_range(2..12));
        let (a, b) = (random_cloud(na, &mut r), random_cloud(nb, &mut r));
        worst[1] = worst[1].max((chamfer(&a, &b) - chamfer_loop(&a, &b)).abs());

        let gen: Vec<_> = (0..r.random_range(1..6)).map(|_| random_cloud(r.random_range(2..8), &mut r)).collect();
        let refs: Vec<_> = (0..r.random_range(1..6)).map(|_| random_cloud(r.random_range(2..8), &mut r)).collect();
        worst[2] = worst[2].max((mmd(&gen, &refs, CloudDistance::Chamfer).unwrap() - mmd_loop(&gen, &refs)).abs());
        worst[3] = worst[3].max((coverage(&gen, &refs, CloudDistance::Chamfer).unwrap() - coverage_loop(&gen, &refs)).abs());
        worst[4] = worst[4].max((jsd(&gen, &refs).unwrap() - jsd_loop(&gen, &refs)).abs());

        let m = r.random_range(2..20);
        let d = r.random_range(1..4);
        let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| r.random_range(0.0..1.0)).collect()).collect();
        let kde = LabelKde::fit_rows(&rows).unwrap();
        let y: Vec<f64> = (0..d).map(|_| r.random_range(-0.2..1.2)).collect();
        worst[5] = worst[5].max((kde.density(&y) - kde_loop(&rows, kde.bandwidth(), &y)).abs());
    }
    ["emd", "chamfer", "mmd", "coverage", "jsd", "kde_density"]
        .iter()
        .zip(worst)
        .map(|(n, w)| (n.to_string(), w))
        .collect()
}

/// A training setup small enough for unit-speed tests: 16-point clouds.
pub fn tiny_train_config(
    variant: LossVariant,
    strategy: ccpc::conditioning::SamplingStrategy,
) -> ccpc::training::TrainConfig {
    let mut c = ccpc::training::TrainConfig::desk(variant, strategy, 3);
    c.generator.latent_dim = 4;
    c.generator.latent_embed = if c.generator.is_conditional() { 4 } else { 6 };
    c.generator.label_embed = if c.generator.is_conditional() { 2 } else { 0 };
    c.generator.widths = vec![8, 6, 3];
    c.generator.branching = vec![1, 2, 8];
    c.generator.support = 2;
    c.discriminator.point_widths = vec![4, 8];
    c.discriminator.head_widths = vec![8];
    c.batch_size = 4;
    c.epochs = 3;
    c.eval_every = 2;
    c.eval_samples = 8;
    c
}

pub fn tiny_boxes(count: usize, seed: u64) -> Vec<ccpc::shapes::LabeledCloud> {
    let family = ccpc::shapes::ShapeFamily { n_points: 16, ..ccpc::shapes::ShapeFamily::boxes() };
    ccpc::shapes::generate_dataset(&family, count, seed).unwrap()
}
