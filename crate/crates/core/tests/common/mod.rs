#![allow(dead_code)]

use loadshare_core::gp::{log_marginal_likelihood, InputStats, N_HYPER};
use loadshare_core::optimizer::{build_problem, station_power};
use loadshare_core::{
    Envelope, GasConditions, GpModel, Kernel, LsoProblem, MapModel, Point, SystemCurve, TrueMap,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SCALES: [f64; 3] = [1.0, 0.96, 0.92];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a - b| <= rel * |b| + abs`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * b.abs() + abs
}

/// Points inside the default envelope with a smooth efficiency-like target.
pub fn smooth_data(seed: u64, k: usize) -> (Vec<Point>, Vec<f64>) {
    let mut r = rng(seed);
    let inputs: Vec<Point> = (0..k)
        .map(|_| [r.random_range(10.0..35.0), r.random_range(1.1..1.9)])
        .collect();
    let targets = inputs
        .iter()
        .map(|p| 0.05 * (p[0] / 6.0).sin() + 0.03 * (3.0 * p[1]).cos())
        .collect();
    (inputs, targets)
}

pub fn random_kernel(r: &mut ChaCha8Rng) -> Kernel {
    Kernel::new(
        r.random_range(0.5..2.0),
        [r.random_range(0.5..2.0), r.random_range(0.5..2.0)],
        r.random_range(1e-3..1e-1),
    )
    .unwrap()
}

/// Posterior mean by an independent dense LU solve on the same
/// standardized problem the model conditions on.
pub fn dense_mean(model: &GpModel, query: &Point) -> f64 {
    let inputs = model.inputs();
    let n = inputs.len();
    let stats = InputStats::from_points(inputs);
    let xs: Vec<Point> = inputs.iter().map(|p| stats.standardize(p)).collect();
    let centred: Vec<f64> = model
        .targets()
        .iter()
        .map(|t| t - model.prior_mean())
        .collect();
    let scale = model.target_scale();
    let k = model.kernel();
    let mut gram = DMatrix::from_fn(n, n, |i, j| k.eval(&xs[i], &xs[j]));
    for i in 0..n {
        gram[(i, i)] += k.noise_var() + model.jitter();
    }
    let y = DVector::from_iterator(n, centred.iter().map(|c| c / scale));
    let alpha = gram.lu().solve(&y).expect("nonsingular gram");
    let q = stats.standardize(query);
    let m: f64 = (0..n).map(|i| k.eval(&q, &xs[i]) * alpha[i]).sum();
    model.prior_mean() + scale * m
}

/// Largest relative mismatch between the analytic LML gradient and central
/// differences with step `h` in log space.
pub fn lml_gradient_error(inputs: &[Point], targets: &[f64], kernel: &Kernel, h: f64) -> f64 {
    let g = log_marginal_likelihood(inputs, targets, kernel)
        .unwrap()
        .grad;
    let p = kernel.log_params();
    let mut worst: f64 = 0.0;
    for d in 0..N_HYPER {
        let (mut up, mut dn) = (p, p);
        up[d] += h;
        dn[d] -= h;
        let fu = log_marginal_likelihood(inputs, targets, &Kernel::from_log_params(up))
            .unwrap()
            .value;
        let fd = log_marginal_likelihood(inputs, targets, &Kernel::from_log_params(dn))
            .unwrap()
            .value;
        let num = (fu - fd) / (2.0 * h);
        worst = worst.max((g[d] - num).abs() / num.abs().max(1e-3));
    }
    worst
}

/// Largest relative mismatch between the posterior-mean gradient and
/// central differences, with an absolute floor of 1e-8.
pub fn mean_gradient_error(model: &GpModel, queries: &[Point]) -> f64 {
    let mut worst: f64 = 0.0;
    for q in queries {
        let g = model.predict_mean_grad(q).unwrap();
        let steps = [1e-5 * q[0].abs().max(1.0), 1e-5 * q[1].abs().max(1.0)];
        for d in 0..2 {
            let (mut up, mut dn) = (*q, *q);
            up[d] += steps[d];
            dn[d] -= steps[d];
            let num = (model.predict_mean(&up).unwrap() - model.predict_mean(&dn).unwrap())
                / (2.0 * steps[d]);
            let excess = (g[d] - num).abs() - 1e-8;
            worst = worst.max(excess.max(0.0) / num.abs().max(1e-300));
        }
    }
    worst
}

pub fn exact_problem(target: f64, scales: &[f64]) -> LsoProblem {
    let models = scales
        .iter()
        .map(|s| MapModel::Exact {
            map: TrueMap::default().with_scale(*s),
        })
        .collect();
    build_problem(
        target,
        &SystemCurve::default(),
        &GasConditions::default(),
        &vec![Envelope::default(); scales.len()],
        models,
    )
    .unwrap()
}

/// Minimum of station power over every three-compressor split whose flows
/// are multiples of `step` and respect the bounds. `target` must itself be
/// a multiple of `step`.
pub fn brute_force_split(problem: &LsoProblem, step: f64) -> (Vec<f64>, f64) {
    let b = &problem.bounds;
    let units = (problem.target / step).round() as i64;
    let lo = |i: usize| (b[i].0 / step - 1e-9).ceil() as i64;
    let hi = |i: usize| (b[i].1 / step + 1e-9).floor() as i64;
    let mut best = (Vec::new(), f64::INFINITY);
    for a in lo(0)..=hi(0) {
        for c in lo(1)..=hi(1) {
            let d = units - a - c;
            if d < lo(2) || d > hi(2) {
                continue;
            }
            let flows = vec![a as f64 * step, c as f64 * step, d as f64 * step];
            let p = station_power(problem, &flows).unwrap().power;
            if p < best.1 {
                best = (flows, p);
            }
        }
    }
    best
}
