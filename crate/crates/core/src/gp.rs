//! Exact Gaussian-process regression over two inputs `(mdot, pr)`.
//!
//! The covariance is a squared-exponential kernel with one lengthscale per
//! input (ARD). Inputs are standardized with the dataset's per-dimension
//! mean and standard deviation; targets are centred on a constant prior mean
//! and divided by their RMS, so every hyperparameter lives in standardized
//! units. Hyperparameters are fitted by projected gradient ascent on the log
//! marginal likelihood, in log space, from several seeded starts.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the `(mdot, pr)` input plane.
pub type Point = [f64; 2];

/// Number of log-hyperparameters: `[log sf2, log l_mdot, log l_pr, log sn2]`.
pub const N_HYPER: usize = 4;

/// Squared-exponential ARD covariance plus white observation noise.
///
/// Stored in log space so that every parameter stays positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub log_signal_var: f64,
    pub log_lengthscales: [f64; 2],
    pub log_noise_var: f64,
}

impl Kernel {
    pub fn new(signal_var: f64, lengthscales: [f64; 2], noise_var: f64) -> Result<Self> {
        if !(signal_var > 0.0 && lengthscales[0] > 0.0 && lengthscales[1] > 0.0 && noise_var > 0.0)
        {
            return Err(Error::Domain(
                "kernel hyperparameters must be positive".into(),
            ));
        }
        Ok(Self {
            log_signal_var: signal_var.ln(),
            log_lengthscales: [lengthscales[0].ln(), lengthscales[1].ln()],
            log_noise_var: noise_var.ln(),
        })
    }

    pub fn from_log_params(p: [f64; N_HYPER]) -> Self {
        Self {
            log_signal_var: p[0],
            log_lengthscales: [p[1], p[2]],
            log_noise_var: p[3],
        }
    }

    pub fn log_params(&self) -> [f64; N_HYPER] {
        [
            self.log_signal_var,
            self.log_lengthscales[0],
            self.log_lengthscales[1],
            self.log_noise_var,
        ]
    }

    pub fn signal_var(&self) -> f64 {
        self.log_signal_var.exp()
    }

    pub fn lengthscales(&self) -> [f64; 2] {
        [
            self.log_lengthscales[0].exp(),
            self.log_lengthscales[1].exp(),
        ]
    }

    pub fn noise_var(&self) -> f64 {
        self.log_noise_var.exp()
    }

    /// Noise-free covariance between two (standardized) points.
    pub fn eval(&self, x: &Point, y: &Point) -> f64 {
        let ls = self.lengthscales();
        let mut r2 = 0.0;
        for d in 0..2 {
            let z = (x[d] - y[d]) / ls[d];
            r2 += z * z;
        }
        self.signal_var() * (-0.5 * r2).exp()
    }
}

pub fn kernel_eval(kern: &Kernel, x: &Point, y: &Point) -> f64 {
    kern.eval(x, y)
}

/// Per-dimension mean and standard deviation used to standardize inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputStats {
    pub mean: Point,
    pub std: Point,
}

impl InputStats {
    /// Population statistics; a dimension with (near) zero spread, or a
    /// single point, gets unit std.
    pub fn from_points(points: &[Point]) -> Self {
        let k = points.len().max(1) as f64;
        let mut mean = [0.0; 2];
        for p in points {
            mean[0] += p[0];
            mean[1] += p[1];
        }
        mean[0] /= k;
        mean[1] /= k;
        let mut std = [1.0; 2];
        if points.len() > 1 {
            for d in 0..2 {
                let var = points.iter().map(|p| (p[d] - mean[d]).powi(2)).sum::<f64>() / k;
                let s = var.sqrt();
                std[d] = if s > 1e-12 * (1.0 + mean[d].abs()) {
                    s
                } else {
                    1.0
                };
            }
        }
        Self { mean, std }
    }

    pub fn standardize(&self, p: &Point) -> Point {
        [
            (p[0] - self.mean[0]) / self.std[0],
            (p[1] - self.mean[1]) / self.std[1],
        ]
    }
}

/// Box bounds on the log-hyperparameters, in standardized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperBounds {
    pub log_signal_var: [f64; 2],
    pub log_lengthscale: [f64; 2],
    pub log_noise_var: [f64; 2],
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            log_signal_var: [-6.0, 4.0],
            log_lengthscale: [-3.0, 3.0],
            log_noise_var: [-10.0, 0.0],
        }
    }
}

impl HyperBounds {
    fn as_array(&self) -> [[f64; 2]; N_HYPER] {
        [
            self.log_signal_var,
            self.log_lengthscale,
            self.log_lengthscale,
            self.log_noise_var,
        ]
    }
}

/// Settings for hyperparameter fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Number of starts; the first is the smoothest admissible model (unit
    /// signal variance, longest lengthscales), the rest are drawn uniformly
    /// inside `bounds`. Directions the data cannot resolve, such as the
    /// lengthscales of a single point, keep the smooth value.
    pub restarts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub seed: u64,
    pub bounds: HyperBounds,
    /// Pins the (standardized) noise variance instead of fitting it.
    pub fixed_noise_var: Option<f64>,
    /// Lower limit on the fitted noise variance in target units squared,
    /// typically the variance implied by the sensor noise. It is kept
    /// inside `bounds`.
    pub noise_var_floor: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iter: 200,
            grad_tol: 1e-6,
            seed: 0,
            bounds: HyperBounds::default(),
            fixed_noise_var: None,
            noise_var_floor: None,
        }
    }
}

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
const VARIANCE_FLOOR: f64 = 1e-10;

/// Dense lower-triangular Cholesky factor stored row-major.
#[derive(Debug, Clone, PartialEq)]
struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    fn factor(a: &[f64], n: usize) -> Option<Self> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for p in 0..j {
                    s -= l[i * n + p] * l[j * n + p];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    /// Solves `L x = b` in place.
    #[allow(clippy::needless_range_loop)]
    fn solve_lower(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for p in 0..i {
                s -= self.l[i * n + p] * b[p];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `L^T x = b` in place.
    #[allow(clippy::needless_range_loop)]
    fn solve_upper(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for p in i + 1..n {
                s -= self.l[p * n + i] * b[p];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower(&mut x);
        self.solve_upper(&mut x);
        x
    }

    fn log_det_half(&self) -> f64 {
        (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum()
    }

    /// Full inverse of `L L^T`, row-major.
    fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        // Columns of L^{-1}, then A^{-1} = L^{-T} L^{-1}.
        let mut linv = vec![0.0; n * n];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            self.solve_lower(&mut e);
            for i in j..n {
                linv[i * n + j] = e[i];
            }
        }
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for p in i..n {
                    s += linv[p * n + i] * linv[p * n + j];
                }
                inv[i * n + j] = s;
                inv[j * n + i] = s;
            }
        }
        inv
    }
}

/// Gram matrix with noise, factored with escalating jitter.
struct Factored {
    chol: Cholesky,
    jitter: f64,
}

fn signal_gram(kernel: &Kernel, x: &[Point]) -> Vec<f64> {
    let n = x.len();
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&x[i], &x[j]);
            s[i * n + j] = v;
            s[j * n + i] = v;
        }
    }
    s
}

fn factor_with_jitter(kernel: &Kernel, signal: &[f64], n: usize) -> Result<Factored> {
    let base = kernel.signal_var() + kernel.noise_var();
    let mut level = JITTER_START;
    loop {
        let jitter = level * base;
        let mut a = signal.to_vec();
        for i in 0..n {
            a[i * n + i] += kernel.noise_var() + jitter;
        }
        if let Some(chol) = Cholesky::factor(&a, n) {
            return Ok(Factored { chol, jitter });
        }
        level *= 10.0;
        if level > JITTER_MAX * (1.0 + 1e-9) {
            return Err(Error::Numerical(format!(
                "Cholesky failed for {n} points even with jitter {:.1e}",
                JITTER_MAX * base
            )));
        }
    }
}

/// Log marginal likelihood and its gradient with respect to the
/// log-hyperparameters `[log sf2, log l_mdot, log l_pr, log sn2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmlValue {
    pub value: f64,
    pub grad: [f64; N_HYPER],
}

/// Evaluates the log marginal likelihood on already-standardized data.
pub fn log_marginal_likelihood(
    inputs: &[Point],
    targets: &[f64],
    kernel: &Kernel,
) -> Result<LmlValue> {
    let n = inputs.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if targets.len() != n {
        return Err(Error::Domain("inputs and targets differ in length".into()));
    }
    let signal = signal_gram(kernel, inputs);
    let f = factor_with_jitter(kernel, &signal, n)?;
    let alpha = f.chol.solve(targets);
    let fit: f64 = targets.iter().zip(&alpha).map(|(y, a)| y * a).sum();
    let value = -0.5 * fit - f.chol.log_det_half() - 0.5 * n as f64 * (2.0 * PI).ln();

    let kinv = f.chol.inverse();
    let ls = kernel.lengthscales();
    let mut grad = [0.0; N_HYPER];
    for i in 0..n {
        for j in 0..n {
            let w = alpha[i] * alpha[j] - kinv[i * n + j];
            let s = signal[i * n + j];
            grad[0] += w * s;
            for d in 0..2 {
                let z = (inputs[i][d] - inputs[j][d]) / ls[d];
                grad[1 + d] += w * s * z * z;
            }
        }
        grad[3] += (alpha[i] * alpha[i] - kinv[i * n + i]) * kernel.noise_var();
    }
    for g in &mut grad {
        *g *= 0.5;
    }
    Ok(LmlValue { value, grad })
}

/// A conditioned GP: dataset, hyperparameters and cached factorization.
///
/// Immutable once built; refits produce a new model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GpSnapshot", try_from = "GpSnapshot")]
pub struct GpModel {
    inputs: Vec<Point>,
    targets: Vec<f64>,
    kernel: Kernel,
    prior_mean: f64,
    target_scale: f64,
    stats: InputStats,
    std_inputs: Vec<Point>,
    chol: Cholesky,
    alpha: Vec<f64>,
    jitter: f64,
}

/// Serialized form of a [`GpModel`]: the dataset and hyperparameters.
/// The factorization is rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpSnapshot {
    pub inputs: Vec<Point>,
    pub targets: Vec<f64>,
    pub prior_mean: f64,
    pub kernel: Kernel,
}

impl From<GpModel> for GpSnapshot {
    fn from(m: GpModel) -> Self {
        Self {
            inputs: m.inputs,
            targets: m.targets,
            prior_mean: m.prior_mean,
            kernel: m.kernel,
        }
    }
}

impl TryFrom<GpSnapshot> for GpModel {
    type Error = Error;

    fn try_from(s: GpSnapshot) -> Result<Self> {
        GpModel::condition(&s.inputs, &s.targets, s.prior_mean, s.kernel)
    }
}

struct Prepared {
    stats: InputStats,
    std_inputs: Vec<Point>,
    scale: f64,
    std_targets: Vec<f64>,
}

fn prepare(inputs: &[Point], targets: &[f64], prior_mean: f64) -> Result<Prepared> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if inputs.len() != targets.len() {
        return Err(Error::Domain(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let finite = inputs.iter().all(|p| p[0].is_finite() && p[1].is_finite())
        && targets.iter().all(|t| t.is_finite())
        && prior_mean.is_finite();
    if !finite {
        return Err(Error::Domain("non-finite training data".into()));
    }
    let stats = InputStats::from_points(inputs);
    let std_inputs = inputs.iter().map(|p| stats.standardize(p)).collect();
    let centred: Vec<f64> = targets.iter().map(|t| t - prior_mean).collect();
    let rms = (centred.iter().map(|c| c * c).sum::<f64>() / centred.len() as f64).sqrt();
    let scale = if rms > 1e-12 { rms } else { 1.0 };
    let std_targets = centred.iter().map(|c| c / scale).collect();
    Ok(Prepared {
        stats,
        std_inputs,
        scale,
        std_targets,
    })
}

impl GpModel {
    /// Conditions on the data with fixed hyperparameters (no optimization).
    pub fn condition(
        inputs: &[Point],
        targets: &[f64],
        prior_mean: f64,
        kernel: Kernel,
    ) -> Result<Self> {
        let p = prepare(inputs, targets, prior_mean)?;
        let n = inputs.len();
        let signal = signal_gram(&kernel, &p.std_inputs);
        let f = factor_with_jitter(&kernel, &signal, n)?;
        let alpha = f.chol.solve(&p.std_targets);
        Ok(Self {
            inputs: inputs.to_vec(),
            targets: targets.to_vec(),
            kernel,
            prior_mean,
            target_scale: p.scale,
            stats: p.stats,
            std_inputs: p.std_inputs,
            chol: f.chol,
            alpha,
            jitter: f.jitter,
        })
    }

    /// Fits hyperparameters by multi-start LML ascent, then conditions.
    pub fn fit(
        inputs: &[Point],
        targets: &[f64],
        prior_mean: f64,
        opts: &FitOptions,
    ) -> Result<Self> {
        let p = prepare(inputs, targets, prior_mean)?;
        let mut opts = opts.clone();
        if let Some(floor) = opts.noise_var_floor.filter(|f| *f > 0.0) {
            let [lo, hi] = opts.bounds.log_noise_var;
            opts.bounds.log_noise_var[0] = (floor / (p.scale * p.scale)).ln().clamp(lo, hi);
        }
        let kernel = optimize_hyperparameters(&p.std_inputs, &p.std_targets, &opts)?;
        Self::condition(inputs, targets, prior_mean, kernel)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Point] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    /// RMS of the centred targets; kernel variances are relative to its square.
    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    pub fn input_stats(&self) -> &InputStats {
        &self.stats
    }

    /// Diagonal jitter added on top of the noise variance (standardized units).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `L L^T - (K + (sn2 + jitter) I)`, max absolute entry, in standardized units.
    pub fn reconstruction_error(&self) -> f64 {
        let n = self.len();
        let signal = signal_gram(&self.kernel, &self.std_inputs);
        let l = &self.chol.l;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for p in 0..=j {
                    s += l[i * n + p] * l[j * n + p];
                }
                let mut a = signal[i * n + j];
                if i == j {
                    a += self.kernel.noise_var() + self.jitter;
                }
                worst = worst.max((s - a).abs() / a.abs().max(1e-300));
            }
        }
        worst
    }

    fn check_query(query: &Point) -> Result<()> {
        if query[0].is_finite() && query[1].is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("non-finite query {query:?}")))
        }
    }

    fn cross_cov(&self, xs: &Point) -> Vec<f64> {
        self.std_inputs
            .iter()
            .map(|xi| self.kernel.eval(xs, xi))
            .collect()
    }

    /// Posterior mean in target units.
    pub fn predict_mean(&self, query: &Point) -> Result<f64> {
        Self::check_query(query)?;
        let xs = self.stats.standardize(query);
        let m: f64 = self
            .std_inputs
            .iter()
            .zip(&self.alpha)
            .map(|(xi, a)| self.kernel.eval(&xs, xi) * a)
            .sum();
        Ok(self.prior_mean + self.target_scale * m)
    }

    /// Posterior variance of the latent function in target units squared.
    pub fn predict_var(&self, query: &Point) -> Result<f64> {
        Self::check_query(query)?;
        let xs = self.stats.standardize(query);
        let mut v = self.cross_cov(&xs);
        self.chol.solve_lower(&mut v);
        let explained: f64 = v.iter().map(|x| x * x).sum();
        let var = self.kernel.signal_var() - explained;
        let var = if var < VARIANCE_FLOOR {
            var.max(0.0)
        } else {
            var
        };
        Ok(self.target_scale * self.target_scale * var)
    }

    /// Gradient of the posterior mean with respect to the raw `(mdot, pr)`.
    pub fn predict_mean_grad(&self, query: &Point) -> Result<[f64; 2]> {
        Ok(self.predict_mean_and_grad(query)?.1)
    }

    /// Mean and its raw-input gradient in one pass.
    pub fn predict_mean_and_grad(&self, query: &Point) -> Result<(f64, [f64; 2])> {
        Self::check_query(query)?;
        let xs = self.stats.standardize(query);
        let ls = self.kernel.lengthscales();
        let mut m = 0.0;
        let mut g = [0.0; 2];
        for (xi, a) in self.std_inputs.iter().zip(&self.alpha) {
            let w = self.kernel.eval(&xs, xi) * a;
            m += w;
            for d in 0..2 {
                g[d] -= w * (xs[d] - xi[d]) / (ls[d] * ls[d]);
            }
        }
        let s = self.target_scale;
        Ok((
            self.prior_mean + s * m,
            [s * g[0] / self.stats.std[0], s * g[1] / self.stats.std[1]],
        ))
    }
}

fn clip(p: &mut [f64; N_HYPER], bounds: &[[f64; 2]; N_HYPER]) {
    for (v, b) in p.iter_mut().zip(bounds) {
        *v = v.clamp(b[0], b[1]);
    }
}

fn optimize_hyperparameters(x: &[Point], y: &[f64], opts: &FitOptions) -> Result<Kernel> {
    let mut bounds = opts.bounds.as_array();
    if let Some(noise) = opts.fixed_noise_var {
        if !(noise > 0.0) {
            return Err(Error::Domain(
                "fixed noise variance must be positive".into(),
            ));
        }
        bounds[3] = [noise.ln(), noise.ln()];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = Vec::with_capacity(opts.restarts.max(1));
    let mut smooth = [0.0, bounds[1][1], bounds[2][1], -4.0];
    clip(&mut smooth, &bounds);
    starts.push(smooth);
    for _ in 1..opts.restarts.max(1) {
        let mut s = [0.0; N_HYPER];
        for (v, b) in s.iter_mut().zip(&bounds) {
            *v = if b[1] > b[0] {
                rng.random_range(b[0]..b[1])
            } else {
                b[0]
            };
        }
        starts.push(s);
    }

    let mut best: Option<([f64; N_HYPER], f64)> = None;
    let mut last_err = None;
    for start in starts {
        match ascend(x, y, start, &bounds, opts) {
            Ok((p, v)) => {
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((p, v));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((p, _)) => Ok(Kernel::from_log_params(p)),
        None => Err(last_err
            .unwrap_or_else(|| Error::Numerical("no hyperparameter start succeeded".into()))),
    }
}

/// Projected gradient ascent with Barzilai-Borwein trial steps and Armijo
/// backtracking, inside the box `bounds`.
fn ascend(
    x: &[Point],
    y: &[f64],
    start: [f64; N_HYPER],
    bounds: &[[f64; 2]; N_HYPER],
    opts: &FitOptions,
) -> Result<([f64; N_HYPER], f64)> {
    let eval = |p: &[f64; N_HYPER]| log_marginal_likelihood(x, y, &Kernel::from_log_params(*p));
    let mut theta = start;
    let mut cur = eval(&theta)?;
    let mut step = 1.0 / cur.grad.iter().fold(1.0_f64, |m, g| m.max(g.abs()));
    for _ in 0..opts.max_iter {
        // Projected-gradient stationarity measure.
        let mut probe = theta;
        for (v, g) in probe.iter_mut().zip(&cur.grad) {
            *v += g;
        }
        clip(&mut probe, bounds);
        let pg: f64 = (0..N_HYPER)
            .map(|i| (probe[i] - theta[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        if pg < opts.grad_tol {
            break;
        }

        let mut accepted = None;
        let mut t = step;
        while t > 1e-12 {
            let mut trial = theta;
            for (v, g) in trial.iter_mut().zip(&cur.grad) {
                *v += t * g;
            }
            clip(&mut trial, bounds);
            let ascent: f64 = (0..N_HYPER)
                .map(|i| cur.grad[i] * (trial[i] - theta[i]))
                .sum();
            if let Ok(next) = eval(&trial) {
                if next.value.is_finite() && next.value >= cur.value + 1e-4 * ascent {
                    accepted = Some((trial, next));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((trial, next)) = accepted else { break };

        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..N_HYPER {
            let s = trial[i] - theta[i];
            ss += s * s;
            sy -= s * (next.grad[i] - cur.grad[i]);
        }
        step = if sy > 0.0 {
            (ss / sy).clamp(1e-6, 1e3)
        } else {
            (t * 2.0).min(1e3)
        };
        theta = trial;
        cur = next;
    }
    Ok((theta, cur.value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_basic_values() {
        let k = Kernel::new(2.0, [1.0, 1.0], 0.1).unwrap();
        let x = [0.3, -1.2];
        assert!((k.eval(&x, &x) - 2.0).abs() < 1e-15);
        let got = k.eval(&[0.0, 0.0], &[1.0, 0.0]);
        assert!((got - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
        assert!(Kernel::new(0.0, [1.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn kernel_symmetry() {
        let k = Kernel::new(1.3, [0.7, 2.1], 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let y = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            assert_eq!(k.eval(&x, &y), k.eval(&y, &x));
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(
            GpModel::fit(&[], &[], 0.0, &FitOptions::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn single_point_fit() {
        let m = GpModel::fit(&[[20.0, 1.2]], &[0.37], 0.0, &FitOptions::default()).unwrap();
        let sn = (m.kernel().noise_var()).sqrt() * m.target_scale();
        let mean = m.predict_mean(&[20.0, 1.2]).unwrap();
        assert!((mean - 0.37).abs() <= 10.0 * sn, "{mean}");
        let g = m.predict_mean_grad(&[20.0, 1.2]).unwrap();
        assert!(g[0].abs() < 1e-15 && g[1].abs() < 1e-15);
    }

    #[test]
    fn one_by_one_lml_closed_form() {
        let k = Kernel::new(0.7, [1.0, 1.0], 0.2).unwrap();
        let v = log_marginal_likelihood(&[[0.0, 0.0]], &[0.0], &k).unwrap();
        let jitter = JITTER_START * 0.9;
        let total = 0.9 + jitter;
        let expected = -0.5 * total.ln() - 0.5 * (2.0 * PI).ln();
        assert!((v.value - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_targets_drop_data_fit_term() {
        let k = Kernel::new(0.7, [0.5, 1.5], 0.2).unwrap();
        let x = [[0.0, 0.0], [1.0, 0.5], [-0.4, 1.0]];
        let v = log_marginal_likelihood(&x, &[0.0; 3], &k).unwrap();
        let signal = signal_gram(&k, &x);
        let f = factor_with_jitter(&k, &signal, 3).unwrap();
        let expected = -f.chol.log_det_half() - 1.5 * (2.0 * PI).ln();
        assert!((v.value - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_targets_have_flat_mean() {
        let x = [[10.0, 1.1], [14.0, 1.2], [18.0, 1.25], [22.0, 1.3]];
        let m = GpModel::fit(&x, &[0.8; 4], 0.8, &FitOptions::default()).unwrap();
        let g = m.predict_mean_grad(&[15.0, 1.22]).unwrap();
        assert!(g[0].abs() < 1e-8 && g[1].abs() < 1e-8);
    }

    #[test]
    fn far_queries_revert_to_prior() {
        let x = [[10.0, 1.1], [14.0, 1.2], [18.0, 1.25]];
        let y = [0.1, -0.05, 0.2];
        let k = Kernel::new(1.0, [0.5, 0.5], 1e-4).unwrap();
        let m = GpModel::condition(&x, &y, 0.3, k).unwrap();
        // Standardized distance of well over 10 lengthscales.
        let far = [10.0 + 500.0, 1.2];
        let sf = m.kernel().signal_var().sqrt() * m.target_scale();
        assert!((m.predict_mean(&far).unwrap() - 0.3).abs() < 1e-6 * sf);
        let sf2 = m.kernel().signal_var() * m.target_scale().powi(2);
        assert!((m.predict_var(&far).unwrap() - sf2).abs() < 1e-6 * sf2);
        assert!(m.predict_mean(&[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn serialization_rebuilds_identical_model() {
        let x = [[10.0, 1.1], [14.0, 1.2], [18.0, 1.25]];
        let m = GpModel::fit(&x, &[0.1, -0.05, 0.2], 0.0, &FitOptions::default()).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: GpModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
