//! Load-sharing optimization: split a station flow target across parallel
//! compressors so that total shaft power is minimal.
//!
//! All compressors share suction and discharge headers, so the pressure
//! ratio and polytropic head follow from the station target through the
//! system curve and are constants of the problem. What remains is a smooth
//! objective over the polytope `{ lo <= x <= hi, sum(x) = target }`, solved
//! by projected gradient descent from several Latin-hypercube starts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surrogate::MapModel;
use crate::thermo::{polytropic_head, Envelope, GasConditions, SystemCurve};

/// One instance of the load-sharing problem.
#[derive(Debug, Clone)]
pub struct LsoProblem {
    pub target: f64,
    pub pr: f64,
    pub head: f64,
    /// `(surge flow, choke flow)` per compressor at `pr`.
    pub bounds: Vec<(f64, f64)>,
    pub models: Vec<MapModel>,
}

impl LsoProblem {
    pub fn n_compressors(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_feasible(&self) -> bool {
        let (lo, hi) = self.capacity();
        let tol = 1e-12 * self.target.abs().max(1.0);
        self.target >= lo - tol && self.target <= hi + tol
    }

    /// Minimum and maximum total station flow at this pressure ratio.
    pub fn capacity(&self) -> (f64, f64) {
        self.bounds
            .iter()
            .fold((0.0, 0.0), |(a, b), (l, u)| (a + l, b + u))
    }
}

/// Assembles the problem for a station target: pressure ratio from the
/// system curve, head from the gas, flow bounds from each envelope.
pub fn build_problem(
    target: f64,
    curve: &SystemCurve,
    gas: &GasConditions,
    envs: &[Envelope],
    models: Vec<MapModel>,
) -> Result<LsoProblem> {
    if !(target >= 0.0) {
        return Err(Error::Domain(format!(
            "station target {target} is negative"
        )));
    }
    if envs.len() != models.len() || envs.is_empty() {
        return Err(Error::Domain(format!(
            "{} envelopes for {} models",
            envs.len(),
            models.len()
        )));
    }
    let pr = curve.pressure_ratio(target)?;
    let head = polytropic_head(pr, gas)?;
    let mut bounds = Vec::with_capacity(envs.len());
    for (i, env) in envs.iter().enumerate() {
        if !env.contains_pr(pr) {
            return Err(Error::Infeasible(format!(
                "target {target} gives pressure ratio {pr} outside envelope of compressor {}",
                i + 1
            )));
        }
        bounds.push(env.bounds(pr)?);
    }
    Ok(LsoProblem {
        target,
        pr,
        head,
        bounds,
        models,
    })
}

/// Station power, its gradient in the flows, and how many model
/// evaluations hit the efficiency safety clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerEval {
    pub power: f64,
    pub grad: Vec<f64>,
    pub clamp_hits: usize,
}

pub fn station_power(problem: &LsoProblem, flows: &[f64]) -> Result<PowerEval> {
    if flows.len() != problem.n_compressors() {
        return Err(Error::Domain("flow vector has wrong length".into()));
    }
    let h = problem.head;
    let mut power = 0.0;
    let mut grad = Vec::with_capacity(flows.len());
    let mut clamp_hits = 0;
    for (model, &m) in problem.models.iter().zip(flows) {
        let e = model.evaluate(m, problem.pr)?;
        if e.clamped {
            clamp_hits += 1;
        }
        power += h * m / e.value;
        grad.push(h / e.value - h * m * e.grad[0] / (e.value * e.value));
    }
    Ok(PowerEval {
        power,
        grad,
        clamp_hits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LsoSolution {
    pub flows: Vec<f64>,
    /// Model-based station power in W.
    pub predicted_power: f64,
    /// Relative KKT stationarity residual (see [`kkt_residual`]).
    pub kkt_residual: f64,
    pub status: SolveStatus,
    pub starts_used: usize,
    pub iterations: usize,
    pub clamp_hits: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub starts: usize,
    pub max_iter: usize,
    pub kkt_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            starts: 10,
            max_iter: 1000,
            kkt_tol: 1e-10,
        }
    }
}

/// Euclidean projection of `y` onto `{ lo <= x <= hi, sum(x) = total }`.
///
/// The projection is `clip(y - lambda)` for the scalar `lambda` that meets
/// the sum; `lambda` is bracketed by bisection and then solved exactly on
/// the resulting active set.
pub fn project(y: &[f64], bounds: &[(f64, f64)], total: f64) -> Vec<f64> {
    let place = |lambda: f64| -> Vec<f64> {
        y.iter()
            .zip(bounds)
            .map(|(v, (l, u))| (v - lambda).clamp(*l, *u))
            .collect()
    };
    let sum = |x: &[f64]| x.iter().sum::<f64>();

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (v, (l, u)) in y.iter().zip(bounds) {
        lo = lo.min(v - u);
        hi = hi.max(v - l);
    }
    // sum(place(lambda)) is non-increasing in lambda.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sum(&place(mid)) > total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let mut x = place(lambda);

    // Exact multiplier on the active set found above.
    let mut fixed = 0.0;
    let mut free_y = 0.0;
    let mut n_free = 0usize;
    for ((v, (l, u)), xi) in y.iter().zip(bounds).zip(&x) {
        if xi <= l || xi >= u {
            fixed += xi;
        } else {
            free_y += v;
            n_free += 1;
        }
    }
    if n_free > 0 {
        let exact = (free_y + fixed - total) / n_free as f64;
        let candidate: Vec<f64> = y
            .iter()
            .zip(bounds)
            .zip(&x)
            .map(|((v, (l, u)), xi)| {
                if xi <= l || xi >= u {
                    *xi
                } else {
                    (v - exact).clamp(*l, *u)
                }
            })
            .collect();
        if (sum(&candidate) - total).abs() <= (sum(&x) - total).abs() {
            x = candidate;
        }
    }

    // Push any rounding residue into coordinates with room to move.
    let mut residue = total - sum(&x);
    for (xi, (l, u)) in x.iter_mut().zip(bounds) {
        if residue == 0.0 {
            break;
        }
        let moved = (*xi + residue).clamp(*l, *u);
        residue -= moved - *xi;
        *xi = moved;
    }
    x
}

/// Relative stationarity residual of `flows` for the balance-plus-box
/// constraints: the smallest achievable worst-case violation of the KKT sign
/// conditions over the balance multiplier, divided by the average specific
/// power `power / target`.
pub fn kkt_residual(
    flows: &[f64],
    grad: &[f64],
    bounds: &[(f64, f64)],
    power: f64,
    target: f64,
) -> f64 {
    // Multiplier must satisfy lambda >= g_i for free/upper and lambda <= g_i
    // for free/lower coordinates.
    let mut need_above = f64::NEG_INFINITY;
    let mut need_below = f64::INFINITY;
    for ((x, g), (l, u)) in flows.iter().zip(grad).zip(bounds) {
        if l >= u {
            continue;
        }
        let at_lower = x <= l;
        let at_upper = x >= u;
        if !at_lower {
            need_above = need_above.max(*g);
        }
        if !at_upper {
            need_below = need_below.min(*g);
        }
    }
    let violation =
        if need_above <= need_below || !need_above.is_finite() || !need_below.is_finite() {
            0.0
        } else {
            0.5 * (need_above - need_below)
        };
    let scale = if power > 0.0 && target > 0.0 {
        power / target
    } else {
        1.0
    };
    violation / scale
}

struct StartResult {
    flows: Vec<f64>,
    power: f64,
    kkt: f64,
    converged: bool,
    iterations: usize,
    clamp_hits: usize,
}

fn descend(problem: &LsoProblem, start: Vec<f64>, opts: &SolverOptions) -> Result<StartResult> {
    let bounds = &problem.bounds;
    let target = problem.target;
    let mut x = start;
    let mut cur = station_power(problem, &x)?;
    let mut clamp_hits = cur.clamp_hits;
    let width = bounds.iter().map(|(l, u)| u - l).sum::<f64>() / bounds.len() as f64;
    let gmax = cur
        .grad
        .iter()
        .fold(0.0_f64, |m, g| m.max(g.abs()))
        .max(1e-300);
    let mut step = 0.1 * width.max(1e-9) / gmax;
    let mut iterations = 0;
    let mut kkt = kkt_residual(&x, &cur.grad, bounds, cur.power, target);

    while iterations < opts.max_iter && kkt > opts.kkt_tol {
        iterations += 1;
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            let trial_in: Vec<f64> = x.iter().zip(&cur.grad).map(|(xi, g)| xi - t * g).collect();
            let trial = project(&trial_in, bounds, target);
            let decrease: f64 = cur
                .grad
                .iter()
                .zip(&trial)
                .zip(&x)
                .map(|((g, a), b)| g * (a - b))
                .sum();
            if decrease >= 0.0 {
                // No descent direction left at this resolution.
                break;
            }
            let next = station_power(problem, &trial)?;
            clamp_hits += next.clamp_hits;
            if next.power <= cur.power + 1e-4 * decrease {
                accepted = Some((trial, next));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, next)) = accepted else { break };

        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..x.len() {
            let s = trial[i] - x[i];
            ss += s * s;
            sy += s * (next.grad[i] - cur.grad[i]);
        }
        step = if sy > 0.0 { ss / sy } else { 2.0 * t };
        x = trial;
        cur = next;
        kkt = kkt_residual(&x, &cur.grad, bounds, cur.power, target);
    }

    Ok(StartResult {
        flows: x,
        power: cur.power,
        kkt,
        converged: kkt <= opts.kkt_tol,
        iterations,
        clamp_hits,
    })
}

fn latin_hypercube(n_starts: usize, dims: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dims);
    for _ in 0..dims {
        let mut strata: Vec<usize> = (0..n_starts).collect();
        strata.shuffle(rng);
        cols.push(
            strata
                .into_iter()
                .map(|s| (s as f64 + rng.random::<f64>()) / n_starts as f64)
                .collect(),
        );
    }
    (0..n_starts)
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect()
}

fn lexicographic_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Minimizes station power for `problem` from `opts.starts` seeded
/// Latin-hypercube starts.
///
/// Converged starts are preferred; among them the lowest power wins, and
/// starts within 1e-9 relative power of the best are broken toward the
/// lexicographically smallest flow vector.
pub fn solve(problem: &LsoProblem, opts: &SolverOptions, seed: u64) -> Result<LsoSolution> {
    let n = problem.n_compressors();
    if n == 0 {
        return Err(Error::Domain("no compressors".into()));
    }
    if problem.bounds.iter().any(|(l, u)| !(l <= u)) {
        return Err(Error::Domain("inverted flow bounds".into()));
    }
    let (cap_lo, cap_hi) = problem.capacity();
    if !problem.is_feasible() {
        return Err(Error::Infeasible(format!(
            "target {} outside station range [{cap_lo}, {cap_hi}] at pressure ratio {}",
            problem.target, problem.pr
        )));
    }

    let tol = 1e-12 * problem.target.abs().max(1.0);
    let pinned = if (problem.target - cap_lo).abs() <= tol {
        Some(problem.bounds.iter().map(|b| b.0).collect::<Vec<_>>())
    } else if (problem.target - cap_hi).abs() <= tol {
        Some(problem.bounds.iter().map(|b| b.1).collect::<Vec<_>>())
    } else {
        None
    };
    if let Some(flows) = pinned {
        let ev = station_power(problem, &flows)?;
        return Ok(LsoSolution {
            flows,
            predicted_power: ev.power,
            kkt_residual: 0.0,
            status: SolveStatus::Converged,
            starts_used: 0,
            iterations: 0,
            clamp_hits: ev.clamp_hits,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_starts = opts.starts.max(1);
    let mut results = Vec::with_capacity(n_starts);
    for u in latin_hypercube(n_starts, n, &mut rng) {
        let raw: Vec<f64> = u
            .iter()
            .zip(&problem.bounds)
            .map(|(t, (l, h))| l + t * (h - l))
            .collect();
        let start = project(&raw, &problem.bounds, problem.target);
        results.push(descend(problem, start, opts)?);
    }

    let any_converged = results.iter().any(|r| r.converged);
    let pool: Vec<&StartResult> = results
        .iter()
        .filter(|r| r.converged || !any_converged)
        .collect();
    let best_power = pool.iter().map(|r| r.power).fold(f64::INFINITY, f64::min);
    let band = 1e-9 * best_power.abs();
    let mut chosen: Option<&StartResult> = None;
    for r in pool {
        if r.power <= best_power + band
            && chosen.is_none_or(|c| lexicographic_less(&r.flows, &c.flows))
        {
            chosen = Some(r);
        }
    }
    let chosen = chosen.expect("at least one start");
    let iterations = results.iter().map(|r| r.iterations).sum();
    let clamp_hits = results.iter().map(|r| r.clamp_hits).sum();
    if clamp_hits > 0 {
        log::debug!(
            "load-sharing solve at target {} touched the efficiency clamp {clamp_hits} times",
            problem.target
        );
    }
    Ok(LsoSolution {
        flows: chosen.flows.clone(),
        predicted_power: chosen.power,
        kkt_residual: chosen.kkt,
        status: if chosen.converged {
            SolveStatus::Converged
        } else {
            SolveStatus::MaxIter
        },
        starts_used: n_starts,
        iterations,
        clamp_hits,
    })
}
