//! Optimizer-facing efficiency models.
//!
//! A [`MapModel`] is one of: the exact plant map, a quadratic polynomial
//! prior, a polynomial prior corrected by a GP fitted to residuals, or a GP
//! fitted directly to efficiencies.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::thermo::{Envelope, SystemCurve, TrueMap};

/// Model output is clamped to this range before it reaches the optimizer.
pub const MODEL_EFFICIENCY_RANGE: (f64, f64) = (0.01, 1.2);

/// Quadratic efficiency model
/// `a1 + a2 m + a3 p + a4 m p + a5 m^2 + a6 p^2 + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyPrior {
    pub alpha: [f64; 6],
    pub shift: f64,
}

fn features(mdot: f64, pr: f64) -> [f64; 6] {
    [1.0, mdot, pr, mdot * pr, mdot * mdot, pr * pr]
}

impl PolyPrior {
    pub fn eval(&self, mdot: f64, pr: f64) -> f64 {
        let a = &self.alpha;
        a[0] + a[1] * mdot
            + a[2] * pr
            + a[3] * mdot * pr
            + a[4] * mdot * mdot
            + a[5] * pr * pr
            + self.shift
    }

    pub fn grad(&self, mdot: f64, pr: f64) -> [f64; 2] {
        let a = &self.alpha;
        [
            a[1] + a[3] * pr + 2.0 * a[4] * mdot,
            a[2] + a[3] * mdot + 2.0 * a[5] * pr,
        ]
    }
}

pub fn poly_eval(prior: &PolyPrior, mdot: f64, pr: f64) -> f64 {
    prior.eval(mdot, pr)
}

/// A noise-free observation of a true map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySample {
    pub mdot: f64,
    pub pr: f64,
    pub eta: f64,
}

/// Draws `count` observations of `map` at operating pressure ratios of the
/// station: each sample picks a station flow uniformly in `station_flow`,
/// takes the system-curve pressure ratio there, and a compressor flow
/// uniformly between surge and choke.
pub fn sample_along_curve(
    map: &TrueMap,
    env: &Envelope,
    curve: &SystemCurve,
    station_flow: (f64, f64),
    count: usize,
    seed: u64,
) -> Result<Vec<EfficiencySample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = station_flow;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let q = if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        };
        let pr = curve.pressure_ratio(q)?;
        let (surge, choke) = env.bounds(pr)?;
        let mdot = rng.random_range(surge..choke);
        out.push(EfficiencySample {
            mdot,
            pr,
            eta: map.efficiency(mdot, pr),
        });
    }
    Ok(out)
}

/// Least-squares fit of the six coefficients on the first `n_points`
/// samples, minimum-norm when underdetermined, followed by a uniform random
/// shift in `[-shift_magnitude, shift_magnitude]`.
pub fn fit_poly_prior(
    samples: &[EfficiencySample],
    n_points: usize,
    shift_magnitude: f64,
    seed: u64,
) -> Result<PolyPrior> {
    if n_points < 1 {
        return Err(Error::config("prior.n_points", "must be at least 1"));
    }
    if n_points > samples.len() {
        return Err(Error::config(
            "prior.n_points",
            format!("{n_points} requested but only {} samples", samples.len()),
        ));
    }
    if !(shift_magnitude >= 0.0) {
        return Err(Error::config(
            "prior.shift_magnitude",
            "must be non-negative",
        ));
    }
    let used = &samples[..n_points];
    let x = DMatrix::from_fn(n_points, 6, |i, j| features(used[i].mdot, used[i].pr)[j]);
    let y = DVector::from_iterator(n_points, used.iter().map(|s| s.eta));
    let svd = x.svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max();
    let sol = svd
        .solve(&y, cutoff)
        .map_err(|e| Error::Numerical(format!("polynomial least squares: {e}")))?;
    let mut alpha = [0.0; 6];
    alpha.copy_from_slice(sol.as_slice());

    let shift = if shift_magnitude > 0.0 {
        ChaCha8Rng::seed_from_u64(seed).random_range(-shift_magnitude..=shift_magnitude)
    } else {
        0.0
    };
    Ok(PolyPrior { alpha, shift })
}

/// Efficiency model used by the optimizer for one compressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum MapModel {
    Exact {
        map: TrueMap,
    },
    PolyOnly {
        prior: PolyPrior,
    },
    Residual {
        prior: PolyPrior,
        gp: Option<Arc<GpModel>>,
    },
    DirectGp {
        gp: Option<Arc<GpModel>>,
        fallback: f64,
    },
}

/// Value and gradient of a model, and whether the safety clamp was hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelEval {
    pub value: f64,
    pub grad: [f64; 2],
    pub clamped: bool,
}

impl MapModel {
    pub fn prior(&self) -> Option<&PolyPrior> {
        match self {
            MapModel::PolyOnly { prior } | MapModel::Residual { prior, .. } => Some(prior),
            _ => None,
        }
    }

    pub fn gp(&self) -> Option<&GpModel> {
        match self {
            MapModel::Residual { gp, .. } | MapModel::DirectGp { gp, .. } => gp.as_deref(),
            _ => None,
        }
    }

    /// Unclamped value and gradient.
    fn raw(&self, mdot: f64, pr: f64) -> Result<(f64, [f64; 2])> {
        Ok(match self {
            MapModel::Exact { map } => (map.efficiency(mdot, pr), map.efficiency_grad(mdot, pr)),
            MapModel::PolyOnly { prior } => (prior.eval(mdot, pr), prior.grad(mdot, pr)),
            MapModel::Residual { prior, gp } => {
                let (mut v, mut g) = (prior.eval(mdot, pr), prior.grad(mdot, pr));
                if let Some(gp) = gp {
                    let (dv, dg) = gp.predict_mean_and_grad(&[mdot, pr])?;
                    v += dv;
                    g[0] += dg[0];
                    g[1] += dg[1];
                }
                (v, g)
            }
            MapModel::DirectGp { gp, fallback } => match gp {
                Some(gp) => gp.predict_mean_and_grad(&[mdot, pr])?,
                None => (*fallback, [0.0, 0.0]),
            },
        })
    }

    pub fn evaluate(&self, mdot: f64, pr: f64) -> Result<ModelEval> {
        if !mdot.is_finite() || !pr.is_finite() {
            return Err(Error::Domain(format!(
                "non-finite model query ({mdot}, {pr})"
            )));
        }
        let (value, grad) = self.raw(mdot, pr)?;
        let (lo, hi) = MODEL_EFFICIENCY_RANGE;
        if value < lo || value > hi {
            return Ok(ModelEval {
                value: value.clamp(lo, hi),
                grad: [0.0, 0.0],
                clamped: true,
            });
        }
        Ok(ModelEval {
            value,
            grad,
            clamped: false,
        })
    }

    pub fn efficiency(&self, mdot: f64, pr: f64) -> Result<f64> {
        Ok(self.evaluate(mdot, pr)?.value)
    }

    pub fn efficiency_grad(&self, mdot: f64, pr: f64) -> Result<[f64; 2]> {
        Ok(self.evaluate(mdot, pr)?.grad)
    }

    /// The model's prior component: the polynomial for prior-based variants,
    /// the constant mean for a direct GP, and the map itself when exact.
    pub fn prior_efficiency(&self, mdot: f64, pr: f64) -> f64 {
        match self {
            MapModel::Exact { map } => map.efficiency(mdot, pr),
            MapModel::PolyOnly { prior } | MapModel::Residual { prior, .. } => prior.eval(mdot, pr),
            MapModel::DirectGp { gp, fallback } => {
                gp.as_ref().map_or(*fallback, |g| g.prior_mean())
            }
        }
    }
}

pub fn model_efficiency(model: &MapModel, mdot: f64, pr: f64) -> Result<f64> {
    model.efficiency(mdot, pr)
}

pub fn model_efficiency_grad(model: &MapModel, mdot: f64, pr: f64) -> Result<[f64; 2]> {
    model.efficiency_grad(mdot, pr)
}

/// One cell of a map snapshot grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapGridRow {
    pub mdot: f64,
    pub pr: f64,
    pub eta_true: f64,
    pub eta_model: f64,
    pub eta_prior: f64,
}

/// Evaluates model and plant on an `n x n` grid spanning the envelope's
/// pressure-ratio window and its full flow range.
pub fn map_grid(
    model: &MapModel,
    truth: &TrueMap,
    env: &Envelope,
    n: usize,
) -> Result<Vec<MapGridRow>> {
    let n = n.max(2);
    let [p_lo, p_hi] = env.pr_range;
    let (s_lo, c_lo) = env.bounds(p_lo)?;
    let (s_hi, c_hi) = env.bounds(p_hi)?;
    let m_lo = s_lo.min(s_hi);
    let m_hi = c_lo.max(c_hi);
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        let pr = p_lo + (p_hi - p_lo) * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let mdot = m_lo + (m_hi - m_lo) * j as f64 / (n - 1) as f64;
            rows.push(MapGridRow {
                mdot,
                pr,
                eta_true: truth.efficiency(mdot, pr),
                eta_model: model.efficiency(mdot, pr)?,
                eta_prior: model.prior_efficiency(mdot, pr),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_constant_and_linear() {
        let c = PolyPrior {
            alpha: [0.8, 0.0, 0.0, 0.0, 0.0, 0.0],
            shift: 0.0,
        };
        assert_eq!(c.eval(17.0, 1.3), 0.8);
        let l = PolyPrior {
            alpha: [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            shift: 0.1,
        };
        assert!((l.eval(2.0, 9.9) - 2.1).abs() < 1e-15);
    }

    #[test]
    fn poly_fixed_point() {
        let p = PolyPrior {
            alpha: [0.1, 0.02, 0.3, -0.004, -0.0005, -0.2],
            shift: -0.01,
        };
        // 0.1 + 0.4 + 0.36 - 0.096 - 0.2 - 0.288 - 0.01
        assert!((p.eval(20.0, 1.2) - 0.266).abs() < 1e-12);
    }

    #[test]
    fn poly_gradient_symbolic() {
        let p = PolyPrior {
            alpha: [0.1, 0.02, 0.3, -0.004, -0.0005, -0.2],
            shift: 0.03,
        };
        for i in 0..10 {
            let m = 10.0 + 2.0 * i as f64;
            let pr = 1.1 + 0.03 * i as f64;
            let g = p.grad(m, pr);
            assert_eq!(g[0], 0.02 + -0.004 * pr + 2.0 * -0.0005 * m);
            assert_eq!(g[1], 0.3 + -0.004 * m + 2.0 * -0.2 * pr);
        }
    }

    #[test]
    fn fit_rejects_zero_points() {
        let s = [EfficiencySample {
            mdot: 1.0,
            pr: 1.1,
            eta: 0.5,
        }];
        assert!(matches!(
            fit_poly_prior(&s, 0, 0.0, 1),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn direct_gp_cold_start_returns_fallback() {
        let m = MapModel::DirectGp {
            gp: None,
            fallback: 0.7,
        };
        assert_eq!(m.efficiency(20.0, 1.2).unwrap(), 0.7);
        assert_eq!(m.efficiency_grad(20.0, 1.2).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn clamp_flags_nonphysical_values() {
        let m = MapModel::PolyOnly {
            prior: PolyPrior {
                alpha: [0.0, 0.0, 0.0, 0.0, 0.01, 0.0],
                shift: 0.0,
            },
        };
        let e = m.evaluate(30.0, 1.2).unwrap();
        assert!(e.clamped);
        assert_eq!(e.value, 1.2);
        assert!(m.evaluate(f64::INFINITY, 1.2).is_err());
    }

    #[test]
    fn exact_passes_through() {
        let map = TrueMap::default().with_scale(0.92);
        let m = MapModel::Exact { map };
        for (mdot, pr) in [(12.0, 1.1), (25.0, 1.3), (35.0, 1.45)] {
            assert_eq!(m.efficiency(mdot, pr).unwrap(), map.efficiency(mdot, pr));
        }
        let g = m
            .efficiency_grad(map.ridge_flow_at(map.pr_center), map.pr_center)
            .unwrap();
        assert!(g[0].abs() < 1e-8 && g[1].abs() < 1e-8);
    }
}
