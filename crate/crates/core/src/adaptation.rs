//! Model adaptation: measurements become efficiency estimates, a distance
//! rule decides which of them join a compressor's GP dataset, and admitted
//! data triggers a refit on a fixed schedule.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gp::{FitOptions, GpModel, Kernel, Point};
use crate::plant::{Measurement, NoiseModel};
use crate::surrogate::PolyPrior;
use crate::thermo::{back_calculate_efficiency, GasConditions};

/// Distance-based admission rule.
///
/// Distances are Euclidean after dividing `(mdot, pr)` by `scales`, which
/// are fixed for the whole run, so the separation guarantee holds for the
/// final dataset exactly as it held at each admission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionPolicy {
    pub delta_admit: f64,
    pub max_points: usize,
    pub scales: [f64; 2],
}

impl AdmissionPolicy {
    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        let dx = (a[0] - b[0]) / self.scales[0];
        let dy = (a[1] - b[1]) / self.scales[1];
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Admission {
    Admitted,
    TooClose { distance: f64 },
    Full,
    Invalid { reason: String },
}

impl Admission {
    pub fn is_admitted(&self) -> bool {
        matches!(self, Admission::Admitted)
    }
}

/// Every processed measurement, admitted or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub time: f64,
    pub mdot: f64,
    pub pr: f64,
    pub eta_est: Option<f64>,
    pub target: Option<f64>,
    pub outcome: Admission,
}

/// Append-only training data for one compressor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Vec<Point>,
    /// Residuals against the prior, or raw efficiencies without one.
    pub targets: Vec<f64>,
    pub eta_est: Vec<f64>,
    pub admit_times: Vec<f64>,
    pub log: Vec<SampleRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_target(&self) -> f64 {
        if self.targets.is_empty() {
            0.0
        } else {
            self.targets.iter().sum::<f64>() / self.targets.len() as f64
        }
    }

    /// Smallest pairwise distance under `policy`, `None` below two points.
    pub fn min_pairwise_distance(&self, policy: &AdmissionPolicy) -> Option<f64> {
        let mut best: Option<f64> = None;
        for i in 0..self.points.len() {
            for j in 0..i {
                let d = policy.distance(&self.points[i], &self.points[j]);
                best = Some(best.map_or(d, |b: f64| b.min(d)));
            }
        }
        best
    }
}

/// Back-calculates efficiency from `meas`, forms the training target
/// (residual against `prior` when present) and applies the admission rule.
pub fn process_measurement(
    meas: &Measurement,
    prior: Option<&PolyPrior>,
    dataset: &mut Dataset,
    policy: &AdmissionPolicy,
    gas: &GasConditions,
) -> Admission {
    let eta = match back_calculate_efficiency(meas.mdot, meas.pr, meas.power, meas.t_in, gas) {
        Ok(eta) => eta,
        Err(e) => {
            let outcome = Admission::Invalid {
                reason: e.to_string(),
            };
            dataset.log.push(SampleRecord {
                time: meas.time,
                mdot: meas.mdot,
                pr: meas.pr,
                eta_est: None,
                target: None,
                outcome: outcome.clone(),
            });
            return outcome;
        }
    };
    let target = match prior {
        Some(p) => eta - p.eval(meas.mdot, meas.pr),
        None => eta,
    };
    let point = [meas.mdot, meas.pr];
    let outcome = if dataset.len() >= policy.max_points {
        Admission::Full
    } else {
        let nearest = dataset
            .points
            .iter()
            .map(|p| policy.distance(p, &point))
            .fold(f64::INFINITY, f64::min);
        if nearest >= policy.delta_admit {
            Admission::Admitted
        } else {
            Admission::TooClose { distance: nearest }
        }
    };
    if outcome.is_admitted() {
        dataset.points.push(point);
        dataset.targets.push(target);
        dataset.eta_est.push(eta);
        dataset.admit_times.push(meas.time);
    }
    dataset.log.push(SampleRecord {
        time: meas.time,
        mdot: meas.mdot,
        pr: meas.pr,
        eta_est: Some(eta),
        target: Some(target),
        outcome: outcome.clone(),
    });
    outcome
}

/// When hyperparameters are re-optimized: on every admission up to
/// `full_refit_until` points, then every `refit_every` admissions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefitSchedule {
    pub full_refit_until: usize,
    pub refit_every: usize,
}

impl Default for RefitSchedule {
    fn default() -> Self {
        Self {
            full_refit_until: 30,
            refit_every: 5,
        }
    }
}

impl RefitSchedule {
    pub fn is_full_refit(&self, k: usize) -> bool {
        k <= self.full_refit_until
            || (k - self.full_refit_until).is_multiple_of(self.refit_every.max(1))
    }
}

/// Constant prior mean of the GP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorMean {
    /// Residual GPs revert to zero correction.
    Zero,
    /// Direct GPs revert to the dataset mean.
    SampleMean,
}

/// Mean sensor-implied variance of the efficiency estimates in `dataset`,
/// or `None` when it holds no usable point.
pub fn sensor_noise_floor(
    dataset: &Dataset,
    noise: &NoiseModel,
    gas: &GasConditions,
) -> Option<f64> {
    let vars: Vec<f64> = dataset
        .points
        .iter()
        .zip(&dataset.eta_est)
        .filter_map(|(p, eta)| noise.efficiency_variance(p[1], *eta, gas).ok())
        .collect();
    if vars.is_empty() {
        return None;
    }
    Some(vars.iter().sum::<f64>() / vars.len() as f64).filter(|v| *v > 0.0)
}

/// Builds GP models; the seam exists so refit failures can be exercised.
pub trait GpFitter {
    fn fit(&self, inputs: &[Point], targets: &[f64], prior_mean: f64, seed: u64)
        -> Result<GpModel>;
    fn condition(
        &self,
        inputs: &[Point],
        targets: &[f64],
        prior_mean: f64,
        kernel: Kernel,
    ) -> Result<GpModel>;
}

/// Marginal-likelihood fitting via [`GpModel::fit`].
#[derive(Debug, Clone, Default)]
pub struct LmlFitter {
    pub options: FitOptions,
}

impl GpFitter for LmlFitter {
    fn fit(
        &self,
        inputs: &[Point],
        targets: &[f64],
        prior_mean: f64,
        seed: u64,
    ) -> Result<GpModel> {
        let opts = FitOptions {
            seed,
            ..self.options.clone()
        };
        GpModel::fit(inputs, targets, prior_mean, &opts)
    }

    fn condition(
        &self,
        inputs: &[Point],
        targets: &[f64],
        prior_mean: f64,
        kernel: Kernel,
    ) -> Result<GpModel> {
        GpModel::condition(inputs, targets, prior_mean, kernel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefitKind {
    /// Hyperparameters re-optimized.
    Full,
    /// Factorization refreshed with the previous hyperparameters.
    Resolved,
    /// Fitting failed; the previous model is kept.
    Failed,
}

/// Produces the model for the current dataset following `schedule`.
/// The previous model is never modified; on failure it is returned as is.
pub fn maybe_refit(
    dataset: &Dataset,
    current: Option<&Arc<GpModel>>,
    schedule: &RefitSchedule,
    mean: PriorMean,
    fitter: &dyn GpFitter,
    seed: u64,
) -> (Option<Arc<GpModel>>, RefitKind) {
    if dataset.is_empty() {
        return (current.cloned(), RefitKind::Failed);
    }
    let prior_mean = match mean {
        PriorMean::Zero => 0.0,
        PriorMean::SampleMean => dataset.mean_target(),
    };
    let k = dataset.len();
    let (result, kind) = match current {
        Some(model) if !schedule.is_full_refit(k) => (
            fitter.condition(
                &dataset.points,
                &dataset.targets,
                prior_mean,
                *model.kernel(),
            ),
            RefitKind::Resolved,
        ),
        _ => (
            fitter.fit(&dataset.points, &dataset.targets, prior_mean, seed),
            RefitKind::Full,
        ),
    };
    match result {
        Ok(model) => (Some(Arc::new(model)), kind),
        Err(e) => {
            log::warn!("GP refit with {k} points failed, keeping previous model: {e}");
            (current.cloned(), RefitKind::Failed)
        }
    }
}
