//! Simulated compressor station: closed-loop flow tracking, quasi-static
//! header pressure, true-map power draw and noisy measurements.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermo::{polytropic_head, GasConditions, SystemCurve, TrueMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Actual compressor flows in kg/s.
    pub flows: Vec<f64>,
    /// Common pressure ratio, always on the system curve at `sum(flows)`.
    pub pr: f64,
    /// Simulation time in s.
    pub time: f64,
}

impl PlantState {
    pub fn total_flow(&self) -> f64 {
        self.flows.iter().sum()
    }
}

/// Flow loops abstracted as identical first-order lags with time constant
/// `tau_loop`, on a shared system curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plant {
    pub curve: SystemCurve,
    pub tau_loop: f64,
}

impl Plant {
    pub fn new(curve: SystemCurve, tau_loop: f64) -> Result<Self> {
        curve.validate()?;
        if !(tau_loop > 0.0) {
            return Err(Error::config("station.tau_loop", "must be positive"));
        }
        Ok(Self { curve, tau_loop })
    }

    fn header_pr(&self, flows: &[f64]) -> f64 {
        let q: f64 = flows.iter().sum::<f64>().max(0.0);
        self.curve.pr_base + self.curve.k_sys * q * q
    }

    pub fn state_at(&self, flows: Vec<f64>, time: f64) -> PlantState {
        let pr = self.header_pr(&flows);
        PlantState { flows, pr, time }
    }

    /// Advances every flow loop by `dt` toward its setpoint.
    pub fn step(&self, state: &PlantState, setpoints: &[f64], dt: f64) -> PlantState {
        let gain = 1.0 - (-dt / self.tau_loop).exp();
        let flows: Vec<f64> = state
            .flows
            .iter()
            .zip(setpoints)
            .map(|(m, sp)| m + (sp - m) * gain)
            .collect();
        self.state_at(flows, state.time + dt)
    }

    /// Steady state reached under constant `setpoints`; time is unchanged.
    pub fn settle(&self, state: &PlantState, setpoints: &[f64]) -> PlantState {
        self.state_at(setpoints.to_vec(), state.time)
    }

    /// True shaft power per compressor in W.
    pub fn true_powers(
        &self,
        state: &PlantState,
        maps: &[TrueMap],
        gas: &GasConditions,
    ) -> Result<Vec<f64>> {
        let head = polytropic_head(state.pr, gas)?;
        Ok(state
            .flows
            .iter()
            .zip(maps)
            .map(|(m, map)| head * m / map.efficiency(*m, state.pr))
            .collect())
    }

    pub fn true_station_power(
        &self,
        state: &PlantState,
        maps: &[TrueMap],
        gas: &GasConditions,
    ) -> Result<f64> {
        Ok(self.true_powers(state, maps, gas)?.iter().sum())
    }
}

/// Sensor noise: multiplicative Gaussian on flow, pressure ratio and power,
/// additive Gaussian on inlet temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub rel_sigma_flow: f64,
    pub rel_sigma_pr: f64,
    pub rel_sigma_power: f64,
    pub abs_sigma_t: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            rel_sigma_flow: 0.005,
            rel_sigma_pr: 0.003,
            rel_sigma_power: 0.01,
            abs_sigma_t: 0.5,
            seed: 2022,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            rel_sigma_flow: 0.0,
            rel_sigma_pr: 0.0,
            rel_sigma_power: 0.0,
            abs_sigma_t: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("rel_sigma_flow", self.rel_sigma_flow),
            ("rel_sigma_pr", self.rel_sigma_pr),
            ("rel_sigma_power", self.rel_sigma_power),
            ("abs_sigma_t", self.abs_sigma_t),
        ];
        for (key, v) in checks {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(
                    format!("noise.{key}"),
                    "must be finite and >= 0",
                ));
            }
        }
        Ok(())
    }

    /// First-order variance of the back-calculated efficiency at a
    /// noise-free operating point with efficiency `eta`.
    pub fn efficiency_variance(&self, pr: f64, eta: f64, gas: &GasConditions) -> Result<f64> {
        if !(pr > 1.0) {
            return Err(Error::Domain(format!("pressure ratio {pr} must exceed 1")));
        }
        let x = (gas.polytropic_exponent - 1.0) / gas.polytropic_exponent;
        let px = pr.powf(x);
        // d ln(head) / d ln(pr)
        let s_pr = x * px / (px - 1.0);
        let rel = self.rel_sigma_flow.powi(2)
            + self.rel_sigma_power.powi(2)
            + (s_pr * self.rel_sigma_pr).powi(2)
            + (self.abs_sigma_t / gas.t_in).powi(2);
        Ok(eta * eta * rel)
    }

    /// Independent stream for one compressor at one instant, so that every
    /// case sees the same noise at the same (compressor, time).
    fn stream(&self, compressor: usize, time: f64) -> ChaCha8Rng {
        let millis = (time * 1000.0).round() as i64 as u64;
        let mut z = self.seed ^ 0x9E37_79B9_7F4A_7C15;
        for word in [compressor as u64, millis] {
            z = splitmix64(z ^ word);
        }
        ChaCha8Rng::seed_from_u64(z)
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub compressor_id: usize,
    pub time: f64,
    pub mdot: f64,
    pub pr: f64,
    pub power: f64,
    pub t_in: f64,
}

/// Reads every compressor's sensors at `state`.
pub fn measure(
    state: &PlantState,
    noise: &NoiseModel,
    maps: &[TrueMap],
    gas: &GasConditions,
) -> Result<Vec<Measurement>> {
    let head = polytropic_head(state.pr, gas)?;
    let mut out = Vec::with_capacity(state.flows.len());
    for (i, (m, map)) in state.flows.iter().zip(maps).enumerate() {
        let power = head * m / map.efficiency(*m, state.pr);
        let mut rng = noise.stream(i, state.time);
        let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
        let (e_flow, e_pr, e_power, e_t) = (z(), z(), z(), z());
        out.push(Measurement {
            compressor_id: i,
            time: state.time,
            mdot: m * (1.0 + noise.rel_sigma_flow * e_flow),
            pr: state.pr * (1.0 + noise.rel_sigma_pr * e_pr),
            power: power * (1.0 + noise.rel_sigma_power * e_power),
            t_in: gas.t_in + noise.abs_sigma_t * e_t,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plant() -> Plant {
        Plant::new(SystemCurve::default(), 30.0).unwrap()
    }

    #[test]
    fn setpoint_equal_to_state_is_fixed_point() {
        let p = plant();
        let s = p.state_at(vec![20.0, 22.0, 18.0], 100.0);
        let next = p.step(&s, &[20.0, 22.0, 18.0], 60.0);
        assert_eq!(next.flows, s.flows);
        assert_eq!(next.pr, s.pr);
        assert_eq!(next.time, 160.0);
    }

    #[test]
    fn five_time_constants_remove_most_error() {
        let p = plant();
        let mut s = p.state_at(vec![10.0], 0.0);
        for _ in 0..150 {
            s = p.step(&s, &[20.0], 1.0);
        }
        assert!((s.flows[0] - 20.0).abs() < 0.01 * 10.0);
    }

    #[test]
    fn one_time_constant_step() {
        let p = plant();
        let s = p.state_at(vec![5.0], 0.0);
        let next = p.step(&s, &[6.0], 30.0);
        assert!((next.flows[0] - 5.0 - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn settle_is_fixed_point_of_step() {
        let p = plant();
        let sp = [21.0, 25.0, 17.5];
        let s = p.settle(&p.state_at(vec![10.0, 10.0, 10.0], 0.0), &sp);
        assert_eq!(p.step(&s, &sp, 60.0).flows, s.flows);
        let target: f64 = sp.iter().sum();
        assert_eq!(s.pr, SystemCurve::default().pressure_ratio(target).unwrap());
    }

    #[test]
    fn efficiency_variance_of_noiseless_model_is_zero() {
        let gas = GasConditions::default();
        assert_eq!(
            NoiseModel::noiseless()
                .efficiency_variance(1.3, 0.8, &gas)
                .unwrap(),
            0.0
        );
        let power_only = NoiseModel {
            rel_sigma_power: 0.01,
            ..NoiseModel::noiseless()
        };
        let v = power_only.efficiency_variance(1.3, 0.8, &gas).unwrap();
        assert!((v.sqrt() - 0.008).abs() < 1e-15);
        assert!(NoiseModel::default()
            .efficiency_variance(1.0, 0.8, &gas)
            .is_err());
    }

    #[test]
    fn invalid_tau_is_rejected() {
        assert!(Plant::new(SystemCurve::default(), 0.0).is_err());
    }
}
