//! Compressor physics: polytropic head, shaft power, ground-truth efficiency
//! maps, surge/choke envelopes and the station system resistance curve.
//!
//! Everything here is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Universal gas constant in J/(mol·K).
pub const GAS_CONSTANT: f64 = 8.314;

/// Inlet gas state shared by every compressor in the station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GasConditions {
    /// Inlet compressibility factor.
    pub z_in: f64,
    /// Inlet temperature in K.
    pub t_in: f64,
    /// Molecular weight in kg/mol.
    pub molecular_weight: f64,
    /// Polytropic exponent, must exceed 1.
    pub polytropic_exponent: f64,
}

impl Default for GasConditions {
    fn default() -> Self {
        Self {
            z_in: 0.95,
            t_in: 293.15,
            molecular_weight: 0.0185,
            polytropic_exponent: 1.27,
        }
    }
}

impl GasConditions {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("z_in", self.z_in > 0.0),
            ("t_in", self.t_in > 0.0),
            ("molecular_weight", self.molecular_weight > 0.0),
            ("polytropic_exponent", self.polytropic_exponent > 1.0),
        ];
        for (key, ok) in checks {
            if !ok {
                return Err(Error::config(
                    format!("station.gas.{key}"),
                    "out of physical range",
                ));
            }
        }
        Ok(())
    }

    /// Same gas with a different inlet temperature.
    pub fn with_inlet_temperature(self, t_in: f64) -> Self {
        Self { t_in, ..self }
    }
}

/// Specific polytropic head in J/kg for a pressure ratio `pr`.
///
/// `(Z R T / MW) * n/(n-1) * (pr^((n-1)/n) - 1)`
pub fn polytropic_head(pr: f64, gas: &GasConditions) -> Result<f64> {
    if !(pr >= 1.0) || !pr.is_finite() {
        return Err(Error::Domain(format!("pressure ratio {pr} below 1")));
    }
    gas.validate()?;
    let n = gas.polytropic_exponent;
    let ratio = (n - 1.0) / n;
    let specific_rt = gas.z_in * GAS_CONSTANT * gas.t_in / gas.molecular_weight;
    Ok(specific_rt / ratio * (pr.powf(ratio) - 1.0))
}

/// Shaft power in W for mass flow `mdot` (kg/s) at efficiency `eff`.
pub fn power(mdot: f64, eff: f64, head: f64) -> Result<f64> {
    if !(eff > 0.0) {
        return Err(Error::Domain(format!("efficiency {eff} must be positive")));
    }
    if mdot < 0.0 || head < 0.0 {
        return Err(Error::Domain(format!(
            "negative flow ({mdot}) or head ({head})"
        )));
    }
    Ok(head * mdot / eff)
}

/// Efficiency inferred from measured flow, pressure ratio, power and inlet
/// temperature by inverting the power and head relations.
pub fn back_calculate_efficiency(
    meas_mdot: f64,
    meas_pr: f64,
    meas_power: f64,
    meas_t_in: f64,
    gas: &GasConditions,
) -> Result<f64> {
    if !(meas_power > 0.0) {
        return Err(Error::Measurement(format!(
            "power {meas_power} not positive"
        )));
    }
    if !(meas_mdot > 0.0) {
        return Err(Error::Measurement(format!("flow {meas_mdot} not positive")));
    }
    if !(meas_pr > 1.0) {
        return Err(Error::Measurement(format!(
            "pressure ratio {meas_pr} not above 1"
        )));
    }
    if !(meas_t_in > 0.0) {
        return Err(Error::Measurement(format!(
            "temperature {meas_t_in} not positive"
        )));
    }
    let head = polytropic_head(meas_pr, &gas.with_inlet_temperature(meas_t_in))?;
    Ok(head * meas_mdot / meas_power)
}

/// Hidden plant efficiency surface of one compressor: a tilted elliptical
/// paraboloid scaled per machine and clamped below at `floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrueMap {
    pub peak_eff: f64,
    pub scale: f64,
    /// `(r0, r1)` of the peak-efficiency line `r0 + r1 * (pr - 1)` in kg/s.
    pub ridge_flow: [f64; 2],
    /// Flow curvature `A` in (kg/s)^-2.
    pub curvature_flow: f64,
    /// Pressure-ratio curvature `B`.
    pub curvature_pr: f64,
    pub pr_center: f64,
    pub floor: f64,
}

impl Default for TrueMap {
    fn default() -> Self {
        Self {
            peak_eff: 0.86,
            scale: 1.0,
            ridge_flow: [4.3, 34.3],
            curvature_flow: 1.0e-3,
            curvature_pr: 1.0,
            pr_center: 1.55,
            floor: 0.35,
        }
    }
}

const EFFICIENCY_CEILING: f64 = 1.0 - f64::EPSILON;

impl TrueMap {
    pub fn with_scale(self, scale: f64) -> Self {
        Self { scale, ..self }
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        let checks = [
            ("peak_eff", self.peak_eff > 0.0 && self.peak_eff <= 1.0),
            ("scale", self.scale > 0.0),
            ("curvature_flow", self.curvature_flow > 0.0),
            ("curvature_pr", self.curvature_pr > 0.0),
            ("floor", self.floor > 0.0 && self.floor < 1.0),
        ];
        for (field, ok) in checks {
            if !ok {
                return Err(Error::config(format!("{key}.{field}"), "out of range"));
            }
        }
        Ok(())
    }

    pub fn ridge_flow_at(&self, pr: f64) -> f64 {
        self.ridge_flow[0] + self.ridge_flow[1] * (pr - 1.0)
    }

    fn unclamped(&self, mdot: f64, pr: f64) -> f64 {
        let dm = mdot - self.ridge_flow_at(pr);
        let dp = pr - self.pr_center;
        self.scale * (self.peak_eff - self.curvature_flow * dm * dm - self.curvature_pr * dp * dp)
    }

    pub fn efficiency(&self, mdot: f64, pr: f64) -> f64 {
        self.unclamped(mdot, pr)
            .clamp(self.floor, EFFICIENCY_CEILING)
    }

    /// Gradient with respect to `(mdot, pr)`; zero wherever the clamp is active.
    pub fn efficiency_grad(&self, mdot: f64, pr: f64) -> [f64; 2] {
        let raw = self.unclamped(mdot, pr);
        if raw <= self.floor || raw >= EFFICIENCY_CEILING {
            return [0.0, 0.0];
        }
        let dm = mdot - self.ridge_flow_at(pr);
        let dp = pr - self.pr_center;
        let d_mdot = -2.0 * self.scale * self.curvature_flow * dm;
        let d_pr = self.scale
            * (2.0 * self.curvature_flow * dm * self.ridge_flow[1] - 2.0 * self.curvature_pr * dp);
        [d_mdot, d_pr]
    }
}

/// Evaluates `map` at a point; free-function form of [`TrueMap::efficiency`].
pub fn true_efficiency(map: &TrueMap, mdot: f64, pr: f64) -> f64 {
    map.efficiency(mdot, pr)
}

/// Affine surge and choke flow limits over a pressure-ratio window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Envelope {
    /// `(c0, c1)`: minimum flow `c0 + c1 * (pr - 1)`.
    pub surge_line: [f64; 2],
    /// `(d0, d1)`: maximum flow `d0 + d1 * (pr - 1)`.
    pub choke_line: [f64; 2],
    pub pr_range: [f64; 2],
}

impl Default for Envelope {
    fn default() -> Self {
        Self {
            surge_line: [8.0, 15.0],
            choke_line: [40.0, -5.0],
            pr_range: [1.0, 2.0],
        }
    }
}

impl Envelope {
    pub fn validate(&self, key: &str) -> Result<()> {
        let [lo, hi] = self.pr_range;
        if !(lo >= 1.0) || !(hi > lo) {
            return Err(Error::config(
                format!("{key}.pr_range"),
                "needs 1 <= min < max",
            ));
        }
        // Both limits are affine, so checking the window ends is sufficient.
        for pr in [lo, hi] {
            let (surge, choke) = self.lines_at(pr);
            if !(surge < choke) || surge < 0.0 {
                return Err(Error::config(
                    format!("{key}.surge_line"),
                    format!("surge flow {surge} must be non-negative and below choke flow {choke} at pr {pr}"),
                ));
            }
        }
        Ok(())
    }

    fn lines_at(&self, pr: f64) -> (f64, f64) {
        let x = pr - 1.0;
        (
            self.surge_line[0] + self.surge_line[1] * x,
            self.choke_line[0] + self.choke_line[1] * x,
        )
    }

    pub fn contains_pr(&self, pr: f64) -> bool {
        pr >= self.pr_range[0] && pr <= self.pr_range[1]
    }

    /// `(surge flow, choke flow)` at `pr`.
    pub fn bounds(&self, pr: f64) -> Result<(f64, f64)> {
        if !self.contains_pr(pr) {
            return Err(Error::Domain(format!(
                "pressure ratio {pr} outside envelope window [{}, {}]",
                self.pr_range[0], self.pr_range[1]
            )));
        }
        Ok(self.lines_at(pr))
    }
}

pub fn envelope_bounds(env: &Envelope, pr: f64) -> Result<(f64, f64)> {
    env.bounds(pr)
}

/// Quadratic pressure-ratio-vs-flow relation imposed by the downstream network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemCurve {
    pub pr_base: f64,
    pub k_sys: f64,
}

impl Default for SystemCurve {
    fn default() -> Self {
        Self {
            pr_base: 1.203,
            k_sys: 6.75e-5,
        }
    }
}

impl SystemCurve {
    pub fn validate(&self) -> Result<()> {
        if !(self.pr_base >= 1.0) {
            return Err(Error::config(
                "station.system_curve.pr_base",
                "must be >= 1",
            ));
        }
        if !(self.k_sys > 0.0) {
            return Err(Error::config(
                "station.system_curve.k_sys",
                "must be positive",
            ));
        }
        Ok(())
    }

    pub fn pressure_ratio(&self, station_flow: f64) -> Result<f64> {
        if !(station_flow >= 0.0) {
            return Err(Error::Domain(format!(
                "station flow {station_flow} is negative"
            )));
        }
        Ok(self.pr_base + self.k_sys * station_flow * station_flow)
    }

    /// Station flow producing `pr`; inverse of [`SystemCurve::pressure_ratio`].
    pub fn flow_at(&self, pr: f64) -> Result<f64> {
        if !(pr >= self.pr_base) {
            return Err(Error::Domain(format!(
                "pressure ratio {pr} below system base {}",
                self.pr_base
            )));
        }
        Ok(((pr - self.pr_base) / self.k_sys).sqrt())
    }
}

pub fn system_pressure_ratio(curve: &SystemCurve, station_flow: f64) -> Result<f64> {
    curve.pressure_ratio(station_flow)
}
