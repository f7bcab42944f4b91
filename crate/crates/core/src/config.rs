//! Run configuration: a strict JSON document with a documented default for
//! every field. Unknown keys are rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adaptation::RefitSchedule;
use crate::error::{Error, Result};
use crate::gp::FitOptions;
use crate::optimizer::SolverOptions;
use crate::plant::NoiseModel;
use crate::thermo::{Envelope, GasConditions, SystemCurve, TrueMap};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompressorConfig {
    pub map: TrueMap,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationConfig {
    pub gas: GasConditions,
    pub system_curve: SystemCurve,
    /// Closed-loop flow time constant in s.
    pub tau_loop: f64,
    pub compressors: Vec<CompressorConfig>,
}

impl Default for StationConfig {
    fn default() -> Self {
        let compressors = [1.00, 0.96, 0.92]
            .iter()
            .map(|s| CompressorConfig {
                map: TrueMap::default().with_scale(*s),
                envelope: Envelope::default(),
            })
            .collect();
        Self {
            gas: GasConditions::default(),
            system_curve: SystemCurve::default(),
            tau_loop: 30.0,
            compressors,
        }
    }
}

/// Daily ramp-hold-ramp target shape, repeated for `days`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    /// Station flow at 100 % load, kg/s.
    pub capacity: f64,
    pub base_fraction: f64,
    pub peak_fraction: f64,
    pub days: usize,
    pub steps_per_day: usize,
    /// First step of the morning ramp.
    pub ramp_start: usize,
    /// Steps taken to go from base to peak (and back).
    pub ramp_steps: usize,
    /// Steps held at peak before ramping down.
    pub peak_steps: usize,
    /// Plant integration step in s.
    pub dt: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            capacity: 90.0,
            base_fraction: 0.6,
            peak_fraction: 1.0,
            days: 3,
            steps_per_day: 24,
            ramp_start: 6,
            ramp_steps: 6,
            peak_steps: 6,
            dt: 60.0,
        }
    }
}

impl ProfileConfig {
    pub fn interval(&self) -> f64 {
        86_400.0 / self.steps_per_day as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptationConfig {
    pub delta_admit: f64,
    pub max_points: usize,
    /// Flow and pressure-ratio scales for the admission distance; derived
    /// from the station envelopes when absent.
    pub distance_scales: Option<[f64; 2]>,
    pub schedule: RefitSchedule,
    pub gp: FitOptions,
    /// Delay after each interval start before the first sample, s.
    pub first_sample_delay: f64,
    /// Spacing of further samples within an interval, s.
    pub sample_period: f64,
    /// Number of true-map samples generated for prior fitting.
    pub prior_samples: usize,
    pub prior_shift: f64,
    /// Direct-GP efficiency used before any data arrives.
    pub direct_gp_fallback: f64,
    /// Keeps the fitted GP noise variance at or above the variance the
    /// sensor noise model implies for the efficiency estimates.
    pub sensor_noise_floor: bool,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            delta_admit: 0.05,
            max_points: 150,
            distance_scales: None,
            schedule: RefitSchedule::default(),
            gp: FitOptions::default(),
            first_sample_delay: 300.0,
            sample_period: 1800.0,
            prior_samples: 20,
            prior_shift: 0.05,
            direct_gp_fallback: 0.7,
            sensor_noise_floor: true,
        }
    }
}

/// The eight simulated scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseId {
    C1,
    C2_1,
    C2_2,
    C2_3,
    C3_1,
    C3_2,
    C3_3,
    C4,
}

impl CaseId {
    pub const ALL: [CaseId; 8] = [
        CaseId::C1,
        CaseId::C2_1,
        CaseId::C2_2,
        CaseId::C2_3,
        CaseId::C3_1,
        CaseId::C3_2,
        CaseId::C3_3,
        CaseId::C4,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CaseId::C1 => "C1",
            CaseId::C2_1 => "C2_1",
            CaseId::C2_2 => "C2_2",
            CaseId::C2_3 => "C2_3",
            CaseId::C3_1 => "C3_1",
            CaseId::C3_2 => "C3_2",
            CaseId::C3_3 => "C3_3",
            CaseId::C4 => "C4",
        }
    }

    /// Number of true-map points behind the polynomial prior, if any.
    pub fn prior_points(&self) -> Option<usize> {
        match self {
            CaseId::C2_1 | CaseId::C3_1 => Some(2),
            CaseId::C2_2 | CaseId::C3_2 => Some(5),
            CaseId::C2_3 | CaseId::C3_3 => Some(20),
            CaseId::C1 | CaseId::C4 => None,
        }
    }

    pub fn uses_gp(&self) -> bool {
        matches!(
            self,
            CaseId::C3_1 | CaseId::C3_2 | CaseId::C3_3 | CaseId::C4
        )
    }

    pub fn gp_is_residual(&self) -> bool {
        matches!(self, CaseId::C3_1 | CaseId::C3_2 | CaseId::C3_3)
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseId::ALL
            .iter()
            .copied()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config("cases.enabled", format!("unknown case `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CasesConfig {
    pub enabled: Vec<CaseId>,
    /// Master seed for priors, GP restarts and optimizer starts.
    pub seed: u64,
}

impl Default for CasesConfig {
    fn default() -> Self {
        Self {
            enabled: CaseId::ALL.to_vec(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    /// Map snapshots are taken every this many intervals (and at the end).
    pub snapshot_every: usize,
    pub map_grid: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "loadshare-out".into(),
            snapshot_every: 24,
            map_grid: 30,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub station: StationConfig,
    pub profile: ProfileConfig,
    pub noise: NoiseModel,
    pub adaptation: AdaptationConfig,
    pub optimizer: SolverOptions,
    pub cases: CasesConfig,
    pub output: OutputConfig,
}

fn require(ok: bool, key: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, message))
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path == "." { "<root>".into() } else { path },
                e.into_inner().to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let st = &self.station;
        st.gas.validate()?;
        st.system_curve.validate()?;
        require(st.tau_loop > 0.0, "station.tau_loop", "must be positive")?;
        require(
            !st.compressors.is_empty(),
            "station.compressors",
            "needs at least one compressor",
        )?;
        for (i, c) in st.compressors.iter().enumerate() {
            c.map.validate(&format!("station.compressors[{i}].map"))?;
            c.envelope
                .validate(&format!("station.compressors[{i}].envelope"))?;
        }

        let p = &self.profile;
        require(p.capacity > 0.0, "profile.capacity", "must be positive")?;
        require(
            p.base_fraction > 0.0,
            "profile.base_fraction",
            "must be positive",
        )?;
        require(
            p.peak_fraction >= p.base_fraction,
            "profile.peak_fraction",
            "must be >= base_fraction",
        )?;
        require(p.days >= 1, "profile.days", "must be at least 1")?;
        require(
            p.steps_per_day >= 1,
            "profile.steps_per_day",
            "must be at least 1",
        )?;
        require(
            p.ramp_start + 2 * p.ramp_steps + p.peak_steps <= p.steps_per_day,
            "profile.ramp_start",
            "ramps and peak hold do not fit in one day",
        )?;
        require(
            p.dt > 0.0 && p.dt <= p.interval(),
            "profile.dt",
            "must be in (0, interval]",
        )?;

        self.noise.validate()?;

        let a = &self.adaptation;
        require(
            a.delta_admit > 0.0,
            "adaptation.delta_admit",
            "must be positive",
        )?;
        require(
            a.max_points >= 1,
            "adaptation.max_points",
            "must be at least 1",
        )?;
        if let Some(s) = a.distance_scales {
            require(
                s[0] > 0.0 && s[1] > 0.0,
                "adaptation.distance_scales",
                "must be positive",
            )?;
        }
        require(
            a.schedule.refit_every >= 1,
            "adaptation.schedule.refit_every",
            "must be at least 1",
        )?;
        require(
            a.gp.restarts >= 1,
            "adaptation.gp.restarts",
            "must be at least 1",
        )?;
        require(
            a.gp.grad_tol > 0.0,
            "adaptation.gp.grad_tol",
            "must be positive",
        )?;
        for (key, b) in [
            ("log_signal_var", a.gp.bounds.log_signal_var),
            ("log_lengthscale", a.gp.bounds.log_lengthscale),
            ("log_noise_var", a.gp.bounds.log_noise_var),
        ] {
            require(
                b[0] <= b[1],
                &format!("adaptation.gp.bounds.{key}"),
                "lower bound above upper",
            )?;
        }
        if let Some(n) = a.gp.fixed_noise_var {
            require(n > 0.0, "adaptation.gp.fixed_noise_var", "must be positive")?;
        }
        require(
            a.first_sample_delay >= 0.0,
            "adaptation.first_sample_delay",
            "must be >= 0",
        )?;
        require(
            a.sample_period > 0.0,
            "adaptation.sample_period",
            "must be positive",
        )?;
        require(
            a.prior_samples >= 20,
            "adaptation.prior_samples",
            "must cover the 20-point prior",
        )?;
        require(
            a.prior_shift >= 0.0,
            "adaptation.prior_shift",
            "must be >= 0",
        )?;
        require(
            a.direct_gp_fallback > 0.0 && a.direct_gp_fallback <= 1.0,
            "adaptation.direct_gp_fallback",
            "must be in (0, 1]",
        )?;

        let o = &self.optimizer;
        require(o.starts >= 1, "optimizer.starts", "must be at least 1")?;
        require(o.max_iter >= 1, "optimizer.max_iter", "must be at least 1")?;
        require(o.kkt_tol > 0.0, "optimizer.kkt_tol", "must be positive")?;

        require(
            !self.cases.enabled.is_empty(),
            "cases.enabled",
            "no cases selected",
        )?;
        require(
            self.output.map_grid >= 2,
            "output.map_grid",
            "must be at least 2",
        )?;
        require(
            self.output.snapshot_every >= 1,
            "output.snapshot_every",
            "must be at least 1",
        )?;
        Ok(())
    }

    /// Pretty JSON of the effective configuration, newline-terminated.
    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_json_str(&text)
}
