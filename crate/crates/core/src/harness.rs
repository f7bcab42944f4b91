//! Scenario engine: builds the multi-day station target profile and runs
//! the optimize, dispatch, settle, measure, adapt loop for each case.

use std::sync::Arc;

use serde::Serialize;

use crate::adaptation::{
    maybe_refit, process_measurement, sensor_noise_floor, AdmissionPolicy, Dataset, LmlFitter,
    PriorMean, RefitKind,
};
use crate::config::{CaseId, ProfileConfig, RunConfig, StationConfig};
use crate::error::{Error, Result};
use crate::gp::{GpModel, Point};
use crate::optimizer::{build_problem, solve, LsoSolution, SolveStatus};
use crate::plant::{measure, splitmix64, Plant, PlantState};
use crate::surrogate::{fit_poly_prior, sample_along_curve, MapModel, PolyPrior};
use crate::thermo::{polytropic_head, Envelope, GasConditions, TrueMap};

/// Derives an independent seed from a master seed and a path of labels.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, p| splitmix64(acc ^ p))
}

/// Physical station: gas, plant dynamics, hidden maps and envelopes.
#[derive(Debug, Clone)]
pub struct Station {
    pub gas: GasConditions,
    pub plant: Plant,
    pub maps: Vec<TrueMap>,
    pub envelopes: Vec<Envelope>,
}

impl Station {
    pub fn from_config(cfg: &StationConfig) -> Result<Self> {
        cfg.gas.validate()?;
        Ok(Self {
            gas: cfg.gas,
            plant: Plant::new(cfg.system_curve, cfg.tau_loop)?,
            maps: cfg.compressors.iter().map(|c| c.map).collect(),
            envelopes: cfg.compressors.iter().map(|c| c.envelope).collect(),
        })
    }

    pub fn n_compressors(&self) -> usize {
        self.maps.len()
    }

    /// Half the flow and pressure-ratio ranges the station can occupy while
    /// its header pressure ratio stays within `pr_window`. No dataset
    /// confined to that region has a larger standard deviation.
    pub fn operating_half_ranges(&self, pr_window: (f64, f64)) -> Result<[f64; 2]> {
        let mut m_lo = f64::INFINITY;
        let mut m_hi = f64::NEG_INFINITY;
        for env in &self.envelopes {
            for pr in [pr_window.0, pr_window.1] {
                let (s, c) = env.bounds(pr)?;
                m_lo = m_lo.min(s);
                m_hi = m_hi.max(c);
            }
        }
        Ok([
            0.5 * (m_hi - m_lo),
            0.5 * (pr_window.1 - pr_window.0).max(f64::EPSILON),
        ])
    }

    /// Station flow range `(sum of surge flows, sum of choke flows)` at the
    /// pressure ratio the system curve assigns to `target`, or `None` when
    /// that ratio leaves some envelope's window.
    pub fn capacity_at(&self, target: f64) -> Option<(f64, f64)> {
        let pr = self.plant.curve.pressure_ratio(target).ok()?;
        let mut lo = 0.0;
        let mut hi = 0.0;
        for env in &self.envelopes {
            let (s, c) = env.bounds(pr).ok()?;
            lo += s;
            hi += c;
        }
        Some((lo, hi))
    }

    pub fn is_feasible_target(&self, target: f64) -> bool {
        self.capacity_at(target)
            .is_some_and(|(lo, hi)| target >= lo && target <= hi)
    }
}

/// Piecewise-constant station flow targets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetProfile {
    /// `(start time s, target kg/s)`, strictly increasing in time.
    pub schedule: Vec<(f64, f64)>,
    pub horizon: f64,
}

impl TargetProfile {
    pub fn interval_end(&self, index: usize) -> f64 {
        self.schedule
            .get(index + 1)
            .map_or(self.horizon, |(t, _)| *t)
    }
}

/// Repeats a base / ramp-up / peak / ramp-down / base day `days` times and
/// checks every target against the station's flow envelope.
pub fn build_profile(cfg: &ProfileConfig, station: &Station) -> Result<TargetProfile> {
    let base = cfg.capacity * cfg.base_fraction;
    let peak = cfg.capacity * cfg.peak_fraction;
    let span = peak - base;
    let ramp = cfg.ramp_steps;
    let up_end = cfg.ramp_start + ramp;
    let peak_end = up_end + cfg.peak_steps;
    let down_end = peak_end + ramp;
    let daily: Vec<f64> = (0..cfg.steps_per_day)
        .map(|j| {
            if j < cfg.ramp_start || j >= down_end {
                base
            } else if j < up_end {
                base + span * (j - cfg.ramp_start + 1) as f64 / ramp as f64
            } else if j < peak_end {
                peak
            } else {
                peak - span * (j - peak_end + 1) as f64 / ramp as f64
            }
        })
        .collect();

    let dt = cfg.interval();
    let mut schedule = Vec::with_capacity(cfg.days * cfg.steps_per_day);
    for d in 0..cfg.days {
        for (j, t) in daily.iter().enumerate() {
            schedule.push(((d * cfg.steps_per_day + j) as f64 * dt, *t));
        }
    }

    let bad: Vec<String> = schedule
        .iter()
        .enumerate()
        .filter(|(_, (_, t))| !station.is_feasible_target(*t))
        .map(|(i, (_, t))| format!("#{i} ({t} kg/s)"))
        .collect();
    if !bad.is_empty() {
        return Err(Error::config(
            "profile",
            format!("targets outside the station envelope: {}", bad.join(", ")),
        ));
    }
    Ok(TargetProfile {
        schedule,
        horizon: (cfg.days * cfg.steps_per_day) as f64 * dt,
    })
}

/// What a case runs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CaseSpec {
    pub id: CaseId,
    pub prior_points: Option<usize>,
    pub uses_gp: bool,
    pub gp_is_residual: bool,
    pub seed: u64,
}

impl CaseSpec {
    pub fn new(id: CaseId, seed: u64) -> Self {
        Self {
            id,
            prior_points: id.prior_points(),
            uses_gp: id.uses_gp(),
            gp_is_residual: id.gp_is_residual(),
            seed,
        }
    }
}

/// One plant integration step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub time: f64,
    pub target: f64,
    pub flows: Vec<f64>,
    pub pr: f64,
    pub eta_true: Vec<f64>,
    pub eta_model: Vec<f64>,
    pub plant_power: f64,
    pub predicted_power: f64,
    /// Cumulative energy in J since the start of the run.
    pub energy: f64,
}

/// One target interval evaluated at the settled operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRecord {
    pub index: usize,
    pub start: f64,
    pub target: f64,
    pub setpoints: Vec<f64>,
    pub pr: f64,
    pub eta_true: Vec<f64>,
    pub eta_model: Vec<f64>,
    pub plant_power: f64,
    pub predicted_power: f64,
    pub reoptimized: bool,
    pub dataset_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveRecord {
    pub interval: usize,
    pub time: f64,
    pub target: f64,
    #[serde(flatten)]
    pub solution: LsoSolution,
}

/// Per-compressor models in force at the start of `interval`
/// (`interval == n_intervals` marks the end of the run).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapSnapshot {
    pub interval: usize,
    pub models: Vec<MapModel>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RefitCounts {
    pub full: usize,
    pub resolved: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseRun {
    pub spec: CaseSpec,
    pub steps: Vec<StepRecord>,
    pub intervals: Vec<IntervalRecord>,
    pub solves: Vec<SolveRecord>,
    pub datasets: Vec<Dataset>,
    pub priors: Vec<Option<PolyPrior>>,
    pub final_models: Vec<MapModel>,
    pub snapshots: Vec<MapSnapshot>,
    pub refits: Vec<RefitCounts>,
    pub total_energy: f64,
}

/// Polynomial priors, one per compressor, fitted on the first `n_points`
/// of a seeded sample set that does not depend on `n_points`.
pub fn build_priors(cfg: &RunConfig, station: &Station, n_points: usize) -> Result<Vec<PolyPrior>> {
    let p = &cfg.profile;
    let flows = (p.capacity * p.base_fraction, p.capacity * p.peak_fraction);
    let seed = cfg.cases.seed;
    (0..station.n_compressors())
        .map(|i| {
            let samples = sample_along_curve(
                &station.maps[i],
                &station.envelopes[i],
                &station.plant.curve,
                flows,
                cfg.adaptation.prior_samples,
                derive_seed(seed, &[1, i as u64]),
            )?;
            fit_poly_prior(
                &samples,
                n_points,
                cfg.adaptation.prior_shift,
                derive_seed(seed, &[2, n_points as u64, i as u64]),
            )
        })
        .collect()
}

impl TargetProfile {
    /// Lowest and highest header pressure ratio the profile demands.
    pub fn pr_window(&self, station: &Station) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (_, t) in &self.schedule {
            let pr = station.plant.curve.pressure_ratio(*t)?;
            lo = lo.min(pr);
            hi = hi.max(pr);
        }
        Ok((lo, hi))
    }
}

/// Admission rule for a run; without configured scales it divides by the
/// operating half-ranges of the profile.
pub fn admission_policy(
    cfg: &RunConfig,
    station: &Station,
    profile: &TargetProfile,
) -> Result<AdmissionPolicy> {
    let scales = match cfg.adaptation.distance_scales {
        Some(s) => s,
        None => station.operating_half_ranges(profile.pr_window(station)?)?,
    };
    Ok(AdmissionPolicy {
        delta_admit: cfg.adaptation.delta_admit,
        max_points: cfg.adaptation.max_points,
        scales,
    })
}

struct Pipeline {
    dataset: Dataset,
    gp: Option<Arc<GpModel>>,
    refits: RefitCounts,
}

fn current_model(
    spec: &CaseSpec,
    truth: &TrueMap,
    prior: Option<&PolyPrior>,
    gp: Option<&Arc<GpModel>>,
    fallback: f64,
) -> MapModel {
    match (spec.id, prior) {
        (CaseId::C1, _) => MapModel::Exact { map: *truth },
        (_, Some(prior)) if spec.gp_is_residual => MapModel::Residual {
            prior: *prior,
            gp: gp.cloned(),
        },
        (_, Some(prior)) => MapModel::PolyOnly { prior: *prior },
        (_, None) => MapModel::DirectGp {
            gp: gp.cloned(),
            fallback,
        },
    }
}

fn model_power(
    models: &[MapModel],
    flows: &[f64],
    pr: f64,
    gas: &GasConditions,
) -> Result<(f64, Vec<f64>)> {
    let head = polytropic_head(pr, gas)?;
    let mut total = 0.0;
    let mut etas = Vec::with_capacity(flows.len());
    for (m, f) in models.iter().zip(flows) {
        let eta = m.efficiency(*f, pr)?;
        total += head * f / eta;
        etas.push(eta);
    }
    Ok((total, etas))
}

/// Simulates one case over the whole profile.
pub fn run_case(spec: &CaseSpec, profile: &TargetProfile, cfg: &RunConfig) -> Result<CaseRun> {
    let station = Station::from_config(&cfg.station)?;
    let n = station.n_compressors();
    let gas = station.gas;
    let plant = station.plant;
    let adapt = &cfg.adaptation;

    let priors: Vec<Option<PolyPrior>> = match spec.prior_points {
        Some(k) => build_priors(cfg, &station, k)?
            .into_iter()
            .map(Some)
            .collect(),
        None => vec![None; n],
    };
    let policy = admission_policy(cfg, &station, profile)?;
    let mean = if spec.gp_is_residual {
        PriorMean::Zero
    } else {
        PriorMean::SampleMean
    };
    let mut pipes: Vec<Pipeline> = (0..n)
        .map(|_| Pipeline {
            dataset: Dataset::default(),
            gp: None,
            refits: RefitCounts::default(),
        })
        .collect();
    let models_now = |pipes: &[Pipeline]| -> Vec<MapModel> {
        (0..n)
            .map(|i| {
                current_model(
                    spec,
                    &station.maps[i],
                    priors[i].as_ref(),
                    pipes[i].gp.as_ref(),
                    adapt.direct_gp_fallback,
                )
            })
            .collect()
    };

    let interval_len = cfg.profile.interval();
    let dt = cfg.profile.dt;
    let mut offsets = Vec::new();
    let mut off = adapt.first_sample_delay;
    while off < interval_len {
        offsets.push(off);
        off += adapt.sample_period;
    }

    let mut steps = Vec::new();
    let mut intervals = Vec::with_capacity(profile.schedule.len());
    let mut solves = Vec::new();
    let mut snapshots = Vec::new();
    let mut state: Option<PlantState> = None;
    let mut setpoints: Vec<f64> = Vec::new();
    let mut active_models: Vec<MapModel> = Vec::new();
    let mut active_solution: Option<LsoSolution> = None;
    let mut prev_target = f64::NAN;
    let mut energy = 0.0;
    let mut last_power = 0.0;

    for (h, &(start, target)) in profile.schedule.iter().enumerate() {
        let models = models_now(&pipes);
        if h % cfg.output.snapshot_every == 0 {
            snapshots.push(MapSnapshot {
                interval: h,
                models: models.clone(),
            });
        }
        let reoptimized = h == 0 || target != prev_target;
        if reoptimized {
            let problem = build_problem(
                target,
                &plant.curve,
                &gas,
                &station.envelopes,
                models.clone(),
            )?;
            let sol = solve(
                &problem,
                &cfg.optimizer,
                derive_seed(spec.seed, &[4, h as u64]),
            )?;
            if sol.status == SolveStatus::MaxIter {
                log::debug!(
                    "{}: interval {h} solve stopped at kkt {:.2e}",
                    spec.id,
                    sol.kkt_residual
                );
            }
            setpoints = sol.flows.clone();
            active_models = models;
            solves.push(SolveRecord {
                interval: h,
                time: start,
                target,
                solution: sol.clone(),
            });
            active_solution = Some(sol);
        }
        prev_target = target;

        let mut st = match state.take() {
            Some(s) => s,
            None => {
                let s = plant.state_at(setpoints.clone(), start);
                last_power = plant.true_station_power(&s, &station.maps, &gas)?;
                steps.push(step_record(
                    &s,
                    target,
                    &station,
                    &models_now(&pipes),
                    last_power,
                    energy,
                )?);
                s
            }
        };

        let end = profile.interval_end(h);
        let n_steps = ((end - start) / dt).round() as usize;
        let mut next_sample = 0;
        for _ in 0..n_steps {
            st = plant.step(&st, &setpoints, dt);
            let p = plant.true_station_power(&st, &station.maps, &gas)?;
            energy += 0.5 * (last_power + p) * dt;
            last_power = p;

            let elapsed = st.time - start;
            while spec.uses_gp
                && next_sample < offsets.len()
                && elapsed + 1e-9 >= offsets[next_sample]
            {
                next_sample += 1;
                for meas in measure(&st, &cfg.noise, &station.maps, &gas)? {
                    let i = meas.compressor_id;
                    let pipe = &mut pipes[i];
                    let prior = if spec.gp_is_residual {
                        priors[i].as_ref()
                    } else {
                        None
                    };
                    let outcome =
                        process_measurement(&meas, prior, &mut pipe.dataset, &policy, &gas);
                    if outcome.is_admitted() {
                        let k = pipe.dataset.len() as u64;
                        let mut options = adapt.gp.clone();
                        if adapt.sensor_noise_floor {
                            options.noise_var_floor =
                                sensor_noise_floor(&pipe.dataset, &cfg.noise, &gas);
                        }
                        let fitter = LmlFitter { options };
                        let (gp, kind) = maybe_refit(
                            &pipe.dataset,
                            pipe.gp.as_ref(),
                            &adapt.schedule,
                            mean,
                            &fitter,
                            derive_seed(spec.seed, &[3, i as u64, k]),
                        );
                        pipe.gp = gp;
                        match kind {
                            RefitKind::Full => pipe.refits.full += 1,
                            RefitKind::Resolved => pipe.refits.resolved += 1,
                            RefitKind::Failed => pipe.refits.failed += 1,
                        }
                    }
                }
            }
            steps.push(step_record(
                &st,
                target,
                &station,
                &models_now(&pipes),
                p,
                energy,
            )?);
        }

        let settled = plant.settle(&st, &setpoints);
        let plant_power = plant.true_station_power(&settled, &station.maps, &gas)?;
        let (_, eta_model) = model_power(&active_models, &setpoints, settled.pr, &gas)?;
        intervals.push(IntervalRecord {
            index: h,
            start,
            target,
            setpoints: setpoints.clone(),
            pr: settled.pr,
            eta_true: station
                .maps
                .iter()
                .zip(&setpoints)
                .map(|(m, f)| m.efficiency(*f, settled.pr))
                .collect(),
            eta_model,
            plant_power,
            predicted_power: active_solution
                .as_ref()
                .map_or(f64::NAN, |s| s.predicted_power),
            reoptimized,
            dataset_sizes: pipes.iter().map(|p| p.dataset.len()).collect(),
        });
        state = Some(st);
    }

    let final_models = models_now(&pipes);
    snapshots.push(MapSnapshot {
        interval: profile.schedule.len(),
        models: final_models.clone(),
    });
    Ok(CaseRun {
        spec: *spec,
        steps,
        intervals,
        solves,
        refits: pipes.iter().map(|p| p.refits).collect(),
        datasets: pipes.into_iter().map(|p| p.dataset).collect(),
        priors,
        final_models,
        snapshots,
        total_energy: energy,
    })
}

fn step_record(
    st: &PlantState,
    target: f64,
    station: &Station,
    models: &[MapModel],
    plant_power: f64,
    energy: f64,
) -> Result<StepRecord> {
    let (predicted_power, eta_model) = model_power(models, &st.flows, st.pr, &station.gas)?;
    Ok(StepRecord {
        time: st.time,
        target,
        flows: st.flows.clone(),
        pr: st.pr,
        eta_true: station
            .maps
            .iter()
            .zip(&st.flows)
            .map(|(m, f)| m.efficiency(*f, st.pr))
            .collect(),
        eta_model,
        plant_power,
        predicted_power,
        energy,
    })
}

/// Settled operating points `(mdot, pr)` of compressor `i` over the run.
pub fn visited_points(run: &CaseRun, i: usize) -> Vec<Point> {
    run.intervals
        .iter()
        .map(|r| [r.setpoints[i], r.pr])
        .collect()
}

/// RMSE of `model` against `truth` over `points`.
pub fn rmse_at(model: &MapModel, truth: &TrueMap, points: &[Point]) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for p in points {
        let e = model.efficiency(p[0], p[1])? - truth.efficiency(p[0], p[1]);
        acc += e * e;
    }
    Ok((acc / points.len() as f64).sqrt())
}

/// The model the case would use with no data at all.
pub fn data_free_model(run: &CaseRun, i: usize, truth: &TrueMap, fallback: f64) -> MapModel {
    match (run.spec.id, run.priors[i]) {
        (CaseId::C1, _) => MapModel::Exact { map: *truth },
        (_, Some(prior)) => MapModel::PolyOnly { prior },
        (_, None) => MapModel::DirectGp { gp: None, fallback },
    }
}

/// Per-interval relative excess of settled plant power over `reference`.
pub fn relative_excess(run: &CaseRun, reference: &CaseRun) -> Vec<f64> {
    run.intervals
        .iter()
        .zip(&reference.intervals)
        .map(|(a, b)| (a.plant_power - b.plant_power) / b.plant_power)
        .collect()
}

/// Averages `series` over consecutive blocks of `per_day` entries.
pub fn daily_means(series: &[f64], per_day: usize) -> Vec<f64> {
    series
        .chunks(per_day.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSummary {
    pub id: CaseId,
    pub total_energy_j: f64,
    /// Daily mean relative settled-power excess over C1, when C1 ran.
    pub daily_excess_over_c1: Option<Vec<f64>>,
    pub final_rmse: Vec<f64>,
    pub data_free_rmse: Vec<f64>,
    pub dataset_sizes: Vec<usize>,
    pub refits: Vec<RefitCounts>,
    pub solves: usize,
    pub converged_solves: usize,
    pub max_iter_solves: usize,
    pub clamp_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbortedCase {
    pub id: CaseId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub cases: Vec<CaseSummary>,
    /// Completed cases ordered by total energy, lowest first.
    pub energy_ranking: Vec<CaseId>,
    pub aborted: Vec<AbortedCase>,
}

pub fn summarize(
    runs: &[CaseRun],
    aborted: Vec<AbortedCase>,
    cfg: &RunConfig,
) -> Result<BatchSummary> {
    let station = Station::from_config(&cfg.station)?;
    let reference = runs.iter().find(|r| r.spec.id == CaseId::C1);
    let mut cases = Vec::with_capacity(runs.len());
    for run in runs {
        let mut final_rmse = Vec::new();
        let mut data_free_rmse = Vec::new();
        for (i, truth) in station.maps.iter().enumerate() {
            let pts = visited_points(run, i);
            final_rmse.push(rmse_at(&run.final_models[i], truth, &pts)?);
            let base = data_free_model(run, i, truth, cfg.adaptation.direct_gp_fallback);
            data_free_rmse.push(rmse_at(&base, truth, &pts)?);
        }
        cases.push(CaseSummary {
            id: run.spec.id,
            total_energy_j: run.total_energy,
            daily_excess_over_c1: reference
                .map(|r| daily_means(&relative_excess(run, r), cfg.profile.steps_per_day)),
            final_rmse,
            data_free_rmse,
            dataset_sizes: run.datasets.iter().map(Dataset::len).collect(),
            refits: run.refits.clone(),
            solves: run.solves.len(),
            converged_solves: run
                .solves
                .iter()
                .filter(|s| s.solution.status == SolveStatus::Converged)
                .count(),
            max_iter_solves: run
                .solves
                .iter()
                .filter(|s| s.solution.status == SolveStatus::MaxIter)
                .count(),
            clamp_hits: run.solves.iter().map(|s| s.solution.clamp_hits).sum(),
        });
    }
    let mut ranking: Vec<(f64, CaseId)> =
        runs.iter().map(|r| (r.total_energy, r.spec.id)).collect();
    ranking.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(BatchSummary {
        cases,
        energy_ranking: ranking.into_iter().map(|(_, id)| id).collect(),
        aborted,
    })
}

/// Outcome of a batch: completed runs in case order plus aborted cases.
#[derive(Debug, Clone)]
pub struct Batch {
    pub profile: TargetProfile,
    pub runs: Vec<CaseRun>,
    pub summary: BatchSummary,
}

/// Runs `ids` with common seeds on up to `parallel` worker threads.
///
/// An error in one case aborts only that case; a profile error fails the
/// whole batch.
pub fn run_cases(cfg: &RunConfig, ids: &[CaseId], parallel: usize) -> Result<Batch> {
    let station = Station::from_config(&cfg.station)?;
    let profile = build_profile(&cfg.profile, &station)?;
    let specs: Vec<CaseSpec> = ids
        .iter()
        .map(|id| CaseSpec::new(*id, cfg.cases.seed))
        .collect();

    let workers = parallel.max(1).min(specs.len().max(1));
    let mut results: Vec<Option<Result<CaseRun>>> = (0..specs.len()).map(|_| None).collect();
    if workers <= 1 {
        for (slot, spec) in results.iter_mut().zip(&specs) {
            *slot = Some(run_case(spec, &profile, cfg));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let collected = std::sync::Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let j = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if j >= specs.len() {
                        break;
                    }
                    let r = run_case(&specs[j], &profile, cfg);
                    collected.lock().expect("no poisoned workers").push((j, r));
                });
            }
        });
        for (j, r) in collected.into_inner().expect("no poisoned workers") {
            results[j] = Some(r);
        }
    }

    let mut runs = Vec::new();
    let mut aborted = Vec::new();
    for (spec, r) in specs.iter().zip(results) {
        match r.expect("every case ran") {
            Ok(run) => runs.push(run),
            Err(e) => {
                log::error!("case {} aborted: {e}", spec.id);
                aborted.push(AbortedCase {
                    id: spec.id,
                    reason: e.to_string(),
                });
            }
        }
    }
    let summary = summarize(&runs, aborted, cfg)?;
    Ok(Batch {
        profile,
        runs,
        summary,
    })
}

/// Runs every enabled case sequentially.
pub fn run_all(cfg: &RunConfig) -> Result<Batch> {
    run_cases(cfg, &cfg.cases.enabled, 1)
}
