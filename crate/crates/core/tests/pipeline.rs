mod common;

use std::sync::Arc;

use common::*;
use loadshare_core::adaptation::{
    maybe_refit, process_measurement, Admission, AdmissionPolicy, Dataset, GpFitter, LmlFitter,
    PriorMean, RefitKind, RefitSchedule,
};
use loadshare_core::config::{ProfileConfig, StationConfig};
use loadshare_core::gp::FitOptions;
use loadshare_core::harness::{build_profile, derive_seed, Station};
use loadshare_core::plant::measure;
use loadshare_core::surrogate::{fit_poly_prior, sample_along_curve};
use loadshare_core::thermo::{back_calculate_efficiency, polytropic_head};
use loadshare_core::{
    Envelope, Error, GasConditions, GpModel, Kernel, MapModel, Measurement, NoiseModel, Plant,
    Point, Result, RunConfig, SystemCurve, TrueMap,
};
use rand::Rng;

fn plant() -> Plant {
    Plant::new(SystemCurve::default(), 30.0).unwrap()
}

#[test]
fn one_time_constant_step_closes_most_of_the_gap() {
    let p = plant();
    let s = p.step(&p.state_at(vec![20.0], 0.0), &[21.0], 30.0);
    assert!((s.flows[0] - (20.0 + 1.0 - (-1.0f64).exp())).abs() < 1e-12);
}

#[test]
fn settle_equals_long_iteration() {
    let p = plant();
    let mut s = p.state_at(vec![12.0, 30.0, 18.0], 0.0);
    let sp = [20.0, 22.0, 25.0];
    let settled = p.settle(&s, &sp);
    for _ in 0..3000 {
        s = p.step(&s, &sp, 1.0);
    }
    for (a, b) in s.flows.iter().zip(&settled.flows) {
        assert!((a - b).abs() < 1e-9);
    }
    assert!((s.pr - settled.pr).abs() < 1e-9);
}

#[test]
fn power_noise_spread_matches_propagation() {
    let noise = NoiseModel {
        rel_sigma_power: 0.01,
        seed: 99,
        ..NoiseModel::noiseless()
    };
    let gas = GasConditions::default();
    let p = plant();
    let maps = [TrueMap::default()];
    let mut est = Vec::with_capacity(10_000);
    for i in 0..10_000 {
        let s = p.state_at(vec![60.0], i as f64);
        let m = measure(&s, &noise, &maps, &gas).unwrap()[0];
        est.push(back_calculate_efficiency(m.mdot, m.pr, m.power, m.t_in, &gas).unwrap());
    }
    let s = p.state_at(vec![60.0], 0.0);
    let eta = maps[0].efficiency(60.0, s.pr);
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    let std = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt();
    let expected = noise.efficiency_variance(s.pr, eta, &gas).unwrap().sqrt();
    assert!(
        (std - expected).abs() <= 0.15 * expected,
        "{std} vs {expected}"
    );
}

#[test]
fn common_noise_is_shared_across_calls() {
    let noise = NoiseModel::default();
    let gas = GasConditions::default();
    let p = plant();
    let maps = [TrueMap::default(); 2];
    let s = p.state_at(vec![20.0, 25.0], 300.0);
    assert_eq!(
        measure(&s, &noise, &maps, &gas).unwrap(),
        measure(&s, &noise, &maps, &gas).unwrap()
    );
}

fn samples() -> Vec<loadshare_core::surrogate::EfficiencySample> {
    sample_along_curve(
        &TrueMap::default(),
        &Envelope::default(),
        &SystemCurve::default(),
        (54.0, 90.0),
        20,
        5,
    )
    .unwrap()
}

#[test]
fn prior_fits_the_quadratic_map_exactly_from_enough_points() {
    let prior = fit_poly_prior(&samples(), 20, 0.0, 0).unwrap();
    let truth = TrueMap::default();
    for s in samples() {
        assert!((prior.eval(s.mdot, s.pr) - truth.efficiency(s.mdot, s.pr)).abs() < 1e-8);
    }
}

#[test]
fn prior_shift_is_reproducible_and_bounded() {
    let a = fit_poly_prior(&samples(), 5, 0.05, 17).unwrap();
    let b = fit_poly_prior(&samples(), 5, 0.05, 17).unwrap();
    assert_eq!(a.shift.to_bits(), b.shift.to_bits());
    assert!(a.shift.abs() <= 0.05);
    assert!(matches!(
        fit_poly_prior(&samples(), 0, 0.0, 0),
        Err(Error::Config { .. })
    ));
    assert!(matches!(
        fit_poly_prior(&samples(), 21, 0.0, 0),
        Err(Error::Config { .. })
    ));
}

fn residual_model(noise_var: Option<f64>) -> (MapModel, Vec<Point>, Vec<f64>) {
    let prior = fit_poly_prior(&samples(), 5, 0.02, 3).unwrap();
    let truth = TrueMap::default();
    let gas = GasConditions::default();
    let mut r = rng(4);
    let mut pts = Vec::new();
    let mut eta = Vec::new();
    for _ in 0..15 {
        let pr = r.random_range(1.4..1.75);
        let (lo, hi) = Envelope::default().bounds(pr).unwrap();
        let m = r.random_range(lo..hi);
        let head = polytropic_head(pr, &gas).unwrap();
        let e =
            back_calculate_efficiency(m, pr, head * m / truth.efficiency(m, pr), gas.t_in, &gas)
                .unwrap();
        pts.push([m, pr]);
        eta.push(e);
    }
    let resid: Vec<f64> = pts
        .iter()
        .zip(&eta)
        .map(|(p, e)| e - prior.eval(p[0], p[1]))
        .collect();
    let opts = FitOptions {
        fixed_noise_var: noise_var,
        ..FitOptions::default()
    };
    let gp = GpModel::fit(&pts, &resid, 0.0, &opts).unwrap();
    (
        MapModel::Residual {
            prior,
            gp: Some(Arc::new(gp)),
        },
        pts,
        eta,
    )
}

#[test]
fn residual_model_reproduces_back_calculated_efficiency() {
    let (model, pts, eta) = residual_model(Some(1e-10));
    for (p, e) in pts.iter().zip(&eta) {
        assert!((model.efficiency(p[0], p[1]).unwrap() - e).abs() < 1e-5);
    }
}

#[test]
fn residual_gradient_matches_differences() {
    let (model, _, _) = residual_model(None);
    let mut r = rng(12);
    for _ in 0..20 {
        let pr = r.random_range(1.0..2.0);
        let (lo, hi) = Envelope::default().bounds(pr).unwrap();
        let q = [r.random_range(lo..hi), pr];
        let g = model.efficiency_grad(q[0], q[1]).unwrap();
        for d in 0..2 {
            let h = 1e-5 * q[d];
            let (mut up, mut dn) = (q, q);
            up[d] += h;
            dn[d] -= h;
            let num = (model.efficiency(up[0], up[1]).unwrap()
                - model.efficiency(dn[0], dn[1]).unwrap())
                / (2.0 * h);
            assert!(close(g[d], num, 1e-5, 1e-8), "{} vs {num}", g[d]);
        }
    }
}

fn measurement(mdot: f64, pr: f64, time: f64) -> Measurement {
    let gas = GasConditions::default();
    let head = polytropic_head(pr, &gas).unwrap();
    Measurement {
        compressor_id: 0,
        time,
        mdot,
        pr,
        power: head * mdot / 0.78,
        t_in: gas.t_in,
    }
}

#[test]
fn injected_duplicates_are_rejected() {
    let policy = AdmissionPolicy {
        delta_admit: 0.05,
        max_points: 150,
        scales: [12.0, 0.175],
    };
    let gas = GasConditions::default();
    let mut d = Dataset::default();
    let mut r = rng(8);
    for i in 0..40 {
        let m = measurement(
            r.random_range(10.0..35.0),
            r.random_range(1.3..1.8),
            i as f64,
        );
        process_measurement(&m, None, &mut d, &policy, &gas);
    }
    let before = d.len();
    for (i, p) in d.points.clone().iter().enumerate() {
        let out = process_measurement(
            &measurement(p[0], p[1], 1e4 + i as f64),
            None,
            &mut d,
            &policy,
            &gas,
        );
        assert!(matches!(out, Admission::TooClose { distance } if distance == 0.0));
    }
    assert_eq!(d.len(), before);
    assert!(d.min_pairwise_distance(&policy).unwrap() >= policy.delta_admit);
}

#[test]
fn full_dataset_stops_admitting() {
    let policy = AdmissionPolicy {
        delta_admit: 0.0,
        max_points: 3,
        scales: [1.0, 1.0],
    };
    let mut d = Dataset::default();
    for i in 0..5 {
        process_measurement(
            &measurement(10.0 + i as f64, 1.5, i as f64),
            None,
            &mut d,
            &policy,
            &GasConditions::default(),
        );
    }
    assert_eq!(d.len(), 3);
    assert_eq!(d.log.last().unwrap().outcome, Admission::Full);
}

struct Broken;

impl GpFitter for Broken {
    fn fit(&self, _: &[Point], _: &[f64], _: f64, _: u64) -> Result<GpModel> {
        Err(Error::Numerical("injected".into()))
    }

    fn condition(&self, _: &[Point], _: &[f64], _: f64, _: Kernel) -> Result<GpModel> {
        Err(Error::Numerical("injected".into()))
    }
}

#[test]
fn failed_refit_keeps_previous_model() {
    let mut d = Dataset::default();
    let policy = AdmissionPolicy {
        delta_admit: 0.01,
        max_points: 150,
        scales: [12.0, 0.175],
    };
    for i in 0..4 {
        process_measurement(
            &measurement(12.0 + 4.0 * i as f64, 1.5, i as f64),
            None,
            &mut d,
            &policy,
            &GasConditions::default(),
        );
    }
    let schedule = RefitSchedule::default();
    let (good, kind) = maybe_refit(
        &d,
        None,
        &schedule,
        PriorMean::SampleMean,
        &LmlFitter::default(),
        1,
    );
    assert_eq!(kind, RefitKind::Full);
    let good = good.unwrap();
    let (kept, kind) = maybe_refit(
        &d,
        Some(&good),
        &schedule,
        PriorMean::SampleMean,
        &Broken,
        2,
    );
    assert_eq!(kind, RefitKind::Failed);
    assert!(Arc::ptr_eq(&kept.unwrap(), &good));
}

#[test]
fn default_profile_is_feasible_everywhere() {
    let station = Station::from_config(&StationConfig::default()).unwrap();
    let profile = build_profile(&ProfileConfig::default(), &station).unwrap();
    assert_eq!(profile.schedule.len(), 72);
    for (_, t) in &profile.schedule {
        let pr = station.plant.curve.pressure_ratio(*t).unwrap();
        let (lo, hi) = station.envelopes.iter().fold((0.0, 0.0), |(a, b), e| {
            let (l, u) = e.bounds(pr).unwrap();
            (a + l, b + u)
        });
        assert!(lo <= *t && *t <= hi, "{t}");
    }
}

#[test]
fn seeds_are_path_dependent() {
    assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
    assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
    assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
}

#[test]
fn config_errors_name_the_key() {
    let err = RunConfig::from_json_str(r#"{"adaptation": {"delta_admit": -1.0}}"#).unwrap_err();
    assert!(
        matches!(err, Error::Config { ref key, .. } if key.contains("delta_admit")),
        "{err}"
    );
    let err = RunConfig::from_json_str(r#"{"noise": {"rel_sigma_power": "high"}}"#).unwrap_err();
    assert!(
        matches!(err, Error::Config { ref key, .. } if key.contains("rel_sigma_power")),
        "{err}"
    );
    assert!(RunConfig::from_json_str("{}").is_ok());
}
