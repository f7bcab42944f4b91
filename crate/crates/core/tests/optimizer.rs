mod common;

use common::*;
use loadshare_core::optimizer::{kkt_residual, project, solve, station_power};
use loadshare_core::{Error, SolverOptions};
use proptest::prelude::*;
use rand::Rng;

const STEP: f64 = 0.05;

#[test]
fn solve_matches_brute_force_enumeration() {
    let mut r = rng(2024);
    let opts = SolverOptions::default();
    for i in 0..20 {
        let target = (r.random_range(54.0..100.0) / STEP).round() * STEP;
        let p = exact_problem(target, &SCALES);
        let sol = solve(&p, &opts, i).unwrap();
        let (grid, grid_power) = brute_force_split(&p, STEP);
        for (a, b) in sol.flows.iter().zip(&grid) {
            assert!(
                (a - b).abs() <= STEP + 1e-9,
                "target {target}: {:?} vs {grid:?}",
                sol.flows
            );
        }
        let rel = (sol.predicted_power - grid_power).abs() / grid_power;
        assert!(rel <= 5e-4, "target {target}: {rel}");
        assert!(sol.predicted_power <= grid_power * (1.0 + 1e-12));
    }
}

#[test]
fn identical_compressors_split_equally() {
    for target in [54.0, 66.0, 72.0, 90.0] {
        let p = exact_problem(target, &[1.0, 1.0, 1.0]);
        let sol = solve(&p, &SolverOptions::default(), 1).unwrap();
        for f in &sol.flows {
            assert!((f - target / 3.0).abs() <= 1e-6, "{:?}", sol.flows);
        }
    }
}

#[test]
fn infeasible_target_is_an_error() {
    let mut p = exact_problem(80.0, &SCALES);
    p.target = p.capacity().1 + 1.0;
    assert!(matches!(
        solve(&p, &SolverOptions::default(), 0),
        Err(Error::Infeasible(_))
    ));
}

#[test]
fn power_gradient_matches_differences() {
    let mut r = rng(31);
    for _ in 0..20 {
        let p = exact_problem(r.random_range(54.0..100.0), &SCALES);
        let flows: Vec<f64> = p
            .bounds
            .iter()
            .map(|(l, u)| r.random_range(*l..*u))
            .collect();
        let g = station_power(&p, &flows).unwrap().grad;
        for d in 0..3 {
            let h = 1e-5 * flows[d];
            let (mut up, mut dn) = (flows.clone(), flows.clone());
            up[d] += h;
            dn[d] -= h;
            let num = (station_power(&p, &up).unwrap().power
                - station_power(&p, &dn).unwrap().power)
                / (2.0 * h);
            assert!(close(g[d], num, 1e-5, 1e-8), "{} vs {num}", g[d]);
        }
    }
}

#[test]
fn solutions_are_feasible_and_stationary() {
    let opts = SolverOptions::default();
    for target in [54.0, 61.0, 78.5, 95.0] {
        let p = exact_problem(target, &SCALES);
        let sol = solve(&p, &opts, 7).unwrap();
        assert!((sol.flows.iter().sum::<f64>() - target).abs() < 1e-9);
        for (f, (l, u)) in sol.flows.iter().zip(&p.bounds) {
            assert!(*f >= l - 1e-12 && *f <= u + 1e-12);
        }
        let eval = station_power(&p, &sol.flows).unwrap();
        assert!(kkt_residual(&sol.flows, &eval.grad, &p.bounds, eval.power, target) < 1e-6);
    }
}

proptest! {
    #[test]
    fn projection_is_feasible_and_idempotent(
        y in prop::collection::vec(-50.0f64..80.0, 3),
        frac in 0.0f64..1.0,
    ) {
        let bounds = [(8.0, 40.0), (10.0, 36.0), (5.0, 30.0)];
        let total = 23.0 + frac * (106.0 - 23.0);
        let x = project(&y, &bounds, total);
        prop_assert!((x.iter().sum::<f64>() - total).abs() < 1e-9);
        for (v, (l, u)) in x.iter().zip(&bounds) {
            prop_assert!(*v >= *l - 1e-12 && *v <= *u + 1e-12);
        }
        let again = project(&x, &bounds, total);
        for (a, b) in x.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn solver_never_loses_to_equal_split(target in 54.0f64..100.0) {
        let p = exact_problem(target, &SCALES);
        let sol = solve(&p, &SolverOptions::default(), 0).unwrap();
        let equal = vec![target / 3.0; 3];
        if p.bounds.iter().all(|(l, u)| target / 3.0 >= *l && target / 3.0 <= *u) {
            prop_assert!(sol.predicted_power <= station_power(&p, &equal).unwrap().power * (1.0 + 1e-12));
        }
    }
}
