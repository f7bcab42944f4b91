//! Fixtures shared by the benchmarks.

use loadshare_core::gp::FitOptions;
use loadshare_core::optimizer::build_problem;
use loadshare_core::{
    Envelope, GasConditions, GpModel, LsoProblem, MapModel, Point, SystemCurve, TrueMap,
};

/// `k` points spread along the operating region with a smooth residual.
pub fn dataset(k: usize) -> (Vec<Point>, Vec<f64>) {
    let inputs: Vec<Point> = (0..k)
        .map(|i| {
            let u = (i as f64 + 0.5) / k as f64;
            [10.0 + 25.0 * u, 1.35 + 0.4 * ((7.0 * u).sin() * 0.5 + 0.5)]
        })
        .collect();
    let targets = inputs
        .iter()
        .map(|p| 0.04 * (p[0] / 5.0).sin() - 0.1 * (p[1] - 1.5))
        .collect();
    (inputs, targets)
}

pub fn fitted_gp(k: usize) -> GpModel {
    let (x, y) = dataset(k);
    GpModel::fit(&x, &y, 0.0, &FitOptions::default()).expect("fixture fits")
}

/// Three-compressor problem at `target` with exact maps or, when `gp` is
/// given, residual models around a flat prior.
pub fn problem(target: f64, gp: Option<&GpModel>) -> LsoProblem {
    let models = [1.0, 0.96, 0.92]
        .iter()
        .map(|s| match gp {
            None => MapModel::Exact {
                map: TrueMap::default().with_scale(*s),
            },
            Some(gp) => MapModel::Residual {
                prior: loadshare_core::PolyPrior {
                    alpha: [0.8 * s, 0.0, 0.0, 0.0, -2e-4, 0.0],
                    shift: 0.0,
                },
                gp: Some(std::sync::Arc::new(gp.clone())),
            },
        })
        .collect();
    build_problem(
        target,
        &SystemCurve::default(),
        &GasConditions::default(),
        &[Envelope::default(); 3],
        models,
    )
    .expect("fixture target is feasible")
}
