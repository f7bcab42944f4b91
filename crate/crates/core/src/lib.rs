//! Load sharing for parallel gas compressors with adaptive efficiency maps.
//!
//! A station of compressors shares one suction and discharge header. Given a
//! station flow target, [`optimizer::solve`] splits the flow to minimize shaft
//! power under per-compressor surge and choke limits, using efficiency maps
//! that are a polynomial prior corrected online by a Gaussian-process residual
//! ([`surrogate::MapModel`]). [`harness::run_cases`] drives the simulated plant
//! through a multi-day demand profile for every comparison case.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptation;
pub mod config;
pub mod error;
pub mod gp;
pub mod harness;
pub mod optimizer;
pub mod plant;
pub mod report;
pub mod surrogate;
pub mod thermo;

pub use config::{load_config, CaseId, RunConfig};
pub use error::{Error, Result};
pub use gp::{GpModel, Kernel, Point};
pub use harness::{run_all, run_cases, Batch, BatchSummary, CaseRun};
pub use optimizer::{LsoProblem, LsoSolution, SolveStatus, SolverOptions};
pub use plant::{Measurement, NoiseModel, Plant, PlantState};
pub use surrogate::{MapModel, PolyPrior};
pub use thermo::{Envelope, GasConditions, SystemCurve, TrueMap};
