use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use loadshare_core::config::{load_config, CaseId, RunConfig};
use loadshare_core::harness::{run_cases, BatchSummary};
use loadshare_core::report::{resnapshot_maps, write_batch};
use loadshare_core::Error;

#[derive(Parser)]
#[command(
    name = "loadshare",
    version,
    about = "Compressor load-sharing simulation with adaptive efficiency maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the selected cases and write all outputs.
    Run(RunArgs),
    /// Check a configuration file without simulating.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rewrite map grids from the model snapshots in an output directory.
    SnapshotMaps {
        /// Station definition; the built-in station when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "LOADSHARE_OUT")]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated case ids, e.g. `C1,C4`.
    #[arg(long, value_delimiter = ',')]
    cases: Option<Vec<CaseId>>,
    #[arg(long, env = "LOADSHARE_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for case execution.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Replaces both the case seed and the noise seed.
    #[arg(long)]
    seed_override: Option<u64>,
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e),
            e => Failure::Runtime(e),
        }
    }
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    load_config(path).map_err(Failure::Config)
}

fn print_summary(summary: &BatchSummary) {
    println!(
        "{:<6} {:>12} {:>28} {:>8} {:>8} {:>10}",
        "case", "energy MWh", "daily excess over C1 (%)", "rmse", "prior", "solves"
    );
    for c in &summary.cases {
        let excess = c.daily_excess_over_c1.as_ref().map_or_else(
            || "-".to_string(),
            |d| {
                d.iter()
                    .map(|x| format!("{:.3}", 100.0 * x))
                    .collect::<Vec<_>>()
                    .join(" / ")
            },
        );
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        println!(
            "{:<6} {:>12.4} {:>28} {:>8.4} {:>8.4} {:>5}/{:<4}",
            c.id.as_str(),
            c.total_energy_j / 3.6e9,
            excess,
            mean(&c.final_rmse),
            mean(&c.data_free_rmse),
            c.converged_solves,
            c.solves
        );
    }
    if !summary.energy_ranking.is_empty() {
        let order: Vec<&str> = summary.energy_ranking.iter().map(|c| c.as_str()).collect();
        println!("energy ranking: {}", order.join(" < "));
    }
    for a in &summary.aborted {
        println!("aborted {}: {}", a.id, a.reason);
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = load(&args.config)?;
    if let Some(seed) = args.seed_override {
        cfg.cases.seed = seed;
        cfg.noise.seed = seed;
    }
    if let Some(cases) = args.cases {
        cfg.cases.enabled = cases;
    }
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let ids = cfg.cases.enabled.clone();
    let batch = run_cases(&cfg, &ids, args.parallel)?;
    let files = write_batch(&out, &cfg, &batch)?;
    print_summary(&batch.summary);
    println!("wrote {} files to {}", files.len(), out.display());
    if batch.summary.aborted.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(Error::Numerical(format!(
            "{} case(s) aborted",
            batch.summary.aborted.len()
        ))))
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!("{}: ok, cases {:?}", config.display(), cfg.cases.enabled);
            Ok(())
        }
        Command::SnapshotMaps { config, out } => {
            let cfg = match config {
                Some(path) => load(&path)?,
                None => RunConfig::default(),
            };
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
            let files = resnapshot_maps(&dir, &cfg)?;
            println!("rewrote {} map grids in {}", files.len(), dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("run aborted: {e}");
            ExitCode::from(2)
        }
    }
}
