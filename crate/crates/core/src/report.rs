//! Writes batch results to disk as CSV, JSON and JSON lines.
//!
//! Every file is written to a temporary sibling first and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::harness::{Batch, CaseRun, Station};
use crate::surrogate::{map_grid, MapModel};
use crate::thermo::{Envelope, TrueMap};

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn numbered(prefix: &str, n: usize) -> String {
    (0..n)
        .map(|i| format!("{prefix}{i}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn timeseries_csv(run: &CaseRun) -> String {
    let n = run.final_models.len();
    let mut out = format!(
        "time,target,{},pr,{},{},plant_power,predicted_power,energy\n",
        numbered("flow_", n),
        numbered("eta_true_", n),
        numbered("eta_model_", n),
    );
    for s in &run.steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.time,
            s.target,
            join(&s.flows),
            s.pr,
            join(&s.eta_true),
            join(&s.eta_model),
            s.plant_power,
            s.predicted_power,
            s.energy
        );
    }
    out
}

pub fn dataset_csv(run: &CaseRun, compressor: usize) -> String {
    let mut out = String::from("time,mdot,pr,eta_est,target,admitted\n");
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in &run.datasets[compressor].log {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.time,
            r.mdot,
            r.pr,
            opt(r.eta_est),
            opt(r.target),
            r.outcome.is_admitted()
        );
    }
    out
}

pub fn map_grid_csv(model: &MapModel, truth: &TrueMap, env: &Envelope, n: usize) -> Result<String> {
    let mut csv = String::from("mdot,pr,eta_true,eta_model,eta_prior\n");
    for r in map_grid(model, truth, env, n)? {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.mdot, r.pr, r.eta_true, r.eta_model, r.eta_prior
        );
    }
    Ok(csv)
}

/// Writes every artifact of `batch` into `dir` and returns the paths.
pub fn write_batch(dir: &Path, cfg: &RunConfig, batch: &Batch) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let station = Station::from_config(&cfg.station)?;
    let mut written = Vec::new();
    let mut put = |name: String, contents: &[u8]| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, contents)?;
        written.push(path);
        Ok(())
    };

    put(
        "effective_config.json".into(),
        cfg.to_json_pretty().as_bytes(),
    )?;
    put(
        "profile.json".into(),
        serde_json::to_string_pretty(&batch.profile)?.as_bytes(),
    )?;

    for run in &batch.runs {
        let id = run.spec.id.as_str();
        put(
            format!("case_{id}_timeseries.csv"),
            timeseries_csv(run).as_bytes(),
        )?;

        let mut solves = String::new();
        for s in &run.solves {
            solves.push_str(&serde_json::to_string(s)?);
            solves.push('\n');
        }
        put(format!("case_{id}_solves.jsonl"), solves.as_bytes())?;

        for c in 0..run.datasets.len() {
            if run.spec.uses_gp {
                put(
                    format!("case_{id}_datasets_{c}.csv"),
                    dataset_csv(run, c).as_bytes(),
                )?;
            }
        }
        for snap in &run.snapshots {
            for (c, model) in snap.models.iter().enumerate() {
                let step = snap.interval;
                let csv = map_grid_csv(
                    model,
                    &station.maps[c],
                    &station.envelopes[c],
                    cfg.output.map_grid,
                )?;
                put(format!("case_{id}_map_{c}_{step}.csv"), csv.as_bytes())?;
                put(
                    format!("case_{id}_model_{c}_{step}.json"),
                    serde_json::to_string_pretty(model)?.as_bytes(),
                )?;
            }
        }
    }
    put(
        "summary.json".into(),
        serde_json::to_string_pretty(&batch.summary)?.as_bytes(),
    )?;
    Ok(written)
}

/// Splits `case_<id>_model_<c>_<step>.json` into `(id, c, step)`.
fn parse_model_name(name: &str) -> Option<(String, usize, usize)> {
    let stem = name.strip_prefix("case_")?.strip_suffix(".json")?;
    let (id, rest) = stem.split_once("_model_")?;
    let (c, step) = rest.split_once('_')?;
    Some((id.to_string(), c.parse().ok()?, step.parse().ok()?))
}

/// Re-emits the map grid CSV next to every serialized model in `dir`
/// without simulating. Files are processed in name order.
pub fn resnapshot_maps(dir: &Path, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let station = Station::from_config(&cfg.station)?;
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| parse_model_name(n).is_some())
        .collect();
    names.sort();
    let mut written = Vec::new();
    for name in names {
        let (id, c, step) = parse_model_name(&name).expect("filtered above");
        let (Some(truth), Some(env)) = (station.maps.get(c), station.envelopes.get(c)) else {
            return Err(Error::config(
                "station.compressors",
                format!("{name} refers to compressor {c}, which the station lacks"),
            ));
        };
        let path = dir.join(&name);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let model: MapModel = serde_json::from_str(&text)?;
        let out = dir.join(format!("case_{id}_map_{c}_{step}.csv"));
        write_atomic(
            &out,
            map_grid_csv(&model, truth, env, cfg.output.map_grid)?.as_bytes(),
        )?;
        written.push(out);
    }
    Ok(written)
}
