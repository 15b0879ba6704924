//! One JSON file per run plus an append-only index.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::train::{RunResult, RunStatus};
use crate::decoder::DecoderParams;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_sqnr, Enob};
use crate::model::Model;

/// Name of the index file inside a sweep directory.
pub const INDEX_FILE: &str = "index.jsonl";
/// Subdirectory holding the per-run artifacts.
pub const RUNS_DIR: &str = "runs";

/// One line of the sweep index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub run_id: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub file: String,
}

pub fn artifact_name(run_id: usize) -> String {
    format!("run-{run_id:05}.json")
}

/// Writes `result` as pretty JSON through a temporary file, so a reader
/// never observes a half-written artifact.
pub fn save_run(result: &RunResult, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(result).map_err(|e| Error::Serde(e.to_string()))?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text + "\n").map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_run(path: &Path) -> Result<RunResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

/// Stores `result` under `dir/runs/` and appends it to `dir/index.jsonl`.
pub fn record_run(result: &RunResult, dir: &Path) -> Result<PathBuf> {
    let runs = dir.join(RUNS_DIR);
    fs::create_dir_all(&runs).map_err(|e| Error::io(&runs, e))?;
    let name = artifact_name(result.run_id);
    let path = runs.join(&name);
    save_run(result, &path)?;
    let entry = IndexEntry {
        run_id: result.run_id,
        seed: result.seed,
        status: result.status,
        file: format!("{RUNS_DIR}/{name}"),
    };
    let line = serde_json::to_string(&entry).map_err(|e| Error::Serde(e.to_string()))?;
    let index = dir.join(INDEX_FILE);
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&index)
        .map_err(|e| Error::io(&index, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(&index, e))?;
    Ok(path)
}

/// Every artifact in `dir/runs/`, ordered by run id. Leftover temporary
/// files from an interrupted sweep are ignored.
pub fn load_dir(dir: &Path) -> Result<Vec<RunResult>> {
    let runs = dir.join(RUNS_DIR);
    let mut out = Vec::new();
    for entry in fs::read_dir(&runs).map_err(|e| Error::io(&runs, e))? {
        let path = entry.map_err(|e| Error::io(&runs, e))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(load_run(&path)?);
        }
    }
    out.sort_by_key(|r| r.run_id);
    Ok(out)
}

/// Rebuilds the converter stored in a completed run.
pub fn rebuild_model(result: &RunResult) -> Result<Model> {
    match (&result.realized, &result.decoder) {
        (Some(realized), Some(decoder)) => {
            let decoder = decoder.clone();
            realized.model(&result.topology, decoder)
        }
        _ => Err(Error::Domain(format!(
            "run {} has no realized converter (status {})",
            result.run_id,
            result.status.as_str()
        ))),
    }
}

/// The stored converter with its decoder normalized over `cycles` cycles,
/// for evaluation at an OSR other than the trained one.
pub fn rebuild_model_at(result: &RunResult, cycles: usize) -> Result<Model> {
    let mut model = rebuild_model(result)?;
    model.decoder = DecoderParams::new(
        model.decoder.input_scales.clone(),
        model.decoder.recurrent.clone(),
        cycles,
    )?;
    model.topology.osr = cycles;
    model.topology.validate()?;
    Ok(model)
}

/// Noise-free ENOB of the stored converter over `inputs` after `cycles` cycles.
pub fn reevaluate_sqnr(result: &RunResult, inputs: &[f64], cycles: usize) -> Result<Enob> {
    let model = rebuild_model(result)?;
    evaluate_sqnr(&model, inputs, cycles)
}
