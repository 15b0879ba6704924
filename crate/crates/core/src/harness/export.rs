//! Results table and per-figure plot data as CSV.

use std::fs;
use std::path::{Path, PathBuf};

use super::train::RunResult;
use crate::error::{Error, Result};
use crate::metrics::MetricBundle;

/// Column order of the results table.
pub const RESULT_COLUMNS: [&str; 12] = [
    "run_id",
    "seed",
    "K",
    "Q",
    "TPT",
    "sqnr_enob",
    "snr_enob",
    "enis",
    "ap",
    "c_tot_pf",
    "enob_per_cycle",
    "status",
];

pub const RESULTS_FILE: &str = "results.csv";
/// SQNR and SNR against total capacitance, grouped by K and Q.
pub const ENOB_VS_CAP_FILE: &str = "enob_vs_ctot.csv";
/// Total capacitance against active paths.
pub const CAP_VS_AP_FILE: &str = "ctot_vs_ap.csv";
/// ENOB per cycle against SNR, annotated with ENIS.
pub const EPC_VS_SNR_FILE: &str = "enob_per_cycle_vs_snr.csv";
/// SNR against active paths, grouped by K and Q.
pub const SNR_VS_AP_FILE: &str = "snr_vs_ap.csv";

/// Nine significant digits.
pub fn format_number(v: f64) -> String {
    format!("{v:.8e}")
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let serde = |e: csv::Error| Error::Serde(e.to_string());
    w.write_record(header).map_err(serde)?;
    for row in rows {
        w.write_record(row).map_err(serde)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn completed(results: &[RunResult]) -> Vec<(&RunResult, &MetricBundle)> {
    results
        .iter()
        .filter_map(|r| r.metrics.as_ref().map(|m| (r, m)))
        .collect()
}

/// Writes the results table and the four plot-data files into `dir`.
///
/// Rows follow run id order, so the same table always yields the same bytes.
/// Diverged runs appear in the results table with empty metric fields and
/// are left out of the plot data.
pub fn export_results(results: &[RunResult], dir: &Path) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(Error::Domain("nothing to export: the results table is empty".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sorted: Vec<&RunResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.run_id);
    let sorted: Vec<RunResult> = sorted.into_iter().cloned().collect();
    let f = format_number;

    let rows: Vec<Vec<String>> = sorted
        .iter()
        .map(|r| {
            let c = &r.config;
            let mut row = vec![
                r.run_id.to_string(),
                r.seed.to_string(),
                c.k.to_string(),
                c.q_levels.to_string(),
                f(c.tpt),
            ];
            match &r.metrics {
                Some(m) => row.extend([
                    f(m.sqnr_enob),
                    f(m.snr_enob),
                    m.enis.to_string(),
                    m.ap.to_string(),
                    f(m.c_tot),
                    f(m.enob_per_cycle),
                ]),
                None => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            row.push(r.status.as_str().to_string());
            row
        })
        .collect();
    let mut written = Vec::new();
    let path = dir.join(RESULTS_FILE);
    write_csv(&path, &RESULT_COLUMNS, &rows)?;
    written.push(path);

    let done = completed(&sorted);
    let group = |r: &RunResult| vec![r.run_id.to_string(), r.config.k.to_string(), r.config.q_levels.to_string()];
    let plots: [(&str, &[&str], fn(&MetricBundle) -> Vec<String>); 4] = [
        (
            ENOB_VS_CAP_FILE,
            &["run_id", "K", "Q", "c_tot_pf", "sqnr_enob", "snr_enob"],
            |m| vec![format_number(m.c_tot), format_number(m.sqnr_enob), format_number(m.snr_enob)],
        ),
        (
            CAP_VS_AP_FILE,
            &["run_id", "K", "Q", "ap", "c_tot_pf"],
            |m| vec![m.ap.to_string(), format_number(m.c_tot)],
        ),
        (
            EPC_VS_SNR_FILE,
            &["run_id", "K", "Q", "snr_enob", "enob_per_cycle", "enis"],
            |m| vec![format_number(m.snr_enob), format_number(m.enob_per_cycle), m.enis.to_string()],
        ),
        (
            SNR_VS_AP_FILE,
            &["run_id", "K", "Q", "ap", "snr_enob"],
            |m| vec![m.ap.to_string(), format_number(m.snr_enob)],
        ),
    ];
    for (name, header, values) in plots {
        let rows: Vec<Vec<String>> = done
            .iter()
            .map(|(r, m)| {
                let mut row = group(r);
                row.extend(values(m));
                row
            })
            .collect();
        let path = dir.join(name);
        write_csv(&path, header, &rows)?;
        written.push(path);
    }
    Ok(written)
}
