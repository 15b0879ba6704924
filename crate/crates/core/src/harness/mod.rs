//! Run configuration, training, sweeps, artifacts and result export.

mod artifact;
mod config;
mod dataset;
mod export;
mod search;
mod train;

pub use artifact::{
    artifact_name, load_dir, load_run, rebuild_model, rebuild_model_at, record_run, reevaluate_sqnr, save_run,
    IndexEntry, INDEX_FILE, RUNS_DIR,
};
pub use config::RunConfig;
pub use dataset::generate_dataset;
pub use export::{
    export_results, format_number, CAP_VS_AP_FILE, ENOB_VS_CAP_FILE, EPC_VS_SNR_FILE,
    RESULTS_FILE, RESULT_COLUMNS, SNR_VS_AP_FILE,
};
pub use search::{plan_runs, random_search, run_plan, PlannedRun, SearchGrid};
pub use train::{init_params, train_from, train_run, EpochLoss, RunResult, RunStatus};
