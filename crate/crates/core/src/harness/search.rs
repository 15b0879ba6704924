//! Seeded uniform random search over a grid of converter configurations.

use std::path::Path;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifact::record_run;
use super::config::RunConfig;
use super::train::{train_run, RunResult};
use crate::error::{Error, Result};
use crate::seeding::derive_seed;

/// Value sets for the searched fields; every other field comes from the base config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub k: Vec<usize>,
    pub q_levels: Vec<u32>,
    pub tpt: Vec<f64>,
}

impl SearchGrid {
    /// K ∈ {2, 3, 4}, Q ∈ {4, 8, 32}, TPT ∈ {4, 8, 16, 32} pF.
    pub fn full() -> Self {
        SearchGrid {
            k: vec![2, 3, 4],
            q_levels: vec![4, 8, 32],
            tpt: vec![4.0, 8.0, 16.0, 32.0],
        }
    }

    /// The single cell of `cfg`.
    pub fn singleton(cfg: &RunConfig) -> Self {
        SearchGrid {
            k: vec![cfg.k],
            q_levels: vec![cfg.q_levels],
            tpt: vec![cfg.tpt],
        }
    }

    /// Cross-product in lexicographic `(K, Q, TPT)` order.
    pub fn cells(&self) -> Vec<(usize, u32, f64)> {
        let mut out = Vec::new();
        for &k in &self.k {
            for &q in &self.q_levels {
                for &t in &self.tpt {
                    out.push((k, q, t));
                }
            }
        }
        out
    }
}

/// Configuration assigned to one run of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedRun {
    pub run_id: usize,
    pub config: RunConfig,
}

/// Draws `n_runs` grid cells uniformly and derives one seed per run, both
/// from `master_seed` alone.
pub fn plan_runs(
    base: &RunConfig,
    grid: &SearchGrid,
    n_runs: usize,
    master_seed: u64,
) -> Result<Vec<PlannedRun>> {
    if n_runs == 0 {
        return Err(Error::Config("a sweep needs at least one run".into()));
    }
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::Config("search grid has an empty value set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let mut plan = Vec::with_capacity(n_runs);
    for run_id in 0..n_runs {
        let (k, q_levels, tpt) = cells[rng.gen_range(0..cells.len())];
        let config = RunConfig {
            k,
            q_levels,
            tpt,
            // 63 bits, so the seed stays a valid TOML integer.
            seed: derive_seed(master_seed, run_id as u64) >> 1,
            ..base.clone()
        };
        config.validate()?;
        plan.push(PlannedRun { run_id, config });
    }
    Ok(plan)
}

/// Runs a sweep on `jobs` threads, results ordered by run id.
///
/// With `out_dir`, each result is written as soon as it completes, so an
/// interrupted sweep leaves a valid partial table behind.
pub fn random_search(
    base: &RunConfig,
    grid: &SearchGrid,
    n_runs: usize,
    master_seed: u64,
    jobs: usize,
    out_dir: Option<&Path>,
) -> Result<Vec<RunResult>> {
    let plan = plan_runs(base, grid, n_runs, master_seed)?;
    run_plan(&plan, jobs, out_dir)
}

pub fn run_plan(plan: &[PlannedRun], jobs: usize, out_dir: Option<&Path>) -> Result<Vec<RunResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let writer = Mutex::new(());
    let mut results = pool.install(|| {
        plan.par_iter()
            .map(|p| {
                let mut r = train_run(&p.config)?;
                r.run_id = p.run_id;
                log::info!(
                    "run {} (K={} Q={} TPT={}) {}",
                    p.run_id,
                    p.config.k,
                    p.config.q_levels,
                    p.config.tpt,
                    r.status.as_str()
                );
                if let Some(dir) = out_dir {
                    let _guard = writer.lock().unwrap_or_else(|e| e.into_inner());
                    record_run(&r, dir)?;
                }
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    results.sort_by_key(|r| r.run_id);
    Ok(results)
}
