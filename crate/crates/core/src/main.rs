use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use iadc::baselines::{first_order_model, ClassicalSpec};
use iadc::constraints::NoiseConfig;
use iadc::harness::{
    export_results, load_dir, load_run, random_search, rebuild_model_at, save_run, train_run,
    RunConfig, SearchGrid,
};
use iadc::metrics::{active_paths, enis, evaluate_snr, evaluate_sqnr, test_grid};

#[derive(Parser)]
#[command(name = "iadc", version, about = "Train and evaluate incremental delta-sigma converters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one converter from a config file.
    Train {
        /// TOML config; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write the run artifact.
        #[arg(long, default_value = "run.json")]
        out: PathBuf,
    },
    /// Random search over K, Q and TPT.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 36)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        master_seed: u64,
        /// Output directory for artifacts and the run index.
        #[arg(long)]
        out: PathBuf,
        /// Parallel runs.
        #[arg(long, env = "IADC_JOBS", default_value_t = 1)]
        jobs: usize,
        /// Search only the config's own K, Q and TPT.
        #[arg(long)]
        single_cell: bool,
        /// Comma-separated K values, overriding the grid.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// Comma-separated Q values, overriding the grid.
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<u32>>,
        /// Comma-separated TPT values in pF, overriding the grid.
        #[arg(long, value_delimiter = ',')]
        tpt: Option<Vec<f64>>,
    },
    /// Metrics of a stored run at a chosen OSR.
    Eval {
        artifact: PathBuf,
        #[arg(long)]
        osr: Option<usize>,
        /// Also report the noisy ENOB.
        #[arg(long)]
        noise: bool,
        #[arg(long, default_value_t = 32)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Results table and plot data from a sweep directory.
    Export {
        /// Sweep directory holding `runs/`.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics of the first-order converter.
    Baseline {
        #[arg(long, default_value_t = 80)]
        osr: usize,
        #[arg(long, default_value_t = 32)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, out } => {
            let cfg = load_config(config.as_ref())?;
            let result = train_run(&cfg)?;
            save_run(&result, &out)?;
            match &result.metrics {
                Some(m) => println!(
                    "sqnr_enob={:.3} snr_enob={:.3} c_tot_pf={:.3} enis={} ap={} enob_per_cycle={:.4}",
                    m.sqnr_enob, m.snr_enob, m.c_tot, m.enis, m.ap, m.enob_per_cycle
                ),
                None => println!(
                    "diverged: {}",
                    result.failure.as_deref().unwrap_or("unknown failure")
                ),
            }
            println!("artifact written to {}", out.display());
        }
        Command::Sweep {
            config,
            runs,
            master_seed,
            out,
            jobs,
            single_cell,
            k,
            q,
            tpt,
        } => {
            let cfg = load_config(config.as_ref())?;
            let mut grid = if single_cell {
                SearchGrid::singleton(&cfg)
            } else {
                SearchGrid::full()
            };
            if let Some(k) = k {
                grid.k = k;
            }
            if let Some(q) = q {
                grid.q_levels = q;
            }
            if let Some(t) = tpt {
                grid.tpt = t;
            }
            let results = random_search(&cfg, &grid, runs, master_seed, jobs, Some(&out))?;
            let done = results.iter().filter(|r| r.metrics.is_some()).count();
            println!("{done} of {} runs completed; artifacts in {}", results.len(), out.display());
        }
        Command::Eval {
            artifact,
            osr,
            noise,
            trials,
            seed,
        } => {
            let result = load_run(&artifact)?;
            let cycles = osr.unwrap_or(result.topology.osr);
            let model = rebuild_model_at(&result, cycles)
                .with_context(|| format!("loading {}", artifact.display()))?;
            let grid = test_grid();
            let sqnr = evaluate_sqnr(&model, &grid, cycles)?;
            println!("osr={cycles} sqnr_enob={:.4}", sqnr.bits);
            if noise {
                let cfg = result.config.noise();
                let snr = evaluate_snr(&model, &grid, cycles, trials, seed, &cfg)?;
                println!("snr_enob={:.4} trials={trials} seed={seed}", snr.bits);
            }
        }
        Command::Export { runs, out } => {
            let results = load_dir(&runs)?;
            if results.is_empty() {
                bail!("no run artifacts under {}", runs.display());
            }
            for path in export_results(&results, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Baseline { osr, trials, seed } => {
            let model = first_order_model(osr)?;
            let realized = ClassicalSpec::first_order().realize(0.5, 1.0, 2)?;
            let grid = test_grid();
            let sqnr = evaluate_sqnr(&model, &grid, osr)?;
            let snr = evaluate_snr(&model, &grid, osr, trials, seed, &NoiseConfig::default())?;
            println!(
                "first-order osr={osr} sqnr_enob={:.4} snr_enob={:.4} enis={} ap={} c_tot_pf={:.1}",
                sqnr.bits,
                snr.bits,
                enis(&realized),
                active_paths(&realized),
                model.caps.iter().sum::<f64>()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
