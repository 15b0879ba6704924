//! Two-phase training of one converter.
//!
//! Phase 1 trains every latent parameter on the full constrained loss.
//! Phase 2 freezes the encoder and finetunes the decoder on the fidelity
//! term alone, keeping the checkpoint with the lowest noise-free training
//! fidelity loss.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::dataset::generate_dataset;
use crate::autodiff::{clip_global_norm, cosine_lr, Adam, GradRule, Tape, Var};
use crate::constraints::{loss_lse, realize_weights, LatentParams, LossWeights, RealizedWeights};
use crate::decoder::DecoderParams;
use crate::error::{Error, Result};
use crate::graph::{build_loss, draw_noise, GraphOptions};
use crate::metrics::{evaluate_bundle, test_grid, MetricBundle};
use crate::seeding::derive_seed;
use crate::topology::Topology;

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_EVAL: u64 = 3;

/// Largest latent magnitude a run may reach before it counts as diverged.
///
/// Weights and masks stop moving once clipped, and `±50` on a log-scale
/// parameter means a step or capacitor off by a factor `e^50`.
pub const LATENT_BOUND: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Diverged,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Diverged => "diverged",
        }
    }
}

/// Mean training loss of one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub phase: u8,
    pub epoch: usize,
    pub loss: f64,
}

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Position in a sweep; 0 for a standalone run.
    pub run_id: usize,
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub status: RunStatus,
    /// Why a diverged run stopped.
    pub failure: Option<String>,
    pub topology: Topology,
    pub latent: LatentParams,
    pub realized: Option<RealizedWeights>,
    pub decoder: Option<DecoderParams>,
    pub metrics: Option<MetricBundle>,
    pub loss_history: Vec<EpochLoss>,
    /// Noise-free training fidelity loss before and after decoder finetuning.
    pub finetune_lse: Option<(f64, f64)>,
    pub duration_secs: f64,
}

/// Random initial parameters: `W^l ~ U(-0.5, 0.5)`, `M^l ~ U(0, 1)`.
pub fn init_params(cfg: &RunConfig, topology: &Topology) -> LatentParams {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_INIT));
    let n = topology.weight_count();
    let weights = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let mask = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut p = LatentParams {
        stages: topology.stages,
        weights,
        mask,
        log_step: cfg.init_step.ln(),
        log_caps: vec![0.0; topology.stages],
        input_scales: vec![1.0; topology.decoder_depth],
        recurrent: vec![1.0; topology.decoder_depth],
    };
    p.set_unit_caps(&vec![cfg.init_cap; topology.stages])
        .expect("validated initial capacitor");
    p
}

/// Trains from a random initialization.
pub fn train_run(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let topology = cfg.topology()?;
    let init = init_params(cfg, &topology);
    train_from(cfg, init)
}

struct Trainer<'a> {
    cfg: &'a RunConfig,
    topology: Topology,
    lw: LossWeights,
    tape: Tape,
    vars: Vec<Var>,
    grads: Vec<f64>,
    noise_rng: ChaCha8Rng,
}

impl Trainer<'_> {
    /// One gradient evaluation; returns the loss and fills `self.grads`.
    fn gradient(&mut self, flat: &[f64], batch: &[f64], lw: &LossWeights) -> Result<f64> {
        let layout = crate::constraints::ParamLayout::new(self.topology.stages, self.topology.decoder_depth);
        self.tape.clear();
        self.vars.clear();
        for v in flat {
            let var = self.tape.param(*v);
            self.vars.push(var);
        }
        let draws = self
            .cfg
            .noise_train
            .then(|| draw_noise(&mut self.noise_rng, &self.topology, batch.len()));
        let noise_cfg = self.cfg.noise();
        let opts = GraphOptions {
            smooth: false,
            curriculum: self.cfg.curriculum.clone(),
        };
        let g = build_loss(
            &mut self.tape,
            &self.vars,
            &layout,
            &self.topology,
            batch,
            lw,
            draws.as_ref().map(|d| (&noise_cfg, d)),
            &opts,
        )?;
        let loss = self.tape.scalar(g.loss);
        if !loss.is_finite() {
            return Err(Error::Numeric {
                node: self.tape.first_non_finite().unwrap_or(g.loss.index()),
            });
        }
        let grads = self.tape.backward(g.loss, GradRule::Surrogate);
        self.grads.clear();
        self.grads.extend(self.vars.iter().map(|v| grads.scalar(*v)));
        Ok(loss)
    }
}

/// Noise-free fidelity loss of `params` on `inputs` at the full OSR.
fn training_lse(params: &LatentParams, topology: &Topology, inputs: &[f64]) -> Result<f64> {
    let realized = realize_weights(params, topology.levels)?;
    let model = realized.model(topology, params.decoder(topology.osr)?)?;
    let y = model.estimates(inputs, topology.osr, None)?;
    loss_lse(inputs, &y)
}

/// Trains starting from `init`.
pub fn train_from(cfg: &RunConfig, init: LatentParams) -> Result<RunResult> {
    cfg.validate()?;
    let topology = cfg.topology()?;
    init.validate(&topology)?;
    let start = Instant::now();
    let data = generate_dataset(cfg.dataset_size, cfg.input_min, cfg.input_max, cfg.dataset_seed)?;
    let mut result = RunResult {
        run_id: 0,
        config: cfg.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        status: RunStatus::Completed,
        failure: None,
        topology: topology.clone(),
        latent: init.clone(),
        realized: None,
        decoder: None,
        metrics: None,
        loss_history: Vec::new(),
        finetune_lse: None,
        duration_secs: 0.0,
    };
    let mut trainer = Trainer {
        cfg,
        topology: topology.clone(),
        lw: cfg.loss_weights(),
        tape: Tape::new(),
        vars: Vec::new(),
        grads: Vec::new(),
        noise_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_NOISE)),
    };
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_SHUFFLE));
    let outcome = run_phases(&mut trainer, &mut shuffle_rng, &data, init, &mut result);
    match outcome {
        Ok(params) => {
            result.latent = params.clone();
            let realized = realize_weights(&params, topology.levels)?;
            let decoder = params.decoder(topology.osr)?;
            let model = realized.model(&topology, decoder.clone())?;
            let metrics = evaluate_bundle(
                &model,
                &realized,
                &test_grid(),
                cfg.snr_trials,
                derive_seed(cfg.seed, STREAM_EVAL),
                &cfg.noise(),
            )?;
            result.realized = Some(realized);
            result.decoder = Some(decoder);
            result.metrics = Some(metrics);
        }
        Err((params, err)) => {
            log::warn!("run with seed {} diverged: {err}", cfg.seed);
            result.latent = params;
            result.status = RunStatus::Diverged;
            result.failure = Some(err.to_string());
        }
    }
    result.duration_secs = start.elapsed().as_secs_f64();
    Ok(result)
}

fn run_phases(
    trainer: &mut Trainer,
    rng: &mut ChaCha8Rng,
    data: &[f64],
    init: LatentParams,
    result: &mut RunResult,
) -> std::result::Result<LatentParams, (LatentParams, Error)> {
    let cfg = trainer.cfg;
    let stages = trainer.topology.stages;
    let depth = trainer.topology.decoder_depth;
    let layout = init.layout();
    let mut flat = init.to_flat();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch_size = cfg.batch_size.min(data.len());
    let batches = data.len().div_ceil(batch_size);
    let mut batch = Vec::with_capacity(batch_size);
    let fail = |flat: &[f64], e: Error| {
        let p = LatentParams::from_flat(stages, depth, flat).expect("layout preserved");
        (p, e)
    };

    // Phase 1: everything trains on the constrained loss.
    let total = cfg.epochs * batches;
    let mut adam = Adam::new(flat.len());
    let lw = trainer.lw;
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut sum = 0.0;
        for chunk in order.chunks(batch_size) {
            if chunk.len() < 3 {
                continue;
            }
            batch.clear();
            batch.extend(chunk.iter().map(|i| data[*i]));
            let loss = trainer.gradient(&flat, &batch, &lw).map_err(|e| fail(&flat, e))?;
            clip_global_norm(&mut trainer.grads, cfg.grad_clip);
            let lr = cosine_lr(step, total, cfg.lr, cfg.lr_final);
            adam.step(&mut flat, &trainer.grads, lr)
                .map_err(|e| fail(&flat, e))?;
            if let Some(i) = flat.iter().position(|v| !(v.abs() <= LATENT_BOUND)) {
                let msg = format!("parameter {i} reached {} (bound {LATENT_BOUND})", flat[i]);
                return Err(fail(&flat, Error::Divergence(msg)));
            }
            sum += loss;
            step += 1;
        }
        result.loss_history.push(EpochLoss {
            phase: 1,
            epoch,
            loss: sum / batches as f64,
        });
    }

    // Phase 2: decoder finetuning on the fidelity term.
    let frozen = layout.encoder_entries();
    let lse_only = LossWeights {
        lambda_dr: 0.0,
        lambda_tpt: 0.0,
        tpt: lw.tpt,
    };
    let as_params = |flat: &[f64]| LatentParams::from_flat(stages, depth, flat).expect("layout");
    let start_lse = training_lse(&as_params(&flat), &trainer.topology, data)
        .map_err(|e| fail(&flat, e))?;
    let mut best = (start_lse, flat.clone());
    let mut adam = Adam::new(flat.len());
    for epoch in 0..cfg.finetune_epochs {
        order.shuffle(rng);
        let mut sum = 0.0;
        for chunk in order.chunks(batch_size) {
            if chunk.len() < 3 {
                continue;
            }
            batch.clear();
            batch.extend(chunk.iter().map(|i| data[*i]));
            let loss = trainer
                .gradient(&flat, &batch, &lse_only)
                .map_err(|e| fail(&flat, e))?;
            clip_global_norm(&mut trainer.grads, cfg.grad_clip);
            adam.step_masked(&mut flat, &trainer.grads, cfg.finetune_lr, Some(&frozen))
                .map_err(|e| fail(&flat, e))?;
            sum += loss;
        }
        result.loss_history.push(EpochLoss {
            phase: 2,
            epoch,
            loss: sum / batches as f64,
        });
        // A degenerate decoder state is skipped, not fatal.
        if let Ok(l) = training_lse(&as_params(&flat), &trainer.topology, data) {
            if l < best.0 {
                best = (l, flat.clone());
            }
        }
    }
    result.finetune_lse = Some((start_lse, best.0));
    Ok(as_params(&best.1))
}
