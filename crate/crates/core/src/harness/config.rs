//! Run configuration, read from flat TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraints::{LossWeights, NoiseConfig};
use crate::error::{Error, Result};
use crate::topology::Topology;

/// Everything that determines one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Modulator stages K.
    pub k: usize,
    /// Conversion cycles N (OSR).
    pub osr: usize,
    /// Weight quantization bound Q.
    pub q_levels: u32,
    /// Saturation bound δ, shared by all stages.
    pub delta: f64,
    /// Decoder cells J; 0 means J = K.
    pub decoder_depth: usize,

    pub lambda_dr: f64,
    pub lambda_tpt: f64,
    /// Total capacitor threshold, pF.
    pub tpt: f64,

    pub epochs: usize,
    pub batch_size: usize,
    /// Learning rate at the start of the cosine schedule.
    pub lr: f64,
    /// Learning rate at the end of the cosine schedule.
    pub lr_final: f64,
    pub grad_clip: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    /// Extra cycle counts averaged into the fidelity loss; empty disables it.
    pub curriculum: Vec<usize>,

    pub dataset_size: usize,
    pub input_min: f64,
    pub input_max: f64,
    pub dataset_seed: u64,

    pub noise_train: bool,
    pub snr_trials: usize,
    pub temperature: f64,
    pub v_ref: f64,

    /// Initial quantization step.
    pub init_step: f64,
    /// Initial unit capacitor, pF.
    pub init_cap: f64,
    /// Seed for initialization, shuffling and noise.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: 3,
            osr: 80,
            q_levels: 32,
            delta: 0.4,
            decoder_depth: 0,
            lambda_dr: 0.01,
            lambda_tpt: 0.0001,
            tpt: 16.0,
            epochs: 100,
            batch_size: 8,
            lr: 5e-3,
            lr_final: 1e-4,
            grad_clip: 1.0,
            finetune_epochs: 10,
            finetune_lr: 1e-3,
            curriculum: Vec::new(),
            dataset_size: 2048,
            input_min: -0.35,
            input_max: 0.35,
            dataset_seed: 1,
            noise_train: true,
            snr_trials: 32,
            temperature: 300.0,
            v_ref: 1.0,
            init_step: 0.25,
            init_cap: 1.0,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.topology()?;
        self.loss_weights().validate()?;
        if !(-0.5..=0.5).contains(&self.input_min)
            || !(-0.5..=0.5).contains(&self.input_max)
            || !(self.input_min < self.input_max)
        {
            return Err(Error::Config(format!(
                "input range [{}, {}] must be a non-empty subset of [-0.5, 0.5]",
                self.input_min, self.input_max
            )));
        }
        let counts = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("dataset_size", self.dataset_size),
            ("snr_trials", self.snr_trials),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.batch_size < 3 {
            return Err(Error::Config("batch_size must be at least 3".into()));
        }
        if !(self.init_step > 0.0) || !(self.init_cap > crate::constraints::C_MIN_PF) {
            return Err(Error::Config("init_step and init_cap must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(self.lr_final >= 0.0) || !(self.finetune_lr >= 0.0) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        if !(self.temperature > 0.0) || !(self.v_ref > 0.0) {
            return Err(Error::Config("temperature and v_ref must be positive".into()));
        }
        if self.seed > i64::MAX as u64 || self.dataset_seed > i64::MAX as u64 {
            return Err(Error::Config("seeds must fit in 63 bits".into()));
        }
        if let Some(c) = self.curriculum.iter().find(|c| **c == 0 || **c > self.osr) {
            return Err(Error::Config(format!("curriculum cycle {c} outside 1..={}", self.osr)));
        }
        Ok(())
    }

    pub fn topology(&self) -> Result<Topology> {
        let depth = if self.decoder_depth == 0 {
            self.k
        } else {
            self.decoder_depth
        };
        Topology::new(self.k, self.osr, self.q_levels, self.delta)
            .and_then(|t| t.with_decoder_depth(depth))
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_dr: self.lambda_dr,
            lambda_tpt: self.lambda_tpt,
            tpt: self.tpt,
        }
    }

    pub fn noise(&self) -> NoiseConfig {
        NoiseConfig {
            temperature: self.temperature,
            v_ref: self.v_ref,
        }
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}
