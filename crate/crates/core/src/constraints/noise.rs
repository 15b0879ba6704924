use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::params::RealizedWeights;
use crate::encoder::WeightNoise;
use crate::error::{Error, Result};

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380649e-23;

const PICO: f64 = 1e-12;

/// Physical scaling of sampled thermal noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Kelvin.
    pub temperature: f64,
    /// Volts corresponding to one normalized signal unit.
    pub v_ref: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            temperature: 300.0,
            v_ref: 1.0,
        }
    }
}

/// RMS kT/C noise of a `cap_pf` capacitor in normalized units.
pub fn ktc_sigma(cap_pf: f64, temperature: f64, v_ref: f64) -> Result<f64> {
    if !(cap_pf > 0.0) {
        return Err(Error::Domain(format!("capacitance {cap_pf} pF is not positive")));
    }
    Ok((BOLTZMANN * temperature / (cap_pf * PICO)).sqrt() / v_ref)
}

fn sigmas(caps: &[f64], cfg: &NoiseConfig) -> Vec<f64> {
    caps.iter()
        .map(|c| {
            if *c > 0.0 {
                (BOLTZMANN * cfg.temperature / (c * PICO)).sqrt() / cfg.v_ref
            } else {
                0.0
            }
        })
        .collect()
}

/// One cycle of per-weight noise draws; zero where no capacitor exists.
pub fn sample_noise<R: Rng + ?Sized>(
    realized: &RealizedWeights,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> Vec<f64> {
    sigmas(&realized.caps, cfg)
        .into_iter()
        .map(|s| {
            if s > 0.0 {
                s * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            }
        })
        .collect()
}

/// Seeded per-weight kT/C noise source for simulation.
#[derive(Clone, Debug)]
pub struct KtcNoise {
    sigmas: Vec<f64>,
    rng: ChaCha8Rng,
}

impl KtcNoise {
    /// Noise for per-weight capacitors `caps` (pF, zero for absent ones).
    pub fn new(caps: &[f64], cfg: &NoiseConfig, seed: u64) -> Self {
        KtcNoise {
            sigmas: sigmas(caps, cfg),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

impl WeightNoise for KtcNoise {
    fn fill(&mut self, out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(&self.sigmas) {
            *o = if *s > 0.0 {
                s * self.rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
        }
    }
}

/// Per-stage amplitude `A_k` such that the summed per-weight noise of stage
/// `k` is Gaussian with deviation `A_k / sqrt(C_k)` (C_k in pF):
/// `A_k² = Σ_j kT / (|W^i_kj| · 1 pF) / v_ref²` over nonzero weights.
pub fn stage_noise_amplitudes(stages: usize, w_int: &[i32], cfg: &NoiseConfig) -> Vec<f64> {
    let cols = 4 * stages + 1;
    (0..stages)
        .map(|k| {
            let inv: f64 = w_int[k * cols..(k + 1) * cols]
                .iter()
                .filter(|w| **w != 0)
                .map(|w| 1.0 / f64::from(w.unsigned_abs()))
                .sum();
            (BOLTZMANN * cfg.temperature * inv / PICO).sqrt() / cfg.v_ref
        })
        .collect()
}
