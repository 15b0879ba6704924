//! Structural hyperparameters of a K-stage modulator and its decoder.
//!
//! The encoder weight matrix has one row per stage and `4K + 1` columns.
//! Column 0 multiplies the input sample; stage `j` (0-based) then owns the
//! four columns `1 + 4j ..= 4 + 4j`, multiplying `ζ_j`, `ξ_j`, `ζ*_j` and
//! `ξ*_j` in that order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported stage count.
pub const MAX_STAGES: usize = 8;

/// Which of the four per-stage signals a weight column multiplies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Signal {
    /// Non-delayed quantized output `ζ`.
    Zeta,
    /// Non-delayed stage output `ξ`.
    Xi,
    /// Delayed quantized output `ζ*`.
    ZetaStar,
    /// Delayed stage output `ξ*`.
    XiStar,
}

impl Signal {
    pub const ALL: [Signal; 4] = [Signal::Zeta, Signal::Xi, Signal::ZetaStar, Signal::XiStar];

    fn offset(self) -> usize {
        match self {
            Signal::Zeta => 0,
            Signal::Xi => 1,
            Signal::ZetaStar => 2,
            Signal::XiStar => 3,
        }
    }
}

/// Column index of the input term.
pub const INPUT_COL: usize = 0;

/// Column of the weight that feeds `signal` of stage `source` (0-based).
pub fn column(source: usize, signal: Signal) -> usize {
    1 + 4 * source + signal.offset()
}

/// Inverse of [`column`]; `None` for the input column.
pub fn column_source(col: usize) -> Option<(usize, Signal)> {
    if col == INPUT_COL {
        return None;
    }
    let c = col - 1;
    Some((c / 4, Signal::ALL[c % 4]))
}

/// Number of weight columns for `stages` stages.
pub fn columns(stages: usize) -> usize {
    4 * stages + 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    /// Number of modulator stages K.
    pub stages: usize,
    /// Maximum oversampling ratio N (conversion cycles).
    pub osr: usize,
    /// Weight quantization bound Q: integer weights lie in `[-Q, Q]`.
    pub levels: u32,
    /// Per-stage saturation bounds δ_k.
    pub delta: Vec<f64>,
    /// Feedback DAC levels (low, high).
    pub dac_levels: (f64, f64),
    /// Number of cascaded accumulator cells J in the decoder.
    pub decoder_depth: usize,
}

impl Topology {
    /// Topology with a uniform saturation bound, ±0.5 DAC and `J = K`.
    pub fn new(stages: usize, osr: usize, levels: u32, delta: f64) -> Result<Self> {
        let t = Topology {
            stages,
            osr,
            levels,
            delta: vec![delta; stages],
            dac_levels: (-0.5, 0.5),
            decoder_depth: stages,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_decoder_depth(mut self, depth: usize) -> Result<Self> {
        self.decoder_depth = depth;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 || self.stages > MAX_STAGES {
            return Err(Error::Domain(format!(
                "stage count {} outside 1..={MAX_STAGES}",
                self.stages
            )));
        }
        if self.osr == 0 {
            return Err(Error::Domain("OSR must be at least 1".into()));
        }
        if self.levels == 0 {
            return Err(Error::Domain("quantization levels must be at least 1".into()));
        }
        if self.delta.len() != self.stages {
            return Err(Error::Structural(format!(
                "{} saturation bounds for {} stages",
                self.delta.len(),
                self.stages
            )));
        }
        if self.delta.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::Domain("saturation bounds must be positive".into()));
        }
        let (lo, hi) = self.dac_levels;
        if !(hi > 0.0) || lo != -hi {
            return Err(Error::Domain(format!(
                "DAC levels ({lo}, {hi}) are not symmetric about zero"
            )));
        }
        if self.decoder_depth == 0 {
            return Err(Error::Domain("decoder depth must be at least 1".into()));
        }
        Ok(())
    }

    /// Width of a weight row, `4K + 1`.
    pub fn columns(&self) -> usize {
        columns(self.stages)
    }

    /// Total number of encoder weights, `K(4K + 1)`.
    pub fn weight_count(&self) -> usize {
        self.stages * self.columns()
    }

    /// Magnitude of the DAC feedback level.
    pub fn dac_level(&self) -> f64 {
        self.dac_levels.1
    }
}
