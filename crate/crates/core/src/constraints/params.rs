use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::decoder::DecoderParams;
use crate::encoder::EncoderWeights;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::topology::Topology;

/// Lower bound on every unit capacitor, in pF.
pub const C_MIN_PF: f64 = 0.01;

/// Every trainable quantity of a converter.
///
/// The quantization step is stored as `ln q` and unit capacitors as `θ_k`
/// with `C_k = C_MIN_PF + exp(θ_k)`, so both stay positive under any update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentParams {
    pub stages: usize,
    /// Latent weights `W^l`, row-major `K × (4K+1)`.
    pub weights: Vec<f64>,
    /// Latent mask `M^l`, same shape as the weights.
    pub mask: Vec<f64>,
    /// `ln q`.
    pub log_step: f64,
    pub log_caps: Vec<f64>,
    /// Decoder input weights Ω.
    pub input_scales: Vec<f64>,
    /// Decoder recurrent weights ρ.
    pub recurrent: Vec<f64>,
}

/// Offsets of each parameter group in the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub weights: Range<usize>,
    pub mask: Range<usize>,
    pub step: usize,
    pub log_caps: Range<usize>,
    pub input_scales: Range<usize>,
    pub recurrent: Range<usize>,
}

impl ParamLayout {
    pub fn new(stages: usize, depth: usize) -> Self {
        let w = stages * (4 * stages + 1);
        let weights = 0..w;
        let mask = w..2 * w;
        let step = 2 * w;
        let log_caps = step + 1..step + 1 + stages;
        let input_scales = log_caps.end..log_caps.end + depth;
        let recurrent = input_scales.end..input_scales.end + depth;
        ParamLayout {
            weights,
            mask,
            step,
            log_caps,
            input_scales,
            recurrent,
        }
    }

    pub fn len(&self) -> usize {
        self.recurrent.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True for every encoder-side entry (weights, mask, step, capacitors).
    pub fn encoder_entries(&self) -> Vec<bool> {
        (0..self.len())
            .map(|i| i < self.input_scales.start)
            .collect()
    }
}

pub(crate) fn cap_from_log(theta: f64) -> f64 {
    C_MIN_PF + theta.exp()
}

pub(crate) fn log_from_cap(cap: f64) -> f64 {
    (cap - C_MIN_PF).ln()
}

impl LatentParams {
    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.stages, self.input_scales.len())
    }

    /// Unit capacitors `C_k` in pF.
    /// Quantization step q.
    pub fn step(&self) -> f64 {
        self.log_step.exp()
    }

    pub fn unit_caps(&self) -> Vec<f64> {
        self.log_caps.iter().map(|t| cap_from_log(*t)).collect()
    }

    pub fn set_unit_caps(&mut self, caps_pf: &[f64]) -> Result<()> {
        if caps_pf.len() != self.stages || caps_pf.iter().any(|c| !(*c > C_MIN_PF)) {
            return Err(Error::Domain(format!(
                "unit capacitors must number {} and exceed {C_MIN_PF} pF",
                self.stages
            )));
        }
        self.log_caps = caps_pf.iter().map(|c| log_from_cap(*c)).collect();
        Ok(())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layout().len());
        v.extend_from_slice(&self.weights);
        v.extend_from_slice(&self.mask);
        v.push(self.log_step);
        v.extend_from_slice(&self.log_caps);
        v.extend_from_slice(&self.input_scales);
        v.extend_from_slice(&self.recurrent);
        v
    }

    pub fn from_flat(stages: usize, depth: usize, flat: &[f64]) -> Result<Self> {
        let l = ParamLayout::new(stages, depth);
        if flat.len() != l.len() {
            return Err(Error::Structural(format!(
                "{} values for a parameter vector of {}",
                flat.len(),
                l.len()
            )));
        }
        Ok(LatentParams {
            stages,
            weights: flat[l.weights].to_vec(),
            mask: flat[l.mask].to_vec(),
            log_step: flat[l.step],
            log_caps: flat[l.log_caps].to_vec(),
            input_scales: flat[l.input_scales].to_vec(),
            recurrent: flat[l.recurrent].to_vec(),
        })
    }

    pub fn validate(&self, topology: &Topology) -> Result<()> {
        let n = topology.weight_count();
        if self.stages != topology.stages || self.weights.len() != n || self.mask.len() != n {
            return Err(Error::Structural("latent weights do not match topology".into()));
        }
        if self.log_caps.len() != self.stages {
            return Err(Error::Structural("one unit capacitor per stage required".into()));
        }
        if self.input_scales.len() != topology.decoder_depth
            || self.recurrent.len() != topology.decoder_depth
        {
            return Err(Error::Structural("decoder weights do not match depth".into()));
        }
        Ok(())
    }

    pub fn decoder(&self, cycles: usize) -> Result<DecoderParams> {
        DecoderParams::new(self.input_scales.clone(), self.recurrent.clone(), cycles)
    }
}

/// Hardware view of an encoder: integer weights, mask and capacitors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizedWeights {
    pub stages: usize,
    /// Quantization bound Q.
    pub levels: u32,
    /// Binary mask M.
    pub mask: Vec<u8>,
    /// Integer weights `W^i`, in `[-Q, Q]`.
    pub w_int: Vec<i32>,
    /// Quantization step q.
    pub step: f64,
    /// Effective weights `q · W^i`.
    pub weights: EncoderWeights,
    /// Unit capacitor per stage, pF.
    pub unit_caps: Vec<f64>,
    /// Per-weight capacitors `C_k · |W^i|`, pF.
    pub caps: Vec<f64>,
    /// Sum of all capacitors, pF.
    pub c_tot: f64,
}

/// Strict heaviside of the latent mask.
pub fn binarize_mask(latent: &[f64]) -> Vec<u8> {
    let m: Vec<u8> = latent.iter().map(|v| u8::from(*v > 0.0)).collect();
    if !m.is_empty() && m.iter().all(|b| *b == 0) {
        log::warn!("every encoder path is masked: the encoder is degenerate");
    }
    m
}

impl RealizedWeights {
    /// Builds the hardware view from integer weights directly.
    pub fn from_integers(
        stages: usize,
        levels: u32,
        w_int: Vec<i32>,
        mask: Vec<u8>,
        step: f64,
        unit_caps: Vec<f64>,
    ) -> Result<Self> {
        let cols = 4 * stages + 1;
        if w_int.len() != stages * cols || mask.len() != w_int.len() || unit_caps.len() != stages
        {
            return Err(Error::Structural("realized weight shapes disagree".into()));
        }
        if !(step > 0.0) {
            return Err(Error::Domain(format!("quantization step {step} is not positive")));
        }
        if w_int.iter().any(|w| w.unsigned_abs() > levels) {
            return Err(Error::Domain(format!("integer weight exceeds ±{levels}")));
        }
        if w_int.iter().zip(&mask).any(|(w, m)| *m == 0 && *w != 0) {
            return Err(Error::Domain("masked entry carries a nonzero weight".into()));
        }
        let weights = EncoderWeights::from_rows(
            stages,
            w_int.iter().map(|w| step * f64::from(*w)).collect(),
        )?;
        let mut caps = Vec::with_capacity(w_int.len());
        let mut c_tot = 0.0;
        for (i, w) in w_int.iter().enumerate() {
            let c = unit_caps[i / cols];
            let a = f64::from(w.unsigned_abs());
            caps.push(c * a);
            c_tot += c * a;
        }
        Ok(RealizedWeights {
            stages,
            levels,
            mask,
            w_int,
            step,
            weights,
            unit_caps,
            caps,
            c_tot,
        })
    }

    /// Converter made of these weights and `decoder`.
    pub fn model(&self, topology: &Topology, decoder: DecoderParams) -> Result<Model> {
        Model::new(
            topology.clone(),
            self.weights.clone(),
            decoder,
            self.caps.clone(),
        )
    }
}

/// `W = q · clip_{±Q}(round((M ⊙ W^l) / q))`, rounding ties away from zero.
pub fn realize_weights(params: &LatentParams, levels: u32) -> Result<RealizedWeights> {
    let q = params.step();
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::Domain(format!("quantization step {q} is not positive")));
    }
    if params.weights.len() != params.mask.len() {
        return Err(Error::Structural("latent weights and mask differ in shape".into()));
    }
    let mask = binarize_mask(&params.mask);
    let bound = f64::from(levels);
    let w_int: Vec<i32> = params
        .weights
        .iter()
        .zip(&mask)
        .map(|(w, m)| {
            let v = (f64::from(*m) * w) / q;
            v.round().clamp(-bound, bound) as i32
        })
        .collect();
    RealizedWeights::from_integers(
        params.stages,
        levels,
        w_int,
        mask,
        q,
        params.unit_caps(),
    )
}
