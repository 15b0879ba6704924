//! Encoder and decoder composed into a complete converter.

use serde::{Deserialize, Serialize};

use crate::decoder::DecoderParams;
use crate::encoder::{check_inputs, reset_state, step, EncoderWeights, WeightNoise};
use crate::error::{Error, Result};
use crate::topology::Topology;

/// A fully specified converter ready for simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub topology: Topology,
    pub weights: EncoderWeights,
    pub decoder: DecoderParams,
    /// Per-weight sampling capacitors in pF, row-major like the weights.
    /// Zero where no capacitor exists.
    pub caps: Vec<f64>,
}

/// Per-cycle record of a batch conversion.
#[derive(Clone, Debug, PartialEq)]
pub struct ConversionTrace {
    /// Decoded estimate after every cycle, `[sample][cycle]`.
    pub y: Vec<Vec<f64>>,
    /// Stage outputs ξ_k after the last cycle, `[sample][stage]`.
    pub xi_final: Vec<Vec<f64>>,
    /// Pre-saturation stage values after the last cycle, `[sample][stage]`.
    /// This is what the dynamic-range regularizer penalizes.
    pub drive_final: Vec<Vec<f64>>,
    /// `ζ_K` per cycle, `[sample][cycle]`.
    pub bitstream: Vec<Vec<f64>>,
}

impl ConversionTrace {
    /// Estimates after exactly `cycles` cycles.
    pub fn estimates_at(&self, cycles: usize) -> Vec<f64> {
        self.y.iter().map(|y| y[cycles - 1]).collect()
    }
}

impl Model {
    pub fn new(
        topology: Topology,
        weights: EncoderWeights,
        decoder: DecoderParams,
        caps: Vec<f64>,
    ) -> Result<Self> {
        topology.validate()?;
        if weights.stages() != topology.stages {
            return Err(Error::Structural("weights and topology disagree on K".into()));
        }
        if decoder.depth() != topology.decoder_depth {
            return Err(Error::Structural(format!(
                "decoder has {} cells, topology expects {}",
                decoder.depth(),
                topology.decoder_depth
            )));
        }
        if decoder.norm_gains.len() < topology.osr {
            return Err(Error::Structural("decoder normalized over fewer than N cycles".into()));
        }
        if caps.len() != topology.weight_count() {
            return Err(Error::Structural(format!(
                "{} capacitors for {} weights",
                caps.len(),
                topology.weight_count()
            )));
        }
        Ok(Model {
            topology,
            weights,
            decoder,
            caps,
        })
    }

    /// Converts every DC input over `cycles` cycles.
    pub fn convert(
        &self,
        inputs: &[f64],
        cycles: usize,
        mut noise: Option<&mut dyn WeightNoise>,
    ) -> Result<ConversionTrace> {
        let t = &self.topology;
        check_inputs(inputs, t, cycles)?;
        let k = t.stages;
        let mut draws = vec![0.0; t.weight_count()];
        let mut drive = vec![0.0; k];
        let mut cells = vec![0.0; self.decoder.depth()];
        let mut bits = Vec::with_capacity(cycles);
        let mut trace = ConversionTrace {
            y: Vec::with_capacity(inputs.len()),
            xi_final: Vec::with_capacity(inputs.len()),
            drive_final: Vec::with_capacity(inputs.len()),
            bitstream: Vec::with_capacity(inputs.len()),
        };
        for &x in inputs {
            let mut state = reset_state(t);
            bits.clear();
            for _ in 0..cycles {
                let n = match noise.as_deref_mut() {
                    Some(src) => {
                        src.fill(&mut draws);
                        Some(draws.as_slice())
                    }
                    None => None,
                };
                step(&mut state, x, &self.weights, n, &t.delta, &mut drive);
                bits.push(state.zeta[k - 1]);
            }
            let mut y = Vec::with_capacity(cycles);
            self.decoder.decode_into(&bits, &mut cells, &mut y);
            trace.y.push(y);
            trace.xi_final.push(state.xi.clone());
            trace.drive_final.push(drive.clone());
            trace.bitstream.push(bits.clone());
        }
        Ok(trace)
    }

    /// Estimates after `cycles` cycles only, without keeping the trace.
    pub fn estimates(
        &self,
        inputs: &[f64],
        cycles: usize,
        noise: Option<&mut dyn WeightNoise>,
    ) -> Result<Vec<f64>> {
        Ok(self.convert(inputs, cycles, noise)?.estimates_at(cycles))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::first_order_model;
    use crate::decoder::run_decoder;
    use crate::encoder::run_encoder;

    #[test]
    fn first_order_quarter() {
        let m = first_order_model(4).unwrap();
        let tr = m.convert(&[0.25], 4, None).unwrap();
        assert_eq!(tr.y[0][3], 0.25);
        assert_eq!(tr.xi_final[0], vec![0.25]);
    }

    #[test]
    fn convert_is_decoder_after_encoder() {
        let m = first_order_model(50).unwrap();
        let xs = [-0.31, 0.0, 0.12, 0.4];
        let tr = m.convert(&xs, 50, None).unwrap();
        let enc = run_encoder(&xs, &m.weights, &m.topology, 50, None).unwrap();
        assert_eq!(enc.bitstream, tr.bitstream);
        assert_eq!(run_decoder(&enc.bitstream, &m.decoder).unwrap(), tr.y);
    }

    #[test]
    fn deterministic_without_noise() {
        let m = first_order_model(80).unwrap();
        let xs: Vec<f64> = (0..50).map(|i| -0.35 + 0.014 * i as f64).collect();
        assert_eq!(m.convert(&xs, 80, None).unwrap(), m.convert(&xs, 80, None).unwrap());
    }

    #[test]
    fn sign_symmetry_away_from_ties() {
        let m = first_order_model(80).unwrap();
        let a = m.convert(&[0.1234567], 80, None).unwrap();
        let b = m.convert(&[-0.1234567], 80, None).unwrap();
        for (p, q) in a.y[0].iter().zip(&b.y[0]) {
            assert_eq!(*p, -*q);
        }
    }
}
