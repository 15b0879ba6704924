//! Cascaded accumulator decoder with per-cycle output normalization.
//!
//! Cell `j` updates `u_j[n] = ρ_j·u_j[n-1] + Ω_j·in_j[n]`, where the first
//! cell consumes the bitstream and every later cell the previous cell's
//! output. The last cell's output is divided by `g[n]`, the cascade's own
//! response to a constant +0.5 bitstream divided by 0.5, so a full-scale
//! constant decodes to itself at every cycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    /// Input weights Ω_j, one per cell.
    pub input_scales: Vec<f64>,
    /// Recurrent weights ρ_j, one per cell; 1 is a pure accumulator.
    pub recurrent: Vec<f64>,
    /// Normalization divisors g[n] for n = 1..=N.
    pub norm_gains: Vec<f64>,
}

/// Response of the cascade to a constant +0.5 input, divided by 0.5.
pub fn compute_decoder_norm(
    input_scales: &[f64],
    recurrent: &[f64],
    depth: usize,
    cycles: usize,
) -> Result<Vec<f64>> {
    if depth == 0 || cycles == 0 {
        return Err(Error::Domain("decoder depth and cycles must be >= 1".into()));
    }
    if input_scales.len() != depth || recurrent.len() != depth {
        return Err(Error::Structural(format!(
            "decoder depth {depth} with {} input and {} recurrent weights",
            input_scales.len(),
            recurrent.len()
        )));
    }
    let mut cells = vec![0.0; depth];
    let mut gains = Vec::with_capacity(cycles);
    for n in 1..=cycles {
        let mut input = 0.5;
        for (j, u) in cells.iter_mut().enumerate() {
            *u = 0.0 + recurrent[j] * *u + input_scales[j] * input;
            input = *u;
        }
        let g = input / 0.5;
        if g == 0.0 || !g.is_finite() {
            return Err(Error::DegenerateDecoder { cycle: n });
        }
        gains.push(g);
    }
    Ok(gains)
}

impl DecoderParams {
    /// Decoder with the given cell weights, normalized over `cycles` cycles.
    pub fn new(input_scales: Vec<f64>, recurrent: Vec<f64>, cycles: usize) -> Result<Self> {
        let norm_gains =
            compute_decoder_norm(&input_scales, &recurrent, input_scales.len(), cycles)?;
        Ok(DecoderParams {
            input_scales,
            recurrent,
            norm_gains,
        })
    }

    /// `depth` pure accumulators with unit input weight.
    pub fn accumulators(depth: usize, cycles: usize) -> Result<Self> {
        Self::new(vec![1.0; depth], vec![1.0; depth], cycles)
    }

    pub fn depth(&self) -> usize {
        self.input_scales.len()
    }

    /// Decodes one bitstream, writing the normalized estimate after every cycle.
    pub(crate) fn decode_into(&self, bits: &[f64], cells: &mut [f64], out: &mut Vec<f64>) {
        cells.iter_mut().for_each(|c| *c = 0.0);
        out.clear();
        for (n, &b) in bits.iter().enumerate() {
            let mut input = b;
            for (j, u) in cells.iter_mut().enumerate() {
                *u = 0.0 + self.recurrent[j] * *u + self.input_scales[j] * input;
                input = *u;
            }
            out.push(input / self.norm_gains[n]);
        }
    }
}

/// Decodes every bitstream in the batch; `y[s][n-1]` is the estimate after `n` cycles.
pub fn run_decoder(bitstream: &[Vec<f64>], params: &DecoderParams) -> Result<Vec<Vec<f64>>> {
    if params.recurrent.len() != params.depth() || params.depth() == 0 {
        return Err(Error::Structural("decoder cell weights disagree in length".into()));
    }
    let mut cells = vec![0.0; params.depth()];
    bitstream
        .iter()
        .map(|bits| {
            if bits.len() > params.norm_gains.len() {
                return Err(Error::Structural(format!(
                    "bitstream of {} cycles exceeds {} normalization gains",
                    bits.len(),
                    params.norm_gains.len()
                )));
            }
            let mut y = Vec::with_capacity(bits.len());
            params.decode_into(bits, &mut cells, &mut y);
            Ok(y)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_accumulator_gain_is_cycle_count() {
        let g = compute_decoder_norm(&[1.0], &[1.0], 1, 80).unwrap();
        for (n, gn) in g.iter().enumerate() {
            assert_eq!(*gn, (n + 1) as f64);
        }
        assert_eq!(g[0], 1.0);
    }

    #[test]
    fn two_cell_gain_by_hand() {
        // constant 0.5: cell1 0.5, 1.0, 1.5; cell2 0.5, 1.5, 3.0
        let g = compute_decoder_norm(&[1.0, 1.0], &[1.0, 1.0], 2, 3).unwrap();
        assert_eq!(g, vec![1.0, 3.0, 6.0]);
    }

    #[test]
    fn mean_of_bitstream() {
        let d = DecoderParams::accumulators(1, 4).unwrap();
        let y = run_decoder(&[vec![0.5, 0.5, -0.5, 0.5]], &d).unwrap();
        assert_eq!(y[0][3], 0.25);
    }

    #[test]
    fn constant_full_scale_decodes_to_itself() {
        for depth in 1..=4 {
            let d = DecoderParams::accumulators(depth, 80).unwrap();
            let y = run_decoder(&[vec![0.5; 80], vec![-0.5; 80]], &d).unwrap();
            for n in 0..80 {
                assert!((y[0][n] - 0.5).abs() <= 1e-12);
                assert!((y[1][n] + 0.5).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn leaky_cells_stay_normalized() {
        let d = DecoderParams::new(vec![0.7, 1.3], vec![0.9, 0.95], 40).unwrap();
        let y = run_decoder(&[vec![0.5; 40]], &d).unwrap();
        assert!(y[0].iter().all(|v| (v - 0.5).abs() <= 1e-12));
    }

    #[test]
    fn zero_gain_is_degenerate() {
        assert!(matches!(
            compute_decoder_norm(&[0.0], &[1.0], 1, 5),
            Err(Error::DegenerateDecoder { cycle: 1 })
        ));
    }

    #[test]
    fn too_long_bitstream_is_rejected() {
        let d = DecoderParams::accumulators(1, 3).unwrap();
        assert!(matches!(
            run_decoder(&[vec![0.5; 4]], &d),
            Err(Error::Structural(_))
        ));
    }
}
