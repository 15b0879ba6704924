//! The K-stage encoding modulator.
//!
//! One conversion cycle runs in three phases. The non-delayed signals are
//! first loaded from the delayed ones, then the stages are evaluated in
//! ascending order (stage `k` sees the refreshed `ξ_j`/`ζ_j` of every stage
//! `j < k` and last cycle's copies of the rest), and finally every stage's
//! fresh values are committed as next cycle's delayed signals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{column, Signal, Topology, INPUT_COL};

/// Saturating activation: clips `v` to `[-delta, delta]`.
#[inline]
pub fn hardtanh(v: f64, delta: f64) -> f64 {
    v.clamp(-delta, delta)
}

/// One-bit quantizer with ±0.5 output; zero maps to +0.5.
#[inline]
pub fn quantize_sign(xi: f64) -> f64 {
    if xi >= 0.0 {
        0.5
    } else {
        -0.5
    }
}

/// Source of per-weight additive noise, one draw per weight entry per cycle.
pub trait WeightNoise {
    /// Fills `out` (row-major `K × (4K+1)`) with this cycle's draws.
    fn fill(&mut self, out: &mut [f64]);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    pub xi: Vec<f64>,
    pub zeta: Vec<f64>,
    pub xi_star: Vec<f64>,
    pub zeta_star: Vec<f64>,
}

/// Integrator and quantizer reset: every signal starts at zero.
pub fn reset_state(topology: &Topology) -> EncoderState {
    let k = topology.stages;
    EncoderState {
        xi: vec![0.0; k],
        zeta: vec![0.0; k],
        xi_star: vec![0.0; k],
        zeta_star: vec![0.0; k],
    }
}

impl EncoderState {
    pub fn stages(&self) -> usize {
        self.xi.len()
    }

    fn check(&self, stages: usize) -> Result<()> {
        let ok = self.xi.len() == stages
            && self.zeta.len() == stages
            && self.xi_star.len() == stages
            && self.zeta_star.len() == stages;
        if ok {
            Ok(())
        } else {
            Err(Error::Structural(format!(
                "encoder state does not have {stages} stages"
            )))
        }
    }
}

/// Effective encoder weight matrix, `K` rows by `4K + 1` columns, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderWeights {
    stages: usize,
    data: Vec<f64>,
}

impl EncoderWeights {
    pub fn zeros(stages: usize) -> Self {
        EncoderWeights {
            stages,
            data: vec![0.0; stages * (4 * stages + 1)],
        }
    }

    pub fn from_rows(stages: usize, data: Vec<f64>) -> Result<Self> {
        if stages == 0 || data.len() != stages * (4 * stages + 1) {
            return Err(Error::Structural(format!(
                "{} weights cannot form a {stages} x {} matrix",
                data.len(),
                4 * stages + 1
            )));
        }
        Ok(EncoderWeights { stages, data })
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn columns(&self) -> usize {
        4 * self.stages + 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, stage: usize) -> &[f64] {
        let c = self.columns();
        &self.data[stage * c..(stage + 1) * c]
    }

    pub fn get(&self, stage: usize, col: usize) -> f64 {
        self.data[stage * self.columns() + col]
    }

    pub fn set(&mut self, stage: usize, col: usize, value: f64) {
        let c = self.columns();
        self.data[stage * c + col] = value;
    }

    /// Weight from the input into `stage`.
    pub fn input(&self, stage: usize) -> f64 {
        self.get(stage, INPUT_COL)
    }

    /// Weight from `signal` of stage `source` into stage `target`.
    pub fn link(&self, target: usize, source: usize, signal: Signal) -> f64 {
        self.get(target, column(source, signal))
    }

    fn check(&self, topology: &Topology) -> Result<()> {
        if self.stages != topology.stages {
            return Err(Error::Structural(format!(
                "weights have {} stages, topology {}",
                self.stages, topology.stages
            )));
        }
        Ok(())
    }
}

/// Advances `state` by one cycle in place and writes each stage's
/// pre-saturation value into `drive`. `noise`, when given, holds one draw
/// per weight entry and is added to the matching product term.
pub(crate) fn step(
    state: &mut EncoderState,
    x_n: f64,
    weights: &EncoderWeights,
    noise: Option<&[f64]>,
    delta: &[f64],
    drive: &mut [f64],
) {
    let k = weights.stages;
    let cols = weights.columns();
    state.xi.copy_from_slice(&state.xi_star);
    state.zeta.copy_from_slice(&state.zeta_star);
    for stage in 0..k {
        let row = weights.row(stage);
        let mut acc = 0.0;
        match noise {
            None => {
                acc += row[0] * x_n;
                for j in 0..k {
                    let b = 1 + 4 * j;
                    acc += row[b] * state.zeta[j];
                    acc += row[b + 1] * state.xi[j];
                    acc += row[b + 2] * state.zeta_star[j];
                    acc += row[b + 3] * state.xi_star[j];
                }
            }
            Some(n) => {
                let n = &n[stage * cols..(stage + 1) * cols];
                acc += row[0] * x_n + n[0];
                for j in 0..k {
                    let b = 1 + 4 * j;
                    acc += row[b] * state.zeta[j] + n[b];
                    acc += row[b + 1] * state.xi[j] + n[b + 1];
                    acc += row[b + 2] * state.zeta_star[j] + n[b + 2];
                    acc += row[b + 3] * state.xi_star[j] + n[b + 3];
                }
            }
        }
        drive[stage] = acc;
        let xi = hardtanh(acc, delta[stage]);
        state.xi[stage] = xi;
        state.zeta[stage] = quantize_sign(xi);
    }
    state.xi_star.copy_from_slice(&state.xi);
    state.zeta_star.copy_from_slice(&state.zeta);
}

/// One conversion cycle: returns the successor of `state`.
pub fn encoder_cycle(
    state: &EncoderState,
    x_n: f64,
    weights: &EncoderWeights,
    noise: Option<&[f64]>,
    topology: &Topology,
) -> Result<EncoderState> {
    weights.check(topology)?;
    state.check(topology.stages)?;
    if let Some(n) = noise {
        if n.len() != topology.weight_count() {
            return Err(Error::Structural(format!(
                "{} noise draws for {} weights",
                n.len(),
                topology.weight_count()
            )));
        }
    }
    let mut next = state.clone();
    let mut drive = vec![0.0; topology.stages];
    step(&mut next, x_n, weights, noise, &topology.delta, &mut drive);
    Ok(next)
}

/// Bitstreams and stage trajectories of a batch of DC conversions.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderRun {
    /// `ζ_K[1..=cycles]` per sample.
    pub bitstream: Vec<Vec<f64>>,
    /// `ξ_k` after every cycle, indexed `[sample][cycle][stage]`.
    pub xi: Vec<Vec<Vec<f64>>>,
    /// Pre-saturation stage values of the last cycle, `[sample][stage]`.
    pub drive_final: Vec<Vec<f64>>,
}

pub(crate) fn check_inputs(inputs: &[f64], topology: &Topology, cycles: usize) -> Result<()> {
    if cycles == 0 || cycles > topology.osr {
        return Err(Error::Domain(format!(
            "cycle count {cycles} outside 1..={}",
            topology.osr
        )));
    }
    if let Some(x) = inputs.iter().find(|x| !(x.abs() <= 0.5)) {
        return Err(Error::Domain(format!("input {x} outside [-0.5, 0.5]")));
    }
    Ok(())
}

/// Runs `cycles` DC conversion cycles for every input, from reset.
pub fn run_encoder(
    inputs: &[f64],
    weights: &EncoderWeights,
    topology: &Topology,
    cycles: usize,
    mut noise: Option<&mut dyn WeightNoise>,
) -> Result<EncoderRun> {
    weights.check(topology)?;
    check_inputs(inputs, topology, cycles)?;
    let k = topology.stages;
    let mut draws = vec![0.0; topology.weight_count()];
    let mut drive = vec![0.0; k];
    let mut run = EncoderRun {
        bitstream: Vec::with_capacity(inputs.len()),
        xi: Vec::with_capacity(inputs.len()),
        drive_final: Vec::with_capacity(inputs.len()),
    };
    for &x in inputs {
        let mut state = reset_state(topology);
        let mut bits = Vec::with_capacity(cycles);
        let mut xi = Vec::with_capacity(cycles);
        for _ in 0..cycles {
            let n = match noise.as_deref_mut() {
                Some(src) => {
                    src.fill(&mut draws);
                    Some(draws.as_slice())
                }
                None => None,
            };
            step(&mut state, x, weights, n, &topology.delta, &mut drive);
            bits.push(state.zeta[k - 1]);
            xi.push(state.xi.clone());
        }
        run.bitstream.push(bits);
        run.xi.push(xi);
        run.drive_final.push(drive.clone());
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_order() -> (Topology, EncoderWeights) {
        let t = Topology::new(1, 200, 8, 0.5).unwrap();
        let mut w = EncoderWeights::zeros(1);
        w.set(0, INPUT_COL, 0.5);
        w.set(0, column(0, Signal::ZetaStar), -0.5);
        w.set(0, column(0, Signal::XiStar), 1.0);
        (t, w)
    }

    #[test]
    fn hardtanh_regions() {
        assert_eq!(hardtanh(0.3, 0.4), 0.3);
        assert_eq!(hardtanh(0.9, 0.4), 0.4);
        assert_eq!(hardtanh(-0.41, 0.4), -0.4);
    }

    #[test]
    fn quantizer_levels_and_tie() {
        assert_eq!(quantize_sign(0.125), 0.5);
        assert_eq!(quantize_sign(-0.125), -0.5);
        assert_eq!(quantize_sign(0.0), 0.5);
    }

    #[test]
    fn reset_is_all_zero() {
        for k in [2, 4] {
            let t = Topology::new(k, 10, 8, 0.4).unwrap();
            let s = reset_state(&t);
            assert_eq!(s.stages(), k);
            for v in [&s.xi, &s.zeta, &s.xi_star, &s.zeta_star] {
                assert!(v.iter().all(|x| *x == 0.0));
            }
            assert!(s.xi.iter().zip(&t.delta).all(|(x, d)| x.abs() <= *d));
        }
    }

    #[test]
    fn first_order_hand_unrolled() {
        // xi[1] = 0.125, zeta = +; xi[2] = 0.125 + 0.125 - 0.25 = 0.0 -> +;
        // xi[3] = 0.0 + 0.125 - 0.25 = -0.125 -> -; xi[4] = -0.125 + 0.125 + 0.25 = 0.25
        let (t, w) = first_order();
        let mut s = reset_state(&t);
        let expect = [(0.125, 0.5), (0.0, 0.5), (-0.125, -0.5), (0.25, 0.5)];
        for (xi, zeta) in expect {
            s = encoder_cycle(&s, 0.25, &w, None, &t).unwrap();
            assert_eq!(s.xi[0], xi);
            assert_eq!(s.zeta[0], zeta);
            assert_eq!(s.xi_star[0], xi);
        }
    }

    #[test]
    fn zero_weights_stay_zero() {
        let t = Topology::new(2, 10, 8, 0.4).unwrap();
        let w = EncoderWeights::zeros(2);
        let s = encoder_cycle(&reset_state(&t), 0.3, &w, None, &t).unwrap();
        assert_eq!(s.xi, vec![0.0, 0.0]);
        assert_eq!(s.zeta, vec![0.5, 0.5]);
    }

    #[test]
    fn run_encoder_bitstream_and_mean() {
        let (t, w) = first_order();
        let run = run_encoder(&[0.25], &w, &t, 4, None).unwrap();
        assert_eq!(run.bitstream[0], vec![0.5, 0.5, -0.5, 0.5]);
        let mean: f64 = run.bitstream[0].iter().sum::<f64>() / 4.0;
        assert_eq!(mean, 0.25);
        assert_eq!(run.drive_final[0], vec![0.25]);
    }

    #[test]
    fn zero_input_with_zero_input_column() {
        let t = Topology::new(2, 10, 8, 0.4).unwrap();
        let mut w = EncoderWeights::zeros(2);
        w.set(0, column(0, Signal::XiStar), 0.9);
        w.set(1, column(0, Signal::Xi), 0.7);
        let run = run_encoder(&[0.0], &w, &t, 10, None).unwrap();
        assert!(run.xi[0].iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_out_of_range_input_and_cycles() {
        let (t, w) = first_order();
        assert!(matches!(
            run_encoder(&[0.6], &w, &t, 4, None),
            Err(Error::Domain(_))
        ));
        assert!(run_encoder(&[0.1], &w, &t, 0, None).is_err());
        assert!(run_encoder(&[0.1], &w, &t, 201, None).is_err());
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let (t, w) = first_order();
        let t2 = Topology::new(2, 10, 8, 0.4).unwrap();
        assert!(matches!(
            encoder_cycle(&reset_state(&t2), 0.1, &w, None, &t2),
            Err(Error::Structural(_))
        ));
        assert!(matches!(
            encoder_cycle(&reset_state(&t), 0.1, &w, Some(&[0.0; 3]), &t),
            Err(Error::Structural(_))
        ));
    }
}
