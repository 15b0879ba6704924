//! Conversion quality as effective number of bits, and hardware complexity
//! counts of a realized encoder.
//!
//! ENOB is the resolution of an ideal uniform quantizer with the same RMS
//! error over a full scale of 1.0 (the DAC span):
//! `ENOB = log2(FS / (sqrt(12) · RMS))`.

use serde::{Deserialize, Serialize};

use crate::constraints::{KtcNoise, NoiseConfig, RealizedWeights};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::seeding::derive_seed;
use crate::topology::{column, Signal};

/// ENOB reported for an exact conversion.
pub const ENOB_CEILING: f64 = 24.0;

/// DAC span of the ±0.5 feedback levels.
pub const FULL_SCALE: f64 = 1.0;

/// Test-grid size and range used for SQNR/SNR.
pub const GRID_POINTS: usize = 1000;
pub const GRID_RANGE: (f64, f64) = (-0.35, 0.35);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Enob {
    pub bits: f64,
    /// True when the RMS error was exactly zero and `bits` is the ceiling.
    pub exact: bool,
}

/// ENOB of a given RMS error.
pub fn enob_from_rms(rms: f64, full_scale: f64) -> Result<Enob> {
    if !(full_scale > 0.0) {
        return Err(Error::Domain("full scale must be positive".into()));
    }
    if !rms.is_finite() || rms < 0.0 {
        return Err(Error::Domain(format!("invalid RMS error {rms}")));
    }
    if rms == 0.0 {
        return Ok(Enob {
            bits: ENOB_CEILING,
            exact: true,
        });
    }
    Ok(Enob {
        bits: (full_scale / (12f64.sqrt() * rms)).log2().min(ENOB_CEILING),
        exact: false,
    })
}

pub fn enob_from_errors(errors: &[f64], full_scale: f64) -> Result<Enob> {
    if errors.is_empty() {
        return Err(Error::Domain("no conversion errors".into()));
    }
    let ms = errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64;
    enob_from_rms(ms.sqrt(), full_scale)
}

/// `count` evenly spaced DC levels over `[lo, hi]`, endpoints included.
pub fn uniform_grid(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// The standard 1000-point grid over [-0.35, 0.35].
pub fn test_grid() -> Vec<f64> {
    uniform_grid(GRID_POINTS, GRID_RANGE.0, GRID_RANGE.1)
}

/// Noise-free ENOB after `cycles` cycles.
pub fn evaluate_sqnr(model: &Model, inputs: &[f64], cycles: usize) -> Result<Enob> {
    let y = model.estimates(inputs, cycles, None)?;
    let errs: Vec<f64> = inputs.iter().zip(&y).map(|(x, y)| x - y).collect();
    enob_from_errors(&errs, FULL_SCALE)
}

/// ENOB with kT/C noise, pooled over `trials` seeded noise realizations.
pub fn evaluate_snr(
    model: &Model,
    inputs: &[f64],
    cycles: usize,
    trials: usize,
    seed: u64,
    cfg: &NoiseConfig,
) -> Result<Enob> {
    let curve = enob_curve(model, inputs, cycles, Some((cfg, trials, seed)))?;
    Ok(curve.enob[cycles - 1])
}

/// ENOB after every cycle `1..=max_cycles`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnobCurve {
    pub enob: Vec<Enob>,
    /// `ENOB(max_cycles) / max_cycles`.
    pub average_per_cycle: f64,
}

/// Per-cycle ENOB from the intermediate readouts. With `noise`, errors are
/// pooled over `trials` realizations seeded from `seed`.
pub fn enob_curve(
    model: &Model,
    inputs: &[f64],
    max_cycles: usize,
    noise: Option<(&NoiseConfig, usize, u64)>,
) -> Result<EnobCurve> {
    let mut sq = vec![0.0; max_cycles];
    let mut count = 0usize;
    let mut accumulate = |y: &[Vec<f64>]| {
        for (x, ys) in inputs.iter().zip(y) {
            for (acc, v) in sq.iter_mut().zip(ys) {
                let e = x - v;
                *acc += e * e;
            }
        }
        count += inputs.len();
    };
    match noise {
        None => accumulate(&model.convert(inputs, max_cycles, None)?.y),
        Some((cfg, trials, seed)) => {
            if trials == 0 {
                return Err(Error::Domain("at least one noise trial required".into()));
            }
            for t in 0..trials {
                let mut src = KtcNoise::new(&model.caps, cfg, derive_seed(seed, t as u64));
                accumulate(&model.convert(inputs, max_cycles, Some(&mut src))?.y);
            }
        }
    }
    if count == 0 {
        return Err(Error::Domain("no test inputs".into()));
    }
    let enob = sq
        .iter()
        .map(|s| enob_from_rms((s / count as f64).sqrt(), FULL_SCALE))
        .collect::<Result<Vec<_>>>()?;
    let average_per_cycle = enob[max_cycles - 1].bits / max_cycles as f64;
    Ok(EnobCurve {
        enob,
        average_per_cycle,
    })
}

/// Stages with a nonzero self-recurrent `ξ_kk` or `ξ*_kk` weight.
pub fn enis(realized: &RealizedWeights) -> usize {
    let cols = 4 * realized.stages + 1;
    (0..realized.stages)
        .filter(|&k| {
            realized.w_int[k * cols + column(k, Signal::Xi)] != 0
                || realized.w_int[k * cols + column(k, Signal::XiStar)] != 0
        })
        .count()
}

/// Number of nonzero integer weights.
pub fn active_paths(realized: &RealizedWeights) -> usize {
    realized.w_int.iter().filter(|w| **w != 0).count()
}

/// Every reported metric of one converter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub sqnr_enob: f64,
    pub snr_enob: f64,
    pub enis: usize,
    pub ap: usize,
    pub c_tot: f64,
    pub enob_per_cycle: f64,
    /// Noisy ENOB after each cycle `1..=N`.
    pub enob_curve: Vec<f64>,
}

/// Evaluates the full bundle at the model's OSR on `inputs`.
pub fn evaluate_bundle(
    model: &Model,
    realized: &RealizedWeights,
    inputs: &[f64],
    trials: usize,
    seed: u64,
    cfg: &NoiseConfig,
) -> Result<MetricBundle> {
    let n = model.topology.osr;
    let sqnr = evaluate_sqnr(model, inputs, n)?;
    let curve = enob_curve(model, inputs, n, Some((cfg, trials, seed)))?;
    Ok(MetricBundle {
        sqnr_enob: sqnr.bits,
        snr_enob: curve.enob[n - 1].bits,
        enis: enis(realized),
        ap: active_paths(realized),
        c_tot: realized.c_tot,
        enob_per_cycle: curve.average_per_cycle,
        enob_curve: curve.enob.iter().map(|e| e.bits).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::first_order_model;
    use proptest::prelude::*;

    #[test]
    fn ten_bit_rms() {
        let rms = 1.0 / (1024.0 * 12f64.sqrt());
        let e = enob_from_rms(rms, 1.0).unwrap();
        assert!((e.bits - 10.0).abs() < 1e-12);
        assert!(!e.exact);
        let e2 = enob_from_rms(2.0 * rms, 1.0).unwrap();
        assert!((e.bits - e2.bits - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_error_hits_ceiling() {
        let e = enob_from_errors(&[0.0; 5], 1.0).unwrap();
        assert_eq!(e.bits, 24.0);
        assert!(e.exact);
        assert!(enob_from_errors(&[], 1.0).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let g = test_grid();
        assert_eq!(g.len(), 1000);
        assert_eq!(g[0], -0.35);
        assert!((g[999] - 0.35).abs() < 1e-15);
    }

    #[test]
    fn first_order_sqnr_grows_with_cycles() {
        let m = first_order_model(80).unwrap();
        let g = test_grid();
        let s80 = evaluate_sqnr(&m, &g, 80).unwrap().bits;
        let s1 = evaluate_sqnr(&m, &g, 1).unwrap().bits;
        assert!(s80 >= 6.0, "{s80}");
        assert!(s1 < s80);
        assert_eq!(s80, evaluate_sqnr(&m, &g, 80).unwrap().bits);
    }

    #[test]
    fn curve_average_is_last_over_cycles() {
        let m = first_order_model(80).unwrap();
        let c = enob_curve(&m, &test_grid(), 80, None).unwrap();
        assert_eq!(c.enob.len(), 80);
        assert_eq!(c.average_per_cycle, c.enob[79].bits / 80.0);
    }

    #[test]
    fn counts_on_zero_matrix() {
        let r = RealizedWeights::from_integers(3, 8, vec![0; 39], vec![0; 39], 0.1, vec![1.0; 3])
            .unwrap();
        assert_eq!(enis(&r), 0);
        assert_eq!(active_paths(&r), 0);
        let full = RealizedWeights::from_integers(3, 8, vec![1; 39], vec![1; 39], 0.1, vec![1.0; 3])
            .unwrap();
        assert_eq!(active_paths(&full), 39);
        assert_eq!(enis(&full), 3);
    }

    #[test]
    fn enis_diagonal_rule() {
        let mut w = vec![0; 39];
        w[column(0, Signal::Xi)] = 1;
        w[2 * 13 + column(2, Signal::XiStar)] = -2;
        w[13 + column(0, Signal::XiStar)] = 3;
        let mask = w.iter().map(|v| u8::from(*v != 0)).collect();
        let r = RealizedWeights::from_integers(3, 8, w, mask, 0.1, vec![1.0; 3]).unwrap();
        assert_eq!(enis(&r), 2);
    }

    proptest! {
        #[test]
        fn enob_strictly_decreasing(a in 1e-8f64..1.0, f in 1.0001f64..10.0) {
            let lo = enob_from_rms(a, 1.0).unwrap().bits;
            let hi = enob_from_rms(a * f, 1.0).unwrap().bits;
            prop_assume!(lo < ENOB_CEILING);
            prop_assert!(hi < lo);
        }
    }
}
