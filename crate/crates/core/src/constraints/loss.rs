use serde::{Deserialize, Serialize};

use super::params::RealizedWeights;
use crate::error::{Error, Result};
use crate::model::ConversionTrace;

/// Balancing of the regularizers against the fidelity term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_dr: f64,
    pub lambda_tpt: f64,
    /// Total capacitor threshold, pF.
    pub tpt: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda_dr, self.lambda_tpt, self.tpt]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return Err(Error::Domain("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Log of the log-sum-exp of absolute conversion errors.
pub fn loss_lse(x_a: &[f64], x_q: &[f64]) -> Result<f64> {
    if x_a.len() != x_q.len() {
        return Err(Error::Structural(format!(
            "{} targets for {} estimates",
            x_a.len(),
            x_q.len()
        )));
    }
    if x_a.len() < 3 {
        return Err(Error::Domain(format!(
            "fidelity loss needs at least 3 samples, got {}",
            x_a.len()
        )));
    }
    let errs: Vec<f64> = x_a.iter().zip(x_q).map(|(a, q)| (a - q).abs()).collect();
    let m = errs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = errs.iter().map(|e| (e - m).exp()).sum();
    Ok((s.ln() + m).ln())
}

/// Squared excursion of end-of-conversion stage values beyond `±δ_k`.
/// `drive` is indexed `[sample][stage]`.
pub fn loss_dr(drive: &[Vec<f64>], delta: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for row in drive {
        if row.len() != delta.len() {
            return Err(Error::Structural(format!(
                "{} stage values for {} bounds",
                row.len(),
                delta.len()
            )));
        }
        for (v, d) in row.iter().zip(delta) {
            let e = v - v.clamp(-d, *d);
            total += e * e;
        }
    }
    Ok(total)
}

/// Linear hinge on total capacitance above the threshold.
pub fn loss_tpt(c_tot: f64, tpt: f64) -> f64 {
    (c_tot - tpt).max(0.0)
}

/// Fidelity at the last traced cycle plus weighted regularizers.
pub fn total_loss(
    x_a: &[f64],
    trace: &ConversionTrace,
    realized: &RealizedWeights,
    delta: &[f64],
    lw: &LossWeights,
) -> Result<f64> {
    let cycles = trace.y.first().map_or(0, Vec::len);
    if cycles == 0 {
        return Err(Error::Structural("empty conversion trace".into()));
    }
    let x_q = trace.estimates_at(cycles);
    Ok(loss_lse(x_a, &x_q)?
        + lw.lambda_dr * loss_dr(&trace.drive_final, delta)?
        + lw.lambda_tpt * loss_tpt(realized.c_tot, lw.tpt))
}
