use super::{GradRule, Tape, Var};
use crate::error::{Error, Result};

/// Outcome of a finite-difference gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    /// Worst relative error over checked parameters.
    pub max_rel_error: f64,
    /// Index of the parameter with the worst error.
    pub worst: usize,
    /// Number of parameters compared.
    pub checked: usize,
    /// Parameters whose perturbation changes a branch decision.
    pub skipped: Vec<usize>,
}

/// Compares reverse-mode gradients of `model_eval` against central
/// differences at `params`.
///
/// A parameter is skipped when moving it by `±epsilon` or `±band_guard`
/// changes any branch decision of a piecewise primitive. Relative error is
/// `|fd - ad| / max(|fd|, |ad|, abs_floor)`, so gradients far below
/// `abs_floor` are compared in absolute terms.
pub fn finite_diff_check<F>(
    model_eval: F,
    params: &[f64],
    epsilon: f64,
    band_guard: f64,
    abs_floor: f64,
    rule: GradRule,
) -> Result<FdReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |p: &[f64]| -> Result<(f64, u64)> {
        let mut tape = Tape::new();
        tape.track_branches();
        let vars: Vec<Var> = p.iter().map(|v| tape.param(*v)).collect();
        let root = model_eval(&mut tape, &vars)?;
        let value = tape.scalar(root);
        if !value.is_finite() {
            return Err(Error::Numeric {
                node: tape.first_non_finite().unwrap_or(root.index()),
            });
        }
        Ok((value, tape.branch_signature().unwrap_or(0)))
    };

    let mut tape = Tape::new();
    tape.track_branches();
    let vars: Vec<Var> = params.iter().map(|v| tape.param(*v)).collect();
    let root = model_eval(&mut tape, &vars)?;
    let base_sig = tape.branch_signature().unwrap_or(0);
    let grads = tape.backward(root, rule);

    let mut report = FdReport {
        max_rel_error: 0.0,
        worst: 0,
        checked: 0,
        skipped: Vec::new(),
    };
    let mut p = params.to_vec();
    for i in 0..params.len() {
        let mut probe = |delta: f64| -> Result<(f64, u64)> {
            p[i] = params[i] + delta;
            let r = eval(&p);
            p[i] = params[i];
            r
        };
        let (plus, sp) = probe(epsilon)?;
        let (minus, sm) = probe(-epsilon)?;
        let (_, gp) = probe(band_guard)?;
        let (_, gm) = probe(-band_guard)?;
        if [sp, sm, gp, gm].iter().any(|s| *s != base_sig) {
            report.skipped.push(i);
            continue;
        }
        let fd = (plus - minus) / (2.0 * epsilon);
        let ad = grads.scalar(vars[i]);
        let denom = fd.abs().max(ad.abs()).max(abs_floor);
        let rel = (fd - ad).abs() / denom;
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = i;
        }
    }
    if report.checked == 0 {
        return Err(Error::InconclusiveCheck(params.len()));
    }
    Ok(report)
}
