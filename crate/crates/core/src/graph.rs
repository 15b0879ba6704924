//! The converter and its losses recorded on a [`Tape`], for training.
//!
//! The forward pass mirrors [`Model::convert`](crate::model::Model::convert)
//! operation for operation, so with noise off the recorded estimates are
//! bit-identical to the plain simulator's. Thermal noise is injected per
//! stage as one Gaussian whose variance is the sum of that stage's
//! per-weight kT/C variances, scaled by `C_k^{-1/2}` so the unit capacitors
//! receive gradient.

use crate::autodiff::{Tape, Var};
use crate::constraints::{stage_noise_amplitudes, LossWeights, NoiseConfig, ParamLayout, C_MIN_PF};
use crate::error::{Error, Result};
use crate::topology::Topology;

/// Forward-pass variants.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraphOptions {
    /// Replace mask, rounding, clipping and the quantizer by identities.
    pub smooth: bool,
    /// Extra cycle counts whose fidelity loss is averaged with the final one.
    pub curriculum: Vec<usize>,
}

/// Standard-normal draws for one batch, `[cycle * K + stage]`, each of batch length.
pub type NoiseDraws = Vec<Vec<f64>>;

/// Handles to the interesting nodes of a recorded loss.
#[derive(Clone, Debug)]
pub struct LossGraph {
    pub loss: Var,
    pub lse: Var,
    pub dr: Var,
    pub tpt: Var,
    pub c_tot: Var,
    /// Decoded estimates after the final cycle.
    pub y_final: Var,
    /// Integer weights as realized in this pass.
    pub w_int: Vec<i32>,
}

/// Records the training loss for `inputs` over `topology.osr` cycles.
#[allow(clippy::too_many_arguments)]
pub fn build_loss(
    tape: &mut Tape,
    params: &[Var],
    layout: &ParamLayout,
    topology: &Topology,
    inputs: &[f64],
    lw: &LossWeights,
    noise: Option<(&NoiseConfig, &NoiseDraws)>,
    opts: &GraphOptions,
) -> Result<LossGraph> {
    let k = topology.stages;
    let cols = topology.columns();
    let depth = topology.decoder_depth;
    let cycles = topology.osr;
    if params.len() != layout.len() || layout.weights.len() != k * cols {
        return Err(Error::Structural("parameter vector does not match topology".into()));
    }
    if layout.input_scales.len() != depth {
        return Err(Error::Structural("decoder parameters do not match depth".into()));
    }
    if inputs.len() < 3 {
        return Err(Error::Domain("training batch needs at least 3 samples".into()));
    }
    if let Some(x) = inputs.iter().find(|x| !(x.abs() <= 0.5)) {
        return Err(Error::Domain(format!("input {x} outside [-0.5, 0.5]")));
    }
    if let Some(c) = opts.curriculum.iter().find(|c| **c == 0 || **c > cycles) {
        return Err(Error::Domain(format!("curriculum cycle {c} outside 1..={cycles}")));
    }
    let step = tape.exp(params[layout.step]);
    if !(tape.scalar(step) > 0.0) || !tape.scalar(step).is_finite() {
        return Err(Error::Domain(format!(
            "quantization step {} is not positive",
            tape.scalar(step)
        )));
    }

    // Weight realization.
    let bound = f64::from(topology.levels);
    let mut weights = Vec::with_capacity(k * cols);
    let mut integers = Vec::with_capacity(k * cols);
    for i in 0..k * cols {
        let wl = params[layout.weights.start + i];
        let int = if opts.smooth {
            tape.div(wl, step)
        } else {
            let m = tape.heaviside(params[layout.mask.start + i]);
            let wm = tape.mul(m, wl);
            let v = tape.div(wm, step);
            let r = tape.round(v);
            tape.clip(r, -bound, bound)
        };
        integers.push(int);
        weights.push(tape.mul(step, int));
    }
    let w_int: Vec<i32> = integers
        .iter()
        .map(|v| tape.scalar(*v).round() as i32)
        .collect();

    // Capacitors.
    let unit_caps: Vec<Var> = layout
        .log_caps
        .clone()
        .map(|i| {
            let e = tape.exp(params[i]);
            tape.offset(e, C_MIN_PF)
        })
        .collect();
    let mut cap_terms = Vec::with_capacity(k * cols);
    for (i, int) in integers.iter().enumerate() {
        let a = tape.abs(*int);
        cap_terms.push((unit_caps[i / cols], a));
    }
    let c_tot = tape.dot(&cap_terms);

    // Noise gain per stage.
    let noise_gain = match noise {
        Some((cfg, draws)) => {
            if draws.len() != cycles * k || draws.iter().any(|d| d.len() != inputs.len()) {
                return Err(Error::Structural("noise draws do not match batch".into()));
            }
            let amps = stage_noise_amplitudes(k, &w_int, cfg);
            let gains: Vec<Var> = unit_caps.iter().map(|c| tape.powf(*c, -0.5)).collect();
            Some((amps, gains, draws))
        }
        None => None,
    };

    // Encoder and decoder unrolled over the conversion.
    let x = tape.constant_vec(inputs);
    let zero = tape.constant_vec(&vec![0.0; inputs.len()]);
    let mut xi_star = vec![zero; k];
    let mut zeta_star = vec![zero; k];
    let mut drive = vec![zero; k];
    let mut cells = vec![zero; depth];
    let half = tape.constant(0.5);
    let mut norm_cells = vec![tape.constant(0.0); depth];
    let omega: Vec<Var> = layout.input_scales.clone().map(|i| params[i]).collect();
    let rho: Vec<Var> = layout.recurrent.clone().map(|i| params[i]).collect();
    let mut estimates = Vec::new();
    let mut terms = Vec::with_capacity(cols);
    for n in 1..=cycles {
        let mut xi = xi_star.clone();
        let mut zeta = zeta_star.clone();
        for stage in 0..k {
            terms.clear();
            let row = &weights[stage * cols..(stage + 1) * cols];
            terms.push((row[0], x));
            for j in 0..k {
                let b = 1 + 4 * j;
                terms.push((row[b], zeta[j]));
                terms.push((row[b + 1], xi[j]));
                terms.push((row[b + 2], zeta_star[j]));
                terms.push((row[b + 3], xi_star[j]));
            }
            let mut a = tape.dot(&terms);
            if let Some((amps, gains, draws)) = &noise_gain {
                let scaled: Vec<f64> = draws[(n - 1) * k + stage]
                    .iter()
                    .map(|e| amps[stage] * e)
                    .collect();
                let eps = tape.constant_vec(&scaled);
                let nz = tape.mul(gains[stage], eps);
                a = tape.add(a, nz);
            }
            drive[stage] = a;
            xi[stage] = tape.hardtanh(a, topology.delta[stage]);
            zeta[stage] = if opts.smooth {
                xi[stage]
            } else {
                tape.sign(xi[stage])
            };
        }
        // decoder cascade and its normalization
        let mut input = zeta[k - 1];
        let mut norm_input = half;
        for j in 0..depth {
            cells[j] = tape.dot(&[(rho[j], cells[j]), (omega[j], input)]);
            input = cells[j];
            norm_cells[j] = tape.dot(&[(rho[j], norm_cells[j]), (omega[j], norm_input)]);
            norm_input = norm_cells[j];
        }
        if n == cycles || opts.curriculum.contains(&n) {
            let g = tape.scale(norm_input, 2.0);
            let y = tape.div(input, g);
            estimates.push(y);
        }
        xi_star = xi;
        zeta_star = zeta;
    }

    // Losses.
    let lse_terms: Vec<Var> = estimates
        .iter()
        .map(|y| lse_loss(tape, x, *y))
        .collect();
    let lse = if lse_terms.len() == 1 {
        lse_terms[0]
    } else {
        let ones: Vec<(Var, Var)> = lse_terms.iter().map(|v| (half, *v)).collect();
        let s = tape.dot(&ones);
        tape.scale(s, 2.0 / lse_terms.len() as f64)
    };
    let mut dr_terms = Vec::with_capacity(k);
    for (stage, d) in drive.iter().enumerate() {
        let delta = topology.delta[stage];
        let c = tape.clip(*d, -delta, delta);
        let e = tape.sub(*d, c);
        let e2 = tape.mul(e, e);
        dr_terms.push(tape.sum(e2));
    }
    let mut dr = dr_terms[0];
    for t in &dr_terms[1..] {
        dr = tape.add(dr, *t);
    }
    let excess = tape.offset(c_tot, -lw.tpt);
    let tpt = tape.relu(excess);
    let wdr = tape.scale(dr, lw.lambda_dr);
    let wtpt = tape.scale(tpt, lw.lambda_tpt);
    let partial = tape.add(lse, wdr);
    let loss = tape.add(partial, wtpt);
    Ok(LossGraph {
        loss,
        lse,
        dr,
        tpt,
        c_tot,
        y_final: *estimates.last().expect("final cycle estimate"),
        w_int,
    })
}

/// `log(log(Σ exp|x_a − y|))` with a max shift inside the log-sum-exp.
pub fn lse_loss(tape: &mut Tape, x_a: Var, y: Var) -> Var {
    let e = tape.sub(x_a, y);
    let a = tape.abs(e);
    let m = tape.value(a).iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted = tape.offset(a, -m);
    let ex = tape.exp(shifted);
    let s = tape.sum(ex);
    let l = tape.log(s);
    let inner = tape.offset(l, m);
    tape.log(inner)
}

/// Standard-normal draws for one batch of `batch` samples.
pub fn draw_noise<R: rand::Rng + ?Sized>(
    rng: &mut R,
    topology: &Topology,
    batch: usize,
) -> NoiseDraws {
    use rand_distr::StandardNormal;
    (0..topology.osr * topology.stages)
        .map(|_| (0..batch).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::GradRule;
    use crate::constraints::{loss_lse, realize_weights, LatentParams};

    fn params(k: usize) -> (Topology, LatentParams) {
        let t = Topology::new(k, 24, 8, 0.4).unwrap();
        let n = t.weight_count();
        let weights: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) / 12.0).collect();
        let mask: Vec<f64> = (0..n).map(|i| if i % 5 == 3 { -0.2 } else { 0.4 }).collect();
        let mut p = LatentParams {
            stages: k,
            weights,
            mask,
            log_step: 0.125f64.ln(),
            log_caps: vec![0.0; k],
            input_scales: vec![1.0; k],
            recurrent: vec![1.0; k],
        };
        p.set_unit_caps(&vec![0.7; k]).unwrap();
        (t, p)
    }

    #[test]
    fn matches_plain_simulator_bit_for_bit() {
        for k in [1, 2, 3] {
            let (t, p) = params(k);
            let inputs: Vec<f64> = (0..17).map(|i| -0.35 + 0.04 * i as f64).collect();
            let lw = LossWeights {
                lambda_dr: 0.01,
                lambda_tpt: 1e-4,
                tpt: 4.0,
            };
            let mut tape = Tape::new();
            let vars: Vec<Var> = p.to_flat().iter().map(|v| tape.param(*v)).collect();
            let g = build_loss(&mut tape, &vars, &p.layout(), &t, &inputs, &lw, None, &GraphOptions::default())
                .unwrap();
            let r = realize_weights(&p, t.levels).unwrap();
            assert_eq!(g.w_int, r.w_int);
            assert_eq!(tape.scalar(g.c_tot), r.c_tot);
            let model = r.model(&t, p.decoder(t.osr).unwrap()).unwrap();
            let y = model.estimates(&inputs, t.osr, None).unwrap();
            assert_eq!(tape.value(g.y_final), y.as_slice());
            assert_eq!(tape.scalar(g.lse), loss_lse(&inputs, &y).unwrap());
        }
    }

    #[test]
    fn masked_latent_weight_gets_no_gradient() {
        let (t, mut p) = params(2);
        // push one mask entry outside the surrogate band so it is fully off
        p.mask[3] = -2.0;
        let inputs: Vec<f64> = (0..8).map(|i| -0.3 + 0.08 * i as f64).collect();
        let lw = LossWeights {
            lambda_dr: 0.01,
            lambda_tpt: 1e-4,
            tpt: 0.0,
        };
        let mut tape = Tape::new();
        let vars: Vec<Var> = p.to_flat().iter().map(|v| tape.param(*v)).collect();
        let g = build_loss(&mut tape, &vars, &p.layout(), &t, &inputs, &lw, None, &GraphOptions::default())
            .unwrap();
        let grads = tape.backward(g.loss, GradRule::Surrogate);
        assert_eq!(grads.scalar(vars[3]), 0.0);
        assert_eq!(grads.scalar(vars[p.layout().mask.start + 3]), 0.0);
        assert_eq!(g.w_int[3], 0);
    }

    #[test]
    fn rejects_bad_step_and_inputs() {
        let (t, mut p) = params(1);
        let lw = LossWeights {
            lambda_dr: 0.0,
            lambda_tpt: 0.0,
            tpt: 0.0,
        };
        let inputs = [0.1, 0.2, 0.3];
        p.log_step = f64::NEG_INFINITY;
        let mut tape = Tape::new();
        let vars: Vec<Var> = p.to_flat().iter().map(|v| tape.param(*v)).collect();
        assert!(build_loss(&mut tape, &vars, &p.layout(), &t, &inputs, &lw, None, &GraphOptions::default()).is_err());
        p.log_step = 0.1f64.ln();
        let mut tape = Tape::new();
        let vars: Vec<Var> = p.to_flat().iter().map(|v| tape.param(*v)).collect();
        assert!(build_loss(&mut tape, &vars, &p.layout(), &t, &[0.1, 0.7, 0.0], &lw, None, &GraphOptions::default()).is_err());
    }
}
