//! Classical closed-form topologies: oracles, initializers and comparison
//! points for trained converters.

use serde::{Deserialize, Serialize};

use crate::constraints::RealizedWeights;
use crate::decoder::DecoderParams;
use crate::encoder::{quantize_sign, EncoderWeights};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::topology::{column, Signal, Topology, INPUT_COL};

/// One nonzero coefficient of a classical encoder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Coefficient {
    /// Input into `target`.
    Input { target: usize, value: f64 },
    /// `signal` of stage `source` into `target`.
    Link {
        target: usize,
        source: usize,
        signal: Signal,
        value: f64,
    },
}

/// A named classical topology given by explicit coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSpec {
    pub name: String,
    pub stages: usize,
    pub coefficients: Vec<Coefficient>,
    pub decoder_depth: usize,
    pub input_scales: Vec<f64>,
    pub recurrent: Vec<f64>,
}

impl ClassicalSpec {
    /// The first-order modulator with a single accumulator decoder.
    pub fn first_order() -> Self {
        ClassicalSpec {
            name: "first-order".into(),
            stages: 1,
            coefficients: vec![
                Coefficient::Input {
                    target: 0,
                    value: 0.5,
                },
                Coefficient::Link {
                    target: 0,
                    source: 0,
                    signal: Signal::ZetaStar,
                    value: -0.5,
                },
                Coefficient::Link {
                    target: 0,
                    source: 0,
                    signal: Signal::XiStar,
                    value: 1.0,
                },
            ],
            decoder_depth: 1,
            input_scales: vec![1.0],
            recurrent: vec![1.0],
        }
    }

    pub fn weights(&self) -> Result<EncoderWeights> {
        if self.stages == 0 {
            return Err(Error::Structural("classical spec with no stages".into()));
        }
        let mut w = EncoderWeights::zeros(self.stages);
        for c in &self.coefficients {
            let (target, col, value) = match *c {
                Coefficient::Input { target, value } => (target, INPUT_COL, value),
                Coefficient::Link {
                    target,
                    source,
                    signal,
                    value,
                } => {
                    if source >= self.stages {
                        return Err(Error::Structural(format!(
                            "{}: source stage {source} out of range",
                            self.name
                        )));
                    }
                    (target, column(source, signal), value)
                }
            };
            if target >= self.stages {
                return Err(Error::Structural(format!(
                    "{}: target stage {target} out of range",
                    self.name
                )));
            }
            w.set(target, col, value);
        }
        if w.as_slice().iter().all(|v| *v == 0.0) {
            log::warn!("classical spec {} has no nonzero coefficient", self.name);
        }
        Ok(w)
    }

    /// Integer view with step `q` and unit capacitor `unit_cap_pf`; every
    /// coefficient must be an integer multiple of `q` within `±levels`.
    pub fn realize(&self, step: f64, unit_cap_pf: f64, levels: u32) -> Result<RealizedWeights> {
        let w = self.weights()?;
        let mut w_int = Vec::with_capacity(w.as_slice().len());
        for v in w.as_slice() {
            let r = v / step;
            if r.round() != r {
                return Err(Error::Domain(format!(
                    "{}: coefficient {v} is not a multiple of {step}",
                    self.name
                )));
            }
            w_int.push(r as i32);
        }
        let mask = w_int.iter().map(|v| u8::from(*v != 0)).collect();
        RealizedWeights::from_integers(
            self.stages,
            levels,
            w_int,
            mask,
            step,
            vec![unit_cap_pf; self.stages],
        )
    }
}

/// Encoder and decoder of a classical spec, decoder normalized over `osr` cycles.
pub fn classical_topology(
    spec: &ClassicalSpec,
    osr: usize,
) -> Result<(EncoderWeights, DecoderParams)> {
    if spec.input_scales.len() != spec.decoder_depth || spec.recurrent.len() != spec.decoder_depth
    {
        return Err(Error::Structural(format!(
            "{}: decoder weights do not match depth {}",
            spec.name, spec.decoder_depth
        )));
    }
    let w = spec.weights()?;
    let d = DecoderParams::new(spec.input_scales.clone(), spec.recurrent.clone(), osr)?;
    Ok((w, d))
}

/// First-order modulator weights and single-accumulator decoder.
pub fn first_order(osr: usize) -> Result<(EncoderWeights, DecoderParams)> {
    classical_topology(&ClassicalSpec::first_order(), osr)
}

/// Converter for a classical spec with one `cap_pf` capacitor per nonzero weight.
pub fn classical_model(spec: &ClassicalSpec, osr: usize, delta: f64, cap_pf: f64) -> Result<Model> {
    let (w, d) = classical_topology(spec, osr)?;
    let topology = Topology::new(spec.stages, osr, 1, delta)?.with_decoder_depth(spec.decoder_depth)?;
    let caps = w
        .as_slice()
        .iter()
        .map(|v| if *v != 0.0 { cap_pf } else { 0.0 })
        .collect();
    Model::new(topology, w, d, caps)
}

/// First-order converter over `osr` cycles with 1 pF per weight.
///
/// The saturation bound is 0.5, which the first-order loop never reaches
/// for inputs within ±0.5.
pub fn first_order_model(osr: usize) -> Result<Model> {
    classical_model(&ClassicalSpec::first_order(), osr, 0.5, 1.0)
}

/// First-order integrator state and bitstream from the summation formulas
/// `ξ[m] = ½(Σ_{p=1..m} x − Σ_{p=0..m-1} ζ[p])`, `ζ[m] = ½ sign(ξ[m])`, `ζ[0] = 0`.
pub fn closed_form_reference(x: f64, n: usize) -> Result<(f64, Vec<f64>)> {
    if !(x.abs() <= 0.5) || n == 0 {
        return Err(Error::Domain(format!("reference needs |x| <= 0.5 and n >= 1, got {x}, {n}")));
    }
    let mut zeta = vec![0.0];
    let mut xi = 0.0;
    for m in 1..=n {
        let sum_x: f64 = (1..=m).map(|_| x).sum();
        let sum_z: f64 = zeta[..m].iter().sum();
        xi = 0.5 * (sum_x - sum_z);
        zeta.push(quantize_sign(xi));
    }
    Ok((xi, zeta.split_off(1)))
}
