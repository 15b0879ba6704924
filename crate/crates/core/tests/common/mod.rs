#![allow(dead_code)]

use iadc::autodiff::{finite_diff_check, FdReport, GradRule};
use iadc::constraints::{LatentParams, LossWeights, NoiseConfig};
use iadc::graph::{build_loss, draw_noise, GraphOptions};
use iadc::topology::Topology;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LOSS_WEIGHTS: LossWeights = LossWeights {
    lambda_dr: 0.01,
    lambda_tpt: 1e-4,
    tpt: 4.0,
};

/// Latent parameters with some masked entries and a mid-range step.
pub fn random_latent(topology: &Topology, seed: u64) -> LatentParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = topology.weight_count();
    let k = topology.stages;
    let j = topology.decoder_depth;
    let mut p = LatentParams {
        stages: k,
        weights: (0..n).map(|_| rng.gen_range(-0.6..0.6)).collect(),
        mask: (0..n).map(|_| rng.gen_range(-0.5..1.0)).collect(),
        log_step: rng.gen_range(0.05f64..0.2).ln(),
        log_caps: vec![0.0; k],
        input_scales: (0..j).map(|_| rng.gen_range(0.5..1.5)).collect(),
        recurrent: (0..j).map(|_| rng.gen_range(0.8..1.0)).collect(),
    };
    let caps: Vec<f64> = (0..k).map(|_| rng.gen_range(0.3..2.0)).collect();
    p.set_unit_caps(&caps).unwrap();
    p
}

pub fn batch_inputs(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..count).map(|_| rng.gen_range(-0.35..0.35)).collect()
}

/// Finite-difference check of the training loss at a random point.
///
/// `smooth` removes every piecewise-constant primitive; otherwise the full
/// graph is checked under the exact rule with band-guarded perturbations.
pub fn loss_fd_check(k: usize, cycles: usize, seed: u64, smooth: bool, noise: bool) -> FdReport {
    let topology = Topology::new(k, cycles, 8, 0.4).unwrap();
    let p = random_latent(&topology, seed);
    let inputs = batch_inputs(seed, 6);
    let layout = p.layout();
    let opts = GraphOptions {
        smooth,
        curriculum: Vec::new(),
    };
    let cfg = NoiseConfig::default();
    let draws = draw_noise(&mut ChaCha8Rng::seed_from_u64(seed), &topology, inputs.len());
    let noise = noise.then_some((&cfg, &draws));
    let (epsilon, guard) = if smooth { (1e-5, 1e-5) } else { (1e-5, 1e-4) };
    finite_diff_check(
        |t, v| build_loss(t, v, &layout, &topology, &inputs, &LOSS_WEIGHTS, noise, &opts).map(|g| g.loss),
        &p.to_flat(),
        epsilon,
        guard,
        1e-5,
        GradRule::Exact,
    )
    .unwrap()
}
