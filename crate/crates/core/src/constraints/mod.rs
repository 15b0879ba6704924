//! Hardware constraints expressed as training mechanisms: quantization-aware
//! weight realization with a learned mask, capacitor sizing, kT/C noise
//! augmentation and the loss terms.

mod loss;
mod noise;
mod params;

pub use loss::{loss_dr, loss_lse, loss_tpt, total_loss, LossWeights};
pub use noise::{
    ktc_sigma, sample_noise, stage_noise_amplitudes, KtcNoise, NoiseConfig, BOLTZMANN,
};
pub use params::{
    binarize_mask, realize_weights, LatentParams, ParamLayout, RealizedWeights, C_MIN_PF,
};
