use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `count` i.i.d. uniform DC levels on `[lo, hi)`, reproducible from `seed`.
pub fn generate_dataset(count: usize, lo: f64, hi: f64, seed: u64) -> Result<Vec<f64>> {
    if !(lo < hi) {
        return Err(Error::Domain(format!("empty input range [{lo}, {hi}]")));
    }
    if lo < -0.5 || hi > 0.5 {
        return Err(Error::Domain(format!(
            "input range [{lo}, {hi}] exceeds [-0.5, 0.5]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(lo, hi);
    Ok((0..count).map(|_| dist.sample(&mut rng)).collect())
}
