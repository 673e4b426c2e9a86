//! Shared inputs for the benchmarks.

use polyc_core::envs::Interval;
use polyc_core::lyapunov::RiskBatch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform states in `[-1, 1]^dim` paired with successors of `x' = -x` after `dt`.
pub fn decay_batch(n: usize, dim: usize, dt: f64, seed: u64) -> RiskBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let decay = (-dt).exp();
    let next = states.iter().map(|s| s.iter().map(|x| x * decay).collect()).collect();
    RiskBatch::new(states, next, dt).expect("consistent batch")
}

pub fn unit_box(dim: usize) -> Vec<Interval> {
    vec![Interval::symmetric(1.0); dim]
}
