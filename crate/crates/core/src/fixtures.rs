//! Seeded synthetic data used by the bundled example, the validation suite
//! and the benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::encoding::{Dataset, Sample};
use crate::error::Result;

pub const FIXTURE_SAMPLES: usize = 8;
pub const FIXTURE_FEATURES: usize = 4;
pub const FIXTURE_SEED: u64 = 42;
pub const FIXTURE_TEST_POINTS: usize = 20;
pub const FIXTURE_TEST_SEED: u64 = 43;
pub const NOISE_LEVEL: f64 = 0.01;

/// Smooth nonlinear target: `sin(Σa/√N) + 0.1‖a‖²`.
pub fn target_function(a: &[f64]) -> f64 {
    let n = a.len().max(1) as f64;
    (a.iter().sum::<f64>() / n.sqrt()).sin() + 0.1 * a.iter().map(|x| x * x).sum::<f64>()
}

/// `m` samples with standard normal features and a noisy smooth target.
pub fn synthetic_dataset(m: usize, n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..m)
        .map(|_| {
            let f: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let noise: f64 = rng.sample(StandardNormal);
            let y = target_function(&f) + NOISE_LEVEL * noise;
            Sample::new(f, y)
        })
        .collect();
    Dataset::new(samples)
}

pub fn test_points(k: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

/// The bundled 8×4 dataset.
pub fn bundled_dataset() -> Dataset {
    synthetic_dataset(FIXTURE_SAMPLES, FIXTURE_FEATURES, FIXTURE_SEED).expect("fixture parameters are valid")
}

pub fn bundled_test_points() -> Vec<Vec<f64>> {
    test_points(FIXTURE_TEST_POINTS, FIXTURE_FEATURES, FIXTURE_TEST_SEED)
}
