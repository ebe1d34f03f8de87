//! Centered, unitary discrete Fourier transforms.
//!
//! Convention (fixed for the whole crate): an axis with `n` samples uses
//! the centered index `k - c`, `c = (n - 1) / 2`, so odd `n` puts a sample
//! exactly at the origin and the sample set is symmetric about it. The
//! forward transform is
//!
//! ```text
//! y[j] = n^{-1/2} Σ_k exp(+2πi (k - c)(j - c) / n) x[k]
//! ```
//!
//! which is the discretization of `ψ(q) = (2π)^{-1/2} ∫ e^{ipq} φ(p) dp`
//! taking a momentum wavefunction to a position wavefunction when the two
//! grids satisfy `Δp · Δq = 2π / n`. `Inverse` flips the sign of the
//! exponent and undoes `Forward` exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::{ComplexMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FftDirection {
    /// Kernel `e^{+ipq}`: momentum to position.
    Forward,
    /// Kernel `e^{-ipq}`: position to momentum.
    Inverse,
}

impl FftDirection {
    fn sign(self) -> f64 {
        match self {
            FftDirection::Forward => 1.0,
            FftDirection::Inverse => -1.0,
        }
    }
}

struct CenteredPlan {
    fft: Arc<dyn Fft<f64>>,
    pre: Vec<C64>,
    post: Vec<C64>,
}

impl CenteredPlan {
    fn new(n: usize, direction: FftDirection) -> Self {
        let sign = direction.sign();
        let mut planner = FftPlanner::new();
        // rustfft's forward transform uses e^{-2πi kj/n}.
        let fft = match direction {
            FftDirection::Forward => planner.plan_fft_inverse(n),
            FftDirection::Inverse => planner.plan_fft_forward(n),
        };
        // Phases are reduced with integer arithmetic; 2c = n - 1 is exact.
        let n_u = n as u128;
        let two_c = (n_u - 1) % (2 * n_u);
        let c_squared_phase = {
            let r = ((n_u - 1) * (n_u - 1)) % (4 * n_u);
            sign * PI * r as f64 / (2.0 * n as f64)
        };
        let linear = |k: usize| -> f64 {
            let r = (two_c * k as u128) % (2 * n_u);
            -sign * PI * r as f64 / n as f64
        };
        let norm = 1.0 / (n as f64).sqrt();
        let pre = (0..n).map(|k| C64::from_polar(1.0, linear(k))).collect();
        let post = (0..n).map(|j| C64::from_polar(norm, c_squared_phase + linear(j))).collect();
        CenteredPlan { fft, pre, post }
    }

    fn apply(&self, buf: &mut [C64], scratch: &mut Vec<C64>) {
        for (x, p) in buf.iter_mut().zip(&self.pre) {
            *x *= p;
        }
        scratch.resize(self.fft.get_inplace_scratch_len(), C64::new(0.0, 0.0));
        self.fft.process_with_scratch(buf, scratch);
        for (x, p) in buf.iter_mut().zip(&self.post) {
            *x *= p;
        }
    }
}

/// In-place centered unitary transform of a single axis.
pub fn fft_centered_in_place(buf: &mut [C64], direction: FftDirection) {
    if buf.is_empty() {
        return;
    }
    let plan = CenteredPlan::new(buf.len(), direction);
    plan.apply(buf, &mut Vec::new());
}

fn transform_columns(m: &mut ComplexMatrix, direction: FftDirection) {
    let rows = m.nrows();
    if rows == 0 {
        return;
    }
    let plan = CenteredPlan::new(rows, direction);
    m.as_mut_slice()
        .par_chunks_mut(rows)
        .for_each_init(Vec::new, |scratch, column| plan.apply(column, scratch));
}

/// Two-dimensional centered unitary transform over both axes.
pub fn fft2_centered(values: &ComplexMatrix, direction: FftDirection) -> ComplexMatrix {
    let mut work = values.clone();
    transform_columns(&mut work, direction);
    let mut work = work.transpose();
    transform_columns(&mut work, direction);
    work.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(x: &[C64], direction: FftDirection) -> Vec<C64> {
        let n = x.len();
        let c = (n as f64 - 1.0) / 2.0;
        (0..n)
            .map(|j| {
                x.iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let phase = direction.sign() * 2.0 * PI * (k as f64 - c) * (j as f64 - c) / n as f64;
                        v * C64::from_polar(1.0, phase)
                    })
                    .sum::<C64>()
                    / (n as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [1, 2, 7, 16, 65] {
            let x: Vec<C64> = (0..n).map(|_| C64::new(rng.random(), rng.random())).collect();
            for dir in [FftDirection::Forward, FftDirection::Inverse] {
                let mut y = x.clone();
                fft_centered_in_place(&mut y, dir);
                for (a, b) in y.iter().zip(naive(&x, dir)) {
                    assert!((a - b).norm() < 1e-12, "n = {n}");
                }
            }
        }
    }

    #[test]
    fn round_trip_and_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = ComplexMatrix::from_fn(65, 33, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let f = fft2_centered(&m, FftDirection::Forward);
        assert!((f.norm() - m.norm()).abs() < 1e-10 * m.norm());
        let back = fft2_centered(&f, FftDirection::Inverse);
        assert!((back - &m).camax() < 1e-10);
    }

    #[test]
    fn centered_gaussian_is_real_and_even() {
        let n = 129;
        let dx = 0.1;
        let c = (n as f64 - 1.0) / 2.0;
        let mut g: Vec<C64> = (0..n).map(|k| C64::new((-((k as f64 - c) * dx).powi(2) / 2.0).exp(), 0.0)).collect();
        fft_centered_in_place(&mut g, FftDirection::Forward);
        for j in 0..n {
            assert!(g[j].im.abs() < 1e-12);
            assert!((g[j] - g[n - 1 - j]).norm() < 1e-12);
        }
    }
}
