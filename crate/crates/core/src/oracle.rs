//! Classical kernel ridge regression, the ground truth every quantum tier
//! is checked against.
//!
//! With `K_{m₁m₂} = ⟨φ(a⁽ᵐ¹⁾)|φ(a⁽ᵐ²⁾)⟩` and `k_m = ⟨φ(a⁽ᵐ⁾)|φ(ã)⟩`, the
//! ridge solution predicts `ỹ = yᵀ (K + χI)⁻¹ k`. For real feature maps all
//! of this is real. Complex feature maps (the evolution encoder) give a
//! Hermitian `K`; the dual weights `β = (K + χI)⁻¹ y` are then complex and
//! `ỹ = Σ_m conj(β_m) k_m`, of which the real part is reported.

use crate::encoding::{encode, Dataset, EncodedState, FeatureEncoder};
use crate::error::{Error, Result};
use crate::numerics::{hermitian_eigen, svd, ComplexMatrix, ComplexVector, C64};

/// Encoders whose materialized feature dimension stays below this are
/// decomposed explicitly; larger ones go through the span of the samples.
pub const EXPLICIT_DIM_LIMIT: usize = 4096;

/// Minimum Gram eigenvalue accepted when no regularization is applied.
pub const SINGULAR_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: ComplexMatrix,
}

impl GramMatrix {
    pub fn from_states(states: &[EncodedState]) -> Result<Self> {
        let m = states.len();
        let mut entries = ComplexMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let k = states[i].overlap(&states[j])? * (states[i].norm() * states[j].norm());
                entries[(i, j)] = k;
                entries[(j, i)] = k.conj();
            }
            entries[(i, i)].im = 0.0;
        }
        Ok(GramMatrix { entries })
    }

    pub fn entries(&self) -> &ComplexMatrix {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.entries.iter().all(|z| z.im.abs() <= tol)
    }

    /// Eigenvalues sorted descending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(hermitian_eigen(&self.entries)?.0)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.last().copied().unwrap_or(0.0))
    }

    /// `K / Tr K`, the density matrix a sample-register partial trace yields.
    pub fn normalized(&self) -> ComplexMatrix {
        &self.entries / C64::new(self.trace(), 0.0)
    }
}

pub fn encode_dataset(dataset: &Dataset, encoder: &FeatureEncoder) -> Result<Vec<EncodedState>> {
    dataset
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| encode(encoder, &s.features).map_err(|e| e.at_sample(i)))
        .collect()
}

pub fn gram(dataset: &Dataset, encoder: &FeatureEncoder) -> Result<GramMatrix> {
    GramMatrix::from_states(&encode_dataset(dataset, encoder)?)
}

/// `k_m = ⟨φ(a⁽ᵐ⁾)|φ(ã)⟩` for every training state.
pub fn kernel_column(states: &[EncodedState], query: &EncodedState) -> Result<ComplexVector> {
    let values = states
        .iter()
        .map(|s| Ok(s.overlap(query)? * (s.norm() * query.norm())))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComplexVector::from_vec(values))
}

fn check_chi(chi: f64) -> Result<()> {
    if chi.is_finite() && chi >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("regularization chi must be finite and non-negative, got {chi}")))
    }
}

fn encode_query(dataset: &Dataset, encoder: &FeatureEncoder, a: &[f64]) -> Result<EncodedState> {
    if a.len() != dataset.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "query has {} features, training data has {}",
            a.len(),
            dataset.n_features()
        )));
    }
    encode(encoder, a)
}

#[derive(Debug, Clone)]
pub struct KrrModel {
    chi: f64,
    encoder: FeatureEncoder,
    dataset: Dataset,
    states: Vec<EncodedState>,
    gram: GramMatrix,
    dual_weights: ComplexVector,
}

pub fn fit(dataset: &Dataset, encoder: &FeatureEncoder, chi: f64) -> Result<KrrModel> {
    check_chi(chi)?;
    let states = encode_dataset(dataset, encoder)?;
    let gram = GramMatrix::from_states(&states)?;
    if chi == 0.0 {
        let min_eigenvalue = gram.min_eigenvalue()?;
        if min_eigenvalue <= SINGULAR_TOLERANCE {
            return Err(Error::RegularizationRequired { min_eigenvalue });
        }
    }
    let m = gram.len();
    let shifted = gram.entries() + ComplexMatrix::identity(m, m) * C64::new(chi, 0.0);
    let y = ComplexVector::from_iterator(m, dataset.targets().into_iter().map(|t| C64::new(t, 0.0)));
    let cholesky = shifted
        .cholesky()
        .ok_or_else(|| Error::Numerical("K + chi I is not positive definite".into()))?;
    let dual_weights = cholesky.solve(&y);
    Ok(KrrModel { chi, encoder: *encoder, dataset: dataset.clone(), states, gram, dual_weights })
}

impl KrrModel {
    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn encoder(&self) -> &FeatureEncoder {
        &self.encoder
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn states(&self) -> &[EncodedState] {
        &self.states
    }

    /// `β = (K + χI)⁻¹ y`.
    pub fn dual_weights(&self) -> &ComplexVector {
        &self.dual_weights
    }

    /// `‖(K + χI)β − y‖`.
    pub fn residual(&self) -> f64 {
        let m = self.gram.len();
        let shifted = self.gram.entries() + ComplexMatrix::identity(m, m) * C64::new(self.chi, 0.0);
        let y = ComplexVector::from_iterator(m, self.dataset.targets().into_iter().map(|t| C64::new(t, 0.0)));
        (shifted * &self.dual_weights - y).norm()
    }

    /// Full complex prediction `Σ_m conj(β_m) k_m`.
    pub fn predict_complex(&self, a: &[f64]) -> Result<C64> {
        let query = encode_query(&self.dataset, &self.encoder, a)?;
        let k = kernel_column(&self.states, &query)?;
        Ok(self.dual_weights.dotc(&k))
    }

    pub fn predict(&self, a: &[f64]) -> Result<f64> {
        Ok(self.predict_complex(a)?.re)
    }
}

/// Prediction through the spectral form `Σᵢ λᵢ/(λᵢ²+χ) (uᵢᴴy) ⟨φᵢ|φ(ã)⟩`.
///
/// Finite feature spaces are decomposed directly: the rows of the feature
/// matrix are the unnormalized feature vectors. For continuous-variable
/// encoders (or very large materialized dimensions) the right singular
/// vectors live in the span of the training states and all spectral data
/// comes from the Gram matrix: `λᵢ²` are the eigenvalues of `conj(K)`, `uᵢ`
/// its eigenvectors and `⟨φᵢ|φ(ã)⟩ = uᵢᵀk / λᵢ`.
pub fn predict_svd(dataset: &Dataset, encoder: &FeatureEncoder, chi: f64, a: &[f64]) -> Result<f64> {
    check_chi(chi)?;
    let states = encode_dataset(dataset, encoder)?;
    let query = encode_query(dataset, encoder, a)?;
    let y: ComplexVector = ComplexVector::from_iterator(dataset.len(), dataset.targets().into_iter().map(|t| C64::new(t, 0.0)));
    let m = dataset.len();
    let dim = states[0].dim();

    let transform = |lambda: f64| -> Result<f64> {
        if chi == 0.0 && lambda * lambda <= SINGULAR_TOLERANCE {
            return Err(Error::RegularizationRequired { min_eigenvalue: lambda * lambda });
        }
        Ok(lambda / (lambda * lambda + chi))
    };

    let mut total = C64::new(0.0, 0.0);
    if !encoder.is_continuous_variable() && dim <= EXPLICIT_DIM_LIMIT {
        let mut features = ComplexMatrix::zeros(m, dim);
        for (i, s) in states.iter().enumerate() {
            let row = s.amplitudes() * C64::new(s.norm(), 0.0);
            features.row_mut(i).copy_from(&row.transpose());
        }
        let decomposition = svd(&features)?;
        if chi == 0.0 && decomposition.singular_values.len() < m {
            return Err(Error::RegularizationRequired { min_eigenvalue: 0.0 });
        }
        let phi = query.amplitudes() * C64::new(query.norm(), 0.0);
        for (i, &lambda) in decomposition.singular_values.iter().enumerate() {
            let u = decomposition.left_vectors.column(i);
            let w = decomposition.right_vectors.column(i);
            // Schmidt feature vector is conj(w), so ⟨φᵢ|φ(ã)⟩ = wᵀφ(ã).
            total += u.dotc(&y) * w.dot(&phi) * transform(lambda)?;
        }
    } else {
        let gram = GramMatrix::from_states(&states)?;
        let (eigenvalues, vectors) = hermitian_eigen(&gram.entries().conjugate())?;
        let k = kernel_column(&states, &query)?;
        for (i, &d) in eigenvalues.iter().enumerate() {
            let lambda = d.max(0.0).sqrt();
            let factor = transform(lambda)?;
            if lambda == 0.0 {
                continue;
            }
            let u = vectors.column(i);
            total += u.dotc(&y) * (u.dot(&k) / lambda) * factor;
        }
    }
    Ok(total.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_dataset(m: usize, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..m)
            .map(|_| {
                let f: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.8).collect();
                Sample::new(f, rng.sample(StandardNormal))
            })
            .collect();
        Dataset::new(samples).unwrap()
    }

    fn single(features: Vec<f64>, target: f64) -> Dataset {
        Dataset::new(vec![Sample::new(features, target)]).unwrap()
    }

    #[test]
    fn gram_trivial_cases() {
        let g = gram(&single(vec![3.0, 4.0], 1.0), &FeatureEncoder::Amplitude).unwrap();
        assert!((g.entries()[(0, 0)] - C64::new(25.0, 0.0)).norm() < 1e-12);

        let twin = Dataset::new(vec![Sample::new(vec![0.4, 1.0], 1.0), Sample::new(vec![0.4, 1.0], 2.0)]).unwrap();
        let g = gram(&twin, &FeatureEncoder::Coherent { cutoff: 16 }).unwrap();
        assert!((g.entries() - ComplexMatrix::from_element(2, 2, C64::new(1.0, 0.0))).camax() < 1e-14);
    }

    #[test]
    fn gram_matches_gaussian_table() {
        let d = random_dataset(3, 2, 17);
        let g = gram(&d, &FeatureEncoder::Coherent { cutoff: 24 }).unwrap();
        for (i, si) in d.samples().iter().enumerate() {
            for (j, sj) in d.samples().iter().enumerate() {
                let dist: f64 = si.features.iter().zip(&sj.features).map(|(a, b)| (a - b).powi(2)).sum();
                assert!((g.entries()[(i, j)] - C64::new((-dist / 2.0).exp(), 0.0)).norm() < 1e-8);
            }
        }
        assert!(g.min_eigenvalue().unwrap() >= -1e-10);
    }

    #[test]
    fn encoder_failure_names_sample() {
        let d = Dataset::new(vec![Sample::new(vec![1.0], 0.0), Sample::new(vec![0.0], 0.0)]).unwrap();
        match gram(&d, &FeatureEncoder::Amplitude) {
            Err(Error::Sample { index: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_sample_fits() {
        let d = single(vec![1.0], 2.0);
        let enc = FeatureEncoder::Amplitude;
        let m0 = fit(&d, &enc, 0.0).unwrap();
        assert!((m0.dual_weights()[0] - C64::new(2.0, 0.0)).norm() < 1e-15);
        assert!((m0.predict(&[1.0]).unwrap() - 2.0).abs() < 1e-15);
        let m1 = fit(&d, &enc, 1.0).unwrap();
        assert!((m1.dual_weights()[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((m1.predict(&[1.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_gram_without_regularization_fails() {
        let d = Dataset::new(vec![Sample::new(vec![1.0, 0.0], 1.0), Sample::new(vec![2.0, 0.0], 2.0)]).unwrap();
        assert!(matches!(fit(&d, &FeatureEncoder::Amplitude, 0.0), Err(Error::RegularizationRequired { .. })));
        assert!(matches!(
            predict_svd(&d, &FeatureEncoder::Amplitude, 0.0, &[1.0, 1.0]),
            Err(Error::RegularizationRequired { .. })
        ));
        assert!(fit(&d, &FeatureEncoder::Amplitude, 0.1).is_ok());
        assert!(fit(&d, &FeatureEncoder::Amplitude, -1.0).is_err());
    }

    #[test]
    fn linear_solve_residual() {
        let d = random_dataset(5, 3, 2);
        let model = fit(&d, &FeatureEncoder::Coherent { cutoff: 16 }, 0.1).unwrap();
        assert!(model.residual() <= 1e-8);
    }

    #[test]
    fn dual_and_spectral_forms_agree_on_gaussian_fixture() {
        let d = random_dataset(8, 4, 42);
        let enc = FeatureEncoder::Coherent { cutoff: 16 };
        let model = fit(&d, &enc, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..5 {
            let q: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.8).collect();
            let dual = model.predict(&q).unwrap();
            let spectral = predict_svd(&d, &enc, 0.1, &q).unwrap();
            assert!((dual - spectral).abs() <= 1e-10 * dual.abs().max(1e-3), "{dual} vs {spectral}");
        }
    }

    #[test]
    fn dual_and_spectral_forms_agree_for_all_encoders() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let encoders = [
            FeatureEncoder::Amplitude,
            FeatureEncoder::PolyTensor { degree: 2 },
            FeatureEncoder::AffineAmplitude { offset: 1.0, degree: 2 },
            FeatureEncoder::Coherent { cutoff: 12 },
            FeatureEncoder::wavepacket(0.6),
            FeatureEncoder::evolution(0.9),
        ];
        for (e, enc) in encoders.iter().enumerate() {
            for trial in 0..4 {
                let m = rng.random_range(1..=16);
                let n = rng.random_range(1..=4);
                let d = random_dataset(m, n, 1000 * e as u64 + trial);
                let chi = rng.random_range(0.05..1.0);
                let q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
                let dual = fit(&d, enc, chi).unwrap().predict(&q).unwrap();
                let spectral = predict_svd(&d, enc, chi, &q).unwrap();
                assert!((dual - spectral).abs() <= 1e-10 * dual.abs().max(1e-2), "{enc}: {dual} vs {spectral}");
            }
        }
    }

    #[test]
    fn large_regularization_shrinks_prediction() {
        let d = random_dataset(6, 2, 5);
        let enc = FeatureEncoder::Coherent { cutoff: 16 };
        let y_norm = d.targets().iter().map(|t| t * t).sum::<f64>().sqrt();
        for chi in [1e2, 1e4, 1e6] {
            let p = predict_svd(&d, &enc, chi, &[0.1, 0.2]).unwrap();
            // |k| ≤ 1 entrywise, so |ỹ| ≤ ‖y‖ √M / χ.
            assert!(p.abs() <= y_norm * (6f64).sqrt() / chi);
        }
    }

    #[test]
    fn interpolates_without_regularization() {
        let d = random_dataset(6, 3, 8);
        let model = fit(&d, &FeatureEncoder::Coherent { cutoff: 20 }, 0.0).unwrap();
        for s in d.samples() {
            assert!((model.predict(&s.features).unwrap() - s.target).abs() <= 1e-8);
        }
    }

    #[test]
    fn permutation_invariance() {
        let d = random_dataset(7, 2, 31);
        let enc = FeatureEncoder::PolyTensor { degree: 2 };
        let p = d.permuted(&[3, 1, 6, 0, 2, 5, 4]).unwrap();
        let q = [0.3, -0.7];
        let a = fit(&d, &enc, 0.2).unwrap().predict(&q).unwrap();
        let b = fit(&p, &enc, 0.2).unwrap().predict(&q).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn shrinkage_is_monotone() {
        let d = random_dataset(6, 3, 12);
        let enc = FeatureEncoder::Coherent { cutoff: 16 };
        let norms: Vec<f64> = [0.01, 0.1, 1.0, 10.0]
            .iter()
            .map(|&chi| fit(&d, &enc, chi).unwrap().dual_weights().norm())
            .collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
    }

    #[test]
    fn query_length_checked() {
        let d = random_dataset(3, 2, 1);
        let model = fit(&d, &FeatureEncoder::Amplitude, 0.1).unwrap();
        assert!(matches!(model.predict(&[1.0]), Err(Error::DimensionMismatch(_))));
    }
}
