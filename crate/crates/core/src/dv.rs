//! Discrete-variable side: the training-data state `|ψ_A⟩`, its Schmidt
//! decomposition across the sample/feature cut, the sample-register
//! reduced density matrix and a density-matrix-exponentiation emulator.
//!
//! `|ψ_A⟩ = Σ_m ‖φ(a⁽ᵐ⁾)‖ |m⟩|ψ_{a⁽ᵐ⁾}⟩ / G` with `G² = Tr K` is stored as an
//! `M × F` amplitude matrix whose row `m` is `φ(a⁽ᵐ⁾)ᵀ / G`. When `F` is
//! infinite or too large, the feature side is expressed in an orthonormal
//! basis of the span of the training states instead (see [`SpanBasis`]).
//!
//! Tracing out the feature register gives `ρ_{mm'} = ⟨φ_{m'}|φ_m⟩ / Tr K`,
//! i.e. `conj(K) / Tr K`. For real feature maps this is `K / Tr K`.

use std::sync::Arc;

use crate::encoding::{Dataset, EncodedState, FeatureEncoder};
use crate::error::{Error, Result};
use crate::numerics::{hermitian_eigen, kron, spectral_norm, svd, ComplexMatrix, ComplexVector, C64};
use crate::oracle::{encode_dataset, kernel_column, GramMatrix, EXPLICIT_DIM_LIMIT};


#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrepMode {
    #[default]
    Auto,
    Explicit,
    Span,
}

/// Orthonormal basis `{e_j}` of `span{φ(a⁽ᵐ⁾)}` with `φ(a⁽ᵐ⁾) = Σ_j X_{mj} e_j`.
///
/// `X = W D^{1/2}` from `conj(K) = W D Wᴴ`, so `X Xᴴ = conj(K)` and the
/// coordinates of any state follow from its kernel column alone.
#[derive(Debug, Clone)]
pub struct SpanBasis {
    states: Vec<EncodedState>,
    eigenvectors: ComplexMatrix,
    eigenvalues: Vec<f64>,
}

impl SpanBasis {
    pub fn new(states: Vec<EncodedState>) -> Result<Self> {
        let gram = GramMatrix::from_states(&states)?;
        let (values, vectors) = hermitian_eigen(&gram.entries().conjugate())?;
        // Tiny positive eigenvalues are kept: every use multiplies their
        // coordinates back by √d, so rounding in them stays harmless, while
        // dropping them biases ill-conditioned fits.
        let kept: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 0.0).collect();
        if kept.is_empty() {
            return Err(Error::ZeroNorm);
        }
        let eigenvectors = ComplexMatrix::from_fn(vectors.nrows(), kept.len(), |r, c| vectors[(r, kept[c])]);
        let eigenvalues = kept.iter().map(|&i| values[i]).collect();
        Ok(SpanBasis { states, eigenvectors, eigenvalues })
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn states(&self) -> &[EncodedState] {
        &self.states
    }

    /// Coordinates of the training states: the `M × r` matrix `X`.
    pub fn training_coordinates(&self) -> ComplexMatrix {
        let mut x = self.eigenvectors.clone();
        for (j, d) in self.eigenvalues.iter().enumerate() {
            x.column_mut(j).iter_mut().for_each(|z| *z *= d.sqrt());
        }
        x
    }

    /// Coordinates `c_j = ⟨e_j|φ⟩` of the projection of an unnormalized
    /// state, and the norm of the part orthogonal to the span.
    pub fn project(&self, query: &EncodedState) -> Result<(ComplexVector, f64)> {
        let k = kernel_column(&self.states, query)?;
        let coords = ComplexVector::from_fn(self.rank(), |j, _| {
            self.eigenvectors.column(j).dot(&k) / self.eigenvalues[j].sqrt()
        });
        let outside = (query.norm().powi(2) - coords.norm_squared()).max(0.0).sqrt();
        Ok((coords, outside))
    }
}

#[derive(Debug, Clone)]
pub enum FeatureBasis {
    /// Computational basis of the materialized feature space.
    Explicit,
    Span(Arc<SpanBasis>),
}

impl FeatureBasis {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureBasis::Explicit => "explicit",
            FeatureBasis::Span(_) => "span",
        }
    }

    fn same_as(&self, other: &FeatureBasis) -> bool {
        match (self, other) {
            (FeatureBasis::Explicit, FeatureBasis::Explicit) => true,
            (FeatureBasis::Span(a), FeatureBasis::Span(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// Normalized state on sample register ⊗ feature register.
///
/// `outside_norm` is the weight of the feature-side component orthogonal
/// to the span basis; it is zero for explicit states and for `|ψ_A⟩`.
#[derive(Debug, Clone)]
pub struct HybridPureState {
    amplitudes: ComplexMatrix,
    basis: FeatureBasis,
    global_norm: f64,
    outside_norm: f64,
}

impl HybridPureState {
    /// Wraps an unnormalized amplitude matrix, normalizing it and folding the
    /// norm into `global_norm`.
    pub fn from_unnormalized(amplitudes: ComplexMatrix, basis: FeatureBasis, scale: f64) -> Result<Self> {
        let n = amplitudes.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(HybridPureState {
            amplitudes: amplitudes / C64::new(n, 0.0),
            basis,
            global_norm: n * scale,
            outside_norm: 0.0,
        })
    }

    pub(crate) fn with_outside(amplitudes: ComplexMatrix, basis: FeatureBasis, global_norm: f64, outside_norm: f64) -> Self {
        HybridPureState { amplitudes, basis, global_norm, outside_norm }
    }

    pub fn amplitudes(&self) -> &ComplexMatrix {
        &self.amplitudes
    }

    pub fn basis(&self) -> &FeatureBasis {
        &self.basis
    }

    pub fn global_norm(&self) -> f64 {
        self.global_norm
    }

    pub fn outside_norm(&self) -> f64 {
        self.outside_norm
    }

    pub fn n_samples(&self) -> usize {
        self.amplitudes.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.amplitudes.ncols()
    }

    pub fn norm(&self) -> f64 {
        (self.amplitudes.norm_squared() + self.outside_norm * self.outside_norm).sqrt()
    }

    /// Flattened state vector with the sample index most significant.
    pub fn to_vector(&self) -> ComplexVector {
        ComplexVector::from_iterator(self.amplitudes.len(), self.amplitudes.transpose().iter().copied())
    }

    /// `⟨self|other⟩`. Fails when the two states use different feature
    /// bases or both have weight outside the span.
    pub fn overlap(&self, other: &HybridPureState) -> Result<C64> {
        if !self.basis.same_as(&other.basis) || self.amplitudes.shape() != other.amplitudes.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{} state {:?} vs {} state {:?}",
                self.basis.name(),
                self.amplitudes.shape(),
                other.basis.name(),
                other.amplitudes.shape()
            )));
        }
        if self.outside_norm > 1e-12 && other.outside_norm > 1e-12 {
            return Err(Error::Numerical("both states have components outside the span basis".into()));
        }
        Ok(self.amplitudes.iter().zip(other.amplitudes.iter()).map(|(a, b)| a.conj() * b).sum())
    }
}

pub fn prepare_psi_a(dataset: &Dataset, encoder: &FeatureEncoder) -> Result<HybridPureState> {
    prepare_psi_a_with(dataset, encoder, PrepMode::Auto)
}

pub fn prepare_psi_a_with(dataset: &Dataset, encoder: &FeatureEncoder, mode: PrepMode) -> Result<HybridPureState> {
    let states = encode_dataset(dataset, encoder)?;
    let mode = match mode {
        PrepMode::Auto if encoder.is_continuous_variable() => PrepMode::Span,
        m => m,
    };
    prepare_from_states(states, mode)
}

/// Builds `|ψ_A⟩` from already encoded training states.
pub fn prepare_from_states(states: Vec<EncodedState>, mode: PrepMode) -> Result<HybridPureState> {
    if states.is_empty() {
        return Err(Error::InvalidDataset("no samples".into()));
    }
    let mode = match mode {
        PrepMode::Auto => {
            if states[0].dim() <= EXPLICIT_DIM_LIMIT {
                PrepMode::Explicit
            } else {
                PrepMode::Span
            }
        }
        m => m,
    };
    let trace: f64 = states.iter().map(|s| s.norm() * s.norm()).sum();
    let global_norm = trace.sqrt();
    let g = C64::new(global_norm, 0.0);
    let (amplitudes, basis) = match mode {
        PrepMode::Explicit => {
            let dim = states[0].dim();
            let mut x = ComplexMatrix::zeros(states.len(), dim);
            for (m, s) in states.iter().enumerate() {
                if s.dim() != dim {
                    return Err(Error::DimensionMismatch(format!("sample {m} has feature dimension {}", s.dim())));
                }
                let row = s.amplitudes() * C64::new(s.norm(), 0.0);
                x.row_mut(m).copy_from(&row.transpose());
            }
            (x / g, FeatureBasis::Explicit)
        }
        _ => {
            let span = SpanBasis::new(states)?;
            (span.training_coordinates() / g, FeatureBasis::Span(Arc::new(span)))
        }
    };
    Ok(HybridPureState { amplitudes, basis, global_norm, outside_norm: 0.0 })
}

/// Sample-side reduced density matrix `Tr_feature |ψ⟩⟨ψ|`.
pub fn reduced_density(state: &HybridPureState) -> ComplexMatrix {
    state.amplitudes() * state.amplitudes().adjoint()
}

/// `|ψ⟩ = Σᵢ λᵢ |uᵢ⟩ ⊗ |φᵢ⟩`, the cut between sample and feature registers.
#[derive(Debug, Clone)]
pub struct SchmidtData {
    pub coefficients: Vec<f64>,
    /// Columns `|uᵢ⟩`, `M`-dimensional.
    pub sample_vectors: ComplexMatrix,
    /// Columns `|φᵢ⟩` in the state's feature basis.
    pub feature_vectors: ComplexMatrix,
    pub basis: FeatureBasis,
}

impl SchmidtData {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// `Σᵢ λᵢ |uᵢ⟩ ⊗ |φᵢ⟩` as an amplitude matrix.
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.reweighted(&self.coefficients.iter().map(|&l| C64::new(l, 0.0)).collect::<Vec<_>>())
    }

    /// `Σᵢ wᵢ |uᵢ⟩ ⊗ |φᵢ⟩` as an amplitude matrix.
    pub fn reweighted(&self, weights: &[C64]) -> ComplexMatrix {
        let mut scaled = self.sample_vectors.clone();
        for (i, w) in weights.iter().enumerate() {
            scaled.column_mut(i).iter_mut().for_each(|z| *z *= w);
        }
        scaled * self.feature_vectors.transpose()
    }
}

pub fn schmidt(state: &HybridPureState) -> Result<SchmidtData> {
    let d = svd(state.amplitudes())?;
    Ok(SchmidtData {
        coefficients: d.singular_values,
        sample_vectors: d.left_vectors,
        // X = U Σ Wᴴ, so the feature-side Schmidt vectors are conj(W).
        feature_vectors: d.right_vectors.conjugate(),
        basis: state.basis().clone(),
    })
}

/// Checks trace one, Hermiticity and positivity within 1e-10.
pub fn validate_density_matrix(rho: &ComplexMatrix) -> Result<()> {
    if !rho.is_square() || rho.is_empty() {
        return Err(Error::InvalidDensityMatrix(format!("shape {:?}", rho.shape())));
    }
    if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("density matrix"));
    }
    if (rho - rho.adjoint()).camax() > 1e-10 {
        return Err(Error::InvalidDensityMatrix("not Hermitian".into()));
    }
    let trace = rho.trace();
    if (trace - C64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(Error::InvalidDensityMatrix(format!("trace {trace}")));
    }
    let min = hermitian_eigen(rho)?.0.last().copied().unwrap_or(0.0);
    if min < -1e-10 {
        return Err(Error::InvalidDensityMatrix(format!("negative eigenvalue {min:.3e}")));
    }
    Ok(())
}

/// Result of emulating `e^{iρt}` with `n` partial-swap steps.
#[derive(Debug, Clone)]
pub struct DmeResult {
    /// Superoperator on column-major `vec(σ)` after `n` steps.
    pub channel: ComplexMatrix,
    /// Superoperator of `σ ↦ U σ Uᴴ`, `U = e^{iρt}`.
    pub exact: ComplexMatrix,
    /// Spectral norm of `channel − exact`.
    pub error: f64,
    /// `error · n / t²`, the constant in the `C t²/n` bound (0 for `t = 0`).
    pub error_constant: f64,
}

fn swap_operator(m: usize) -> ComplexMatrix {
    let mut s = ComplexMatrix::zeros(m * m, m * m);
    for a in 0..m {
        for b in 0..m {
            s[(a * m + b, b * m + a)] = C64::new(1.0, 0.0);
        }
    }
    s
}

/// Traces out the first `m`-dimensional factor of an `m² × m²` operator.
fn trace_first(op: &ComplexMatrix, m: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(m, m, |b, f| (0..m).map(|a| op[(a * m + b, a * m + f)]).sum())
}

/// One step `σ ↦ Tr₁[e^{iSΔ} (ρ ⊗ σ) e^{−iSΔ}]` as a superoperator.
fn partial_swap_step(rho: &ComplexMatrix, delta: f64) -> ComplexMatrix {
    let m = rho.nrows();
    let s = swap_operator(m);
    let id = ComplexMatrix::identity(m * m, m * m);
    // S² = 1, so e^{iSΔ} = cos Δ + i sin Δ S.
    let u = &id * C64::new(delta.cos(), 0.0) + &s * C64::new(0.0, delta.sin());
    let u_dag = u.adjoint();
    let mut channel = ComplexMatrix::zeros(m * m, m * m);
    for col in 0..m * m {
        let (j, k) = (col % m, col / m);
        let mut e = ComplexMatrix::zeros(m, m);
        e[(j, k)] = C64::new(1.0, 0.0);
        let out = trace_first(&(&u * kron(rho, &e) * &u_dag), m);
        channel.column_mut(col).copy_from_slice(out.as_slice());
    }
    channel
}

pub fn dme_approximate(rho: &ComplexMatrix, t: f64, n_copies: usize) -> Result<DmeResult> {
    validate_density_matrix(rho)?;
    if n_copies == 0 {
        return Err(Error::InvalidConfig("n_copies must be at least 1".into()));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("evolution time"));
    }
    let step = partial_swap_step(rho, t / n_copies as f64);
    let mut channel = step.clone();
    for _ in 1..n_copies {
        channel = &step * channel;
    }
    let u = crate::numerics::matrix_exponential(rho, C64::new(0.0, t))?;
    // vec(U σ Uᴴ) = (conj(U) ⊗ U) vec(σ) for column-major vec.
    let exact = kron(&u.conjugate(), &u);
    let error = spectral_norm(&(&channel - &exact));
    let error_constant = if t == 0.0 { 0.0 } else { error * n_copies as f64 / (t * t) };
    Ok(DmeResult { channel, exact, error, error_constant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{encode, Sample};
    use crate::numerics::{log_log_slope, partial_trace};
    use crate::oracle::gram;
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

    fn all_encoders() -> Vec<FeatureEncoder> {
        vec![
            FeatureEncoder::Amplitude,
            FeatureEncoder::PolyTensor { degree: 2 },
            FeatureEncoder::AffineAmplitude { offset: 1.0, degree: 2 },
            FeatureEncoder::Coherent { cutoff: 10 },
            FeatureEncoder::wavepacket(0.5),
            FeatureEncoder::evolution(0.7),
        ]
    }

    fn random_density(m: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = ComplexMatrix::from_fn(m, m, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let p = &a * a.adjoint();
        let tr = p.trace();
        p / tr
    }

    #[test]
    fn schmidt_reconstructs_nearly_degenerate_spectrum() {
        // Two Schmidt coefficients agree to 4e-5 here.
        let d = crate::fixtures::synthetic_dataset(4, 4, 11).unwrap();
        let psi = prepare_psi_a(&d, &FeatureEncoder::Coherent { cutoff: 16 }).unwrap();
        let sd = schmidt(&psi).unwrap();
        assert!((sd.coefficients[1] - sd.coefficients[2]).abs() < 1e-4);
        assert!((sd.reconstruct() - psi.amplitudes()).camax() < 1e-14);
    }

    #[test]
    fn single_sample_is_product_state() {
        let d = Dataset::new(vec![Sample::new(vec![3.0, 4.0], 1.0)]).unwrap();
        let psi = prepare_psi_a(&d, &FeatureEncoder::Amplitude).unwrap();
        assert!((psi.global_norm() - 5.0).abs() < 1e-12);
        assert!((psi.amplitudes()[(0, 0)] - C64::new(0.6, 0.0)).norm() < 1e-12);
        assert!((psi.amplitudes()[(0, 1)] - C64::new(0.8, 0.0)).norm() < 1e-12);
        let rho = reduced_density(&psi);
        assert!((rho[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn orthogonal_pair_is_maximally_entangled() {
        let d = Dataset::new(vec![Sample::new(vec![1.0, 0.0], 1.0), Sample::new(vec![0.0, 1.0], 1.0)]).unwrap();
        let psi = prepare_psi_a(&d, &FeatureEncoder::Amplitude).unwrap();
        let rho = reduced_density(&psi);
        assert!((rho - ComplexMatrix::identity(2, 2) * C64::new(0.5, 0.0)).camax() < 1e-12);
        let s = schmidt(&psi).unwrap();
        for l in &s.coefficients {
            assert!((l - 0.5f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_of_full_vector_agrees() {
        let d = random_dataset(3, 2, 6);
        let psi = prepare_psi_a_with(&d, &FeatureEncoder::PolyTensor { degree: 2 }, PrepMode::Explicit).unwrap();
        let v = psi.to_vector();
        let full = &v * v.adjoint();
        let rho = partial_trace(&full, &[3, psi.feature_dim()], &[0]).unwrap();
        assert!((rho - reduced_density(&psi)).camax() < 1e-12);
    }

    #[test]
    fn coherent_schmidt_spectrum_matches_gram() {
        let d = random_dataset(4, 2, 42);
        let enc = FeatureEncoder::Coherent { cutoff: 16 };
        let psi = prepare_psi_a(&d, &enc).unwrap();
        let s = schmidt(&psi).unwrap();
        let g = gram(&d, &enc).unwrap();
        let eig = hermitian_eigen(&g.normalized()).unwrap().0;
        for (l, e) in s.coefficients.iter().zip(&eig) {
            assert!((l * l - e).abs() < 1e-10);
        }
    }

    #[test]
    fn reduced_density_is_conjugate_gram_for_every_encoder() {
        for enc in all_encoders() {
            for (m, seed) in [(1, 1), (5, 2), (16, 3)] {
                let d = random_dataset(m, 3, seed);
                let g = gram(&d, &enc).unwrap();
                let psi = prepare_psi_a(&d, &enc).unwrap();
                assert!((psi.norm() - 1.0).abs() < 1e-12);
                assert!((psi.global_norm().powi(2) - g.trace()).abs() < 1e-8);
                let rho = reduced_density(&psi);
                assert!((rho - g.normalized().conjugate()).camax() < 1e-10, "{enc} M={m}");
                let s = schmidt(&psi).unwrap();
                let total: f64 = s.coefficients.iter().map(|l| l * l).sum();
                assert!((total - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn schmidt_vectors_are_orthonormal_and_reconstruct() {
        let d = random_dataset(6, 3, 9);
        for enc in [FeatureEncoder::AffineAmplitude { offset: 0.5, degree: 2 }, FeatureEncoder::evolution(1.1)] {
            let psi = prepare_psi_a(&d, &enc).unwrap();
            let s = schmidt(&psi).unwrap();
            let k = s.len();
            let id = ComplexMatrix::identity(k, k);
            assert!((s.sample_vectors.adjoint() * &s.sample_vectors - &id).camax() < 1e-10);
            assert!((s.feature_vectors.adjoint() * &s.feature_vectors - &id).camax() < 1e-10);
            assert!((s.reconstruct() - psi.amplitudes()).camax() < 1e-12);
        }
    }

    #[test]
    fn explicit_and_span_modes_agree() {
        let d = random_dataset(7, 2, 77);
        let enc = FeatureEncoder::Coherent { cutoff: 14 };
        let explicit = prepare_psi_a_with(&d, &enc, PrepMode::Explicit).unwrap();
        let span = prepare_psi_a_with(&d, &enc, PrepMode::Span).unwrap();
        assert!((reduced_density(&explicit) - reduced_density(&span)).camax() < 1e-12);
        let se = schmidt(&explicit).unwrap();
        let ss = schmidt(&span).unwrap();
        let query = encode(&enc, &[0.2, -0.4]).unwrap();
        let FeatureBasis::Span(basis) = span.basis().clone() else { panic!() };
        let (coords, outside) = basis.project(&query).unwrap();
        assert!(outside < 1.0);
        let phi = query.amplitudes() * C64::new(query.norm(), 0.0);
        for i in 0..ss.len() {
            assert!((se.coefficients[i] - ss.coefficients[i]).abs() < 1e-12);
            if se.coefficients[i] < 1e-6 {
                continue;
            }
            assert!((se.sample_vectors.column(i) - ss.sample_vectors.column(i)).norm() < 1e-8);
            let overlap_e = se.feature_vectors.column(i).dotc(&phi);
            let overlap_s = ss.feature_vectors.column(i).dotc(&coords);
            assert!((overlap_e - overlap_s).norm() < 1e-8, "{i}: {overlap_e} vs {overlap_s}");
        }
    }

    #[test]
    fn permutation_equivariance() {
        let d = random_dataset(5, 2, 13);
        let order = [4, 0, 3, 1, 2];
        let p = d.permuted(&order).unwrap();
        let enc = FeatureEncoder::PolyTensor { degree: 2 };
        let a = prepare_psi_a(&d, &enc).unwrap();
        let b = prepare_psi_a(&p, &enc).unwrap();
        for (new, &old) in order.iter().enumerate() {
            assert_eq!(b.amplitudes().row(new), a.amplitudes().row(old));
        }
        assert_eq!(a.global_norm(), b.global_norm());
    }

    #[test]
    fn encoder_failure_carries_sample_index() {
        let d = Dataset::new(vec![Sample::new(vec![1.0, 0.0], 0.0), Sample::new(vec![0.0, 0.0], 0.0)]).unwrap();
        assert!(matches!(prepare_psi_a(&d, &FeatureEncoder::Amplitude), Err(Error::Sample { index: 1, .. })));
    }

    #[test]
    fn overlap_rejects_mixed_bases() {
        let d = random_dataset(3, 2, 1);
        let enc = FeatureEncoder::Coherent { cutoff: 8 };
        let a = prepare_psi_a_with(&d, &enc, PrepMode::Explicit).unwrap();
        let b = prepare_psi_a_with(&d, &enc, PrepMode::Span).unwrap();
        assert!(a.overlap(&b).is_err());
        assert!((a.overlap(&a).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn density_validation() {
        assert!(validate_density_matrix(&random_density(3, 1)).is_ok());
        let mut bad = ComplexMatrix::identity(2, 2);
        assert!(validate_density_matrix(&bad).is_err());
        bad[(0, 0)] = C64::new(1.5, 0.0);
        bad[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(validate_density_matrix(&bad).is_err());
        assert!(dme_approximate(&random_density(2, 1), 1.0, 0).is_err());
    }

    #[test]
    fn dme_zero_time_is_identity() {
        let r = dme_approximate(&random_density(3, 2), 0.0, 5).unwrap();
        assert!((r.channel - ComplexMatrix::identity(9, 9)).camax() < 1e-14);
        assert_eq!(r.error, 0.0);
    }

    #[test]
    fn dme_single_step_matches_closed_form() {
        let rho = random_density(3, 5);
        let delta = 0.3f64;
        let step = partial_swap_step(&rho, delta);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma = ComplexMatrix::from_fn(3, 3, |_, _| C64::new(rng.random(), rng.random()));
        let out = &step * ComplexVector::from_column_slice(sigma.as_slice());
        let (c, s) = (delta.cos(), delta.sin());
        let expected = &sigma * C64::new(c * c, 0.0)
            + &rho * (sigma.trace() * s * s)
            + (&rho * &sigma - &sigma * &rho) * C64::new(0.0, s * c);
        assert!((ComplexVector::from_column_slice(expected.as_slice()) - out).camax() < 1e-12);
    }

    #[test]
    fn dme_error_scales_inversely_with_copies() {
        let rho = random_density(4, 11);
        let ns = [8usize, 16, 32, 64, 128];
        let errors: Vec<f64> = ns.iter().map(|&n| dme_approximate(&rho, 1.0, n).unwrap().error).collect();
        let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let (slope, _) = log_log_slope(&xs, &errors).unwrap();
        assert!((slope + 1.0).abs() <= 0.15, "slope {slope}");
        let r = dme_approximate(&rho, 1.0, 64).unwrap();
        assert!(r.error <= r.error_constant / 64.0 * 1.0000001);
    }

    #[test]
    fn dme_maximally_mixed_state_still_has_first_order_error() {
        // ρ = I/M commutes with everything, yet each step still mixes in ρ
        // with weight sin²Δ, so the channel error is O(t²/n), not zero.
        let rho = ComplexMatrix::identity(3, 3) / C64::new(3.0, 0.0);
        let a = dme_approximate(&rho, 1.0, 10).unwrap().error;
        let b = dme_approximate(&rho, 1.0, 20).unwrap().error;
        assert!(a > 1e-3 && (a / b - 2.0).abs() < 0.1);
    }
}
