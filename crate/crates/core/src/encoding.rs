//! Feature-map encodings of real vectors into quantum states.
//!
//! Every encoder maps `a ∈ ℝᴺ` to a unit state `|ψ_a⟩` together with the
//! norm `‖φ(a)‖` of the unnormalized feature vector, so that the kernel
//! induced by the encoding is `k(a, b) = ‖φ(a)‖ ‖φ(b)‖ ⟨ψ_a|ψ_b⟩`.
//!
//! | encoder              | state                                   | kernel (normalized)                        |
//! |----------------------|-----------------------------------------|--------------------------------------------|
//! | `BasicQubit`         | `⊗ᵢ |aᵢ⟩`, `aᵢ ∈ {0,1}`                  | `δ_{ab}`                                   |
//! | `Amplitude`          | `a / ‖a‖`                               | `aᵀb / (‖a‖‖b‖)`                           |
//! | `PolyTensor(d)`      | `(a / ‖a‖)^{⊗d}`                        | `(aᵀb / (‖a‖‖b‖))^d`                       |
//! | `AffineAmplitude(c,d)` | `((c, a) / √(c²+‖a‖²))^{⊗d}`          | `((aᵀb + c²) / √((c²+‖a‖²)(c²+‖b‖²)))^d`  |
//! | `Coherent(cutoff)`   | `⊗ᵢ |aᵢ⟩_c` in a truncated Fock basis    | `exp(-‖a-b‖²/2)`                           |
//! | `PositionWavepacket(σ)` | `⊗ᵢ` Gaussian of width σ at `aᵢ`      | `exp(-‖a-b‖²/(4σ²))`                       |
//! | `Evolution`          | `exp(i H(a) t₀) |0…0⟩`                   | none                                       |
//!
//! The affine map normalizes by `√(c²+‖a‖²)`; its induced inner product
//! carries `c²` (not `c`) because the explicit feature vector is `(c, a)`.
//!
//! Product states keep their tensor factors separate so that overlaps of
//! many-mode encodings never materialize the full tensor product.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{kron_vec, matrix_exponential, ComplexMatrix, ComplexVector, C64, ONE, ZERO};

/// Truncated Fock tail weight above which an encoding carries a warning.
pub const TAIL_WARNING_THRESHOLD: f64 = 1e-6;

/// Largest chain the evolution encoder will simulate.
pub const MAX_EVOLUTION_QUBITS: usize = 6;

/// Wavepacket grid spacing in units of the packet width.
const WAVEPACKET_POINTS_PER_WIDTH: f64 = 4.0;
/// Distance, in widths, a packet centre must keep from the grid edge.
const WAVEPACKET_MARGIN_WIDTHS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: f64,
}

impl Sample {
    pub fn new(features: Vec<f64>, target: f64) -> Self {
        Sample { features, target }
    }
}

/// Training set of `M ≥ 1` samples sharing a feature dimension `N ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::InvalidDataset("no samples".into()))?;
        let n = first.features.len();
        if n == 0 {
            return Err(Error::InvalidDataset("samples have no features".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != n {
                return Err(Error::InvalidDataset(format!(
                    "sample {i} has {} features, expected {n}",
                    s.features.len()
                )));
            }
            if !s.target.is_finite() || s.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidDataset(format!("sample {i} has a non-finite entry")));
            }
        }
        Ok(Dataset { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.samples[0].features.len()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target).collect()
    }

    /// Reorders samples so that entry `i` of the result is sample `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Dataset> {
        let mut seen = vec![false; self.len()];
        if order.len() != self.len() || order.iter().any(|&i| i >= self.len() || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::InvalidDataset("not a permutation of the sample indices".into()));
        }
        Ok(Dataset { samples: order.iter().map(|&i| self.samples[i].clone()).collect() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HamiltonianSpec {
    /// Open chain on `N + 1` qubits: `H = Σⱼ aⱼ ZⱼZⱼ₊₁ + field · Σⱼ Xⱼ`.
    TransverseIsing { field: f64 },
}

impl Default for HamiltonianSpec {
    fn default() -> Self {
        HamiltonianSpec::TransverseIsing { field: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum FeatureEncoder {
    BasicQubit,
    Amplitude,
    PolyTensor { degree: u32 },
    AffineAmplitude { offset: f64, degree: u32 },
    /// `cutoff` is the highest retained Fock number (levels `0..=cutoff`).
    Coherent { cutoff: usize },
    /// Gaussian packets of amplitude width `width` on a grid spanning
    /// `[-extent, extent]` per feature.
    PositionWavepacket { width: f64, extent: f64 },
    Evolution { hamiltonian: HamiltonianSpec, time: f64 },
}

impl FeatureEncoder {
    pub fn wavepacket(width: f64) -> Self {
        FeatureEncoder::PositionWavepacket { width, extent: 4.0 + WAVEPACKET_MARGIN_WIDTHS * width }
    }

    pub fn evolution(time: f64) -> Self {
        FeatureEncoder::Evolution { hamiltonian: HamiltonianSpec::default(), time }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidEncoder(msg));
        match *self {
            FeatureEncoder::PolyTensor { degree } | FeatureEncoder::AffineAmplitude { degree, .. } if degree == 0 => {
                bad("tensor degree must be at least 1".into())
            }
            FeatureEncoder::AffineAmplitude { offset, .. } if !offset.is_finite() => bad("affine offset must be finite".into()),
            FeatureEncoder::Coherent { cutoff } if cutoff < 2 => bad(format!("Fock cutoff {cutoff} is below 2")),
            FeatureEncoder::PositionWavepacket { width, extent } if !(width > 0.0) || !width.is_finite() || !(extent > 0.0) => {
                bad(format!("wavepacket width {width} and extent {extent} must be positive"))
            }
            FeatureEncoder::Evolution { hamiltonian: HamiltonianSpec::TransverseIsing { field }, time }
                if !field.is_finite() || !time.is_finite() =>
            {
                bad("evolution field and time must be finite".into())
            }
            _ => Ok(()),
        }
    }

    /// Whether every encoded amplitude is real for real input.
    pub fn is_real(&self) -> bool {
        !matches!(self, FeatureEncoder::Evolution { .. })
    }

    /// Whether the feature space is infinite dimensional in the continuum
    /// (the simulator then works in the span of the training states).
    pub fn is_continuous_variable(&self) -> bool {
        matches!(self, FeatureEncoder::Coherent { .. } | FeatureEncoder::PositionWavepacket { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureEncoder::BasicQubit => "basic",
            FeatureEncoder::Amplitude => "amplitude",
            FeatureEncoder::PolyTensor { .. } => "poly",
            FeatureEncoder::AffineAmplitude { .. } => "affine",
            FeatureEncoder::Coherent { .. } => "coherent",
            FeatureEncoder::PositionWavepacket { .. } => "wavepacket",
            FeatureEncoder::Evolution { .. } => "evolution",
        }
    }
}

impl fmt::Display for FeatureEncoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureEncoder::BasicQubit | FeatureEncoder::Amplitude => write!(f, "{}", self.name()),
            FeatureEncoder::PolyTensor { degree } => write!(f, "poly:d={degree}"),
            FeatureEncoder::AffineAmplitude { offset, degree } => write!(f, "affine:c={offset},d={degree}"),
            FeatureEncoder::Coherent { cutoff } => write!(f, "coherent:cutoff={cutoff}"),
            FeatureEncoder::PositionWavepacket { width, extent } => write!(f, "wavepacket:sigma={width},extent={extent}"),
            FeatureEncoder::Evolution { hamiltonian: HamiltonianSpec::TransverseIsing { field }, time } => {
                write!(f, "evolution:t0={time},field={field}")
            }
        }
    }
}

/// Parses `name[:key=value,...]`, e.g. `coherent:cutoff=16`, `poly:d=2`,
/// `affine:c=1,d=2`, `wavepacket:sigma=0.5`, `evolution:t0=1,field=1`.
impl FromStr for FeatureEncoder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut pairs = Vec::new();
        for part in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidEncoder(format!("expected key=value, found '{part}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidEncoder(format!("parameter {k} is not a number: '{v}'")))?;
            pairs.push((k.trim().to_ascii_lowercase(), v));
        }
        let get = |keys: &[&str]| pairs.iter().find(|(k, _)| keys.contains(&k.as_str())).map(|(_, v)| *v);
        let known: &[&str] = match name.to_ascii_lowercase().as_str() {
            "basic" | "basic_qubit" | "amplitude" => &[],
            "poly" | "poly_tensor" => &["d", "degree"],
            "affine" | "affine_amplitude" => &["c", "offset", "d", "degree"],
            "coherent" => &["cutoff"],
            "wavepacket" | "position" => &["sigma", "width", "extent"],
            "evolution" => &["t0", "time", "field"],
            other => return Err(Error::InvalidEncoder(format!("unknown encoder '{other}'"))),
        };
        if let Some((k, _)) = pairs.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            return Err(Error::InvalidEncoder(format!("unknown parameter '{k}' for encoder '{name}'")));
        }
        let degree = |default: f64| -> Result<u32> {
            let d = get(&["d", "degree"]).unwrap_or(default);
            if d.fract() != 0.0 || d < 1.0 {
                return Err(Error::InvalidEncoder(format!("degree must be a positive integer, got {d}")));
            }
            Ok(d as u32)
        };
        let enc = match name.to_ascii_lowercase().as_str() {
            "basic" | "basic_qubit" => FeatureEncoder::BasicQubit,
            "amplitude" => FeatureEncoder::Amplitude,
            "poly" | "poly_tensor" => FeatureEncoder::PolyTensor { degree: degree(2.0)? },
            "affine" | "affine_amplitude" => {
                FeatureEncoder::AffineAmplitude { offset: get(&["c", "offset"]).unwrap_or(1.0), degree: degree(2.0)? }
            }
            "coherent" => {
                let c = get(&["cutoff"]).unwrap_or(16.0);
                if c.fract() != 0.0 || c < 0.0 {
                    return Err(Error::InvalidEncoder(format!("cutoff must be a non-negative integer, got {c}")));
                }
                FeatureEncoder::Coherent { cutoff: c as usize }
            }
            "wavepacket" | "position" => {
                let width = get(&["sigma", "width"]).unwrap_or(0.5);
                match get(&["extent"]) {
                    Some(extent) => FeatureEncoder::PositionWavepacket { width, extent },
                    None => FeatureEncoder::wavepacket(width),
                }
            }
            _ => FeatureEncoder::Evolution {
                hamiltonian: HamiltonianSpec::TransverseIsing { field: get(&["field"]).unwrap_or(1.0) },
                time: get(&["t0", "time"]).unwrap_or(1.0),
            },
        };
        enc.validate()?;
        Ok(enc)
    }
}

/// A normalized encoded state stored as a tensor product of factors.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedState {
    factors: Vec<ComplexVector>,
    factor_tails: Vec<f64>,
    norm: f64,
}

impl EncodedState {
    fn product(factors: Vec<ComplexVector>, norm: f64) -> Self {
        let factor_tails = vec![0.0; factors.len()];
        EncodedState { factors, factor_tails, norm }
    }

    /// `‖φ(a)‖`, the norm of the unnormalized feature vector.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn factors(&self) -> &[ComplexVector] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.len()).product()
    }

    /// The full amplitude vector (tensor product of all factors).
    pub fn amplitudes(&self) -> ComplexVector {
        let mut it = self.factors.iter();
        let first = it.next().cloned().unwrap_or_else(|| ComplexVector::from_element(1, ONE));
        it.fold(first, |acc, f| kron_vec(&acc, f))
    }

    /// `⟨self|other⟩` of the normalized states.
    pub fn overlap(&self, other: &EncodedState) -> Result<C64> {
        let same_layout = self.factors.len() == other.factors.len()
            && self.factors.iter().zip(&other.factors).all(|(a, b)| a.len() == b.len());
        if same_layout {
            return Ok(self.factors.iter().zip(&other.factors).map(|(a, b)| a.dotc(b)).product());
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!("encoded dimensions {} and {}", self.dim(), other.dim())));
        }
        Ok(self.amplitudes().dotc(&other.amplitudes()))
    }

    /// Probability weight discarded by Fock-space truncation.
    pub fn tail_weight(&self) -> f64 {
        1.0 - self.factor_tails.iter().map(|t| 1.0 - t).product::<f64>()
    }

    pub fn warning(&self) -> Option<String> {
        let tail = self.tail_weight();
        (tail > TAIL_WARNING_THRESHOLD)
            .then(|| format!("Fock truncation discards weight {tail:.3e}; raise the cutoff"))
    }

    /// Rigorous bound on `|⟨ψ̃_a|ψ̃_b⟩ − ⟨ψ_a|ψ_b⟩|` between truncated,
    /// renormalized product states and their untruncated counterparts.
    ///
    /// Per factor, with tails `t_a, t_b` and `n = √((1−t_a)(1−t_b))`, the
    /// error is at most `(1/n − 1) + √(t_a t_b)/n`; factor overlaps have
    /// modulus ≤ 1 so per-factor bounds add.
    pub fn truncation_bound(&self, other: &EncodedState) -> f64 {
        self.factor_tails
            .iter()
            .zip(&other.factor_tails)
            .map(|(&ta, &tb)| {
                let n = ((1.0 - ta) * (1.0 - tb)).sqrt();
                (1.0 / n - 1.0) + (ta * tb).sqrt() / n
            })
            .sum()
    }

    pub fn is_real(&self) -> bool {
        self.factors.iter().all(|f| f.iter().all(|z| z.im == 0.0))
    }
}

fn check_finite(a: &[f64]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::InvalidDataset("empty feature vector".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("feature vector"));
    }
    Ok(())
}

fn real_vector(values: impl IntoIterator<Item = f64>) -> ComplexVector {
    let v: Vec<C64> = values.into_iter().map(|x| C64::new(x, 0.0)).collect();
    ComplexVector::from_vec(v)
}

fn euclidean(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fock amplitudes `e^{-x²/2} xⁿ/√(n!)` for `n = 0..=cutoff`, renormalized,
/// together with the discarded tail weight `Σ_{n>cutoff} |cₙ|²`.
pub fn coherent_fock_amplitudes(x: f64, cutoff: usize) -> (ComplexVector, f64) {
    let mut c = (-x * x / 2.0).exp();
    let mut kept = Vec::with_capacity(cutoff + 1);
    kept.push(c);
    for n in 1..=cutoff {
        c *= x / (n as f64).sqrt();
        kept.push(c);
    }
    // Summing the tail directly avoids cancellation in 1 − Σ kept².
    let mut tail = 0.0;
    let mut n = cutoff + 1;
    loop {
        c *= x / (n as f64).sqrt();
        tail += c * c;
        if n as f64 > x * x && c * c <= tail * 1e-18 || c == 0.0 {
            break;
        }
        n += 1;
    }
    let kept_norm = kept.iter().map(|v| v * v).sum::<f64>().sqrt();
    (real_vector(kept.into_iter().map(|v| v / kept_norm)), tail)
}

/// Truncated coherent state obtained from the displacement operator
/// `exp(x(a† − a))` applied to the vacuum. The generator is built in a
/// larger Fock space and the result cut back to `0..=cutoff`.
pub fn coherent_via_displacement(x: f64, cutoff: usize) -> Result<ComplexVector> {
    let dim = cutoff + 1 + 48;
    let mut generator = ComplexMatrix::zeros(dim, dim);
    for n in 1..dim {
        let s = (n as f64).sqrt();
        generator[(n, n - 1)] = C64::new(x * s, 0.0); // x a†
        generator[(n - 1, n)] = C64::new(-x * s, 0.0); // −x a
    }
    let d = matrix_exponential(&generator, ONE)?;
    let column = d.column(0).rows(0, cutoff + 1).into_owned();
    let norm = column.norm();
    Ok(column / C64::new(norm, 0.0))
}

fn wavepacket_factor(center: f64, width: f64, extent: f64) -> Result<ComplexVector> {
    if center.abs() + WAVEPACKET_MARGIN_WIDTHS * width > extent {
        return Err(Error::InvalidEncoder(format!(
            "feature {center} lies within {WAVEPACKET_MARGIN_WIDTHS} widths of the wavepacket grid edge ±{extent}"
        )));
    }
    let h = width / WAVEPACKET_POINTS_PER_WIDTH;
    let points = (2.0 * extent / h).round() as usize + 1;
    let step = 2.0 * extent / (points - 1) as f64;
    let raw: Vec<f64> = (0..points)
        .map(|k| {
            let x = -extent + k as f64 * step;
            (-(x - center).powi(2) / (2.0 * width * width)).exp()
        })
        .collect();
    let norm = euclidean(&raw);
    Ok(real_vector(raw.into_iter().map(|v| v / norm)))
}

/// `H = Σⱼ aⱼ ZⱼZⱼ₊₁ + field Σⱼ Xⱼ` on `a.len() + 1` qubits (qubit 0 is the
/// most significant bit of the basis index).
pub fn transverse_ising_hamiltonian(couplings: &[f64], field: f64) -> Result<ComplexMatrix> {
    let qubits = couplings.len() + 1;
    if qubits > MAX_EVOLUTION_QUBITS {
        return Err(Error::InvalidEncoder(format!(
            "evolution encoding of {} features needs {qubits} qubits, limit is {MAX_EVOLUTION_QUBITS}",
            couplings.len()
        )));
    }
    let dim = 1usize << qubits;
    let bit = |state: usize, q: usize| (state >> (qubits - 1 - q)) & 1;
    let mut h = DMatrix::from_element(dim, dim, ZERO);
    for state in 0..dim {
        let zz: f64 = couplings
            .iter()
            .enumerate()
            .map(|(j, a)| if bit(state, j) == bit(state, j + 1) { *a } else { -*a })
            .sum();
        h[(state, state)] = C64::new(zz, 0.0);
        for q in 0..qubits {
            let flipped = state ^ (1 << (qubits - 1 - q));
            h[(flipped, state)] += C64::new(field, 0.0);
        }
    }
    Ok(h)
}

pub fn encode(encoder: &FeatureEncoder, a: &[f64]) -> Result<EncodedState> {
    encoder.validate()?;
    check_finite(a)?;
    match *encoder {
        FeatureEncoder::BasicQubit => {
            let factors = a
                .iter()
                .map(|&x| match x {
                    v if v == 0.0 => Ok(real_vector([1.0, 0.0])),
                    v if v == 1.0 => Ok(real_vector([0.0, 1.0])),
                    v => Err(Error::NonBinary(v)),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(EncodedState::product(factors, 1.0))
        }
        FeatureEncoder::Amplitude => {
            let norm = euclidean(a);
            if norm == 0.0 {
                return Err(Error::ZeroNorm);
            }
            Ok(EncodedState::product(vec![real_vector(a.iter().map(|x| x / norm))], norm))
        }
        FeatureEncoder::PolyTensor { degree } => {
            let norm = euclidean(a);
            if norm == 0.0 {
                return Err(Error::ZeroNorm);
            }
            let factor = real_vector(a.iter().map(|x| x / norm));
            Ok(EncodedState::product(vec![factor; degree as usize], norm.powi(degree as i32)))
        }
        FeatureEncoder::AffineAmplitude { offset, degree } => {
            let squared = offset * offset + a.iter().map(|x| x * x).sum::<f64>();
            if squared == 0.0 {
                return Err(Error::ZeroNorm);
            }
            let root = squared.sqrt();
            let factor = real_vector(std::iter::once(offset).chain(a.iter().copied()).map(|x| x / root));
            Ok(EncodedState::product(vec![factor; degree as usize], squared.powf(degree as f64 / 2.0)))
        }
        FeatureEncoder::Coherent { cutoff } => {
            let (factors, factor_tails) = a.iter().map(|&x| coherent_fock_amplitudes(x, cutoff)).unzip();
            Ok(EncodedState { factors, factor_tails, norm: 1.0 })
        }
        FeatureEncoder::PositionWavepacket { width, extent } => {
            let factors = a.iter().map(|&x| wavepacket_factor(x, width, extent)).collect::<Result<Vec<_>>>()?;
            Ok(EncodedState::product(factors, 1.0))
        }
        FeatureEncoder::Evolution { hamiltonian: HamiltonianSpec::TransverseIsing { field }, time } => {
            let h = transverse_ising_hamiltonian(a, field)?;
            let u = matrix_exponential(&h, C64::new(0.0, time))?;
            let psi = u.column(0).into_owned();
            let norm = psi.norm();
            Ok(EncodedState::product(vec![psi / C64::new(norm, 0.0)], 1.0))
        }
    }
}

/// `⟨φ(a)|φ(b)⟩` computed from the encoded states (norms included).
pub fn kernel_via_state(encoder: &FeatureEncoder, a: &[f64], b: &[f64]) -> Result<C64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("feature lengths {} and {}", a.len(), b.len())));
    }
    let sa = encode(encoder, a)?;
    let sb = encode(encoder, b)?;
    Ok(sa.overlap(&sb)? * (sa.norm() * sb.norm()))
}

/// Closed-form normalized kernel `⟨ψ_a|ψ_b⟩`. Encoders without a closed
/// form (basic qubit, evolution) fall back to the state overlap.
pub fn kernel(encoder: &FeatureEncoder, a: &[f64], b: &[f64]) -> Result<C64> {
    encoder.validate()?;
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("feature lengths {} and {}", a.len(), b.len())));
    }
    check_finite(a)?;
    check_finite(b)?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let sq_dist: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let real = |v: f64| Ok(C64::new(v, 0.0));
    match *encoder {
        FeatureEncoder::Amplitude | FeatureEncoder::PolyTensor { .. } => {
            let (na, nb) = (euclidean(a), euclidean(b));
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroNorm);
            }
            let degree = match *encoder {
                FeatureEncoder::PolyTensor { degree } => degree as i32,
                _ => 1,
            };
            real((dot / (na * nb)).powi(degree))
        }
        FeatureEncoder::AffineAmplitude { offset, degree } => {
            let c2 = offset * offset;
            let (na, nb) = (c2 + euclidean(a).powi(2), c2 + euclidean(b).powi(2));
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroNorm);
            }
            real(((dot + c2) / (na * nb).sqrt()).powi(degree as i32))
        }
        FeatureEncoder::Coherent { .. } => real((-sq_dist / 2.0).exp()),
        FeatureEncoder::PositionWavepacket { width, .. } => real((-sq_dist / (4.0 * width * width)).exp()),
        FeatureEncoder::BasicQubit | FeatureEncoder::Evolution { .. } => {
            let sa = encode(encoder, a)?;
            let sb = encode(encoder, b)?;
            sa.overlap(&sb)
        }
    }
}
