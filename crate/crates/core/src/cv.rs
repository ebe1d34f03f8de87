//! Two ancilla qumodes on a square grid.
//!
//! Momentum samples are `p_k = (k − c) Δp` with `c = (G − 1)/2`, covering
//! `[−L, L]`. The position grid is the FFT dual: `Δq = 2π / (G Δp)`, so the
//! position half-width is roughly `π / Δp`. Wavefunction values are
//! continuum amplitudes, normalized so that `Σ |ψ|² Δ² = 1` in either basis.
//!
//! The resource state `e^{-(p₁²+p₂²)/2s²}` picks up a block-dependent phase
//! `e^{iα p₁p₂}`. Its position wavefunction is the closed form
//!
//! ```text
//! B(α, s, Q₁, Q₂) = (s√π)⁻¹ D^{-1/2} exp(−[(Q₁² + Q₂²)/s² + 2iα Q₁Q₂] / 2D),  D = s⁻⁴ + α²
//! ```
//!
//! which behaves like `e^{−(Q₁²+Q₂²)/2α²s²} / (α s √π)` once `α² s⁴ ≫ 1`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{fft2_centered, ComplexMatrix, FftDirection, C64};

pub const MIN_GRID_POINTS: usize = 65;
/// A single complex block at this size already takes ~270 MB.
pub const MAX_GRID_POINTS: usize = 4097;
/// Largest tolerated amplitude at the edge of either grid, relative to the peak.
pub const MAX_TRUNCATION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QumodeGrid {
    points: usize,
    extent: f64,
}

impl QumodeGrid {
    /// `points` per axis (odd, so the origin is a sample) over momenta `[−extent, extent]`.
    pub fn new(points: usize, extent: f64) -> Result<Self> {
        if points < MIN_GRID_POINTS || points % 2 == 0 {
            return Err(Error::GridTooSmall(format!(
                "need an odd number of points per axis, at least {MIN_GRID_POINTS}; got {points}"
            )));
        }
        if points > MAX_GRID_POINTS {
            return Err(Error::GridTooSmall(format!("{points} points per axis exceeds the limit of {MAX_GRID_POINTS}")));
        }
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::GridTooSmall(format!("extent must be positive, got {extent}")));
        }
        Ok(QumodeGrid { points, extent })
    }

    /// Smallest grid on which the resource state of squeezing `s`, after a
    /// phase of strength up to `alpha_max`, is truncated below `tolerance`
    /// in both bases.
    pub fn for_resource(s: f64, alpha_max: f64, tolerance: f64) -> Result<Self> {
        Self::for_window(s, alpha_max, tolerance, None)
    }

    /// As [`for_resource`](Self::for_resource), additionally capping the
    /// position spacing.
    pub fn for_window(s: f64, alpha_max: f64, tolerance: f64, max_position_spacing: Option<f64>) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() || !alpha_max.is_finite() || !(tolerance > 0.0 && tolerance < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "grid sizing needs s > 0, finite alpha and tolerance in (0, 1); got s={s}, alpha={alpha_max}, tol={tolerance}"
            )));
        }
        let k = (2.0 * (1.0 / tolerance).ln()).sqrt();
        let sigma_q = position_width(alpha_max, s);
        let mut extent = 1.001 * k * s;
        if let Some(dq) = max_position_spacing {
            extent = extent.max(PI / dq);
        }
        // Eight samples per standard deviation of the momentum density, and a
        // position half-width of at least k σ_q (it is π/Δp up to (G−1)/G).
        let spacing = (s / (8.0 * 2f64.sqrt())).min(0.98 * PI / (k * sigma_q));
        let half = (extent / spacing).ceil() as usize;
        let points = (2 * half + 1).max(MIN_GRID_POINTS);
        if points > MAX_GRID_POINTS {
            return Err(Error::GridTooSmall(format!(
                "s = {s}, alpha = {alpha_max} needs {points} points per axis (limit {MAX_GRID_POINTS})"
            )));
        }
        Self::new(points, extent)
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Momentum half-width `L`.
    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn center(&self) -> f64 {
        (self.points as f64 - 1.0) / 2.0
    }

    pub fn momentum_spacing(&self) -> f64 {
        2.0 * self.extent / (self.points as f64 - 1.0)
    }

    pub fn position_spacing(&self) -> f64 {
        2.0 * PI / (self.points as f64 * self.momentum_spacing())
    }

    pub fn position_extent(&self) -> f64 {
        self.center() * self.position_spacing()
    }

    pub fn momentum(&self, k: usize) -> f64 {
        (k as f64 - self.center()) * self.momentum_spacing()
    }

    pub fn position(&self, j: usize) -> f64 {
        (j as f64 - self.center()) * self.position_spacing()
    }

    /// Index of the position sample at `q`, if `q` is one.
    pub fn position_index(&self, q: f64) -> Option<usize> {
        let dq = self.position_spacing();
        let j = (q / dq + self.center()).round();
        if j < 0.0 || j >= self.points as f64 {
            return None;
        }
        let j = j as usize;
        ((self.position(j) - q).abs() <= 1e-9 * dq.max(q.abs())).then_some(j)
    }

    /// Larger of the relative edge amplitudes in momentum and in position for
    /// the resource state after a phase of strength `alpha`.
    pub fn truncation_estimate(&self, alpha: f64, s: f64) -> f64 {
        let momentum = (-(self.extent / s).powi(2) / 2.0).exp();
        let position = (-(self.position_extent() / position_width(alpha, s)).powi(2) / 2.0).exp();
        momentum.max(position)
    }

    /// Position cells overlapping the square `[−side/2, side/2]²`, with
    /// their overlap areas. Index pairs are `(q₁, q₂)`.
    pub fn window_cells(&self, side: f64) -> Vec<(usize, usize, f64)> {
        let h = side / 2.0;
        let dq = self.position_spacing();
        let overlaps: Vec<(usize, f64)> = (0..self.points)
            .filter_map(|j| {
                let x = self.position(j);
                let len = (x + dq / 2.0).min(h) - (x - dq / 2.0).max(-h);
                (len > 0.0).then_some((j, len))
            })
            .collect();
        let mut cells = Vec::with_capacity(overlaps.len() * overlaps.len());
        for &(j1, l1) in &overlaps {
            for &(j2, l2) in &overlaps {
                cells.push((j1, j2, l1 * l2));
            }
        }
        cells
    }
}

/// Amplitude standard deviation of `B(α, s, ·)` along each axis.
pub fn position_width(alpha: f64, s: f64) -> f64 {
    (1.0 / (s * s) + alpha * alpha * s * s).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Momentum,
    Position,
}

impl Basis {
    pub fn name(self) -> &'static str {
        match self {
            Basis::Momentum => "momentum",
            Basis::Position => "position",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoModeWavefunction {
    grid: QumodeGrid,
    values: ComplexMatrix,
    basis: Basis,
}

impl TwoModeWavefunction {
    pub fn grid(&self) -> &QumodeGrid {
        &self.grid
    }

    /// Rows index the first mode, columns the second.
    pub fn values(&self) -> &ComplexMatrix {
        &self.values
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn spacing(&self) -> f64 {
        match self.basis {
            Basis::Momentum => self.grid.momentum_spacing(),
            Basis::Position => self.grid.position_spacing(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.norm() * self.spacing()
    }

    /// Value at a position grid point.
    pub fn value_at(&self, q1: f64, q2: f64) -> Result<C64> {
        require(self.basis, Basis::Position)?;
        match (self.grid.position_index(q1), self.grid.position_index(q2)) {
            (Some(i), Some(j)) => Ok(self.values[(i, j)]),
            _ => Err(Error::OffGrid { q1, q2 }),
        }
    }
}

fn require(found: Basis, expected: Basis) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::WrongBasis { expected: expected.name(), found: found.name() })
    }
}

/// `|G₁₂⟩` in momentum space, normalized on the grid.
pub fn prepare_g12(grid: &QumodeGrid, s: f64) -> Result<TwoModeWavefunction> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidConfig(format!("squeezing s must be positive, got {s}")));
    }
    if grid.extent() < 4.0 * s {
        return Err(Error::GridTooSmall(format!(
            "momentum extent {} cannot hold squeezing s = {s}; need at least {}",
            grid.extent(),
            4.0 * s
        )));
    }
    let dp = grid.momentum_spacing();
    if dp > s / (8.0 * 2f64.sqrt()) {
        let needed = 2 * (grid.extent() * 8.0 * 2f64.sqrt() / s).ceil() as usize + 1;
        return Err(Error::GridTooSmall(format!(
            "momentum spacing {dp:.4} under-resolves s = {s}; need at least {needed} points"
        )));
    }
    let g = grid.points();
    let profile: Vec<f64> = (0..g).map(|k| (-(grid.momentum(k) / s).powi(2) / 2.0).exp()).collect();
    // The 2D norm is the square of the 1D one.
    let scale = 1.0 / (profile.iter().map(|v| v * v).sum::<f64>() * dp);
    let values = ComplexMatrix::from_fn(g, g, |i, j| C64::new(profile[i] * profile[j] * scale, 0.0));
    Ok(TwoModeWavefunction { grid: *grid, values, basis: Basis::Momentum })
}

/// One Schmidt block of the joint DV⊗CV state.
#[derive(Debug, Clone)]
pub struct Block {
    pub coefficient: f64,
    /// Accumulated strength of the `e^{iα p₁p₂}` phase.
    pub alpha: f64,
    pub wavefunction: TwoModeWavefunction,
}

/// Block-diagonal joint state `Σᵢ λᵢ |uᵢ⟩|φᵢ⟩ ⊗ |ψᵢ⟩`.
#[derive(Debug, Clone)]
pub struct JointState {
    s: f64,
    blocks: Vec<Block>,
}

impl JointState {
    /// Attaches a copy of `g12` to every Schmidt coefficient.
    pub fn new(coefficients: &[f64], g12: &TwoModeWavefunction, s: f64) -> Result<Self> {
        require(g12.basis(), Basis::Momentum)?;
        let total: f64 = coefficients.iter().map(|l| l * l).sum::<f64>() * g12.norm().powi(2);
        if coefficients.is_empty() || (total - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidConfig(format!("joint state norm {total} is not 1")));
        }
        let blocks = coefficients
            .iter()
            .map(|&coefficient| Block { coefficient, alpha: 0.0, wavefunction: g12.clone() })
            .collect();
        Ok(JointState { s, blocks })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn squeezing(&self) -> f64 {
        self.s
    }

    pub fn basis(&self) -> Basis {
        self.blocks[0].wavefunction.basis
    }

    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| (b.coefficient * b.wavefunction.norm()).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn apply_phases(joint: &JointState, strengths: &[f64]) -> Result<JointState> {
    require(joint.basis(), Basis::Momentum)?;
    if strengths.len() != joint.blocks.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} phase strengths for {} blocks",
            strengths.len(),
            joint.blocks.len()
        )));
    }
    let blocks = joint
        .blocks
        .par_iter()
        .zip(strengths.par_iter())
        .map(|(block, &a)| {
            let mut out = block.clone();
            out.alpha += a;
            if a != 0.0 {
                let grid = block.wavefunction.grid;
                let p: Vec<f64> = (0..grid.points()).map(|k| grid.momentum(k)).collect();
                for (j, col) in out.wavefunction.values.column_iter_mut().enumerate() {
                    for (i, z) in col.into_iter().enumerate() {
                        *z *= C64::from_polar(1.0, a * p[i] * p[j]);
                    }
                }
            }
            out
        })
        .collect();
    Ok(JointState { s: joint.s, blocks })
}

/// Block `i` times `e^{iηκᵢ p₁p₂}`.
pub fn conditional_phase(joint: &JointState, eta: f64, kappas: &[f64]) -> Result<JointState> {
    let strengths: Vec<f64> = kappas.iter().map(|k| eta * k).collect();
    apply_phases(joint, &strengths)
}

/// Every block times `e^{iηχ' p₁p₂}`.
pub fn regularization_gate(joint: &JointState, eta: f64, chi: f64) -> Result<JointState> {
    apply_phases(joint, &vec![eta * chi; joint.blocks.len()])
}

fn transform(joint: &JointState, from: Basis, to: Basis, direction: FftDirection) -> Result<JointState> {
    require(joint.basis(), from)?;
    let blocks = joint
        .blocks
        .iter()
        .map(|b| {
            let grid = b.wavefunction.grid;
            let ratio = grid.momentum_spacing() / grid.position_spacing();
            let scale = if to == Basis::Position { ratio } else { 1.0 / ratio };
            let values = fft2_centered(&b.wavefunction.values, direction) * C64::new(scale, 0.0);
            Block { wavefunction: TwoModeWavefunction { grid, values, basis: to }, ..b.clone() }
        })
        .collect();
    Ok(JointState { s: joint.s, blocks })
}

/// Centered 2D Fourier transform of every block into position space.
pub fn to_position(joint: &JointState) -> Result<JointState> {
    require(joint.basis(), Basis::Momentum)?;
    for b in &joint.blocks {
        let t = b.wavefunction.grid.truncation_estimate(b.alpha, joint.s);
        if t > MAX_TRUNCATION {
            return Err(Error::GridTooSmall(format!(
                "alpha = {}, s = {} leaves relative edge amplitude {t:.2e}; enlarge the grid",
                b.alpha, joint.s
            )));
        }
    }
    transform(joint, Basis::Momentum, Basis::Position, FftDirection::Forward)
}

pub fn to_momentum(joint: &JointState) -> Result<JointState> {
    transform(joint, Basis::Position, Basis::Momentum, FftDirection::Inverse)
}

/// Inverse-CDF sampler over the cells of the position grid with weights
/// `Σᵢ λᵢ² |ψᵢ|²`.
#[derive(Debug, Clone)]
pub struct HomodyneSampler {
    grid: QumodeGrid,
    cdf: Vec<f64>,
}

impl HomodyneSampler {
    pub fn new(joint: &JointState) -> Result<Self> {
        require(joint.basis(), Basis::Position)?;
        let grid = joint.blocks[0].wavefunction.grid;
        let n = grid.points() * grid.points();
        let mut density = vec![0.0; n];
        for b in &joint.blocks {
            let w = b.coefficient * b.coefficient;
            for (d, z) in density.iter_mut().zip(b.wavefunction.values.iter()) {
                *d += w * z.norm_sqr();
            }
        }
        let mut total = 0.0;
        let cdf: Vec<f64> = density
            .iter()
            .map(|d| {
                total += d;
                total
            })
            .collect();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateDensity);
        }
        Ok(HomodyneSampler { grid, cdf: cdf.into_iter().map(|c| c / total).collect() })
    }

    pub fn grid(&self) -> &QumodeGrid {
        &self.grid
    }

    /// Probability of each cell, column-major over `(q₁, q₂)`.
    pub fn cell_probability(&self, i: usize, j: usize) -> f64 {
        let idx = j * self.grid.points() + i;
        self.cdf[idx] - if idx == 0 { 0.0 } else { self.cdf[idx - 1] }
    }

    pub fn sample_cell<R: Rng>(&self, rng: &mut R) -> (usize, usize) {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        // Skip zero-probability cells that share a CDF value with their predecessor.
        (idx % self.grid.points(), idx / self.grid.points())
    }

    /// Outcome at the sampled cell's grid point.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let (i, j) = self.sample_cell(rng);
        (self.grid.position(i), self.grid.position(j))
    }

    /// Outcome uniformly distributed inside the sampled cell.
    pub fn sample_continuous<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let (q1, q2) = self.sample(rng);
        let dq = self.grid.position_spacing();
        (q1 + dq * (rng.random::<f64>() - 0.5), q2 + dq * (rng.random::<f64>() - 0.5))
    }
}

pub fn homodyne_sample(joint: &JointState, seed: u64) -> Result<(f64, f64)> {
    let sampler = HomodyneSampler::new(joint)?;
    Ok(sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// DV weights `λᵢ ψᵢ(Q₁, Q₂)` after both homodyne outcomes, and their total
/// weight `Σᵢ |λᵢ ψᵢ|²`, the outcome density.
pub fn postselect(joint: &JointState, q1: f64, q2: f64) -> Result<(Vec<C64>, f64)> {
    let weights = joint
        .blocks
        .iter()
        .map(|b| Ok(b.wavefunction.value_at(q1, q2)? * b.coefficient))
        .collect::<Result<Vec<C64>>>()?;
    let density = weights.iter().map(|w| w.norm_sqr()).sum();
    Ok((weights, density))
}

/// Exact position wavefunction of `e^{iα p̂₁p̂₂} |G₁₂⟩` at `(Q₁, Q₂)`.
pub fn analytic_b(alpha: f64, s: f64, q1: f64, q2: f64) -> C64 {
    let d = s.powi(-4) + alpha * alpha;
    let prefactor = 1.0 / (s * PI.sqrt() * d.sqrt());
    let exponent = C64::new((q1 * q1 + q2 * q2) / (s * s), 2.0 * alpha * q1 * q2) / (-2.0 * d);
    exponent.exp() * prefactor
}

/// `∫∫ |B(α, s, Q)|² dQ` over the square of the given side centered at the
/// origin, by composite Simpson quadrature of the separable integrand.
pub fn window_probability(alpha: f64, s: f64, side: f64) -> f64 {
    let d = s.powi(-4) + alpha * alpha;
    let width2 = s * s * d;
    let h = side / 2.0;
    let n = 400;
    let step = 2.0 * h / n as f64;
    let f = |x: f64| (-x * x / width2).exp();
    let mut sum = f(-h) + f(h);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(-h + k as f64 * step);
    }
    let line = sum * step / 3.0;
    line * line / (PI * s * s * d)
}

/// Block `ψ` for phase strength `kappa` (register eigenvalue) plus the
/// regularization shift, evaluated in position space.
pub fn evolve_block(grid: &QumodeGrid, s: f64, eta: f64, kappa: f64, chi: f64) -> Result<TwoModeWavefunction> {
    let g12 = prepare_g12(grid, s)?;
    let joint = JointState::new(&[1.0], &g12, s)?;
    let joint = conditional_phase(&joint, eta, &[kappa])?;
    let joint = regularization_gate(&joint, eta, chi)?;
    let joint = to_position(&joint)?;
    Ok(joint.blocks.into_iter().next().expect("one block").wavefunction)
}
