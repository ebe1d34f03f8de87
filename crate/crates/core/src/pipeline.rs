//! End-to-end regression: state preparation, phase estimation on two
//! qumodes, regularization, homodyne post-selection and the final
//! inner-product readout, at four levels of fidelity.
//!
//! Norm bookkeeping. With `G² = Tr K` and normalized Schmidt coefficients
//! `λᵢ`, the raw singular values are `G λᵢ` and the regression state is
//! `Σᵢ cᵢ |uᵢ⟩|φᵢ⟩` with `cᵢ = Gλᵢ / (G²λᵢ² + χ)`. The readout measures the
//! real part of the overlap of its normalized version with
//! `|ψ_R⟩ = |y⟩|ψ_ã⟩ / (‖y‖ ‖φ(ã)‖)`, hence
//!
//! ```text
//! ỹ = ‖c‖ · ‖y‖ · ‖φ(ã)‖ · ỹ'
//! ```
//!
//! After the qumodes the DV weights are `wᵢ = λᵢ B(αᵢ, s, Q)` with
//! `αᵢ = η(G²λᵢ² + χ)`. Near the origin `B ≈ 1/(αᵢ s √π)`, so
//! `cᵢ ≈ wᵢ · G η s √π`; that factor joins the bookkeeping for CV tiers.
//!
//! The qumode phase is applied as `e^{iη' κᵢ p₁p₂}` with the register
//! eigenvalues `κᵢ = λᵢ²` of `K / Tr K` and `η' = η Tr K`, and the
//! regularization gate uses `χ' = χ / Tr K`, so the accumulated strength
//! is exactly `αᵢ` in raw units.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::{analytic_b, evolve_block, window_probability, QumodeGrid};
use crate::dv::{prepare_from_states, schmidt, FeatureBasis, HybridPureState, PrepMode, SchmidtData};
use crate::encoding::{encode, Dataset, EncodedState, FeatureEncoder};
use crate::error::{Error, Result};
use crate::numerics::{log_log_slope, ComplexVector, C64};
use crate::oracle::{encode_dataset, fit, KrrModel, SINGULAR_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    Ideal,
    CvAnalytic,
    CvGrid,
    ShotSampled,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::Ideal, Tier::CvAnalytic, Tier::CvGrid, Tier::ShotSampled];

    pub fn name(self) -> &'static str {
        match self {
            Tier::Ideal => "ideal",
            Tier::CvAnalytic => "cv-analytic",
            Tier::CvGrid => "cv-grid",
            Tier::ShotSampled => "shot-sampled",
        }
    }

    fn needs_grid(self) -> bool {
        matches!(self, Tier::CvGrid | Tier::ShotSampled)
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tier::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown tier '{s}' (expected ideal, cv-analytic, cv-grid or shot-sampled)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum GridSpec {
    /// Sized from `s` and the largest `α` so that truncation stays below `tolerance`.
    Auto { tolerance: f64 },
    Fixed { points: usize, extent: f64 },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Auto { tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Phase-estimation strength; `None` picks `1/(λ_max² + χ)` in raw units.
    pub eta: Option<f64>,
    pub chi: f64,
    pub s: f64,
    /// Area of the square post-selection window around the origin.
    pub epsilon_q: f64,
    pub tier: Tier,
    /// Repetitions for the shot-sampled readout.
    pub shots: u64,
    /// Homodyne measurements for the grid tier.
    pub homodyne_draws: u64,
    pub grid: GridSpec,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            eta: None,
            chi: 0.1,
            s: 4.0,
            epsilon_q: 0.01,
            tier: Tier::Ideal,
            shots: 100_000,
            homodyne_draws: 1_000_000,
            grid: GridSpec::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.chi >= 0.0) || !self.chi.is_finite() {
            return bad(format!("chi must be finite and non-negative, got {}", self.chi));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) || !eta.is_finite() {
                return bad(format!("eta must be positive, got {eta}"));
            }
        }
        if !(self.s > 0.0) || !self.s.is_finite() {
            return bad(format!("s must be positive, got {}", self.s));
        }
        if !(self.epsilon_q > 0.0) || !self.epsilon_q.is_finite() {
            return bad(format!("epsilon_q must be positive, got {}", self.epsilon_q));
        }
        if self.tier == Tier::ShotSampled && self.shots == 0 {
            return bad("shots must be at least 1 for the shot-sampled tier".into());
        }
        if self.tier == Tier::CvGrid && self.homodyne_draws == 0 {
            return bad("homodyne_draws must be at least 1 for the cv-grid tier".into());
        }
        match self.grid {
            GridSpec::Auto { tolerance } if !(tolerance > 0.0 && tolerance < 1.0) => {
                bad(format!("grid tolerance must lie in (0, 1), got {tolerance}"))
            }
            GridSpec::Fixed { points, extent } => QumodeGrid::new(points, extent).map(|_| ()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub index: usize,
    pub tier: Tier,
    /// Rescaled prediction `ỹ`; absent when no homodyne outcome was accepted.
    pub y_quantum: Option<f64>,
    /// Normalized overlap `ỹ'`.
    pub y_prime: Option<f64>,
    /// Exact `ỹ'` the estimate targets (window average for CV grid tiers).
    pub y_prime_exact: f64,
    /// Prediction from the DV state collapsed at `Q = (0, 0)` (CV tiers).
    pub y_quantum_origin: Option<f64>,
    pub y_oracle: f64,
    /// Inner-product test success rate `(1 + ỹ')/2`.
    pub success_prob: Option<f64>,
    /// Probability that a homodyne outcome lands in the window.
    pub acceptance_prob: f64,
    pub accepted_shots: u64,
    pub total_shots: u64,
    pub stderr: Option<f64>,
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
    pub eta: f64,
    pub config: PipelineConfig,
}

/// `|y⟩ ⊗ |ψ_ã⟩` in the feature basis of `|ψ_A⟩`, with `global_norm = ‖y‖ ‖φ(ã)‖`.
pub fn build_reference_state(targets: &[f64], query: &EncodedState, basis: &FeatureBasis) -> Result<HybridPureState> {
    let y_norm = targets.iter().map(|t| t * t).sum::<f64>().sqrt();
    if !(y_norm > 0.0) {
        return Err(Error::InvalidDataset("target vector is zero".into()));
    }
    let y = ComplexVector::from_iterator(targets.len(), targets.iter().map(|&t| C64::new(t / y_norm, 0.0)));
    let global_norm = y_norm * query.norm();
    match basis {
        FeatureBasis::Explicit => {
            let amplitudes = &y * query.amplitudes().transpose();
            Ok(HybridPureState::with_outside(amplitudes, basis.clone(), global_norm, 0.0))
        }
        FeatureBasis::Span(span) => {
            let (coords, outside) = span.project(query)?;
            let phi = coords / C64::new(query.norm(), 0.0);
            let amplitudes = &y * phi.transpose();
            Ok(HybridPureState::with_outside(amplitudes, basis.clone(), global_norm, outside / query.norm()))
        }
    }
}

/// Coefficients `cᵢ = Gλᵢ / (G²λᵢ² + χ)` of the regression state.
pub fn ideal_coefficients(schmidt: &SchmidtData, global_norm: f64, n_samples: usize, chi: f64) -> Result<Vec<f64>> {
    if !(chi >= 0.0) {
        return Err(Error::InvalidConfig(format!("chi must be non-negative, got {chi}")));
    }
    let raw: Vec<f64> = schmidt.coefficients.iter().map(|l| l * global_norm).collect();
    if chi == 0.0 {
        let smallest = if raw.len() < n_samples { 0.0 } else { raw.last().copied().unwrap_or(0.0) };
        if smallest * smallest <= SINGULAR_TOLERANCE {
            return Err(Error::RegularizationRequired { min_eigenvalue: smallest * smallest });
        }
    }
    Ok(raw.iter().map(|&l| if l == 0.0 { 0.0 } else { l / (l * l + chi) }).collect())
}

/// `Σᵢ cᵢ |uᵢ⟩|φᵢ⟩`, normalized; `global_norm` carries `‖c‖`.
pub fn singular_value_transform_ideal(schmidt: &SchmidtData, global_norm: f64, n_samples: usize, chi: f64) -> Result<HybridPureState> {
    let c = ideal_coefficients(schmidt, global_norm, n_samples, chi)?;
    let weights: Vec<C64> = c.iter().map(|&x| C64::new(x, 0.0)).collect();
    HybridPureState::from_unnormalized(schmidt.reweighted(&weights), schmidt.basis.clone(), 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerProductMode {
    Exact,
    Shots { n: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerProduct {
    pub y_prime: f64,
    pub success_prob: f64,
    pub stderr: f64,
}

/// Re-based swap/Hadamard test: success rate `p = (1 + Re⟨a|r⟩)/2`.
pub fn predict_inner_product(state_a: &HybridPureState, state_r: &HybridPureState, mode: InnerProductMode) -> Result<InnerProduct> {
    let overlap = state_a.overlap(state_r)?;
    let exact = overlap.re.clamp(-1.0, 1.0);
    let p = (1.0 + exact) / 2.0;
    match mode {
        InnerProductMode::Exact => Ok(InnerProduct { y_prime: exact, success_prob: p, stderr: 0.0 }),
        InnerProductMode::Shots { n, seed } => {
            let (y_prime, stderr) = bernoulli_estimate(p, n, &mut ChaCha8Rng::seed_from_u64(seed))?;
            Ok(InnerProduct { y_prime, success_prob: (1.0 + y_prime) / 2.0, stderr })
        }
    }
}

fn bernoulli_estimate(p: f64, n: u64, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidConfig("shots must be at least 1".into()));
    }
    let ones = Binomial::new(n, p.clamp(0.0, 1.0)).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng);
    let p_hat = ones as f64 / n as f64;
    Ok((2.0 * p_hat - 1.0, 2.0 * (p_hat * (1.0 - p_hat) / n as f64).sqrt()))
}

/// Tracked constants relating `ỹ'` to `ỹ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bookkeeping {
    /// Norm of the unnormalized transformed state.
    pub transformed_norm: f64,
    /// `‖y‖ ‖φ(ã)‖`.
    pub reference_norm: f64,
    /// `G η s √π` after the qumodes, 1 otherwise.
    pub cv_scale: f64,
}

pub fn rescale_prediction(y_prime: f64, bookkeeping: &Bookkeeping) -> Result<f64> {
    for (name, v) in [
        ("transformed_norm", bookkeeping.transformed_norm),
        ("reference_norm", bookkeeping.reference_norm),
        ("cv_scale", bookkeeping.cv_scale),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Numerical(format!("bookkeeping entry {name} is missing or invalid ({v})")));
        }
    }
    Ok(y_prime * bookkeeping.transformed_norm * bookkeeping.reference_norm * bookkeeping.cv_scale)
}

/// Position-space samples of every block needed by the grid tiers.
#[derive(Debug, Clone)]
struct GridData {
    grid: QumodeGrid,
    origin: Vec<C64>,
    /// Window cells: overlap area and the block values at the cell.
    cells: Vec<(f64, Vec<C64>)>,
    /// Conditional distribution of accepted outcomes over `cells`.
    cell_weights: Vec<f64>,
    acceptance: f64,
}

/// Everything about a training set that does not depend on the query.
#[derive(Debug, Clone)]
pub struct Regressor {
    config: PipelineConfig,
    encoder: FeatureEncoder,
    targets: Vec<f64>,
    model: KrrModel,
    psi_a: HybridPureState,
    schmidt: SchmidtData,
    coefficients: Vec<f64>,
    eta: f64,
    alphas: Vec<f64>,
    grid: Option<GridData>,
}

fn step<T>(r: Result<T>, n: u8, name: &'static str) -> Result<T> {
    r.map_err(|e| e.at_step(n, name))
}

impl Regressor {
    pub fn new(dataset: &Dataset, encoder: &FeatureEncoder, config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        encoder.validate()?;
        let model = step(fit(dataset, encoder, config.chi), 1, "state preparation")?;
        let states = step(encode_dataset(dataset, encoder), 1, "state preparation")?;
        let mode = if encoder.is_continuous_variable() { PrepMode::Span } else { PrepMode::Auto };
        let psi_a = step(prepare_from_states(states, mode), 1, "state preparation")?;
        let schmidt = step(schmidt(&psi_a), 2, "phase estimation")?;
        let g = psi_a.global_norm();
        let coefficients = step(ideal_coefficients(&schmidt, g, dataset.len(), config.chi), 3, "regularization")?;

        let raw_sq: Vec<f64> = schmidt.coefficients.iter().map(|l| (l * g).powi(2)).collect();
        let eta = config.eta.unwrap_or(1.0 / (raw_sq[0] + config.chi));
        let alphas: Vec<f64> = raw_sq.iter().map(|l2| eta * (l2 + config.chi)).collect();

        let mut regressor = Regressor {
            config: *config,
            encoder: *encoder,
            targets: dataset.targets(),
            model,
            psi_a,
            schmidt,
            coefficients,
            eta,
            alphas,
            grid: None,
        };
        if config.tier.needs_grid() {
            regressor.grid = Some(regressor.simulate_qumodes()?);
        }
        Ok(regressor)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `αᵢ = η(λᵢ² + χ)` per Schmidt block, raw units.
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn schmidt(&self) -> &SchmidtData {
        &self.schmidt
    }

    pub fn psi_a(&self) -> &HybridPureState {
        &self.psi_a
    }

    pub fn model(&self) -> &KrrModel {
        &self.model
    }

    pub fn ideal_coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn grid(&self) -> Option<&QumodeGrid> {
        self.grid.as_ref().map(|g| &g.grid)
    }

    /// Smallest `α` over blocks with nonzero weight.
    pub fn alpha_min(&self) -> f64 {
        self.alphas
            .iter()
            .zip(&self.schmidt.coefficients)
            .filter(|(_, &l)| l > 0.0)
            .map(|(a, _)| *a)
            .fold(f64::INFINITY, f64::min)
    }

    fn cv_scale(&self) -> f64 {
        self.psi_a.global_norm() * self.eta * self.config.s * PI.sqrt()
    }

    fn simulate_qumodes(&self) -> Result<GridData> {
        let s = self.config.s;
        let alpha_max = self.alphas.iter().copied().fold(0.0, f64::max);
        let grid = match self.config.grid {
            GridSpec::Auto { tolerance } => QumodeGrid::for_resource(s, alpha_max, tolerance),
            GridSpec::Fixed { points, extent } => QumodeGrid::new(points, extent),
        };
        let grid = step(grid, 2, "phase estimation")?;
        let side = self.config.epsilon_q.sqrt();
        if side > 2.0 * grid.position_extent() {
            return Err(Error::InvalidConfig(format!(
                "window side {side} exceeds the position grid width {}",
                2.0 * grid.position_extent()
            )));
        }
        let trace = self.psi_a.global_norm().powi(2);
        let eta_gate = self.eta * trace;
        let chi_gate = self.config.chi / trace;
        let window = grid.window_cells(side);
        let c = grid.center() as usize;
        let k = self.schmidt.len();
        let mut origin = vec![C64::new(0.0, 0.0); k];
        let mut cells: Vec<(f64, Vec<C64>)> = window.iter().map(|&(_, _, area)| (area, vec![C64::new(0.0, 0.0); k])).collect();
        let mut total = 0.0;
        // One block at a time keeps memory at a single grid.
        for (i, &lambda) in self.schmidt.coefficients.iter().enumerate() {
            if lambda == 0.0 {
                continue;
            }
            let kappa = lambda * lambda;
            let psi = step(evolve_block(&grid, s, eta_gate, kappa, chi_gate), 2, "phase estimation")?;
            let v = psi.values();
            origin[i] = v[(c, c)];
            for (cell, &(a, b, _)) in cells.iter_mut().zip(&window) {
                cell.1[i] = v[(a, b)];
            }
            total += lambda * lambda * psi.norm().powi(2);
        }
        let cell_weights: Vec<f64> = cells
            .iter()
            .map(|(area, values)| {
                area * values.iter().zip(&self.schmidt.coefficients).map(|(z, l)| (z * l).norm_sqr()).sum::<f64>()
            })
            .collect();
        let mass: f64 = cell_weights.iter().sum();
        if !(mass > 0.0) {
            return Err(Error::DegenerateDensity.at_step(4, "homodyne detection"));
        }
        Ok(GridData { grid, origin, cells, cell_weights, acceptance: (mass / total).min(1.0) })
    }

    /// Acceptance probability from the closed form, summed over blocks.
    pub fn analytic_acceptance(&self) -> f64 {
        let side = self.config.epsilon_q.sqrt();
        self.schmidt
            .coefficients
            .iter()
            .zip(&self.alphas)
            .map(|(l, &a)| l * l * window_probability(a, self.config.s, side))
            .sum()
    }

    /// `|⟨c|w(0,0)⟩|² / (‖c‖²‖w‖²)` between the ideal coefficients and the
    /// grid-simulated DV weights at the origin.
    pub fn origin_fidelity(&self) -> Option<f64> {
        let g = self.grid.as_ref()?;
        let w = self.weights(&g.origin);
        let dot: C64 = self.coefficients.iter().zip(&w).map(|(c, w)| w * *c).sum();
        let nc: f64 = self.coefficients.iter().map(|c| c * c).sum();
        let nw: f64 = w.iter().map(|z| z.norm_sqr()).sum();
        Some(dot.norm_sqr() / (nc * nw))
    }

    fn weights(&self, block_values: &[C64]) -> Vec<C64> {
        block_values.iter().zip(&self.schmidt.coefficients).map(|(b, l)| b * *l).collect()
    }

    /// `⟨uᵢ ⊗ φᵢ|ψ_R⟩` for every Schmidt block.
    fn block_overlaps(&self, reference: &HybridPureState) -> Vec<C64> {
        let r = reference.amplitudes();
        (0..self.schmidt.len())
            .map(|i| {
                let u = self.schmidt.sample_vectors.column(i);
                let phi = self.schmidt.feature_vectors.column(i);
                u.dotc(&(r * phi.conjugate()))
            })
            .collect()
    }

    /// `(ỹ', ‖w‖)` for DV weights `w`.
    fn readout(weights: &[C64], overlaps: &[C64]) -> (f64, f64) {
        let norm = weights.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let dot: C64 = weights.iter().zip(overlaps).map(|(w, a)| w.conj() * a).sum();
        ((dot.re / norm).clamp(-1.0, 1.0), norm)
    }

    pub fn predict(&self, a: &[f64], index: usize) -> Result<PredictionResult> {
        let y_oracle = self.model.predict(a)?;
        let query = step(encode(&self.encoder, a), 5, "inner product")?;
        let reference = step(build_reference_state(&self.targets, &query, self.psi_a.basis()), 5, "inner product")?;
        let reference_norm = reference.global_norm();
        let config = self.config;
        let mut out = PredictionResult {
            index,
            tier: config.tier,
            y_quantum: None,
            y_prime: None,
            y_prime_exact: 0.0,
            y_quantum_origin: None,
            y_oracle,
            success_prob: None,
            acceptance_prob: 1.0,
            accepted_shots: 0,
            total_shots: 0,
            stderr: None,
            abs_error: None,
            rel_error: None,
            eta: self.eta,
            config,
        };

        match config.tier {
            Tier::Ideal => {
                let state = step(
                    singular_value_transform_ideal(&self.schmidt, self.psi_a.global_norm(), self.targets.len(), config.chi),
                    3,
                    "regularization",
                )?;
                let overlap = step(state.overlap(&reference), 5, "inner product")?;
                if self.encoder.is_real() && overlap.im.abs() > 1e-12 {
                    return Err(Error::Numerical(format!("ideal overlap has imaginary part {:.3e}", overlap.im))
                        .at_step(5, "inner product"));
                }
                let ip = step(predict_inner_product(&state, &reference, InnerProductMode::Exact), 5, "inner product")?;
                let book = Bookkeeping { transformed_norm: state.global_norm(), reference_norm, cv_scale: 1.0 };
                out.y_quantum = Some(step(rescale_prediction(ip.y_prime, &book), 5, "inner product")?);
                out.y_prime = Some(ip.y_prime);
                out.y_prime_exact = ip.y_prime;
            }
            Tier::CvAnalytic => {
                let overlaps = self.block_overlaps(&reference);
                let b: Vec<C64> = self.alphas.iter().map(|&al| analytic_b(al, config.s, 0.0, 0.0)).collect();
                let w = self.weights(&b);
                let (y_prime, norm) = Self::readout(&w, &overlaps);
                let book = Bookkeeping { transformed_norm: norm, reference_norm, cv_scale: self.cv_scale() };
                let y = step(rescale_prediction(y_prime, &book), 5, "inner product")?;
                out.y_quantum = Some(y);
                out.y_quantum_origin = Some(y);
                out.y_prime = Some(y_prime);
                out.y_prime_exact = y_prime;
                out.acceptance_prob = self.analytic_acceptance();
            }
            Tier::CvGrid | Tier::ShotSampled => {
                let g = self.grid.as_ref().expect("grid tiers simulate qumodes");
                let overlaps = self.block_overlaps(&reference);
                let scale = reference_norm * self.cv_scale();
                let per_cell: Vec<(f64, f64)> = g.cells.iter().map(|(_, v)| Self::readout(&self.weights(v), &overlaps)).collect();
                let (y0, n0) = Self::readout(&self.weights(&g.origin), &overlaps);
                out.y_quantum_origin = Some(y0 * n0 * scale);
                let mass: f64 = g.cell_weights.iter().sum();
                out.y_prime_exact = per_cell.iter().zip(&g.cell_weights).map(|((y, _), w)| y * w).sum::<f64>() / mass;
                out.acceptance_prob = g.acceptance;

                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(index as u64);
                let total = if config.tier == Tier::CvGrid { config.homodyne_draws } else { config.shots };
                let accepted = Binomial::new(total, g.acceptance)
                    .map_err(|e| Error::Numerical(e.to_string()).at_step(4, "homodyne detection"))?
                    .sample(&mut rng);
                out.total_shots = total;
                out.accepted_shots = accepted;
                if accepted > 0 {
                    let pick = WeightedIndex::new(&g.cell_weights)
                        .map_err(|e| Error::Numerical(e.to_string()).at_step(4, "homodyne detection"))?;
                    let mut hits = vec![0u64; per_cell.len()];
                    for _ in 0..accepted {
                        hits[pick.sample(&mut rng)] += 1;
                    }
                    if config.tier == Tier::CvGrid {
                        let n = accepted as f64;
                        let y_prime = hits.iter().zip(&per_cell).map(|(&h, (y, _))| h as f64 * y).sum::<f64>() / n;
                        let y = hits.iter().zip(&per_cell).map(|(&h, (y, w))| h as f64 * y * w).sum::<f64>() / n * scale;
                        out.y_prime = Some(y_prime);
                        out.y_quantum = Some(y);
                    } else {
                        let mut ones = 0u64;
                        for (&h, (y, _)) in hits.iter().zip(&per_cell) {
                            if h > 0 {
                                let p = ((1.0 + y) / 2.0).clamp(0.0, 1.0);
                                ones += Binomial::new(h, p).map_err(|e| Error::Numerical(e.to_string()))?.sample(&mut rng);
                            }
                        }
                        let n = accepted as f64;
                        let p_hat = ones as f64 / n;
                        let y_prime = 2.0 * p_hat - 1.0;
                        let mean_norm = per_cell.iter().zip(&g.cell_weights).map(|((_, w), c)| w * c).sum::<f64>() / mass;
                        out.y_prime = Some(y_prime);
                        out.stderr = Some(2.0 * (p_hat * (1.0 - p_hat) / n).sqrt());
                        out.y_quantum = Some(y_prime * mean_norm * scale);
                    }
                }
            }
        }
        out.success_prob = out.y_prime.map(|y| (1.0 + y) / 2.0);
        if let Some(y) = out.y_quantum {
            let abs = (y - y_oracle).abs();
            out.abs_error = Some(abs);
            out.rel_error = Some(abs / y_oracle.abs().max(f64::MIN_POSITIVE));
        }
        Ok(out)
    }
}

/// Predictions for every test point, in input order.
pub fn run_regression(
    dataset: &Dataset,
    encoder: &FeatureEncoder,
    config: &PipelineConfig,
    test_points: &[Vec<f64>],
) -> Result<Vec<PredictionResult>> {
    let regressor = Regressor::new(dataset, encoder, config)?;
    test_points
        .par_iter()
        .enumerate()
        .map(|(i, a)| regressor.predict(a, i).map_err(|e| e.at_sample(i)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRateRow {
    pub epsilon_q: f64,
    pub s: f64,
    pub success_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRateStudy {
    pub eta: f64,
    pub alpha_typ: f64,
    pub rows: Vec<SuccessRateRow>,
    pub slope: f64,
    pub intercept: f64,
}

/// `Σᵢ λᵢ² ∫_window |B(αᵢ, s, Q)|² dQ` for a window of area `epsilon_q`.
pub fn window_acceptance(coefficients: &[f64], alphas: &[f64], s: f64, epsilon_q: f64) -> f64 {
    coefficients
        .iter()
        .zip(alphas)
        .map(|(l, &a)| l * l * window_probability(a, s, epsilon_q.sqrt()))
        .sum()
}

fn check_sweep(epsilons: &[f64]) -> Result<()> {
    let lo = epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = epsilons.iter().copied().fold(0.0, f64::max);
    if epsilons.len() < 5 || !(lo > 0.0) || hi / lo < 100.0 {
        return Err(Error::InvalidConfig(format!(
            "sweep too narrow: need at least 5 positive values spanning two decades, got {} values over [{lo}, {hi}]",
            epsilons.len()
        )));
    }
    Ok(())
}

/// Acceptance probability against window area with `s = (α_typ² ε_q)^{-1/4}`,
/// `α_typ = η(median λ² + χ)`.
pub fn success_rate_study(
    dataset: &Dataset,
    encoder: &FeatureEncoder,
    eta: Option<f64>,
    chi: f64,
    epsilons: &[f64],
) -> Result<SuccessRateStudy> {
    check_sweep(epsilons)?;
    let states = encode_dataset(dataset, encoder)?;
    let psi = prepare_from_states(states, if encoder.is_continuous_variable() { PrepMode::Span } else { PrepMode::Auto })?;
    let sd = schmidt(&psi)?;
    let g = psi.global_norm();
    let raw_sq: Vec<f64> = sd.coefficients.iter().map(|l| (l * g).powi(2)).collect();
    let eta = eta.unwrap_or(1.0 / (raw_sq[0] + chi));
    let alphas: Vec<f64> = raw_sq.iter().map(|l2| eta * (l2 + chi)).collect();
    let mut nonzero: Vec<f64> = raw_sq.iter().zip(&sd.coefficients).filter(|(_, &l)| l > 0.0).map(|(r, _)| *r).collect();
    nonzero.sort_by(f64::total_cmp);
    let n = nonzero.len();
    let median = if n % 2 == 1 { nonzero[n / 2] } else { (nonzero[n / 2 - 1] + nonzero[n / 2]) / 2.0 };
    let alpha_typ = eta * (median + chi);
    let rows: Vec<SuccessRateRow> = epsilons
        .iter()
        .map(|&e| {
            let s = (alpha_typ * alpha_typ * e).powf(-0.25);
            SuccessRateRow { epsilon_q: e, s, success_prob: window_acceptance(&sd.coefficients, &alphas, s, e) }
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.epsilon_q).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.success_prob).collect();
    let (slope, intercept) = log_log_slope(&xs, &ys)?;
    Ok(SuccessRateStudy { eta, alpha_typ, rows, slope, intercept })
}

/// Log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Sample;
    use crate::oracle::predict_svd;
    use rand::Rng;
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

    fn points(k: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k).map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.8).collect()).collect()
    }

    fn config(tier: Tier) -> PipelineConfig {
        PipelineConfig { tier, ..PipelineConfig::default() }
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    #[test]
    fn tier_names_round_trip() {
        for t in Tier::ALL {
            assert_eq!(t.name().parse::<Tier>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.name()));
        }
        assert!("exact".parse::<Tier>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let mut c = PipelineConfig::default();
        c.chi = -1.0;
        assert!(c.validate().is_err());
        c = PipelineConfig { tier: Tier::ShotSampled, shots: 0, ..PipelineConfig::default() };
        assert!(c.validate().is_err());
        c = PipelineConfig { grid: GridSpec::Fixed { points: 64, extent: 3.0 }, ..PipelineConfig::default() };
        assert!(c.validate().is_err());
        c = PipelineConfig { eta: Some(0.0), ..PipelineConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn reference_state_examples() {
        let q = encode(&FeatureEncoder::Amplitude, &[1.0, 0.0]).unwrap();
        let r = build_reference_state(&[1.0, 0.0], &q, &FeatureBasis::Explicit).unwrap();
        assert_eq!(r.amplitudes()[(0, 0)], C64::new(1.0, 0.0));
        assert!((r.norm() - 1.0).abs() < 1e-15);

        let q = encode(&FeatureEncoder::AffineAmplitude { offset: 1.0, degree: 2 }, &[0.3, -1.2]).unwrap();
        let r = build_reference_state(&[3.0, 4.0], &q, &FeatureBasis::Explicit).unwrap();
        assert!((r.global_norm() - 5.0 * q.norm()).abs() < 1e-12);
        assert!((r.norm() - 1.0).abs() < 1e-12);
        assert!(build_reference_state(&[0.0, 0.0], &q, &FeatureBasis::Explicit).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let d = random_dataset(3, 2, 3);
        let psi = crate::dv::prepare_psi_a(&d, &FeatureEncoder::PolyTensor { degree: 2 }).unwrap();
        let ip = predict_inner_product(&psi, &psi, InnerProductMode::Exact).unwrap();
        assert!((ip.y_prime - 1.0).abs() < 1e-12 && (ip.success_prob - 1.0).abs() < 1e-12);

        let e1 = encode(&FeatureEncoder::Amplitude, &[1.0, 0.0]).unwrap();
        let e2 = encode(&FeatureEncoder::Amplitude, &[0.0, 1.0]).unwrap();
        let a = build_reference_state(&[1.0], &e1, &FeatureBasis::Explicit).unwrap();
        let b = build_reference_state(&[1.0], &e2, &FeatureBasis::Explicit).unwrap();
        let ip = predict_inner_product(&a, &b, InnerProductMode::Exact).unwrap();
        assert_eq!((ip.y_prime, ip.success_prob), (0.0, 0.5));

        // p = 0.75 ⇔ ỹ' = 0.5.
        let c = build_reference_state(&[1.0], &encode(&FeatureEncoder::Amplitude, &[0.5, 0.75f64.sqrt()]).unwrap(), &FeatureBasis::Explicit).unwrap();
        let ip = predict_inner_product(&a, &c, InnerProductMode::Shots { n: 100_000, seed: 7 }).unwrap();
        assert!((ip.success_prob - 0.75).abs() <= 4.0 * ip.stderr / 2.0);
        let again = predict_inner_product(&a, &c, InnerProductMode::Shots { n: 100_000, seed: 7 }).unwrap();
        assert_eq!(ip, again);
    }

    #[test]
    fn transform_and_rescale_examples() {
        let d = Dataset::new(vec![Sample::new(vec![1.0], 2.0)]).unwrap();
        let psi = crate::dv::prepare_psi_a(&d, &FeatureEncoder::Amplitude).unwrap();
        let sd = schmidt(&psi).unwrap();
        assert_eq!(ideal_coefficients(&sd, psi.global_norm(), 1, 0.0).unwrap(), vec![1.0]);
        assert_eq!(ideal_coefficients(&sd, psi.global_norm(), 1, 1.0).unwrap(), vec![0.5]);

        let unit = Bookkeeping { transformed_norm: 1.0, reference_norm: 1.0, cv_scale: 1.0 };
        assert_eq!(rescale_prediction(0.37, &unit).unwrap(), 0.37);
        assert!(rescale_prediction(0.37, &Bookkeeping { cv_scale: f64::NAN, ..unit }).is_err());

        let cfg = PipelineConfig { chi: 1.0, ..config(Tier::Ideal) };
        let r = run_regression(&d, &FeatureEncoder::Amplitude, &cfg, &[vec![1.0]]).unwrap();
        assert!((r[0].y_quantum.unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_chi_requires_full_rank() {
        let d = Dataset::new(vec![Sample::new(vec![1.0, 0.0], 1.0), Sample::new(vec![2.0, 0.0], 1.0)]).unwrap();
        let cfg = PipelineConfig { chi: 0.0, ..config(Tier::Ideal) };
        let err = run_regression(&d, &FeatureEncoder::Amplitude, &cfg, &[vec![1.0, 1.0]]).unwrap_err();
        assert!(format!("{err}").contains("regularization required"), "{err}");
    }

    #[test]
    fn ideal_tier_matches_oracle_for_polynomial_and_gaussian() {
        let d = random_dataset(8, 3, 21);
        let tp = points(5, 3, 22);
        for enc in [FeatureEncoder::PolyTensor { degree: 2 }, FeatureEncoder::Coherent { cutoff: 16 }, FeatureEncoder::evolution(0.8)] {
            let results = run_regression(&d, &enc, &config(Tier::Ideal), &tp).unwrap();
            for (r, a) in results.iter().zip(&tp) {
                let svd = predict_svd(&d, &enc, 0.1, a).unwrap();
                assert!(r.rel_error.unwrap() <= 1e-10, "{enc}: {r:?}");
                assert!((r.y_quantum.unwrap() - svd).abs() <= 1e-10 * svd.abs().max(1e-3));
                assert!(r.y_prime.unwrap().abs() <= 1.0 + 1e-8);
            }
        }
    }

    #[test]
    fn cv_tiers_converge_with_squeezing() {
        let d = random_dataset(5, 2, 4);
        let enc = FeatureEncoder::Coherent { cutoff: 16 };
        let tp = points(6, 2, 5);
        let mut medians = Vec::new();
        for s in [2.0, 4.0, 8.0] {
            let cfg = PipelineConfig { s, ..config(Tier::CvAnalytic) };
            let r = run_regression(&d, &enc, &cfg, &tp).unwrap();
            medians.push(median(r.iter().map(|x| x.rel_error.unwrap()).collect()));
        }
        assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
    }

    #[test]
    fn grid_tier_matches_analytic_at_origin() {
        let d = random_dataset(4, 2, 8);
        let enc = FeatureEncoder::Coherent { cutoff: 16 };
        let tp = points(3, 2, 9);
        let analytic = run_regression(&d, &enc, &PipelineConfig { s: 3.0, ..config(Tier::CvAnalytic) }, &tp).unwrap();
        let grid = run_regression(&d, &enc, &PipelineConfig { s: 3.0, ..config(Tier::CvGrid) }, &tp).unwrap();
        for (a, g) in analytic.iter().zip(&grid) {
            let ya = a.y_quantum.unwrap();
            assert!((g.y_quantum_origin.unwrap() - ya).abs() <= 1e-6 * ya.abs());
            assert!(g.accepted_shots > 0 && g.accepted_shots <= g.total_shots);
            assert!((0.0..=1.0).contains(&g.acceptance_prob));
        }
        let reg = Regressor::new(&d, &enc, &PipelineConfig { s: 3.0, ..config(Tier::CvGrid) }).unwrap();
        assert!((reg.grid.as_ref().unwrap().acceptance / reg.analytic_acceptance() - 1.0).abs() < 0.05);
    }

    #[test]
    fn origin_state_fidelity_approaches_one() {
        // Well separated samples keep the α spread, and hence the grid, small.
        let spread: Vec<Sample> = random_dataset(4, 2, 10)
            .samples()
            .iter()
            .map(|x| Sample::new(x.features.iter().map(|f| 2.0 * f).collect(), x.target))
            .collect();
        let d = Dataset::new(spread).unwrap();
        let enc = FeatureEncoder::Coherent { cutoff: 20 };
        let probe = Regressor::new(&d, &enc, &config(Tier::Ideal)).unwrap();
        let eta = probe.eta() / probe.alpha_min();
        let grid_cfg = |s: f64| PipelineConfig { s, eta: Some(eta), grid: GridSpec::Auto { tolerance: 1e-6 }, ..config(Tier::CvGrid) };
        let low = Regressor::new(&d, &enc, &grid_cfg(2.0)).unwrap().origin_fidelity().unwrap();
        let high = Regressor::new(&d, &enc, &grid_cfg(10.0)).unwrap().origin_fidelity().unwrap();
        assert!(high >= 0.999 && high >= low, "{low} {high}");
    }

    #[test]
    fn tier_ordering_over_seeds() {
        let d = random_dataset(4, 2, 31);
        let enc = FeatureEncoder::Coherent { cutoff: 16 };
        let tp = points(10, 2, 32);
        let err = |tier: Tier| -> f64 {
            let all = (0..20u64)
                .flat_map(|seed| {
                    let cfg = PipelineConfig { s: 3.0, seed, epsilon_q: 0.05, shots: 20_000, homodyne_draws: 20_000, ..config(tier) };
                    run_regression(&d, &enc, &cfg, &tp).unwrap()
                })
                .map(|r| r.abs_error.unwrap_or(f64::INFINITY))
                .collect();
            median(all)
        };
        let e: Vec<f64> = Tier::ALL.iter().map(|&t| err(t)).collect();
        assert!(e.windows(2).all(|w| w[0] <= w[1]), "{e:?}");
    }

    #[test]
    fn shot_tier_is_statistically_consistent() {
        let d = random_dataset(4, 2, 41);
        let enc = FeatureEncoder::PolyTensor { degree: 2 };
        let tp = points(40, 2, 42);
        let cfg = PipelineConfig { s: 2.0, epsilon_q: 0.5, shots: 100_000, ..config(Tier::ShotSampled) };
        let results = run_regression(&d, &enc, &cfg, &tp).unwrap();
        let inside = results
            .iter()
            .filter(|r| (r.y_prime.unwrap() - r.y_prime_exact).abs() <= 4.0 * r.stderr.unwrap())
            .count();
        assert!(inside >= 38, "{inside}/40");
    }

    #[test]
    fn results_are_reproducible() {
        let d = random_dataset(4, 2, 51);
        let enc = FeatureEncoder::Coherent { cutoff: 12 };
        let tp = points(4, 2, 52);
        for tier in Tier::ALL {
            let cfg = PipelineConfig { s: 2.0, seed: 9, shots: 1000, homodyne_draws: 1000, epsilon_q: 0.2, ..config(tier) };
            let a = run_regression(&d, &enc, &cfg, &tp).unwrap();
            let b = run_regression(&d, &enc, &cfg, &tp).unwrap();
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
    }

    #[test]
    fn errors_name_the_step() {
        let d = random_dataset(3, 2, 1);
        let cfg = PipelineConfig { s: 50.0, eta: Some(10.0), grid: GridSpec::Auto { tolerance: 1e-8 }, ..config(Tier::CvGrid) };
        let err = Regressor::new(&d, &FeatureEncoder::Coherent { cutoff: 8 }, &cfg).unwrap_err();
        assert!(matches!(err, Error::Step { step: 2, .. }), "{err:?}");
        let bad = Dataset::new(vec![Sample::new(vec![0.0, 0.0], 1.0)]).unwrap();
        let err = Regressor::new(&bad, &FeatureEncoder::Amplitude, &config(Tier::Ideal)).unwrap_err();
        assert!(matches!(err, Error::Step { step: 1, .. }) && err.is_data_error(), "{err:?}");
    }

    #[test]
    fn success_rate_scaling() {
        let d = random_dataset(6, 2, 61);
        let enc = FeatureEncoder::Coherent { cutoff: 16 };
        let eps = log_space(1e-3, 1e-1, 7);
        let study = success_rate_study(&d, &enc, None, 0.1, &eps).unwrap();
        assert!((study.slope - 1.5).abs() <= 0.3, "slope {}", study.slope);
        assert!(success_rate_study(&d, &enc, None, 0.1, &eps[..4]).is_err());
        assert!(success_rate_study(&d, &enc, None, 0.1, &log_space(1e-2, 1e-1, 6)).is_err());
    }

    #[test]
    fn flat_density_control_has_unit_slope() {
        // α = 0 and a wide position profile (small s): probability ∝ area.
        let eps = log_space(1e-3, 1e-1, 6);
        let probs: Vec<f64> = eps.iter().map(|&e| window_acceptance(&[1.0], &[0.0], 0.01, e)).collect();
        let (slope, _) = log_log_slope(&eps, &probs).unwrap();
        assert!((slope - 1.0).abs() < 1e-3, "{slope}");
    }

    #[test]
    fn doubling_window_at_most_doubles_acceptance() {
        for (alpha, s) in [(0.5, 2.0), (1.0, 8.0), (2.0, 1.0)] {
            for e in log_space(1e-3, 1.0, 8) {
                let p1 = window_acceptance(&[1.0], &[alpha], s, e);
                let p2 = window_acceptance(&[1.0], &[alpha], s, 2.0 * e);
                assert!(p2 > p1 && p2 <= 2.0 * p1 * (1.0 + 1e-12));
            }
        }
    }
}
