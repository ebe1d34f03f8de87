//! End-to-end invariant suite over the bundled fixtures.

use std::fmt;

use qkrr::cv::{analytic_b, evolve_block, QumodeGrid};
use qkrr::dv::{prepare_psi_a, reduced_density};
use qkrr::oracle::{fit, gram};
use qkrr::{encode, fixtures, run_regression, Dataset, FeatureEncoder, PipelineConfig, Sample, Tier};

use crate::error::CliResult;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ValidateOptions {
    /// Added to every computed coherent-state overlap. Nonzero values must
    /// make the kernel check fail; used to test the suite itself.
    pub kernel_perturbation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub const KERNEL_TOLERANCE: f64 = 1e-6;
pub const TENSOR_TOLERANCE: f64 = 1e-12;
pub const GRAM_TOLERANCE: f64 = 1e-10;
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-6;
pub const ORACLE_TOLERANCE: f64 = 1e-10;

/// Encoders whose feature space the regression pipeline must handle.
pub fn reference_encoders() -> Vec<FeatureEncoder> {
    vec![
        FeatureEncoder::Amplitude,
        FeatureEncoder::PolyTensor { degree: 2 },
        FeatureEncoder::AffineAmplitude { offset: 1.0, degree: 2 },
        FeatureEncoder::Coherent { cutoff: 20 },
        FeatureEncoder::wavepacket(0.5),
        FeatureEncoder::evolution(1.0),
    ]
}

fn binarized(d: &Dataset) -> CliResult<Dataset> {
    let samples = d
        .samples()
        .iter()
        .map(|s| Sample::new(s.features.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect(), s.target))
        .collect();
    Ok(Dataset::new(samples)?)
}

fn check(name: &'static str, body: impl FnOnce() -> CliResult<(bool, String)>) -> CheckOutcome {
    match body() {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome { name, passed: false, detail: e.to_string() },
    }
}

fn kernel_identities(opts: ValidateOptions) -> CliResult<(bool, String)> {
    let pts: Vec<Vec<f64>> = fixtures::bundled_dataset()
        .samples()
        .iter()
        .map(|s| s.features.clone())
        .chain(fixtures::bundled_test_points().into_iter().take(4))
        .collect();
    let coherent = FeatureEncoder::Coherent { cutoff: 16 };
    let mut gauss = 0.0f64;
    let mut tensor = 0.0f64;
    for a in &pts {
        let a: Vec<f64> = a.iter().map(|x| x.clamp(-2.0, 2.0)).collect();
        for b in &pts {
            let b: Vec<f64> = b.iter().map(|x| x.clamp(-2.0, 2.0)).collect();
            let d2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
            let k = encode(&coherent, &a)?.overlap(&encode(&coherent, &b)?)? + opts.kernel_perturbation;
            gauss = gauss.max((k - (-d2 / 2.0).exp()).norm());
            let cos = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>()
                / (a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|x| x * x).sum::<f64>()).sqrt();
            for d in 1..=3 {
                let enc = FeatureEncoder::PolyTensor { degree: d };
                let k = encode(&enc, &a)?.overlap(&encode(&enc, &b)?)?;
                tensor = tensor.max((k - cos.powi(d as i32)).norm());
            }
        }
    }
    Ok((
        gauss <= KERNEL_TOLERANCE && tensor <= TENSOR_TOLERANCE,
        format!("coherent vs Gaussian {gauss:.2e} (tol {KERNEL_TOLERANCE:e}), tensor power {tensor:.2e} (tol {TENSOR_TOLERANCE:e})"),
    ))
}

fn partial_trace() -> CliResult<(bool, String)> {
    let data = fixtures::bundled_dataset();
    let mut cases: Vec<(FeatureEncoder, Dataset)> = reference_encoders().into_iter().map(|e| (e, data.clone())).collect();
    cases.push((FeatureEncoder::BasicQubit, binarized(&data)?));
    let mut worst = 0.0f64;
    for (enc, d) in &cases {
        let rho = reduced_density(&prepare_psi_a(d, enc)?);
        let k = gram(d, enc)?.normalized().conjugate();
        worst = worst.max((rho - k).camax());
    }
    Ok((worst <= GRAM_TOLERANCE, format!("max |Tr_B - K/Tr K| {worst:.2e} over {} encoders", cases.len())))
}

fn closed_form() -> CliResult<(bool, String)> {
    let mut worst = 0.0f64;
    for (alpha, s) in [(0.5, 2.0), (1.0, 4.0), (2.0, 3.0)] {
        let grid = QumodeGrid::for_resource(s, alpha, 1e-10)?;
        let psi = evolve_block(&grid, s, alpha, 1.0, 0.0)?;
        let c = (grid.points() - 1) / 2;
        for (di, dj) in [(0, 0), (1, 0), (0, 2), (3, 3), (5, 1)] {
            let (q1, q2) = (grid.position(c + di), grid.position(c + dj));
            let exact = analytic_b(alpha, s, q1, q2);
            worst = worst.max((psi.value_at(q1, q2)? - exact).norm() / exact.norm());
        }
    }
    Ok((worst <= CLOSED_FORM_TOLERANCE, format!("max relative deviation of grid B from closed form {worst:.2e}")))
}

fn oracle_equivalence() -> CliResult<(bool, String)> {
    let data = fixtures::bundled_dataset();
    let points = fixtures::bundled_test_points();
    let cfg = PipelineConfig { tier: Tier::Ideal, ..PipelineConfig::default() };
    let mut worst = 0.0f64;
    for enc in reference_encoders() {
        let model = fit(&data, &enc, cfg.chi)?;
        for r in run_regression(&data, &enc, &cfg, &points)? {
            let y = r.y_quantum.unwrap_or(f64::NAN);
            let o = model.predict(&points[r.index])?;
            let rel = (y - o).abs() / o.abs().max(f64::MIN_POSITIVE);
            worst = if rel.is_nan() { f64::INFINITY } else { worst.max(rel) };
        }
    }
    Ok((worst <= ORACLE_TOLERANCE, format!("max relative deviation of the ideal tier from the oracle {worst:.2e}")))
}

pub fn run_validation(opts: ValidateOptions) -> Vec<CheckOutcome> {
    vec![
        check("kernel identities", || kernel_identities(opts)),
        check("partial trace equals Gram", partial_trace),
        check("closed-form B matches grid", closed_form),
        check("ideal tier matches oracle", oracle_equivalence),
    ]
}
