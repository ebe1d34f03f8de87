//! Result serialization. Field names and their order are part of the
//! interface; the golden tests pin them.

use std::io::Write;
use std::path::Path;

use qkrr::pipeline::SuccessRateStudy;
use qkrr::PredictionResult;
use serde::Serialize;

use crate::config::OutputFormat;
use crate::error::{CliError, CliResult};

/// Top-level keys of a JSON prediction record, in order.
pub const RESULT_FIELDS: [&str; 16] = [
    "index",
    "tier",
    "y_quantum",
    "y_prime",
    "y_prime_exact",
    "y_quantum_origin",
    "y_oracle",
    "success_prob",
    "acceptance_prob",
    "accepted_shots",
    "total_shots",
    "stderr",
    "abs_error",
    "rel_error",
    "eta",
    "config",
];

/// Columns of the CSV prediction table, in order.
pub const RESULT_COLUMNS: [&str; 21] = [
    "index",
    "tier",
    "y_quantum",
    "y_prime",
    "y_prime_exact",
    "y_quantum_origin",
    "y_oracle",
    "success_prob",
    "acceptance_prob",
    "accepted_shots",
    "total_shots",
    "stderr",
    "abs_error",
    "rel_error",
    "eta",
    "chi",
    "s",
    "epsilon_q",
    "shots",
    "homodyne_draws",
    "seed",
];

pub const SWEEP_FIELDS: [&str; 5] = ["axis", "values", "seeds", "rows", "summary"];

pub const SWEEP_COLUMNS: [&str; 12] = [
    "axis",
    "value",
    "seed",
    "index",
    "y_quantum",
    "y_oracle",
    "abs_error",
    "rel_error",
    "acceptance_prob",
    "accepted_shots",
    "total_shots",
    "fitted_slope",
];

#[derive(Serialize)]
struct ResultRow<'a> {
    index: usize,
    tier: &'a str,
    y_quantum: Option<f64>,
    y_prime: Option<f64>,
    y_prime_exact: f64,
    y_quantum_origin: Option<f64>,
    y_oracle: f64,
    success_prob: Option<f64>,
    acceptance_prob: f64,
    accepted_shots: u64,
    total_shots: u64,
    stderr: Option<f64>,
    abs_error: Option<f64>,
    rel_error: Option<f64>,
    eta: f64,
    chi: f64,
    s: f64,
    epsilon_q: f64,
    shots: u64,
    homodyne_draws: u64,
    seed: u64,
}

impl<'a> From<&'a PredictionResult> for ResultRow<'a> {
    fn from(r: &'a PredictionResult) -> Self {
        ResultRow {
            index: r.index,
            tier: r.tier.name(),
            y_quantum: r.y_quantum,
            y_prime: r.y_prime,
            y_prime_exact: r.y_prime_exact,
            y_quantum_origin: r.y_quantum_origin,
            y_oracle: r.y_oracle,
            success_prob: r.success_prob,
            acceptance_prob: r.acceptance_prob,
            accepted_shots: r.accepted_shots,
            total_shots: r.total_shots,
            stderr: r.stderr,
            abs_error: r.abs_error,
            rel_error: r.rel_error,
            eta: r.eta,
            chi: r.config.chi,
            s: r.config.s,
            epsilon_q: r.config.epsilon_q,
            shots: r.config.shots,
            homodyne_draws: r.config.homodyne_draws,
            seed: r.config.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: &'static str,
    pub value: f64,
    pub seed: u64,
    pub index: usize,
    pub y_quantum: Option<f64>,
    pub y_oracle: f64,
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
    pub acceptance_prob: f64,
    pub accepted_shots: u64,
    pub total_shots: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub value: f64,
    pub median_rel_error: Option<f64>,
    pub median_abs_y_quantum: Option<f64>,
    pub mean_acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub axis: &'static str,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
    /// Present for the `epsilon_q` axis only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success_rate: Option<SuccessRateStudy>,
}

fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Numerical(format!("cannot serialize: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes<T: Serialize>(header: &[&str], rows: impl Iterator<Item = T>) -> CliResult<Vec<u8>> {
    let err = |e: csv::Error| CliError::Numerical(format!("cannot serialize: {e}"));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Numerical(format!("cannot serialize: {e}")))
}

pub fn render_results(results: &[PredictionResult], format: OutputFormat) -> CliResult<Vec<u8>> {
    match format {
        OutputFormat::Json => json_bytes(&results),
        OutputFormat::Csv => csv_bytes(&RESULT_COLUMNS, results.iter().map(ResultRow::from)),
    }
}

pub fn render_sweep(report: &SweepReport, format: OutputFormat) -> CliResult<Vec<u8>> {
    match format {
        OutputFormat::Json => json_bytes(report),
        OutputFormat::Csv => {
            let slope = report.success_rate.as_ref().map(|s| s.slope);
            let rows = report.rows.iter().map(|r| {
                (
                    r.axis,
                    r.value,
                    r.seed,
                    r.index,
                    r.y_quantum,
                    r.y_oracle,
                    r.abs_error,
                    r.rel_error,
                    r.acceptance_prob,
                    r.accepted_shots,
                    r.total_shots,
                    slope,
                )
            });
            csv_bytes(&SWEEP_COLUMNS, rows)
        }
    }
}

/// Writes to `path`, or to stdout when absent.
pub fn emit(bytes: &[u8], path: Option<&Path>) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| CliError::Usage(format!("cannot write to stdout: {e}")))
        }
    }
}
