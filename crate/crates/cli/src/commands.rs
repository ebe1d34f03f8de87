use std::fmt;
use std::path::Path;
use std::str::FromStr;

use qkrr::pipeline::{log_space, success_rate_study};
use qkrr::{fixtures, run_regression, Dataset, PredictionResult};
use rayon::prelude::*;

use crate::config::{RunConfig, TestSource, DEFAULT_ENCODER};
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest_csv, read_points, write_dataset, write_points};
use crate::output::{SweepReport, SweepRow, SweepSummary};

/// Loads the training set and the query points named by the config.
pub fn load_inputs(cfg: &RunConfig) -> CliResult<(Dataset, Vec<Vec<f64>>)> {
    let path = cfg
        .dataset
        .as_deref()
        .ok_or_else(|| CliError::Usage("no dataset given (set `dataset` or pass --dataset)".into()))?;
    let data = ingest_csv(path)?;
    match &cfg.test_points {
        TestSource::InSample => {
            let pts = data.samples().iter().map(|s| s.features.clone()).collect();
            Ok((data, pts))
        }
        TestSource::File(p) => {
            let pts = read_points(p, data.n_features())?;
            Ok((data, pts))
        }
        TestSource::HeldOut(frac) => {
            let m = data.len();
            let n_test = ((frac * m as f64).ceil() as usize).max(1);
            if n_test >= m {
                return Err(CliError::Data(format!("holdout {frac} leaves no training rows out of {m}")));
            }
            let (train, test) = data.samples().split_at(m - n_test);
            let pts = test.iter().map(|s| s.features.clone()).collect();
            Ok((Dataset::new(train.to_vec())?, pts))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub predictions: usize,
    pub median_rel_error: Option<f64>,
    pub mean_acceptance: f64,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = self.median_rel_error.map_or("n/a".to_string(), |r| format!("{r:.3e}"));
        write!(
            f,
            "{} predictions, median rel_error vs oracle {rel}, mean acceptance {:.4e}",
            self.predictions, self.mean_acceptance
        )
    }
}

/// Median of the finite values, `None` when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn summarize(results: &[PredictionResult]) -> Summary {
    let n = results.len();
    Summary {
        predictions: n,
        median_rel_error: median(results.iter().filter_map(|r| r.rel_error)),
        mean_acceptance: if n == 0 { 0.0 } else { results.iter().map(|r| r.acceptance_prob).sum::<f64>() / n as f64 },
    }
}

pub fn fit_predict(cfg: &RunConfig) -> CliResult<Vec<PredictionResult>> {
    let (data, points) = load_inputs(cfg)?;
    Ok(run_regression(&data, &cfg.encoder, &cfg.pipeline, &points)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    S,
    Chi,
    EpsilonQ,
    Shots,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::S => "s",
            SweepAxis::Chi => "chi",
            SweepAxis::EpsilonQ => "epsilon_q",
            SweepAxis::Shots => "shots",
        }
    }

    fn apply(self, cfg: &mut RunConfig, value: f64) -> CliResult<()> {
        let p = &mut cfg.pipeline;
        match self {
            SweepAxis::S => p.s = value,
            SweepAxis::Chi => p.chi = value,
            SweepAxis::EpsilonQ => p.epsilon_q = value,
            SweepAxis::Shots => {
                if !(value >= 1.0) || value.fract() != 0.0 || value > u64::MAX as f64 {
                    return Err(CliError::Usage(format!("shots must be a positive integer, got {value}")));
                }
                p.shots = value as u64;
            }
        }
        p.validate().map_err(|e| CliError::Usage(e.to_string()))
    }
}

impl FromStr for SweepAxis {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "s" => Ok(SweepAxis::S),
            "chi" => Ok(SweepAxis::Chi),
            "epsilon_q" => Ok(SweepAxis::EpsilonQ),
            "shots" => Ok(SweepAxis::Shots),
            other => Err(CliError::Usage(format!("invalid sweep axis '{other}' (expected s, chi, epsilon_q or shots)"))),
        }
    }
}

/// Points used for the success-rate fit when the swept window areas do not
/// cover two decades.
pub const DEFAULT_EPSILON_SWEEP: (f64, f64, usize) = (1e-3, 1e-1, 9);

/// Runs every `(value, seed)` combination; seeds are `seed, seed+1, ...`.
pub fn sweep(cfg: &RunConfig, axis: SweepAxis, values: &[f64], n_seeds: u64) -> CliResult<SweepReport> {
    if values.len() < 2 {
        return Err(CliError::Usage(format!("a sweep needs at least 2 values, got {}", values.len())));
    }
    if n_seeds == 0 {
        return Err(CliError::Usage("seeds must be at least 1".into()));
    }
    let (data, points) = load_inputs(cfg)?;
    let seeds: Vec<u64> = (0..n_seeds).map(|k| cfg.pipeline.seed.wrapping_add(k)).collect();
    let mut jobs = Vec::with_capacity(values.len() * seeds.len());
    for &v in values {
        for &seed in &seeds {
            let mut c = cfg.clone();
            axis.apply(&mut c, v)?;
            c.pipeline.seed = seed;
            jobs.push((v, c));
        }
    }
    let batches = jobs
        .par_iter()
        .map(|(v, c)| {
            let results = run_regression(&data, &c.encoder, &c.pipeline, &points)?;
            Ok(results
                .into_iter()
                .map(|r| SweepRow {
                    axis: axis.name(),
                    value: *v,
                    seed: c.pipeline.seed,
                    index: r.index,
                    y_quantum: r.y_quantum,
                    y_oracle: r.y_oracle,
                    abs_error: r.abs_error,
                    rel_error: r.rel_error,
                    acceptance_prob: r.acceptance_prob,
                    accepted_shots: r.accepted_shots,
                    total_shots: r.total_shots,
                })
                .collect::<Vec<_>>())
        })
        .collect::<CliResult<Vec<_>>>()?;
    let rows: Vec<SweepRow> = batches.into_iter().flatten().collect();
    let summary = values
        .iter()
        .map(|&v| {
            let at: Vec<&SweepRow> = rows.iter().filter(|r| r.value == v).collect();
            SweepSummary {
                value: v,
                median_rel_error: median(at.iter().filter_map(|r| r.rel_error)),
                median_abs_y_quantum: median(at.iter().filter_map(|r| r.y_quantum.map(f64::abs))),
                mean_acceptance: at.iter().map(|r| r.acceptance_prob).sum::<f64>() / at.len().max(1) as f64,
            }
        })
        .collect();
    let success_rate = match axis {
        SweepAxis::EpsilonQ => {
            let p = &cfg.pipeline;
            let own = success_rate_study(&data, &cfg.encoder, p.eta, p.chi, values);
            Some(match own {
                Ok(study) => study,
                Err(qkrr::Error::InvalidConfig(_)) => {
                    let (lo, hi, n) = DEFAULT_EPSILON_SWEEP;
                    success_rate_study(&data, &cfg.encoder, p.eta, p.chi, &log_space(lo, hi, n))?
                }
                Err(e) => return Err(e.into()),
            })
        }
        _ => None,
    };
    Ok(SweepReport { axis: axis.name(), values: values.to_vec(), seeds, rows, summary, success_rate })
}

pub const FIXTURE_DATASET: &str = "dataset.csv";
pub const FIXTURE_TEST_POINTS: &str = "test_points.csv";
pub const FIXTURE_ORACLE: &str = "oracle_predictions.csv";
pub const FIXTURE_CONFIG: &str = "example.conf";

/// Regenerates the bundled example: dataset, query points, oracle
/// predictions of the default encoder and a config tying them together.
pub fn write_fixtures(dir: &Path) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Usage(format!("cannot write fixtures to {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let data = fixtures::bundled_dataset();
    let points = fixtures::bundled_test_points();
    let cfg = RunConfig::default();

    let mut buf = Vec::new();
    write_dataset(&data, &mut buf)?;
    std::fs::write(dir.join(FIXTURE_DATASET), &buf).map_err(io)?;

    buf.clear();
    write_points(&points, &mut buf)?;
    std::fs::write(dir.join(FIXTURE_TEST_POINTS), &buf).map_err(io)?;

    let model = qkrr::oracle::fit(&data, &DEFAULT_ENCODER, cfg.pipeline.chi)?;
    let mut oracle = String::from("index,y_oracle\n");
    for (i, a) in points.iter().enumerate() {
        oracle.push_str(&format!("{i},{}\n", model.predict(a)?));
    }
    std::fs::write(dir.join(FIXTURE_ORACLE), oracle).map_err(io)?;

    let mut example = cfg;
    example.dataset = Some(FIXTURE_DATASET.into());
    example.test_points = TestSource::File(FIXTURE_TEST_POINTS.into());
    std::fs::write(dir.join(FIXTURE_CONFIG), example.to_text()).map_err(io)?;
    Ok(())
}
