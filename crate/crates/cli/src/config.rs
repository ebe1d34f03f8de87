//! Flat `key = value` run configuration.
//!
//! Recognized keys (flags of the same name with `-` for `_` override them):
//!
//! | key              | value                                              |
//! |------------------|----------------------------------------------------|
//! | `dataset`        | CSV path, last column is the target                |
//! | `test_points`    | CSV path of query points                           |
//! | `holdout`        | fraction in (0,1); the trailing rows become queries |
//! | `encoder`        | e.g. `coherent:cutoff=20`, `poly:d=2`              |
//! | `tier`           | `ideal`, `cv-analytic`, `cv-grid`, `shot-sampled`  |
//! | `chi`            | ridge parameter                                    |
//! | `eta`            | phase-estimation strength or `auto`                |
//! | `s`              | squeezing of the qumode resource state             |
//! | `epsilon_q`      | post-selection window area                         |
//! | `shots`          | readout repetitions                                |
//! | `homodyne_draws` | homodyne measurements per query                    |
//! | `grid_tolerance` | truncation target of the automatic grid            |
//! | `grid_points`    | fixed grid size (with `grid_extent`)               |
//! | `grid_extent`    | fixed momentum half-width                          |
//! | `seed`           | RNG seed                                           |
//! | `out`            | output path, stdout when absent                    |
//! | `format`         | `json` or `csv`                                    |
//!
//! Relative paths in a config file resolve against the file's directory.
//! `#` starts a comment.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qkrr::{FeatureEncoder, GridSpec, PipelineConfig, Tier};

use crate::error::{CliError, CliResult};

pub const KEYS: [&str; 17] = [
    "dataset",
    "test_points",
    "holdout",
    "encoder",
    "tier",
    "chi",
    "eta",
    "s",
    "epsilon_q",
    "shots",
    "homodyne_draws",
    "grid_tolerance",
    "grid_points",
    "grid_extent",
    "seed",
    "out",
    "format",
];

pub const DEFAULT_ENCODER: FeatureEncoder = FeatureEncoder::Coherent { cutoff: 20 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(CliError::Usage(format!("unknown format '{other}' (expected json or csv)"))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum TestSource {
    /// Predict at the training inputs.
    #[default]
    InSample,
    HeldOut(f64),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub encoder: FeatureEncoder,
    pub pipeline: PipelineConfig,
    pub dataset: Option<PathBuf>,
    pub test_points: TestSource,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    grid_points: Option<usize>,
    grid_extent: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            encoder: DEFAULT_ENCODER,
            pipeline: PipelineConfig::default(),
            dataset: None,
            test_points: TestSource::InSample,
            out: None,
            format: OutputFormat::Json,
            grid_points: None,
            grid_extent: None,
        }
    }
}

fn number<T: FromStr>(key: &str, value: &str) -> CliResult<T> {
    value.trim().parse().map_err(|_| CliError::Usage(format!("{key}: cannot parse '{value}'")))
}

impl RunConfig {
    /// Applies one setting. `base` anchors relative paths.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> CliResult<()> {
        let path = |v: &str| match base {
            Some(b) if Path::new(v).is_relative() => b.join(v),
            _ => PathBuf::from(v),
        };
        let value = value.trim();
        let p = &mut self.pipeline;
        match key.trim().replace('-', "_").as_str() {
            "dataset" => self.dataset = Some(path(value)),
            "test_points" => self.test_points = TestSource::File(path(value)),
            "holdout" => {
                let f: f64 = number(key, value)?;
                if !(f > 0.0 && f < 1.0) {
                    return Err(CliError::Usage(format!("holdout must lie in (0, 1), got {f}")));
                }
                self.test_points = TestSource::HeldOut(f);
            }
            "encoder" => self.encoder = value.parse().map_err(|e: qkrr::Error| CliError::Usage(e.to_string()))?,
            "tier" => p.tier = value.parse::<Tier>().map_err(|e| CliError::Usage(e.to_string()))?,
            "chi" => p.chi = number(key, value)?,
            "eta" => p.eta = if value.eq_ignore_ascii_case("auto") { None } else { Some(number(key, value)?) },
            "s" => p.s = number(key, value)?,
            "epsilon_q" => p.epsilon_q = number(key, value)?,
            "shots" => p.shots = number(key, value)?,
            "homodyne_draws" => p.homodyne_draws = number(key, value)?,
            "grid_tolerance" => {
                p.grid = GridSpec::Auto { tolerance: number(key, value)? };
                self.grid_points = None;
                self.grid_extent = None;
            }
            "grid_points" => self.grid_points = Some(number(key, value)?),
            "grid_extent" => self.grid_extent = Some(number(key, value)?),
            "seed" => p.seed = number(key, value)?,
            "out" => self.out = Some(path(value)),
            "format" => self.format = value.parse()?,
            other => return Err(CliError::Usage(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses the text of a config file.
    pub fn apply_text(&mut self, text: &str, base: Option<&Path>) -> CliResult<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k, v, base).map_err(|e| match e {
                CliError::Usage(m) => CliError::Usage(format!("config line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path.parent())?;
        Ok(cfg)
    }

    /// Resolves pending grid settings and validates everything.
    pub fn finish(mut self) -> CliResult<Self> {
        match (self.grid_points, self.grid_extent) {
            (Some(points), Some(extent)) => self.pipeline.grid = GridSpec::Fixed { points, extent },
            (None, None) => {}
            _ => return Err(CliError::Usage("grid_points and grid_extent must be given together".into())),
        }
        self.pipeline.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(self)
    }

    /// Canonical `key = value` text; loading it reproduces this config.
    pub fn to_text(&self) -> String {
        let p = &self.pipeline;
        let mut lines = Vec::new();
        if let Some(d) = &self.dataset {
            lines.push(format!("dataset = {}", d.display()));
        }
        match &self.test_points {
            TestSource::InSample => {}
            TestSource::HeldOut(f) => lines.push(format!("holdout = {f}")),
            TestSource::File(f) => lines.push(format!("test_points = {}", f.display())),
        }
        lines.push(format!("encoder = {}", self.encoder));
        lines.push(format!("tier = {}", p.tier));
        lines.push(format!("chi = {}", p.chi));
        lines.push(format!("eta = {}", p.eta.map_or("auto".to_string(), |e| e.to_string())));
        lines.push(format!("s = {}", p.s));
        lines.push(format!("epsilon_q = {}", p.epsilon_q));
        lines.push(format!("shots = {}", p.shots));
        lines.push(format!("homodyne_draws = {}", p.homodyne_draws));
        match p.grid {
            GridSpec::Auto { tolerance } => lines.push(format!("grid_tolerance = {tolerance}")),
            GridSpec::Fixed { points, extent } => {
                lines.push(format!("grid_points = {points}"));
                lines.push(format!("grid_extent = {extent}"));
            }
        }
        lines.push(format!("seed = {}", p.seed));
        if let Some(o) = &self.out {
            lines.push(format!("out = {}", o.display()));
        }
        lines.push(format!("format = {}", self.format));
        lines.join("\n") + "\n"
    }
}
