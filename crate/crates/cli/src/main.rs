use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qkrr_cli::commands::{self, summarize, SweepAxis};
use qkrr_cli::output::{emit, render_results, render_sweep};
use qkrr_cli::validate::{run_validation, ValidateOptions};
use qkrr_cli::{configure_threads, CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "qkrr", version, about = "Quantum kernel ridge regression simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit on a dataset and predict at the query points.
    FitPredict(RunArgs),
    /// Repeat fit-predict along one parameter axis.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// One of s, chi, epsilon_q, shots.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Number of consecutive seeds per value, starting at --seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Run the invariant suite on the bundled fixtures.
    Validate {
        #[arg(long, hide = true, default_value_t = 0.0)]
        inject_kernel_perturbation: f64,
    },
    /// Regenerate the bundled example files.
    Fixtures {
        #[arg(long)]
        dir: PathBuf,
    },
}

/// Flags override the config file.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    test_points: Option<String>,
    #[arg(long)]
    holdout: Option<String>,
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    tier: Option<String>,
    #[arg(long)]
    chi: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    epsilon_q: Option<String>,
    #[arg(long)]
    shots: Option<String>,
    #[arg(long)]
    homodyne_draws: Option<String>,
    #[arg(long)]
    grid_tolerance: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    format: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("dataset", &self.dataset),
            ("test_points", &self.test_points),
            ("holdout", &self.holdout),
            ("encoder", &self.encoder),
            ("tier", &self.tier),
            ("chi", &self.chi),
            ("eta", &self.eta),
            ("s", &self.s),
            ("epsilon_q", &self.epsilon_q),
            ("shots", &self.shots),
            ("homodyne_draws", &self.homodyne_draws),
            ("grid_tolerance", &self.grid_tolerance),
            ("seed", &self.seed),
            ("out", &self.out),
            ("format", &self.format),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v, None)?;
            }
        }
        cfg.finish()
    }
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::FitPredict(args) => {
            let cfg = args.resolve()?;
            let results = commands::fit_predict(&cfg)?;
            emit(&render_results(&results, cfg.format)?, cfg.out.as_deref())?;
            eprintln!("{}: {}", cfg.pipeline.tier, summarize(&results));
        }
        Command::Sweep { run, axis, values, seeds } => {
            let cfg = run.resolve()?;
            let axis: SweepAxis = axis.parse()?;
            let report = commands::sweep(&cfg, axis, &values, seeds)?;
            emit(&render_sweep(&report, cfg.format)?, cfg.out.as_deref())?;
            for s in &report.summary {
                let rel = s.median_rel_error.map_or("n/a".to_string(), |r| format!("{r:.3e}"));
                eprintln!("{} = {}: median rel_error {rel}, mean acceptance {:.4e}", axis.name(), s.value, s.mean_acceptance);
            }
            if let Some(study) = &report.success_rate {
                eprintln!("success rate vs epsilon_q: fitted log-log slope {:.4}", study.slope);
            }
        }
        Command::Validate { inject_kernel_perturbation } => {
            let outcomes = run_validation(ValidateOptions { kernel_perturbation: inject_kernel_perturbation });
            for o in &outcomes {
                println!("{o}");
            }
            if let Some(bad) = outcomes.iter().find(|o| !o.passed) {
                return Err(CliError::Numerical(format!("invariant '{}' failed", bad.name)));
            }
        }
        Command::Fixtures { dir } => commands::write_fixtures(&dir)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qkrr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
