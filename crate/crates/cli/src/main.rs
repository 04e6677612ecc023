//! `levy-garch`: simulation, estimation, and Monte Carlo study driver.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 study aborted by
//! the failure-share rule (the partial report is still written), 1 any other
//! runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levy_garch_cli::{config, curve, io, report, stability_cmd, study, three_stage, HarnessError};

#[derive(Parser)]
#[command(name = "levy-garch", version, about = "GARCH estimation via the empirical characteristic function", max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a GARCH series and write it as CSV.
    Simulate {
        /// JSON config: params, noise, n, seed [, burn_in, include_state].
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a GARCH model to an observed series (characteristic-function
    /// estimator with a Gaussian QML initializer).
    Estimate {
        /// JSON config: noise, r, s [, grid, transient, solver options].
        #[arg(long)]
        config: PathBuf,
        /// Input CSV series (one return per row; optional header).
        #[arg(long)]
        series: PathBuf,
        /// Output JSON report path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo study: simulate replications across sample sizes and
    /// summarize estimator error against the asymptotic prediction.
    McStudy {
        /// JSON config: params, noise, sample_sizes, reps, seed [, arms…].
        #[arg(long)]
        config: PathBuf,
        /// Output JSON report path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate asymptotic efficiency against grid size for a noise family.
    EfficiencyCurve {
        /// JSON config: noise [, delta, m_max].
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Three-stage fit: Gaussian QML, noise-shape fit on the residuals, then
    /// a characteristic-function refit under the fitted family (with a
    /// misspecified Gaussian arm for comparison).
    ThreeStage {
        /// JSON config: params, noise, r, s [, n, seed, nu_grid, …].
        #[arg(long)]
        config: PathBuf,
        /// Optional observed series; omitted means simulated mode.
        #[arg(long)]
        series: Option<PathBuf>,
        /// Output JSON report path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Moment/stability diagnostics: ρ(E[A^{⊗q}]), λ_q, identifiability.
    Stability {
        /// JSON config: params, noise [, orders, lambda_mc].
        #[arg(long)]
        config: PathBuf,
        /// Output JSON report path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(inner) = source {
                eprintln!("  caused by: {inner}");
                source = inner.source();
            }
            match err {
                HarnessError::Config(_) => ExitCode::from(2),
                HarnessError::StudyAborted { .. } => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn run(command: &Command) -> Result<(), HarnessError> {
    match command {
        Command::Simulate { config, out } => simulate_cmd(config, out),
        Command::Estimate {
            config,
            series,
            out,
        } => estimate_cmd(config, series, out),
        Command::McStudy { config, out } => mc_study_cmd(config, out),
        Command::EfficiencyCurve { config, out } => {
            let cfg: config::CurveConfig = config::load(config)?;
            curve::run(&cfg, out)?;
            Ok(())
        }
        Command::ThreeStage {
            config,
            series,
            out,
        } => three_stage_cmd(config, series.as_deref(), out),
        Command::Stability { config, out } => {
            let cfg: config::StabilityConfig = config::load(config)?;
            io::write_json(out, &stability_cmd::run(&cfg)?)
        }
    }
}

fn simulate_cmd(config: &Path, out: &Path) -> Result<(), HarnessError> {
    let cfg: config::SimulateConfig = config::load(config)?;
    let params = cfg.params.to_params()?;
    let sim = levy_garch::simulate(&params, &cfg.noise, cfg.n, cfg.burn_in, cfg.seed)?;
    io::write_series(out, &sim, cfg.include_state)
}

fn estimate_cmd(config: &Path, series: &Path, out: &Path) -> Result<(), HarnessError> {
    let cfg: config::EstimateConfig = config::load(config)?;
    let opts = cfg.to_options()?;
    let y = io::read_series(series)?;
    let fit = levy_garch::estimate(&y, &cfg.noise, cfg.r, cfg.s, &opts)?;
    let bound = cfg.noise.fisher_scale().ok();
    io::write_json(
        out,
        &report::EstimateReport::new(&fit, y.len(), opts.grid.points(), bound),
    )
}

fn mc_study_cmd(config: &Path, out: &Path) -> Result<(), HarnessError> {
    let cfg: config::StudyConfig = config::load(config)?;
    let report = study::run_study(&cfg)?;
    io::write_json(out, &report)?;
    if let Some(n) = report.aborted_at {
        let share = report
            .blocks
            .last()
            .map(|b| 100.0 * b.failure_share)
            .unwrap_or(f64::NAN);
        return Err(HarnessError::StudyAborted { n, share });
    }
    Ok(())
}

fn three_stage_cmd(
    config: &Path,
    series: Option<&Path>,
    out: &Path,
) -> Result<(), HarnessError> {
    let cfg: config::ThreeStageConfig = config::load(config)?;
    let report = match series {
        Some(path) => {
            let y = io::read_series(path)?;
            three_stage::three_stage_on_series(&y, &cfg)?
        }
        None => three_stage::three_stage_simulated(&cfg)?,
    };
    io::write_json(out, &report)
}
