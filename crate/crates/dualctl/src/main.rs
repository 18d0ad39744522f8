//! Command-line driver for simulation, verification and audits.
//!
//! Exit codes: `0` on success, `1` when a numerical check or audit fails
//! its assertion, `2` on usage, configuration or I/O errors.

use clap::{Parser, Subcommand, ValueEnum};
use dualctl::game::{t_recursion, ProblemParams};
use dualctl::output;
use dualctl::sim::{run_experiment, run_gain_audit, run_sync_example, ExperimentConfig};
use dualctl::verify::{run_suite, Suite, SuiteReport, DEFAULT_OPT_BUDGET};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dualctl",
    version,
    about = "Minimax dual control for fully actuated linear systems: \
             simulate episodes, verify the closed-form identities, audit the cost bound"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run configured episodes and write CSV/SVG/JSON artifacts.
    Simulate {
        /// Path to a JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Synchronize a controlled chain to an autonomous reference chain.
    Sync {
        /// State dimension (1..=200).
        #[arg(long)]
        n: usize,
        /// Disturbance standard deviation.
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        /// Steps to simulate; defaults to 4n.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
    },
    /// Numerically verify the identities behind the policy.
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Function-evaluation budget per inner optimization.
        #[arg(long, default_value_t = DEFAULT_OPT_BUDGET)]
        budget: usize,
        /// Also write the full report as JSON.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Trace boundedness of the feasibility recursion across gains.
    SweepGamma {
        /// Dynamics scale α.
        #[arg(long)]
        alpha: f64,
        /// Number of gains to sample around the critical one.
        #[arg(long, default_value_t = 9)]
        points: usize,
    },
    /// Check the closed-form cost bound by Monte-Carlo simulation.
    AuditGain {
        /// Path to a JSON experiment config (gamma must be "star").
        #[arg(long)]
        config: PathBuf,
        /// Also write the audit report as JSON.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

/// CLI names of the verification checks.
#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum SuiteArg {
    All,
    Identity,
    Bellman,
    Vi,
    Gamma,
    Policy,
}

impl From<SuiteArg> for Suite {
    fn from(arg: SuiteArg) -> Suite {
        match arg {
            SuiteArg::All => Suite::All,
            SuiteArg::Identity => Suite::Identity,
            SuiteArg::Bellman => Suite::Bellman,
            SuiteArg::Vi => Suite::ValueIteration,
            SuiteArg::Gamma => Suite::Threshold,
            SuiteArg::Policy => Suite::Policy,
        }
    }
}

fn main() -> ExitCode {
    // Die quietly on a closed pipe (`dualctl ... | head`) like other unix
    // tools instead of panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> dualctl::Result<bool> {
    match command {
        Command::Simulate { config, output_dir } => simulate(&config, output_dir),
        Command::Sync {
            n,
            noise,
            horizon,
            seed,
            output_dir,
        } => sync(n, noise, horizon, seed, &output_dir),
        Command::Verify {
            suite,
            seed,
            budget,
            output_dir,
        } => verify(suite, seed, budget, output_dir),
        Command::SweepGamma { alpha, points } => sweep_gamma(alpha, points),
        Command::AuditGain { config, output_dir } => audit_gain(&config, output_dir),
    }
}

fn simulate(config_path: &Path, output_dir: Option<PathBuf>) -> dualctl::Result<bool> {
    let config = ExperimentConfig::from_path(config_path)?;
    config.params()?;
    let records = run_experiment(&config)?;
    for r in &records {
        let final_norm = r.final_x.iter().map(|c| c * c).sum::<f64>().sqrt();
        println!(
            "run {}: {} steps{}, peak running cost {:.6}, final |x| {:.3e}",
            r.run,
            r.steps.len(),
            if r.diverged { " (diverged)" } else { "" },
            r.peak_running_cost,
            final_norm
        );
    }
    let dir = output_dir
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let written = output::emit_experiment(&dir, &config, &records)?;
    println!("wrote {} files to {}", written.len(), dir.display());
    Ok(true)
}

fn sync(
    n: usize,
    noise: f64,
    horizon: Option<usize>,
    seed: u64,
    output_dir: &Path,
) -> dualctl::Result<bool> {
    let horizon = horizon.unwrap_or(4 * n.max(3));
    let report = run_sync_example(n, noise, horizon, seed)?;
    match report.sync_step {
        Some(t) => println!(
            "synchronized at step {t} (noise floor {:.4}, horizon {horizon})",
            report.noise_floor
        ),
        None => println!(
            "not synchronized within {horizon} steps (noise floor {:.4})",
            report.noise_floor
        ),
    }
    if let (Some(before), Some(after)) = (report.error_rate_before, report.error_rate_after) {
        println!(
            "estimate-error decrease per step: {before:.4e} before sync, {after:.4e} after \
             ({} with slowdown after synchronization)",
            if report.slowdown_consistent == Some(true) {
                "consistent"
            } else {
                "INCONSISTENT"
            }
        );
    }
    let written = output::emit_sync(output_dir, &report)?;
    println!("wrote {} files to {}", written.len(), output_dir.display());
    Ok(true)
}

fn check_line(name: &str, passed: Option<bool>, detail: String) {
    if let Some(ok) = passed {
        println!(
            "{:<18} {} {}",
            name,
            if ok { "PASS" } else { "FAIL" },
            detail
        );
    }
}

fn print_suite(report: &SuiteReport) {
    check_line(
        "identity",
        report.identity.as_ref().map(|r| r.passed),
        report
            .identity
            .as_ref()
            .map(|r| {
                format!(
                    "({} samples, worst residual {:.2e})",
                    r.sample_count, r.worst_normalized
                )
            })
            .unwrap_or_default(),
    );
    check_line(
        "identity-survey",
        report.identity_survey.as_ref().map(|r| r.passed),
        report
            .identity_survey
            .as_ref()
            .map(|r| format!("({} samples, lower bound held)", r.sample_count))
            .unwrap_or_default(),
    );
    check_line(
        "bellman",
        report.bellman.as_ref().map(|r| r.passed),
        report
            .bellman
            .as_ref()
            .map(|r| {
                format!(
                    "({} samples, worst residual {:.2e})",
                    r.sample_count, r.worst_normalized
                )
            })
            .unwrap_or_default(),
    );
    check_line(
        "bellman-survey",
        report.bellman_survey.as_ref().map(|r| r.passed),
        report
            .bellman_survey
            .as_ref()
            .map(|r| format!("({} samples, lower bound held)", r.sample_count))
            .unwrap_or_default(),
    );
    check_line(
        "value-iteration",
        report.value_iteration.as_ref().map(|r| r.passed),
        report
            .value_iteration
            .as_ref()
            .map(|r| format!("({} states, depth {})", r.sample_count, r.depth))
            .unwrap_or_default(),
    );
    check_line(
        "gamma-threshold",
        report.threshold.as_ref().map(|r| r.passed),
        report
            .threshold
            .as_ref()
            .map(|r| format!("({} gains over {} steps)", r.rows.len(), r.steps))
            .unwrap_or_default(),
    );
    check_line(
        "policy",
        report.policy.as_ref().map(|r| r.passed),
        report
            .policy
            .as_ref()
            .map(|r| {
                format!(
                    "({} samples, winner {})",
                    r.sample_count,
                    r.winner.as_deref().unwrap_or("none")
                )
            })
            .unwrap_or_default(),
    );
}

fn verify(
    suite: SuiteArg,
    seed: u64,
    budget: usize,
    output_dir: Option<PathBuf>,
) -> dualctl::Result<bool> {
    let report = run_suite(suite.into(), seed, budget)?;
    print_suite(&report);
    println!(
        "verification suite: {}",
        if report.passed { "PASS" } else { "FAIL" }
    );
    if let Some(dir) = output_dir {
        std::fs::create_dir_all(&dir).map_err(|source| dualctl::Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let path = dir.join("verify.json");
        output::write_json(&path, &report)?;
        println!("wrote {}", path.display());
    }
    Ok(report.passed)
}

fn sweep_gamma(alpha: f64, points: usize) -> dualctl::Result<bool> {
    if points < 2 {
        return Err(dualctl::Error::InvalidParameter {
            name: "points",
            reason: "need at least 2 sweep points".to_string(),
        });
    }
    let critical = ProblemParams::critical(1, alpha)?;
    let gamma_star = critical.gamma_star();
    println!("alpha = {alpha}, critical gain = {gamma_star:.6}");
    println!(
        "{:>10} {:>10} {:>12} {:>10}",
        "gamma", "g/g*", "sup t_k", "bounded"
    );
    let steps = 2_000_000;
    for k in 0..points {
        // Factors straddle 1 and always include the critical gain itself.
        let factor = 0.90 + 0.25 * k as f64 / (points - 1) as f64;
        let factor = if (factor - 1.0).abs() < 0.125 / (points - 1) as f64 {
            1.0
        } else {
            factor
        };
        let params = ProblemParams::new(1, alpha, factor * gamma_star)?;
        let rec = t_recursion(&params, steps);
        println!(
            "{:>10.6} {:>10.4} {:>12} {:>10}",
            params.gamma(),
            factor,
            if rec.diverged {
                "escaped".to_string()
            } else {
                format!("{:.6}", rec.sup())
            },
            !rec.diverged
        );
    }
    let t_star = critical.t_star().expect("critical gain is feasible");
    println!("limit at the critical gain: t* = {t_star:.6} = (gamma*^2 + 1)/2");
    Ok(true)
}

fn audit_gain(config_path: &Path, output_dir: Option<PathBuf>) -> dualctl::Result<bool> {
    let config = ExperimentConfig::from_path(config_path)?;
    let report = run_gain_audit(&config)?;
    println!(
        "bound {:.6}, mean peak {:.6} ± {:.6} over {} runs (horizon {})",
        report.bound, report.mean_peak, report.std_error, report.runs, report.horizon
    );
    println!(
        "worst run {} peaked at {:.6}; margin {:.6}",
        report.worst_run, report.worst_peak, report.margin
    );
    println!(
        "gain audit: {}",
        if report.passed { "PASS" } else { "FAIL" }
    );
    if let Some(dir) = output_dir {
        let written = output::emit_audit(&dir, &report)?;
        println!("wrote {}", written[0].display());
    }
    Ok(report.passed)
}
