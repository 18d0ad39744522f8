//! Closed-loop episode simulation and the experiment harness.
//!
//! An experiment is described by [`ExperimentConfig`] (a strict JSON
//! document: unknown keys are rejected). Episodes couple the controller to
//! a hidden scenario and a disturbance strategy; every step is logged into
//! a [`TrajectoryRecord`] whose running cost, data matrix and estimate
//! error are reproducible bit for bit from `(config, seed, run index)` —
//! the per-run random stream is `ChaCha8(seed)` on stream `run index`.
//!
//! Besides plain episodes the module implements two derived experiments:
//! [`run_sync_example`], which synchronizes a controlled chain to an
//! autonomous one through the error state `x = z − y`, and
//! [`run_gain_audit`], a Monte-Carlo check that the realized peak running
//! cost stays within the closed-form optimal value at the critical gain.

use crate::adversary::{draw_scenario, next_disturbance, AdversaryKind};
use crate::controller::{decide, estimate_parameters, policy_numeric, sample_input};
use crate::game::{DataTriple, GameState, ProblemParams, Scenario, Sign};
use crate::linalg::ScaledOrthogonal;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Episodes truncate (and are marked diverged) once the state norm passes
/// this limit; divergence is an expected outcome below the critical gain,
/// not an error.
pub const DIVERGENCE_LIMIT: f64 = 1e9;
/// Optimizer budget per step for the numeric policy.
pub const NUMERIC_POLICY_BUDGET: usize = 8_000;

/// Attenuation level: either the critical gain or an explicit value.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum GammaSpec {
    /// Resolve to `α + √(1+α²)`.
    #[default]
    Star,
    Value(f64),
}

impl Serialize for GammaSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            GammaSpec::Star => s.serialize_str("star"),
            GammaSpec::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for GammaSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(GammaSpec::Value(v)),
            Raw::Word(w) if w == "star" => Ok(GammaSpec::Star),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "gamma must be a number or the string \"star\", got \"{w}\""
            ))),
        }
    }
}

/// Which policy computes the input moments each step.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// The explicit decision rule (certainty equivalence or scaled
    /// exploration).
    #[default]
    ClosedForm,
    /// Direct numeric minimisation of the one-step objective.
    Numeric,
}

fn default_runs() -> usize {
    1
}

fn default_adversary() -> AdversaryKind {
    AdversaryKind::Zero
}

/// Experiment description. Strict: unknown keys are a parse error.
#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// State dimension.
    pub n: usize,
    /// Dynamics scale `α` (`AAᵀ = α²I`).
    pub alpha: f64,
    /// Attenuation level; `"star"` resolves to the critical gain.
    #[serde(default)]
    pub gamma: GammaSpec,
    /// Steps per episode.
    pub horizon: usize,
    /// Disturbance strategy.
    #[serde(default = "default_adversary")]
    pub adversary: AdversaryKind,
    /// Standard deviation of an independent Gaussian disturbance added on
    /// top of the adversary's output every step.
    #[serde(default)]
    pub noise_std: f64,
    /// Base seed; run `k` uses an independent stream of this seed.
    #[serde(default)]
    pub seed: u64,
    /// Number of episodes.
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Input policy.
    #[serde(default)]
    pub policy: PolicyKind,
    /// Initial state; defaults to the first basis vector.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Where artifacts go; `None` keeps results in memory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads and parses a config file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Validates the config and resolves the gain into parameters.
    pub fn params(&self) -> Result<ProblemParams> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: "must be at least 1".to_string(),
            });
        }
        if self.runs == 0 {
            return Err(Error::InvalidParameter {
                name: "runs",
                reason: "must be at least 1".to_string(),
            });
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::InvalidParameter {
                name: "noise_std",
                reason: format!("must be a nonnegative finite real, got {}", self.noise_std),
            });
        }
        self.adversary.validate(self.n)?;
        if let Some(x0) = &self.x0 {
            if x0.len() != self.n {
                return Err(Error::DimensionMismatch {
                    context: "ExperimentConfig::params",
                    expected: format!("x0 of length {}", self.n),
                    got: format!("length {}", x0.len()),
                });
            }
            if x0.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "x0",
                    reason: "initial state must be finite".to_string(),
                });
            }
        }
        match self.gamma {
            GammaSpec::Star => ProblemParams::critical(self.n, self.alpha),
            GammaSpec::Value(v) => ProblemParams::new(self.n, self.alpha, v),
        }
    }

    /// The configured initial state, defaulting to the first basis vector.
    pub fn initial_state(&self) -> DVector<f64> {
        match &self.x0 {
            Some(x0) => DVector::from_column_slice(x0),
            None => {
                let mut x = DVector::zeros(self.n);
                x[0] = 1.0;
                x
            }
        }
    }
}

/// The documented per-run stream split: base seed, one ChaCha stream per
/// run index.
pub fn episode_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

fn gaussian_vector<R: Rng + ?Sized>(n: usize, std: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

/// One logged step of an episode. `x` is the state the input was computed
/// from; `est_error` is the dynamics-estimate error after observing the
/// step's transition.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct StepRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub mode: String,
    pub y_max: f64,
    pub est_error: f64,
    pub stage_cost: f64,
    pub running_cost: f64,
}

/// Full episode log, sufficient to replay the controller's data matrix.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct TrajectoryRecord {
    pub run: usize,
    pub n: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// Hidden dynamics matrix, row major.
    pub scenario_a: Vec<Vec<f64>>,
    /// Hidden input sign (`+1` or `−1`).
    pub scenario_sign: i32,
    pub steps: Vec<StepRecord>,
    pub final_x: Vec<f64>,
    pub diverged: bool,
    /// Largest prefix sum of the stage costs.
    pub peak_running_cost: f64,
}

impl TrajectoryRecord {
    /// The hidden scenario the episode ran under.
    pub fn scenario(&self) -> Result<Scenario> {
        let a = DMatrix::from_fn(self.n, self.n, |i, j| self.scenario_a[i][j]);
        let sign = if self.scenario_sign >= 0 {
            Sign::Plus
        } else {
            Sign::Minus
        };
        Ok(Scenario::new(ScaledOrthogonal::new(a, self.alpha)?, sign))
    }

    /// Rebuilds the information state from the logged transitions.
    pub fn replay_state(&self) -> GameState {
        let mut xs: Vec<DVector<f64>> = self
            .steps
            .iter()
            .map(|s| DVector::from_column_slice(&s.x))
            .collect();
        xs.push(DVector::from_column_slice(&self.final_x));
        let mut state = GameState::new(xs[0].clone());
        for (t, step) in self.steps.iter().enumerate() {
            state.observe(&DataTriple::new(
                xs[t + 1].clone(),
                xs[t].clone(),
                DVector::from_column_slice(&step.u),
            ));
        }
        state
    }
}

/// Runs one closed-loop episode.
///
/// The decision rule always plays at the critical gain (where it is
/// defined); the configured gain affects the cost accounting and the
/// worst-case adversary's scoring. The numeric policy uses the configured
/// gain when it is feasible and falls back to the critical gain otherwise,
/// mirroring the adversary's own convention.
pub fn run_episode(config: &ExperimentConfig, run: usize) -> Result<TrajectoryRecord> {
    let params = config.params()?;
    let policy_params = if config.policy == PolicyKind::Numeric && params.t_star().is_some() {
        params.clone()
    } else {
        ProblemParams::critical(config.n, config.alpha)?
    };
    let gamma2 = params.gamma() * params.gamma();
    let mut rng = episode_rng(config.seed, run);
    let scenario = draw_scenario(&params, &mut rng);
    let a_true = scenario.a().matrix().clone();

    let mut state = GameState::new(config.initial_state());
    let mut steps = Vec::with_capacity(config.horizon);
    let mut running_cost = 0.0;
    let mut peak = f64::NEG_INFINITY;
    let mut diverged = false;

    for t in 0..config.horizon {
        let decision = match config.policy {
            PolicyKind::ClosedForm => decide(&state, &policy_params)?,
            PolicyKind::Numeric => {
                policy_numeric(&state, &policy_params, NUMERIC_POLICY_BUDGET)?.decision
            }
        };
        let u = sample_input(&decision, &mut rng)?;
        let mut w = next_disturbance(&config.adversary, &state, &u, &scenario, &params, &mut rng)?;
        if config.noise_std > 0.0 {
            w += gaussian_vector(config.n, config.noise_std, &mut rng);
        }
        let x = state.x().clone();
        let x_next = scenario.predict(&x, &u) + &w;

        let stage_cost = x.norm_squared() - gamma2 * w.norm_squared();
        running_cost += stage_cost;
        peak = peak.max(running_cost);

        state.observe(&DataTriple::new(x_next.clone(), x.clone(), u.clone()));
        let est = estimate_parameters(&state, &policy_params)?;
        let est_error = (est.a().matrix() - &a_true).norm();

        steps.push(StepRecord {
            t,
            x: x.as_slice().to_vec(),
            u: u.as_slice().to_vec(),
            w: w.as_slice().to_vec(),
            mode: decision.mode.label().to_string(),
            y_max: decision.y_max,
            est_error,
            stage_cost,
            running_cost,
        });

        if x_next.norm() > DIVERGENCE_LIMIT {
            diverged = true;
            break;
        }
    }

    Ok(TrajectoryRecord {
        run,
        n: config.n,
        alpha: config.alpha,
        gamma: params.gamma(),
        scenario_a: (0..config.n)
            .map(|i| (0..config.n).map(|j| a_true[(i, j)]).collect())
            .collect(),
        scenario_sign: scenario.sign().value() as i32,
        steps,
        final_x: state.x().as_slice().to_vec(),
        diverged,
        peak_running_cost: peak,
    })
}

/// Runs all configured episodes in parallel (deterministically: each run
/// has its own stream and the results are ordered by run index).
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<TrajectoryRecord>> {
    (0..config.runs)
        .into_par_iter()
        .map(|run| run_episode(config, run))
        .collect()
}

/// One logged step of the synchronization example.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct SyncStep {
    pub t: usize,
    /// Synchronization error `|z_t − y_t|`.
    pub norm_x: f64,
    pub norm_y: f64,
    pub norm_z: f64,
    pub est_error: f64,
}

/// Result of the synchronization example.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct SyncReport {
    pub n: usize,
    pub noise_std: f64,
    pub horizon: usize,
    pub seed: u64,
    /// `10·noise_std·√n` — the stationary error scale under small
    /// disturbances.
    pub noise_floor: f64,
    /// First step with `|x_t|` at or below the floor.
    pub sync_step: Option<usize>,
    /// Mean single-step decrease of the smoothed estimate error before and
    /// after synchronization.
    pub error_rate_before: Option<f64>,
    pub error_rate_after: Option<f64>,
    /// Estimation slows once synchronized (less fresh excitation), so the
    /// decrease rate after the sync step should not exceed the one before.
    pub slowdown_consistent: Option<bool>,
    pub steps: Vec<SyncStep>,
}

/// Simulates an autonomous reference chain `y⁺ = Ay` and a controlled
/// chain `z⁺ = Az + Bu + w`, with the controller acting on the error state
/// `x = z − y`. Both initial states are standard normal; the disturbance
/// is `N(0, noise_std²·I)` each step.
pub fn run_sync_example(n: usize, noise_std: f64, horizon: usize, seed: u64) -> Result<SyncReport> {
    if n == 0 || n > 200 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: format!("sync example supports dimensions 1..=200, got {n}"),
        });
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::InvalidParameter {
            name: "noise_std",
            reason: format!("must be a nonnegative finite real, got {noise_std}"),
        });
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: "must be at least 1".to_string(),
        });
    }
    let params = ProblemParams::critical(n, 1.0)?;
    let mut rng = episode_rng(seed, 0);
    let scenario = draw_scenario(&params, &mut rng);
    let a_true = scenario.a().matrix().clone();

    let mut y = gaussian_vector(n, 1.0, &mut rng);
    let mut z = gaussian_vector(n, 1.0, &mut rng);
    let mut state = GameState::new(&z - &y);
    let mut steps = Vec::with_capacity(horizon);

    for t in 0..horizon {
        let decision = decide(&state, &params)?;
        let u = sample_input(&decision, &mut rng)?;
        let w = gaussian_vector(n, noise_std, &mut rng);

        let y_next = scenario.a().apply(&y);
        let z_next = scenario.a().apply(&z) + scenario.sign().value() * &u + &w;
        let x = state.x().clone();
        let x_next = &z_next - &y_next;

        state.observe(&DataTriple::new(x_next.clone(), x.clone(), u));
        let est = estimate_parameters(&state, &params)?;

        steps.push(SyncStep {
            t,
            norm_x: x.norm(),
            norm_y: y.norm(),
            norm_z: z.norm(),
            est_error: (est.a().matrix() - &a_true).norm(),
        });

        y = y_next;
        z = z_next;
        if x_next.norm() > DIVERGENCE_LIMIT {
            break;
        }
    }

    // The error state of the final step still deserves a row: it is the
    // one that shows the synchronized regime.
    let noise_floor = 10.0 * noise_std * (n as f64).sqrt();
    let floor = noise_floor.max(1e-9);
    let sync_step = steps.iter().find(|s| s.norm_x <= floor).map(|s| s.t);

    let (error_rate_before, error_rate_after) = match sync_step {
        Some(ts) if ts >= 1 && ts + 1 < steps.len() => {
            let smoothed: Vec<f64> = steps
                .iter()
                .enumerate()
                .map(|(i, _)| {
                    let lo = i.saturating_sub(2);
                    let hi = (i + 3).min(steps.len());
                    steps[lo..hi].iter().map(|s| s.est_error).sum::<f64>() / (hi - lo) as f64
                })
                .collect();
            let before = (smoothed[0] - smoothed[ts]) / ts as f64;
            let after = (smoothed[ts] - smoothed[steps.len() - 1]) / (steps.len() - 1 - ts) as f64;
            (Some(before), Some(after))
        }
        _ => (None, None),
    };
    let slowdown_consistent = match (error_rate_before, error_rate_after) {
        (Some(b), Some(a)) => Some(a <= b + 1e-9),
        _ => None,
    };

    Ok(SyncReport {
        n,
        noise_std,
        horizon,
        seed,
        noise_floor,
        sync_step,
        error_rate_before,
        error_rate_after,
        slowdown_consistent,
        steps,
    })
}

/// Monte-Carlo audit of the attenuation bound.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct GainAuditReport {
    pub runs: usize,
    pub horizon: usize,
    /// Closed-form optimal value `(γ*²+1)/2·|x₀|²`.
    pub bound: f64,
    /// Mean over runs of the peak running cost.
    pub mean_peak: f64,
    pub std_error: f64,
    /// `bound + 3·std_error − mean_peak`; nonnegative iff passed.
    pub margin: f64,
    pub passed: bool,
    /// Run index attaining the largest peak (the offending run when the
    /// audit fails).
    pub worst_run: usize,
    pub worst_peak: f64,
}

/// Verifies by simulation that the expected peak running cost stays within
/// the closed-form optimal value `(γ*²+1)/2·|x₀|²` (plus three standard
/// errors of the Monte-Carlo mean). Requires the critical gain: the bound
/// is the game value there.
pub fn run_gain_audit(config: &ExperimentConfig) -> Result<GainAuditReport> {
    let params = config.params()?;
    if !params.is_critical() {
        return Err(Error::UnsupportedGain {
            gamma: params.gamma(),
            gamma_star: params.gamma_star(),
        });
    }
    let gs2 = params.gamma_star() * params.gamma_star();
    let bound = 0.5 * (gs2 + 1.0) * config.initial_state().norm_squared();

    let records = run_experiment(config)?;
    let peaks: Vec<f64> = records.iter().map(|r| r.peak_running_cost).collect();
    let runs = peaks.len();
    let mean_peak = peaks.iter().sum::<f64>() / runs as f64;
    let var = peaks.iter().map(|p| (p - mean_peak).powi(2)).sum::<f64>() / (runs.max(2) - 1) as f64;
    let std_error = (var / runs as f64).sqrt();
    let (worst_run, worst_peak) = peaks
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, p)| (i, *p))
        .expect("runs >= 1");
    let margin = bound + 3.0 * std_error - mean_peak;

    Ok(GainAuditReport {
        runs,
        horizon: config.horizon,
        bound,
        mean_peak,
        std_error,
        margin,
        passed: margin >= 0.0,
        worst_run,
        worst_peak,
    })
}
