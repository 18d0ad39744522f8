//! Numerical verification suite for the identities behind the controller.
//!
//! Five independent checks cover the load-bearing claims:
//!
//! 1. [`check_minmax_identity`] — the static min-max identity: the
//!    objective [`MinMaxObjective::template`] built from coefficients
//!    `(x, Y₁, Y₂, Y₃, g)` has minimum `max{y_max, 2α²|x|²}` over input
//!    moment pairs. The closed-form policy is the witness of this
//!    identity, so the check pins the policy's optimality per sample.
//! 2. [`check_bellman_fixed_point`] — one application of the dynamic
//!    programming update to the closed-form game value returns the value
//!    itself.
//! 3. [`check_value_iteration`] — scalar value iteration started from the
//!    data-only seed is monotone and sandwiched between truncated lower
//!    bounds and the closed-form value.
//! 4. [`check_gamma_threshold`] — the feasibility recursion stays below
//!    its fixed point at and above the critical gain and escapes past
//!    `γ²` below it.
//! 5. [`cross_validate_policy`] — among the four sign conventions for the
//!    exploration mean, exactly one attains the numeric minimum on
//!    informative data, and the certainty-equivalence branch matches
//!    `u = −î·Â·x` in its regime.
//!
//! The identity and fixed-point checks run in two modes. *Structured*
//! samples come from families where the identity is exact — aligned
//! rank-one data functionals, empty data, zero state — and the check
//! asserts agreement in both directions. *Survey* samples follow a generic
//! recipe (decoupled state scale, arbitrary noisy data); there only the
//! domination direction (numeric minimum ≥ closed form) holds for every
//! input by construction, so
//! the check asserts that direction and reports the other side instead of
//! assuming it. Survey reports are therefore honest measurements: a large
//! upper-side residual on a generic sample is recorded, not failed.
//!
//! Every check is a pure function of its inputs and budgets: reports are
//! reproducible bit for bit for a fixed seed.

use crate::controller::{
    decide, extract_functional, policy_numeric, select_scenario, ControlMode, InfoFunctional,
    MinMaxObjective,
};
use crate::game::{t_recursion, v_star, DataTriple, GameState, ProblemParams, Scenario, Sign};
use crate::linalg::unit_sphere_sample;
use crate::optim::{multi_start, polish_coordinate, NmOptions, OptimResult};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::Serialize;

/// Default optimizer budget (objective evaluations) per sample.
pub const DEFAULT_OPT_BUDGET: usize = 20_000;
/// Relative tolerance for optimizer-mediated identities.
pub const OPTIMIZER_TOL: f64 = 1e-3;
/// Relative tolerance for closed-form identities.
pub const CLOSED_FORM_TOL: f64 = 1e-9;
/// Relative tolerance for the fixed-point check (two nested optimizations).
pub const FIXED_POINT_TOL: f64 = 1e-2;
/// Gain factors probed by the threshold check, as multiples of the
/// critical gain.
pub const THRESHOLD_FACTORS: [f64; 5] = [0.9, 0.99, 1.0, 1.01, 1.5];

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

fn log_uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    debug_assert!(lo > 0.0 && hi > lo);
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_matrix<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn random_scenario<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Scenario {
    let q = crate::linalg::haar_orthogonal(n, rng);
    let a = crate::linalg::ScaledOrthogonal::new(alpha * q, alpha)
        .expect("Haar sample times alpha is scaled-orthogonal");
    let sign = if rng.random_bool(0.5) {
        Sign::Plus
    } else {
        Sign::Minus
    };
    Scenario::new(a, sign)
}

/// Which structured family an identity instance was drawn from.
#[derive(Serialize, Clone, Copy, PartialEq, Eq, Debug)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    /// All coefficient matrices zero: the minimum is `2α²|x|²`.
    ZeroFunctional,
    /// `x = 0`: the minimum is `y_max`, attained by the zero input.
    ZeroState,
    /// Aligned rank-one data below the commitment threshold.
    Exploration,
    /// Aligned rank-one data above the commitment threshold.
    CertaintyEquivalence,
    /// Unstructured coefficients; only the domination bound is guaranteed.
    Generic,
}

impl InstanceKind {
    fn label(self) -> &'static str {
        match self {
            InstanceKind::ZeroFunctional => "zero_functional",
            InstanceKind::ZeroState => "zero_state",
            InstanceKind::Exploration => "exploration",
            InstanceKind::CertaintyEquivalence => "certainty_equivalence",
            InstanceKind::Generic => "generic",
        }
    }
}

/// One input to the min-max identity check: a state vector, functional
/// coefficients and the parameter set that fixes `α` and `g`.
#[derive(Clone, Debug)]
pub struct IdentityInstance {
    pub x: DVector<f64>,
    pub functional: InfoFunctional,
    pub params: ProblemParams,
    pub kind: InstanceKind,
}

fn instance_params<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<ProblemParams> {
    let alpha = [0.5, 1.0, 2.0][rng.random_range(0..3)];
    let factor = rng.random_range(1.0..1.4);
    ProblemParams::with_gamma_factor(n, alpha, factor)
}

/// Draws one instance from the requested family.
///
/// The exploration and certainty-equivalence families use an aligned
/// rank-one `Y₃ = q·v̂·x̂ᵀ` with `q = ratio · 2α|x|²`, which places the
/// selected functional value at `ratio` times the commitment threshold.
/// On these families (and on the two degenerate ones) the identity is
/// exact, so a failure is an implementation bug rather than optimizer
/// slack. Certainty-equivalence instances additionally carry a sign-
/// informative trace term, which that branch tolerates exactly.
pub fn sample_identity_instance<R: Rng + ?Sized>(
    kind: InstanceKind,
    n: usize,
    rng: &mut R,
) -> Result<IdentityInstance> {
    let params = instance_params(n, rng)?;
    let alpha = params.alpha();
    let g = params.g();
    let zero = DMatrix::zeros(n, n);
    match kind {
        InstanceKind::ZeroFunctional => {
            let x = log_uniform(0.2, 3.0, rng) * unit_sphere_sample(n, rng);
            let f = InfoFunctional::new(zero.clone(), zero.clone(), zero, 0.0, g)?;
            Ok(IdentityInstance {
                x,
                functional: f,
                params,
                kind,
            })
        }
        InstanceKind::ZeroState => {
            let scale = log_uniform(0.3, 3.0, rng);
            let f = InfoFunctional::new(
                gaussian_matrix(n, scale, rng),
                gaussian_matrix(n, scale, rng),
                gaussian_matrix(n, scale, rng),
                -scale * rng.random_range(0.0..2.0),
                g,
            )?;
            Ok(IdentityInstance {
                x: DVector::zeros(n),
                functional: f,
                params,
                kind,
            })
        }
        InstanceKind::Exploration | InstanceKind::CertaintyEquivalence => {
            let ratio = if kind == InstanceKind::Exploration {
                rng.random_range(0.10..0.95)
            } else {
                rng.random_range(1.05..2.5)
            };
            let x = log_uniform(0.2, 3.0, rng) * unit_sphere_sample(n, rng);
            let x2 = x.norm_squared();
            let v_hat = unit_sphere_sample(n, rng);
            let q = ratio * 2.0 * alpha * x2;
            let y3 = q * &v_hat * (x.transpose() / x.norm());
            let y2 = if kind == InstanceKind::CertaintyEquivalence {
                // A trace term identifies the input sign without breaking
                // exactness of the committed branch.
                let tau = rng.random_range(-0.3..0.3) * alpha * q;
                DMatrix::from_diagonal_element(n, n, tau / n as f64)
            } else {
                zero.clone()
            };
            let f = InfoFunctional::new(zero, y2, y3, -rng.random_range(0.0..1.0), g)?;
            Ok(IdentityInstance {
                x,
                functional: f,
                params,
                kind,
            })
        }
        InstanceKind::Generic => {
            let x = log_uniform(0.1, 10.0, rng) * unit_sphere_sample(n, rng);
            if rng.random_bool(0.5) {
                let scale = log_uniform(0.1, 5.0, rng);
                let f = InfoFunctional::new(
                    gaussian_matrix(n, scale, rng),
                    gaussian_matrix(n, scale, rng),
                    gaussian_matrix(n, scale, rng),
                    -scale * rng.random_range(0.0..2.0),
                    g,
                )?;
                Ok(IdentityInstance {
                    x,
                    functional: f,
                    params,
                    kind,
                })
            } else {
                // Functional extraction is only defined at the critical
                // gain, so state-derived survey instances use it.
                let params = ProblemParams::critical(n, alpha)?;
                let state = sample_generic_state(n, &params, rng);
                let f = extract_functional(&state, &params)?;
                Ok(IdentityInstance {
                    x,
                    functional: f,
                    params,
                    kind,
                })
            }
        }
    }
}

/// Builds a deterministic mixture of structured instances, cycling the
/// dimensions and families.
pub fn build_identity_instances<R: Rng + ?Sized>(
    count: usize,
    dims: &[usize],
    rng: &mut R,
) -> Result<Vec<IdentityInstance>> {
    let kinds = [
        InstanceKind::Exploration,
        InstanceKind::CertaintyEquivalence,
        InstanceKind::ZeroFunctional,
        InstanceKind::Exploration,
        InstanceKind::CertaintyEquivalence,
        InstanceKind::ZeroState,
    ];
    (0..count)
        .map(|i| {
            let n = dims[i % dims.len()];
            sample_identity_instance(kinds[i % kinds.len()], n, rng)
        })
        .collect()
}

/// Builds unstructured survey instances (domination bound only).
pub fn build_identity_survey<R: Rng + ?Sized>(
    count: usize,
    dims: &[usize],
    rng: &mut R,
) -> Result<Vec<IdentityInstance>> {
    (0..count)
        .map(|i| sample_identity_instance(InstanceKind::Generic, dims[i % dims.len()], rng))
        .collect()
}

/// State whose data block accumulates deadbeat transitions: every recorded
/// step landed exactly at the origin from a base point parallel to the
/// current state direction. The data then pins the dynamics along that
/// direction while leaving it free elsewhere, and `regime_ratio` scales
/// the current state so that values below one land in the
/// certainty-equivalence regime and values above one in exploration.
pub fn deadbeat_state<R: Rng + ?Sized>(
    n: usize,
    triples: usize,
    regime_ratio: f64,
    params: &ProblemParams,
    rng: &mut R,
) -> GameState {
    let dir = unit_sphere_sample(n, rng);
    let mut data = Vec::with_capacity(triples);
    let mut pull = DVector::<f64>::zeros(n);
    for _ in 0..triples {
        let c = rng.random_range(0.3..1.3);
        let u = gaussian_vector(n, rng);
        pull += c * &u;
        data.push(DataTriple::new(DVector::zeros(n), c * &dir, u));
    }
    let strength = (params.g() * pull.norm() / params.alpha()).sqrt().max(1e-3);
    GameState::from_triples(regime_ratio * strength * &dir, &data)
}

/// State collected along a simulated trajectory under a hidden scenario:
/// the current state is the trajectory's own endpoint, so the data and the
/// state are mutually consistent.
pub fn trajectory_state<R: Rng + ?Sized>(
    n: usize,
    steps: usize,
    noise: f64,
    params: &ProblemParams,
    rng: &mut R,
) -> GameState {
    let scenario = random_scenario(n, params.alpha(), rng);
    let mut x = gaussian_vector(n, rng);
    let mut state = GameState::new(x.clone());
    for _ in 0..steps {
        let u = gaussian_vector(n, rng);
        let w = noise * gaussian_vector(n, rng);
        let x_next = scenario.predict(&x, &u) + &w;
        state.observe(&DataTriple::new(x_next.clone(), x.clone(), u));
        x = x_next;
    }
    state
}

/// The generic survey recipe: the state vector is standard normal rescaled
/// to a norm log-uniform in `[0.1, 10]`, while the data block comes from an
/// independent simulated trajectory of up to twenty noisy steps. State
/// scale and data are deliberately decoupled.
pub fn sample_generic_state<R: Rng + ?Sized>(
    n: usize,
    params: &ProblemParams,
    rng: &mut R,
) -> GameState {
    let steps = rng.random_range(0..=20);
    let noise = log_uniform(1e-3, 0.5, rng);
    let data = trajectory_state(n, steps, noise, params, rng);
    let x = log_uniform(0.1, 10.0, rng) * unit_sphere_sample(n, rng);
    GameState::with_data(x, data.z().clone()).expect("data block from simulation is valid")
}

/// Mixture of the families on which the closed-form value is an exact
/// fixed point of the update: empty data and deadbeat data in both
/// regimes. Measured residuals on these families are at machine precision
/// for n ∈ {1, 2}; self-consistent trajectory states are *not* in this
/// set because one update genuinely improves on the closed form there
/// (measured up to ~1e-1 relative), so they are only surveyed.
pub fn sample_exact_family_state<R: Rng + ?Sized>(
    n: usize,
    params: &ProblemParams,
    rng: &mut R,
) -> GameState {
    match rng.random_range(0..4u32) {
        0 => GameState::new(log_uniform(0.1, 10.0, rng) * unit_sphere_sample(n, rng)),
        1 | 2 => deadbeat_state(n, 1 + n, rng.random_range(0.3..0.95), params, rng),
        _ => deadbeat_state(n, 1 + n, rng.random_range(1.1..2.5), params, rng),
    }
}

/// Wider mixture for the value-iteration sandwich, whose claims (monotone
/// iterates, closed form above, truncated bounds below) hold at every
/// state: adds self-consistent trajectory states to the exact families.
pub fn sample_iteration_state<R: Rng + ?Sized>(
    n: usize,
    params: &ProblemParams,
    rng: &mut R,
) -> GameState {
    if rng.random_range(0..4u32) == 3 {
        trajectory_state(n, rng.random_range(2 * n..=4 * n + 2), 0.1, params, rng)
    } else {
        sample_exact_family_state(n, params, rng)
    }
}

/// One sample for the fixed-point check: a state together with the
/// parameter set it was drawn under.
#[derive(Clone, Debug)]
pub struct FixedPointSample {
    pub state: GameState,
    pub params: ProblemParams,
    pub kind: &'static str,
}

/// Builds the structured fixed-point sample set over the given dimensions
/// at the critical gain.
pub fn build_fixed_point_samples<R: Rng + ?Sized>(
    count: usize,
    dims: &[usize],
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<FixedPointSample>> {
    (0..count)
        .map(|i| {
            let n = dims[i % dims.len()];
            let params = ProblemParams::critical(n, alpha)?;
            let state = sample_exact_family_state(n, &params, rng);
            Ok(FixedPointSample {
                state,
                params,
                kind: "exact_family",
            })
        })
        .collect()
}

/// Builds survey samples for the fixed-point check: generic-recipe states
/// alternating with self-consistent trajectory states, both off the exact
/// manifold in general.
pub fn build_fixed_point_survey<R: Rng + ?Sized>(
    count: usize,
    dims: &[usize],
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<FixedPointSample>> {
    (0..count)
        .map(|i| {
            let n = dims[i % dims.len()];
            let params = ProblemParams::critical(n, alpha)?;
            let (state, kind) = if i % 2 == 0 {
                (sample_generic_state(n, &params, rng), "generic")
            } else {
                (
                    trajectory_state(n, rng.random_range(2 * n..=4 * n + 2), 0.1, &params, rng),
                    "trajectory",
                )
            };
            Ok(FixedPointSample {
                state,
                params,
                kind,
            })
        })
        .collect()
}

/// State for the convention check: deadbeat data aligned with the current
/// state plus one vanishingly scaled transition out of the origin whose
/// trace term identifies the input sign (`tau_sign`) without perturbing
/// the rest of the functional. `regime_ratio` < 1 keeps the sample in the
/// exploration regime.
pub fn convention_state<R: Rng + ?Sized>(
    n: usize,
    regime_ratio: f64,
    tau_sign: f64,
    params: &ProblemParams,
    rng: &mut R,
) -> GameState {
    let alpha = params.alpha();
    let g = params.g();
    let dir = unit_sphere_sample(n, rng);
    let x = rng.random_range(0.7..1.5) * &dir;
    let x2 = x.norm_squared();

    let mut base: Vec<(f64, DVector<f64>)> = (0..2)
        .map(|_| (rng.random_range(0.3..1.0), gaussian_vector(n, rng)))
        .collect();
    let pull: DVector<f64> = base.iter().map(|(c, u)| *c * u).sum();
    // Rescale the inputs so the selected functional value sits at
    // `regime_ratio` times the commitment threshold 2α²|x|².
    let lambda = regime_ratio * alpha * x2 / (g * pull.norm());
    for (_, u) in &mut base {
        *u *= lambda;
    }
    let mut data: Vec<DataTriple> = base
        .into_iter()
        .map(|(c, u)| DataTriple::new(DVector::zeros(n), c * &dir, u))
        .collect();

    if tau_sign != 0.0 {
        let probe = unit_sphere_sample(n, rng);
        let tau = tau_sign * 1e-5 * (1.0 + 2.0 * alpha * alpha * x2);
        let eps = tau / (2.0 * g);
        data.push(DataTriple::new(
            eps * &probe,
            DVector::zeros(n),
            probe.clone(),
        ));
    }
    GameState::from_triples(x, &data)
}

/// Builds the convention-check sample set: one zero-data state, then
/// alternating exploration samples with both sign-informative trace signs,
/// then certainty-equivalence samples with both signs.
pub fn build_convention_states<R: Rng + ?Sized>(
    n: usize,
    count: usize,
    params: &ProblemParams,
    rng: &mut R,
) -> Vec<GameState> {
    let mut states = vec![GameState::new(unit_sphere_sample(n, rng))];
    let mut sign = 1.0;
    while states.len() < count {
        let explore = states.len() % 3 != 0;
        let ratio = if explore {
            rng.random_range(0.4..0.8)
        } else {
            rng.random_range(1.2..2.2)
        };
        states.push(convention_state(n, ratio, sign, params, rng));
        sign = -sign;
    }
    states
}

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

/// One sample's residual in an identity check.
#[derive(Serialize, Clone, Debug)]
pub struct SampleResidual {
    pub index: usize,
    pub dim: usize,
    pub kind: String,
    /// Numerically minimised side.
    pub lhs: f64,
    /// Closed-form side.
    pub rhs: f64,
    pub residual: f64,
    /// `residual / (1 + |rhs|)`.
    pub normalized: f64,
    /// `|normalized| ≤ tolerance`.
    pub within_tolerance: bool,
    /// `lhs ≥ rhs − tolerance·(1+|rhs|)` — the direction guaranteed for
    /// every input.
    pub lower_bound_ok: bool,
}

/// Aggregate of an identity or fixed-point check.
#[derive(Serialize, Clone, Debug)]
pub struct IdentityReport {
    pub check: String,
    /// `"two_sided"` when agreement is asserted, `"lower_bound"` when only
    /// domination is asserted and the upper side is reported.
    pub assertion: String,
    pub tolerance: f64,
    pub sample_count: usize,
    /// Largest `|normalized|` over samples (signed value of the worst).
    pub worst_normalized: f64,
    pub two_sided_violations: usize,
    pub lower_bound_violations: usize,
    pub passed: bool,
    pub samples: Vec<SampleResidual>,
}

fn summarize_identity(
    check: &str,
    two_sided: bool,
    tolerance: f64,
    samples: Vec<SampleResidual>,
) -> IdentityReport {
    let worst = samples
        .iter()
        .map(|s| s.normalized)
        .fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    let upper = samples.iter().filter(|s| !s.within_tolerance).count();
    let lower = samples.iter().filter(|s| !s.lower_bound_ok).count();
    let passed = lower == 0 && (!two_sided || upper == 0);
    IdentityReport {
        check: check.to_string(),
        assertion: if two_sided {
            "two_sided"
        } else {
            "lower_bound"
        }
        .to_string(),
        tolerance,
        sample_count: samples.len(),
        worst_normalized: worst,
        two_sided_violations: upper,
        lower_bound_violations: lower,
        passed,
        samples,
    }
}

// ---------------------------------------------------------------------------
// Check 1: the static min-max identity
// ---------------------------------------------------------------------------

/// Evaluates one instance: numeric minimum of the template objective
/// against the closed form `max{y_max, 2α²|x|²}`. Returns `(lhs, rhs)`.
pub fn check_identity_instance(inst: &IdentityInstance, budget: usize) -> Result<(f64, f64)> {
    let params = &inst.params;
    let x = &inst.x;
    let (witness, y_max) = select_scenario(&inst.functional, params)?;
    let alpha = params.alpha();
    let threshold = 2.0 * alpha * alpha * x.norm_squared();
    let rhs = y_max.max(threshold);

    let objective = MinMaxObjective::template(x.clone(), &inst.functional, params)?;
    let mut extra: Vec<(DVector<f64>, f64)> = Vec::new();
    if x.norm_squared() > 0.0 {
        let i_hat = witness.sign().value();
        let ax = witness.a().apply(x);
        let ce = -i_hat * &ax;
        extra.push((ce.clone(), ce.norm_squared()));
        extra.push((-&ce, ce.norm_squared()));
        let s_explore = alpha * alpha * x.norm_squared();
        let kappa = (y_max / threshold).clamp(0.0, 1.0);
        extra.push((-i_hat * kappa * &ax, s_explore));
        extra.push((i_hat * kappa * &ax, s_explore));
        extra.push((DVector::zeros(x.len()), s_explore));
    }
    let (_, _, lhs, _) = objective.minimize(&extra, budget);
    Ok((lhs, rhs))
}

/// Runs the min-max identity check over a set of instances.
///
/// With `two_sided` the report asserts `|lhs − rhs| ≤ tol·(1+|rhs|)` per
/// sample; otherwise it asserts only `lhs ≥ rhs − tol·(1+|rhs|)` and
/// reports the two-sided residuals for inspection.
pub fn check_minmax_identity(
    instances: &[IdentityInstance],
    budget: usize,
    two_sided: bool,
    tolerance: f64,
) -> Result<IdentityReport> {
    let mut samples = Vec::with_capacity(instances.len());
    for (index, inst) in instances.iter().enumerate() {
        let (lhs, rhs) = check_identity_instance(inst, budget)?;
        let residual = lhs - rhs;
        let normalized = residual / (1.0 + rhs.abs());
        samples.push(SampleResidual {
            index,
            dim: inst.x.len(),
            kind: inst.kind.label().to_string(),
            lhs,
            rhs,
            residual,
            normalized,
            within_tolerance: normalized.abs() <= tolerance,
            lower_bound_ok: normalized >= -tolerance,
        });
    }
    Ok(summarize_identity(
        "minmax_identity",
        two_sided,
        tolerance,
        samples,
    ))
}

// ---------------------------------------------------------------------------
// Check 2: the Bellman fixed point
// ---------------------------------------------------------------------------

/// Applies the dynamic-programming update to the closed-form value at one
/// state and returns `(updated value, closed-form value)`.
pub fn fixed_point_instance(
    state: &GameState,
    params: &ProblemParams,
    budget: usize,
) -> Result<(f64, f64)> {
    let nd = policy_numeric(state, params, budget)?;
    let objective = MinMaxObjective::bellman(state, params)?;
    let updated = objective.bellman_value(nd.objective);
    let (value, _) = v_star(state, params)?;
    Ok((updated, value))
}

/// Runs the fixed-point check over a sample set.
pub fn check_bellman_fixed_point(
    samples: &[FixedPointSample],
    budget: usize,
    two_sided: bool,
    tolerance: f64,
) -> Result<IdentityReport> {
    let mut rows = Vec::with_capacity(samples.len());
    for (index, sample) in samples.iter().enumerate() {
        let (lhs, rhs) = fixed_point_instance(&sample.state, &sample.params, budget)?;
        let residual = lhs - rhs;
        let normalized = residual / (1.0 + rhs.abs());
        rows.push(SampleResidual {
            index,
            dim: sample.state.n(),
            kind: sample.kind.to_string(),
            lhs,
            rhs,
            residual,
            normalized,
            within_tolerance: normalized.abs() <= tolerance,
            lower_bound_ok: normalized >= -tolerance,
        });
    }
    Ok(summarize_identity(
        "bellman_fixed_point",
        two_sided,
        tolerance,
        rows,
    ))
}

// ---------------------------------------------------------------------------
// Check 3: scalar value iteration
// ---------------------------------------------------------------------------

/// Flat mirror of a one-dimensional information state. The nested value
/// iteration evaluates millions of pushed states; keeping them on the
/// stack avoids allocating a 3×3 matrix per probe.
#[derive(Clone, Copy, Debug)]
struct ScalarState {
    x: f64,
    z11: f64,
    z12: f64,
    z13: f64,
    z22: f64,
    z23: f64,
    z33: f64,
}

impl ScalarState {
    fn from_state(state: &GameState) -> Result<Self> {
        if state.n() != 1 {
            return Err(Error::DimensionMismatch {
                context: "ScalarState::from_state",
                expected: "dimension 1".to_string(),
                got: format!("{}", state.n()),
            });
        }
        let z = state.z();
        Ok(Self {
            x: state.x()[0],
            z11: z[(0, 0)],
            z12: z[(0, 1)],
            z13: z[(0, 2)],
            z22: z[(1, 1)],
            z23: z[(1, 2)],
            z33: z[(2, 2)],
        })
    }

    fn to_state(self) -> GameState {
        let mut z = DMatrix::zeros(3, 3);
        z[(0, 0)] = self.z11;
        z[(0, 1)] = self.z12;
        z[(1, 0)] = self.z12;
        z[(0, 2)] = self.z13;
        z[(2, 0)] = self.z13;
        z[(1, 1)] = self.z22;
        z[(1, 2)] = self.z23;
        z[(2, 1)] = self.z23;
        z[(2, 2)] = self.z33;
        GameState::with_data(DVector::from_element(1, self.x), z)
            .expect("scalar mirror blocks form a valid data matrix")
    }

    /// Records one realized transition `(v, x, u)` and moves the state to
    /// `v`.
    fn step(mut self, v: f64, u: f64) -> Self {
        let x = self.x;
        self.z11 += v * v;
        self.z12 += -v * x;
        self.z13 += -v * u;
        self.z22 += x * x;
        self.z23 += x * u;
        self.z33 += u * u;
        self.x = v;
        self
    }

    /// Accumulated disturbance energy under the scenario `(a, i)`.
    fn weighted(self, a: f64, i: f64) -> f64 {
        self.z11
            + a * a * self.z22
            + self.z33
            + 2.0 * a * self.z12
            + 2.0 * i * self.z13
            + 2.0 * a * i * self.z23
    }

    /// Data-only seed value: `−γ²·min over scenarios` of the energy.
    fn seed_value(self, params: &ProblemParams) -> f64 {
        let gs2 = params.gamma_star() * params.gamma_star();
        let alpha = params.alpha();
        let mut q_min = f64::INFINITY;
        for a in [alpha, -alpha] {
            for i in [1.0, -1.0] {
                q_min = q_min.min(self.weighted(a, i));
            }
        }
        -gs2 * q_min
    }

    /// Committed value maximised over scenarios.
    fn committed_max(self, params: &ProblemParams) -> f64 {
        let gs2 = params.gamma_star() * params.gamma_star();
        let alpha = params.alpha();
        let x2 = self.x * self.x;
        let mut best = f64::NEG_INFINITY;
        for a in [alpha, -alpha] {
            for i in [1.0, -1.0] {
                best = best.max(x2 - gs2 * self.weighted(a, i));
            }
        }
        best
    }

    /// Hedged value with coefficient `t`, maximised over the dynamics.
    fn hedged_max(self, t: f64, params: &ProblemParams) -> f64 {
        let gs2 = params.gamma_star() * params.gamma_star();
        let alpha = params.alpha();
        let offset = self.z11 + alpha * alpha * self.z22 + self.z33;
        t * self.x * self.x - gs2 * offset + 2.0 * gs2 * alpha * self.z12.abs()
    }

    /// Closed-form game value (critical gain).
    fn game_value(self, params: &ProblemParams) -> f64 {
        let gs2 = params.gamma_star() * params.gamma_star();
        let t = (gs2 + 1.0) / 2.0;
        let hedged = self.hedged_max(t, params);
        let committed = self.committed_max(params);
        if committed > hedged {
            committed
        } else {
            hedged
        }
    }
}

/// Optimization effort for one application of the update operator.
#[derive(Clone, Copy, Debug)]
struct StepBudget {
    outer_iters: usize,
    outer_polish: usize,
    inner_polish: usize,
    full_starts: bool,
}

const VI_TOP: StepBudget = StepBudget {
    outer_iters: 40,
    outer_polish: 32,
    inner_polish: 18,
    full_starts: true,
};
const VI_NESTED: StepBudget = StepBudget {
    outer_iters: 18,
    outer_polish: 0,
    inner_polish: 10,
    full_starts: false,
};

/// Adversary's best next state against a black-box value for one realized
/// input `u`: candidate responses (scenario predictions, their
/// amplifications, zero) refined by a golden-section polish.
///
/// The update operator lets the next-state choice depend on the realized
/// input, so a randomized input is handled by averaging this maximum over
/// the realizations — not by maximising once against an averaged data
/// increment, which would let input variance deflate every scenario's
/// energy at once and drive the update to `−∞`.
fn scalar_inner_max(
    value: &dyn Fn(ScalarState) -> f64,
    st: ScalarState,
    u: f64,
    params: &ProblemParams,
    polish_iters: usize,
) -> f64 {
    let alpha = params.alpha();
    let g2 = params.gamma() * params.gamma();
    let mut best = f64::NEG_INFINITY;
    let mut best_v = 0.0;
    let consider = |v: f64, best: &mut f64, best_v: &mut f64| {
        let val = value(st.step(v, u));
        if val > *best {
            *best = val;
            *best_v = v;
        }
    };
    consider(0.0, &mut best, &mut best_v);
    for a in [alpha, -alpha] {
        for i in [1.0, -1.0] {
            let pred = a * st.x + i * u;
            consider(pred, &mut best, &mut best_v);
            consider(pred * g2 / (g2 - 1.0), &mut best, &mut best_v);
        }
        if let Some(t) = params.t_star() {
            consider(a * st.x * g2 / (g2 - t), &mut best, &mut best_v);
        }
    }
    let radius = alpha.max(1.0) * (st.x.abs() + u.abs()) + 1.0;
    let mut z = vec![best_v];
    let polished = polish_coordinate(
        |p| -value(st.step(p[0], u)),
        &mut z,
        0,
        radius,
        polish_iters,
    );
    best.max(-polished)
}

/// One application of the update operator to a black-box value at a scalar
/// state: minimise over two-point input laws `u = m ± r` the expected
/// adversary optimum, plus the stage cost `|x|²`. Two-point laws carry an
/// arbitrary mean and second moment, which is all the closed-form values
/// can see of the input distribution.
fn scalar_apply_update(
    value: &dyn Fn(ScalarState) -> f64,
    st: ScalarState,
    params: &ProblemParams,
    budget: StepBudget,
) -> f64 {
    let x2 = st.x * st.x;
    let objective = |z: &[f64]| -> f64 {
        let (m, r) = (z[0], z[1]);
        0.5 * (scalar_inner_max(value, st, m - r, params, budget.inner_polish)
            + scalar_inner_max(value, st, m + r, params, budget.inner_polish))
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if st.x != 0.0 {
        if let Ok(d) = decide(&st.to_state(), params) {
            starts.push(vec![d.mean[0], d.radius()]);
        }
    }
    if budget.full_starts || starts.is_empty() {
        starts.push(vec![0.0, params.alpha() * st.x.abs()]);
        if budget.full_starts {
            starts.push(vec![0.0, 0.0]);
        }
    }
    let opts = NmOptions {
        max_iter: budget.outer_iters,
        ..NmOptions::default()
    };
    let step = 0.25 * (params.alpha() * st.x.abs()).max(0.1);
    let OptimResult {
        x: mut best_z,
        value: mut best,
        ..
    } = multi_start(objective, &starts, step, &opts);
    if budget.outer_polish > 0 {
        for idx in 0..2 {
            let v = polish_coordinate(objective, &mut best_z, idx, step, budget.outer_polish);
            best = best.min(v);
        }
    }
    x2 + best
}

/// `depth` nested applications of the update operator to the data-only
/// seed. The top application runs at full budget; inner evaluations use a
/// leaner one, since each top-level probe triggers a full inner
/// minimisation.
fn scalar_iterate(st: ScalarState, params: &ProblemParams, depth: usize, top: bool) -> f64 {
    if depth == 0 {
        return st.seed_value(params);
    }
    let budget = if top { VI_TOP } else { VI_NESTED };
    scalar_apply_update(
        &|s| scalar_iterate(s, params, depth - 1, false),
        st,
        params,
        budget,
    )
}

/// One state's value-iteration record.
#[derive(Serialize, Clone, Debug)]
pub struct ValueIterationSample {
    pub index: usize,
    pub x: f64,
    /// `V⁽⁰⁾, V⁽¹⁾, …, V⁽ᵈ⁾` at this state.
    pub iterates: Vec<f64>,
    pub game_value: f64,
    /// `max{truncated hedged bound at the coefficient below, committed
    /// bound}`.
    pub lower_bound: f64,
    /// Truncation coefficient `t_{d−1}` from the feasibility recursion,
    /// where `d` is the iteration depth. The bound trails the iterate
    /// count by one step: at empty data the iterates have state-square
    /// coefficients `1, 1+γ²α²/(γ²−1), …` — the recursion restarted from
    /// one — so `t_d` itself would already overshoot the second iterate
    /// there, while `t_{d−1}` is exactly what the induction on the update
    /// operator supports (and is tight at empty data).
    pub t_coeff: f64,
    /// Gap `V⁽¹⁾ − (closed first iterate)`; the first iterate equals the
    /// committed maximum exactly, so this isolates operator plumbing bugs.
    pub first_iterate_gap: f64,
    pub monotone_ok: bool,
    pub upper_ok: bool,
    pub lower_ok: bool,
}

/// Aggregate of the value-iteration check.
#[derive(Serialize, Clone, Debug)]
pub struct ValueIterationReport {
    pub depth: usize,
    pub tolerance: f64,
    pub sample_count: usize,
    pub passed: bool,
    pub samples: Vec<ValueIterationSample>,
}

/// Verifies, on scalar states, that value iteration from the data-only
/// seed increases monotonically, stays below the closed-form value, and
/// dominates the truncated closed-form lower bounds.
pub fn check_value_iteration(
    states: &[GameState],
    params: &ProblemParams,
    depth: usize,
    tolerance: f64,
) -> Result<ValueIterationReport> {
    if !params.is_critical() {
        return Err(Error::UnsupportedGain {
            gamma: params.gamma(),
            gamma_star: params.gamma_star(),
        });
    }
    if depth == 0 || depth > 3 {
        return Err(Error::InvalidParameter {
            name: "depth",
            reason: format!("nested iteration depth must be 1..=3, got {depth}"),
        });
    }
    let rec = t_recursion(params, depth);
    let t_coeff = rec.values[depth - 1];
    let mut samples = Vec::with_capacity(states.len());
    let mut passed = true;
    for (index, state) in states.iter().enumerate() {
        let st = ScalarState::from_state(state)?;
        let mut iterates = vec![st.seed_value(params)];
        for k in 1..=depth {
            iterates.push(scalar_iterate(st, params, k, true));
        }
        let game_value = st.game_value(params);
        let lower_bound = st.hedged_max(t_coeff, params).max(st.committed_max(params));
        let first_iterate_gap = iterates[1] - st.committed_max(params);
        let slack = |v: f64| tolerance * (1.0 + v.abs());
        let monotone_ok = iterates.windows(2).all(|w| w[1] >= w[0] - slack(w[0]));
        let upper_ok = iterates[depth] <= game_value + slack(game_value);
        let lower_ok = iterates[depth] >= lower_bound - slack(lower_bound);
        passed &= monotone_ok && upper_ok && lower_ok;
        samples.push(ValueIterationSample {
            index,
            x: st.x,
            iterates,
            game_value,
            lower_bound,
            t_coeff,
            first_iterate_gap,
            monotone_ok,
            upper_ok,
            lower_ok,
        });
    }
    Ok(ValueIterationReport {
        depth,
        tolerance,
        sample_count: samples.len(),
        passed,
        samples,
    })
}

// ---------------------------------------------------------------------------
// Check 4: the feasibility threshold
// ---------------------------------------------------------------------------

/// One `(α, gain factor)` cell of the threshold check.
#[derive(Serialize, Clone, Debug)]
pub struct ThresholdRow {
    pub alpha: f64,
    pub factor: f64,
    pub gamma: f64,
    pub gamma_star: f64,
    pub t_star: Option<f64>,
    pub sup_t: f64,
    pub diverged: bool,
    pub expected_bounded: bool,
    pub ok: bool,
}

/// Aggregate of the threshold check.
#[derive(Serialize, Clone, Debug)]
pub struct ThresholdReport {
    pub steps: usize,
    pub passed: bool,
    pub rows: Vec<ThresholdRow>,
}

/// Runs the feasibility recursion across a gain grid: at or above the
/// critical gain the iteration must stay at or below its fixed point; below
/// it the iteration must escape past `γ²` within the step budget.
pub fn check_gamma_threshold(alphas: &[f64], steps: usize) -> Result<ThresholdReport> {
    let mut rows = Vec::with_capacity(alphas.len() * THRESHOLD_FACTORS.len());
    let mut passed = true;
    for &alpha in alphas {
        for &factor in &THRESHOLD_FACTORS {
            let params = ProblemParams::with_gamma_factor(1, alpha, factor)?;
            let rec = t_recursion(&params, steps);
            let expected_bounded = factor >= 1.0;
            let sup_t = rec.sup();
            let ok = if expected_bounded {
                match params.t_star() {
                    Some(t) => !rec.diverged && sup_t <= t * (1.0 + 1e-9) + 1e-9,
                    None => false,
                }
            } else {
                rec.diverged
            };
            passed &= ok;
            rows.push(ThresholdRow {
                alpha,
                factor,
                gamma: params.gamma(),
                gamma_star: params.gamma_star(),
                t_star: params.t_star(),
                sup_t,
                diverged: rec.diverged,
                expected_bounded,
                ok,
            });
        }
    }
    Ok(ThresholdReport {
        steps,
        passed,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Check 5: policy cross-validation
// ---------------------------------------------------------------------------

/// The four candidate formulas for the exploration mean, written in terms
/// of the selected pair `(Â, î)` and the scale `κ = y_max / 2α²|x|²`.
#[derive(Serialize, Clone, Copy, PartialEq, Eq, Debug)]
#[serde(rename_all = "snake_case")]
pub enum MeanConvention {
    /// `−î·κ·Â·x` — the convention the controller ships with.
    NegatedSelected,
    /// `+î·κ·Â·x`.
    Selected,
    /// `−κ·Â·x`.
    NegatedPlain,
    /// `+κ·Â·x`.
    Plain,
}

impl MeanConvention {
    pub const ALL: [MeanConvention; 4] = [
        MeanConvention::NegatedSelected,
        MeanConvention::Selected,
        MeanConvention::NegatedPlain,
        MeanConvention::Plain,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MeanConvention::NegatedSelected => "-i*kappa*A*x",
            MeanConvention::Selected => "+i*kappa*A*x",
            MeanConvention::NegatedPlain => "-kappa*A*x",
            MeanConvention::Plain => "+kappa*A*x",
        }
    }

    fn mean(self, witness: &Scenario, kappa: f64, x: &DVector<f64>) -> DVector<f64> {
        let ax = witness.a().apply(x);
        let i = witness.sign().value();
        match self {
            MeanConvention::NegatedSelected => -i * kappa * ax,
            MeanConvention::Selected => i * kappa * ax,
            MeanConvention::NegatedPlain => -kappa * ax,
            MeanConvention::Plain => kappa * ax,
        }
    }
}

/// One state's convention comparison.
#[derive(Serialize, Clone, Debug)]
pub struct PolicySample {
    pub index: usize,
    pub mode: String,
    pub y_max: f64,
    pub threshold: f64,
    pub objective_numeric: f64,
    /// Normalized objective gap per convention (order of
    /// [`MeanConvention::ALL`]); empty for certainty-equivalence samples.
    pub convention_gaps: Vec<f64>,
    pub convention_matches: Vec<bool>,
    /// Normalized gap of the closed-form decision, for samples in the
    /// certainty-equivalence regime.
    pub ce_gap: Option<f64>,
}

/// Aggregate of the cross-validation check.
#[derive(Serialize, Clone, Debug)]
pub struct PolicyReport {
    pub tolerance: f64,
    pub conventions: Vec<String>,
    pub sample_count: usize,
    pub exploration_samples: usize,
    /// Conventions matching the numeric minimum on every exploration
    /// sample.
    pub matching_all: Vec<String>,
    /// Set iff exactly one convention matches everywhere.
    pub winner: Option<String>,
    pub ce_ok: bool,
    pub passed: bool,
    pub samples: Vec<PolicySample>,
}

/// Compares the four exploration-mean conventions against the numeric
/// minimiser and checks the certainty-equivalence branch in its regime.
///
/// The check passes when exactly one convention attains the numeric
/// minimum on every informative exploration sample and it is the one the
/// controller ships with. Zero matching conventions, or several, are
/// reported as an ambiguity (the per-sample gaps stay in the report)
/// rather than silently resolved.
pub fn cross_validate_policy(
    states: &[GameState],
    params: &ProblemParams,
    budget: usize,
    tolerance: f64,
) -> Result<PolicyReport> {
    let alpha = params.alpha();
    let mut samples = Vec::with_capacity(states.len());
    let mut matches_all = [true; 4];
    let mut exploration_samples = 0usize;
    let mut ce_ok = true;

    for (index, state) in states.iter().enumerate() {
        let f = extract_functional(state, params)?;
        let (witness, y_max) = select_scenario(&f, params)?;
        let x = state.x();
        let threshold = 2.0 * alpha * alpha * x.norm_squared();
        let objective = MinMaxObjective::bellman(state, params)?;
        let nd = policy_numeric(state, params, budget)?;
        let scale = 1.0 + nd.objective.abs();

        if y_max >= threshold {
            let d = decide(state, params)?;
            let gap = (objective.eval_decision(&d) - nd.objective) / scale;
            ce_ok &= gap <= tolerance;
            samples.push(PolicySample {
                index,
                mode: ControlMode::CertaintyEquivalence.label().to_string(),
                y_max,
                threshold,
                objective_numeric: nd.objective,
                convention_gaps: Vec::new(),
                convention_matches: Vec::new(),
                ce_gap: Some(gap),
            });
            continue;
        }

        exploration_samples += 1;
        let kappa = y_max / threshold;
        let s = alpha * alpha * x.norm_squared();
        let mut gaps = Vec::with_capacity(4);
        let mut matched = Vec::with_capacity(4);
        for (slot, convention) in MeanConvention::ALL.iter().enumerate() {
            let m = convention.mean(&witness, kappa, x);
            let gap = (objective.eval(&m, s) - nd.objective) / scale;
            let is_match = gap <= tolerance;
            matches_all[slot] &= is_match;
            gaps.push(gap);
            matched.push(is_match);
        }
        samples.push(PolicySample {
            index,
            mode: ControlMode::Exploration.label().to_string(),
            y_max,
            threshold,
            objective_numeric: nd.objective,
            convention_gaps: gaps,
            convention_matches: matched,
            ce_gap: None,
        });
    }

    let matching: Vec<String> = MeanConvention::ALL
        .iter()
        .enumerate()
        .filter(|(slot, _)| matches_all[*slot])
        .map(|(_, c)| c.label().to_string())
        .collect();
    let winner = if matching.len() == 1 {
        Some(matching[0].clone())
    } else {
        None
    };
    let passed = ce_ok
        && exploration_samples > 0
        && winner.as_deref() == Some(MeanConvention::NegatedSelected.label());
    Ok(PolicyReport {
        tolerance,
        conventions: MeanConvention::ALL
            .iter()
            .map(|c| c.label().to_string())
            .collect(),
        sample_count: samples.len(),
        exploration_samples,
        matching_all: matching,
        winner,
        ce_ok,
        passed,
        samples,
    })
}

// ---------------------------------------------------------------------------
// Suite orchestration
// ---------------------------------------------------------------------------

/// Which checks to run.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Suite {
    All,
    Identity,
    Bellman,
    ValueIteration,
    Threshold,
    Policy,
}

/// Machine-readable result of a verification run.
#[derive(Serialize, Clone, Debug)]
pub struct SuiteReport {
    pub seed: u64,
    pub budget: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identity: Option<IdentityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identity_survey: Option<IdentityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bellman: Option<IdentityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bellman_survey: Option<IdentityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_iteration: Option<ValueIterationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyReport>,
    pub passed: bool,
}

/// Runs the selected checks with deterministic sampling and default
/// sample counts sized for an interactive run.
pub fn run_suite(suite: Suite, seed: u64, budget: usize) -> Result<SuiteReport> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let all = suite == Suite::All;
    let mut report = SuiteReport {
        seed,
        budget,
        identity: None,
        identity_survey: None,
        bellman: None,
        bellman_survey: None,
        value_iteration: None,
        threshold: None,
        policy: None,
        passed: true,
    };

    if all || suite == Suite::Identity {
        let instances = build_identity_instances(36, &[1, 2, 3], &mut rng)?;
        report.identity = Some(check_minmax_identity(
            &instances,
            budget,
            true,
            OPTIMIZER_TOL,
        )?);
        let survey = build_identity_survey(24, &[1, 2, 3], &mut rng)?;
        report.identity_survey = Some(check_minmax_identity(
            &survey,
            budget,
            false,
            OPTIMIZER_TOL,
        )?);
    }
    if all || suite == Suite::Bellman {
        let samples = build_fixed_point_samples(32, &[1, 2], 1.0, &mut rng)?;
        report.bellman = Some(check_bellman_fixed_point(
            &samples,
            budget,
            true,
            FIXED_POINT_TOL,
        )?);
        let survey = build_fixed_point_survey(16, &[1, 2], 1.0, &mut rng)?;
        report.bellman_survey = Some(check_bellman_fixed_point(
            &survey,
            budget,
            false,
            FIXED_POINT_TOL,
        )?);
    }
    if all || suite == Suite::ValueIteration {
        let params = ProblemParams::critical(1, 1.0)?;
        let states: Vec<GameState> = (0..6)
            .map(|_| sample_iteration_state(1, &params, &mut rng))
            .collect();
        report.value_iteration = Some(check_value_iteration(&states, &params, 2, FIXED_POINT_TOL)?);
    }
    if all || suite == Suite::Threshold {
        report.threshold = Some(check_gamma_threshold(
            &[0.25, 0.5, 1.0, 2.0, 4.0],
            1_000_000,
        )?);
    }
    if all || suite == Suite::Policy {
        let params = ProblemParams::critical(1, 1.0)?;
        let states = build_convention_states(1, 13, &params, &mut rng);
        report.policy = Some(cross_validate_policy(
            &states,
            &params,
            budget,
            OPTIMIZER_TOL,
        )?);
    }

    report.passed = report.identity.as_ref().is_none_or(|r| r.passed)
        && report.identity_survey.as_ref().is_none_or(|r| r.passed)
        && report.bellman.as_ref().is_none_or(|r| r.passed)
        && report.bellman_survey.as_ref().is_none_or(|r| r.passed)
        && report.value_iteration.as_ref().is_none_or(|r| r.passed)
        && report.threshold.as_ref().is_none_or(|r| r.passed)
        && report.policy.as_ref().is_none_or(|r| r.passed);
    Ok(report)
}
