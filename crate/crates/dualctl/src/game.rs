//! Problem data, information state and value functions.
//!
//! The plant is `x_{t+1} = A x_t + B u_t + w_t` with `A Aᵀ = α² I` and
//! `B = ±I`, both unknown to the controller. The controller pays
//! `Σ_t (|x_t|² − γ² |w_t|²)` against an adversary choosing the parameters
//! and the disturbance. All value computations run over the information
//! state `(x, Z)` where `Z` is the running sum of outer products of stacked
//! transition triples `s_t = [−x_{t+1}; x_t; u_t]`: for any parameter pair
//! the data-weighted norm `tr([I A B] Z [I A B]ᵀ)` reproduces the total
//! disturbance energy that pair would need to explain the observations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{procrustes_max, ScaledOrthogonal};

/// Relative tolerance used to recognise the critical gain.
const CRITICAL_GAIN_TOL: f64 = 1e-12;

/// Sign of the input matrix `B = ±I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    /// Both candidate signs, in a fixed enumeration order.
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    /// The sign as a real scalar.
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    /// The opposite sign.
    pub fn flipped(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    /// Sign of a nonzero real; positive values (and zero) map to `Plus`.
    pub fn of(v: f64) -> Sign {
        if v < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }
}

/// One admissible parameter pair `(A, B)` with `B = sign · I`.
#[derive(Debug, Clone)]
pub struct Scenario {
    a: ScaledOrthogonal,
    sign: Sign,
}

impl Scenario {
    pub fn new(a: ScaledOrthogonal, sign: Sign) -> Self {
        Self { a, sign }
    }

    pub fn a(&self) -> &ScaledOrthogonal {
        &self.a
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    /// The noise-free successor `A x + B u` under this scenario.
    pub fn predict(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.a.apply(x) + self.sign.value() * u
    }
}

/// One observed transition `(x_next, x, u)`.
#[derive(Debug, Clone)]
pub struct DataTriple {
    pub x_next: DVector<f64>,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
}

impl DataTriple {
    pub fn new(x_next: DVector<f64>, x: DVector<f64>, u: DVector<f64>) -> Self {
        Self { x_next, x, u }
    }

    /// The stacked vector `[−x_next; x; u]` whose outer product feeds `Z`.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.x.len();
        let mut s = DVector::zeros(3 * n);
        for i in 0..n {
            s[i] = -self.x_next[i];
            s[n + i] = self.x[i];
            s[2 * n + i] = self.u[i];
        }
        s
    }
}

/// Problem constants and the gains derived from them.
#[derive(Debug, Clone)]
pub struct ProblemParams {
    n: usize,
    alpha: f64,
    gamma: f64,
    gamma_star: f64,
    /// `γ² − 1`, the weight that converts data energy into value units.
    g: f64,
    /// Smaller root of `(γ² − t)(t − 1) = γ² α²`; `None` below the threshold.
    t_star: Option<f64>,
}

impl ProblemParams {
    /// Builds parameters for state dimension `n`, magnitude `alpha` and
    /// attenuation gain `gamma`. Infeasible gains are allowed — feasibility
    /// is a queryable property, and the threshold experiments need both
    /// sides of it.
    pub fn new(n: usize, alpha: f64, gamma: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "state dimension must be at least 1".to_string(),
            });
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("must be a positive finite real, got {alpha}"),
            });
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must be a positive finite real, got {gamma}"),
            });
        }
        let gamma_star = alpha + (1.0 + alpha * alpha).sqrt();
        let t_star = t_star_of(alpha, gamma, gamma_star);
        Ok(Self {
            n,
            alpha,
            gamma,
            gamma_star,
            g: gamma * gamma - 1.0,
            t_star,
        })
    }

    /// Parameters at the critical gain `γ = γ* = α + √(1 + α²)`.
    pub fn critical(n: usize, alpha: f64) -> Result<Self> {
        let gamma_star = alpha + (1.0 + alpha * alpha).sqrt();
        Self::new(n, alpha, gamma_star)
    }

    /// Parameters at `gamma = factor · γ*`.
    pub fn with_gamma_factor(n: usize, alpha: f64, factor: f64) -> Result<Self> {
        let gamma_star = alpha + (1.0 + alpha * alpha).sqrt();
        Self::new(n, alpha, factor * gamma_star)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_star(&self) -> f64 {
        self.gamma_star
    }

    /// `γ² − 1` for the configured gain.
    pub fn g(&self) -> f64 {
        self.g
    }

    /// The limit of the feasibility recursion, when it exists.
    pub fn t_star(&self) -> Option<f64> {
        self.t_star
    }

    /// A finite game value exists iff `γ ≥ γ*` (equivalently
    /// `(γ − α)² ≥ 1 + α²`).
    pub fn feasible(&self) -> bool {
        self.gamma >= self.gamma_star
    }

    /// Whether the configured gain is the critical one.
    pub fn is_critical(&self) -> bool {
        (self.gamma - self.gamma_star).abs() <= CRITICAL_GAIN_TOL * self.gamma_star
    }
}

/// Smaller root of `(γ² − t)(t − 1) = γ² α²`, i.e. of
/// `t² − (γ² + 1) t + γ² (1 + α²) = 0`.
///
/// At the critical gain the two roots collide at `(γ² + 1) / 2`; that case
/// is returned directly because the discriminant cancels catastrophically
/// in floating point exactly where downstream identities need full
/// precision.
fn t_star_of(alpha: f64, gamma: f64, gamma_star: f64) -> Option<f64> {
    if gamma < gamma_star {
        return None;
    }
    let g2 = gamma * gamma;
    if gamma == gamma_star {
        return Some((g2 + 1.0) / 2.0);
    }
    let disc = (g2 - 1.0) * (g2 - 1.0) - 4.0 * g2 * alpha * alpha;
    let root = disc.max(0.0).sqrt();
    Some(((g2 + 1.0) - root) / 2.0)
}

/// The information state: current plant state and accumulated data matrix.
#[derive(Debug, Clone)]
pub struct GameState {
    x: DVector<f64>,
    z: DMatrix<f64>,
}

impl GameState {
    /// Fresh state with no recorded data.
    pub fn new(x: DVector<f64>) -> Self {
        let n = x.len();
        Self {
            x,
            z: DMatrix::zeros(3 * n, 3 * n),
        }
    }

    /// State with an explicit data matrix; the matrix must be `3n × 3n`
    /// and symmetric.
    pub fn with_data(x: DVector<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = x.len();
        if z.nrows() != 3 * n || z.ncols() != 3 * n {
            return Err(Error::DimensionMismatch {
                context: "GameState::with_data",
                expected: format!("{0}x{0}", 3 * n),
                got: format!("{}x{}", z.nrows(), z.ncols()),
            });
        }
        let asym = (&z - z.transpose()).norm();
        if asym > 1e-9 * (1.0 + z.norm()) {
            return Err(Error::InvalidParameter {
                name: "z",
                reason: format!("data matrix must be symmetric (asymmetry {asym:.3e})"),
            });
        }
        Ok(Self { x, z })
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Records a transition: rank-one update of `Z`, then the plant state
    /// moves to the observed successor.
    pub fn observe(&mut self, triple: &DataTriple) {
        self.push_triple(triple);
        self.x = triple.x_next.clone();
    }

    /// Adds a triple to the data matrix without moving the plant state.
    pub fn push_triple(&mut self, triple: &DataTriple) {
        let s = triple.stacked();
        self.z.ger(1.0, &s, &s, 1.0);
    }

    /// Builds a state from a history of triples; `x` is the last successor.
    pub fn from_triples(x: DVector<f64>, triples: &[DataTriple]) -> Self {
        let mut state = GameState::new(x);
        for t in triples {
            state.push_triple(t);
        }
        state
    }

    fn block(&self, bi: usize, bj: usize) -> DMatrix<f64> {
        let n = self.n();
        self.z.view((bi * n, bj * n), (n, n)).into_owned()
    }

    /// Block `Z₁₂` coupling the successor slot with the state slot.
    pub fn z12(&self) -> DMatrix<f64> {
        self.block(0, 1)
    }

    /// Block `Z₁₃` coupling the successor slot with the input slot.
    pub fn z13(&self) -> DMatrix<f64> {
        self.block(0, 2)
    }

    /// Block `Z₃₂` coupling the input slot with the state slot.
    pub fn z32(&self) -> DMatrix<f64> {
        self.block(2, 1)
    }

    /// Traces of the three diagonal blocks `(tr Z₁₁, tr Z₂₂, tr Z₃₃)`.
    pub fn diag_traces(&self) -> (f64, f64, f64) {
        let n = self.n();
        let tr = |b: usize| {
            let mut t = 0.0;
            for i in 0..n {
                t += self.z[(b * n + i, b * n + i)];
            }
            t
        };
        (tr(0), tr(1), tr(2))
    }

    /// `tr Z₁₁ + α² tr Z₂₂ + tr Z₃₃`: the scenario-independent part of the
    /// data-weighted norm.
    pub fn data_offset(&self, alpha: f64) -> f64 {
        let (t11, t22, t33) = self.diag_traces();
        t11 + alpha * alpha * t22 + t33
    }
}

/// Data-weighted norm `tr([I A iI] Z [I A iI]ᵀ)` for a parameter pair.
///
/// Expanded over the 3×3 block partition of `Z` (successor, state, input
/// slots, with the successor carrying the minus sign in the stacked
/// triple): the diagonal blocks contribute their traces (`A Aᵀ = α² I`
/// collapses the middle one), and each off-diagonal block appears twice.
/// By construction this equals the total disturbance energy
/// `Σ_τ |x_{τ+1} − A x_τ − i u_τ|²` over the recorded triples.
pub fn weighted_norm_sq(state: &GameState, scenario: &Scenario) -> f64 {
    let n = state.n();
    let z = state.z();
    let a = scenario.a();
    let i = scenario.sign().value();
    debug_assert_eq!(a.dim(), n, "scenario dimension mismatch");

    let alpha = a.scale();
    let mut acc = state.data_offset(alpha);
    // 2⟨A, Z₁₂⟩ + 2i·tr Z₁₃ + 2i·⟨A, Z₃₂⟩
    acc += 2.0 * a.matrix().dot(&z.view((0, n), (n, n)));
    let mut tr13 = 0.0;
    for k in 0..n {
        tr13 += z[(k, 2 * n + k)];
    }
    acc += 2.0 * i * tr13;
    acc += 2.0 * i * a.matrix().dot(&z.view((2 * n, n), (n, n)));
    acc
}

/// Value when committed to a single parameter pair:
/// `|x|² − γ*² · tr([I A B] Z [I A B]ᵀ)`.
pub fn v1(state: &GameState, scenario: &Scenario, params: &ProblemParams) -> f64 {
    let gs2 = params.gamma_star() * params.gamma_star();
    state.x().norm_squared() - gs2 * weighted_norm_sq(state, scenario)
}

/// Value while hedging over both input signs:
/// `t · |x|² − (γ*²/2) Σ_{i=±1} tr([I A iB] Z [I A iB]ᵀ)`.
///
/// The sign of the supplied scenario is irrelevant — the symmetric sum
/// cancels every sign-linear term — and `t` is a free coefficient so the
/// truncated lower bounds of the feasibility recursion reuse this shape.
pub fn v0(state: &GameState, scenario: &Scenario, t_coeff: f64, params: &ProblemParams) -> f64 {
    let gs2 = params.gamma_star() * params.gamma_star();
    let plus = Scenario::new(scenario.a().clone(), Sign::Plus);
    let minus = Scenario::new(scenario.a().clone(), Sign::Minus);
    let sum = weighted_norm_sq(state, &plus) + weighted_norm_sq(state, &minus);
    t_coeff * state.x().norm_squared() - gs2 / 2.0 * sum
}

/// Which of the two value shapes realises the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Sign still hedged (the `t·|x|²` shape).
    Hedged,
    /// Committed to one parameter pair.
    Committed,
}

/// Maximising parameter pair and branch for the game value.
#[derive(Debug, Clone)]
pub struct ValueWitness {
    pub scenario: Scenario,
    pub branch: Branch,
}

/// Maximum of the committed value over all parameter pairs, with witness.
///
/// For each sign the maximisation over `A` is linear with coefficient
/// `−2γ*²(Z₁₂ + i Z₃₂)`, solved in closed form on the scaled-orthogonal
/// manifold.
pub fn max_v1(state: &GameState, params: &ProblemParams) -> Result<(f64, Scenario)> {
    let gs2 = params.gamma_star() * params.gamma_star();
    let alpha = params.alpha();
    let x2 = state.x().norm_squared();
    let offset = state.data_offset(alpha);
    let z12 = state.z12();
    let z13 = state.z13();
    let z32 = state.z32();

    let mut best: Option<(f64, Scenario)> = None;
    for sign in Sign::BOTH {
        let i = sign.value();
        let coeff = -(&z12 + i * &z32);
        let (gain, a) = procrustes_max(&coeff, alpha)?;
        let value = x2 - gs2 * (offset + 2.0 * i * z13.trace()) + 2.0 * gs2 * gain;
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, Scenario::new(a, sign)));
        }
    }
    Ok(best.expect("two signs evaluated"))
}

/// Maximum of the hedged value over all parameter pairs, with witness.
pub fn max_v0(state: &GameState, t_coeff: f64, params: &ProblemParams) -> Result<(f64, Scenario)> {
    let gs2 = params.gamma_star() * params.gamma_star();
    let alpha = params.alpha();
    let x2 = state.x().norm_squared();
    let offset = state.data_offset(alpha);
    let coeff = -state.z12();
    let (gain, a) = procrustes_max(&coeff, alpha)?;
    let value = t_coeff * x2 - gs2 * offset + 2.0 * gs2 * gain;
    // The hedged value ignores the sign; report `Plus` canonically.
    Ok((value, Scenario::new(a, Sign::Plus)))
}

/// The critical-gain game value
/// `V_*(x, Z) = max over parameter pairs of max{hedged, committed}`,
/// together with the maximising witness. Ties prefer the hedged branch,
/// matching the empty-data case where both branches coincide at `x = 0`.
///
/// Requires a feasible gain; the closed form is the value at `γ = γ*`.
pub fn v_star(state: &GameState, params: &ProblemParams) -> Result<(f64, ValueWitness)> {
    if !params.feasible() {
        return Err(Error::InfeasibleGain {
            gamma: params.gamma(),
            gamma_star: params.gamma_star(),
        });
    }
    let gs2 = params.gamma_star() * params.gamma_star();
    let t_coeff = (gs2 + 1.0) / 2.0;
    let (hedged, hedged_scenario) = max_v0(state, t_coeff, params)?;
    let (committed, committed_scenario) = max_v1(state, params)?;
    if committed > hedged {
        Ok((
            committed,
            ValueWitness {
                scenario: committed_scenario,
                branch: Branch::Committed,
            },
        ))
    } else {
        Ok((
            hedged,
            ValueWitness {
                scenario: hedged_scenario,
                branch: Branch::Hedged,
            },
        ))
    }
}

/// Trace of the feasibility recursion `t_{k+1} = 1 + γ²α²/(γ² − t_k)`.
#[derive(Debug, Clone)]
pub struct TRecursion {
    /// `t_0, t_1, …` — stops early when the iteration escapes.
    pub values: Vec<f64>,
    /// Set when some `t_k ≥ γ²`, after which the recursion is meaningless.
    pub diverged: bool,
}

impl TRecursion {
    /// Largest recorded value.
    pub fn sup(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Runs the feasibility recursion from `t_0 = 0` for at most `steps` steps.
///
/// For `γ ≥ γ*` the sequence increases monotonically towards the smaller
/// root of `(γ² − t)(t − 1) = γ² α²`; for `γ < γ*` there is no real fixed
/// point and the sequence crosses `γ²` in finitely many steps, which is
/// recorded as divergence.
pub fn t_recursion(params: &ProblemParams, steps: usize) -> TRecursion {
    let g2 = params.gamma() * params.gamma();
    let a2 = params.alpha() * params.alpha();
    let mut values = Vec::with_capacity(steps.min(1 << 20) + 1);
    let mut t = 0.0;
    values.push(t);
    for _ in 0..steps {
        if t >= g2 {
            return TRecursion {
                values,
                diverged: true,
            };
        }
        t = 1.0 + g2 * a2 / (g2 - t);
        values.push(t);
        if t >= g2 {
            return TRecursion {
                values,
                diverged: true,
            };
        }
    }
    TRecursion {
        values,
        diverged: false,
    }
}

/// Adversary's optimal next state against a committed parameter pair.
///
/// Maximises `|v|² − γ² |pred − v|²` where `pred` is the scenario's
/// noise-free successor; requires `γ > 1`. Returns the maximiser
/// `v = pred · γ²/(γ² − 1)` and the optimum `|pred|²/(1 − γ⁻²)`.
pub fn adversary_response_branch1(
    pred: &DVector<f64>,
    params: &ProblemParams,
) -> Result<(DVector<f64>, f64)> {
    let g2 = params.gamma() * params.gamma();
    if g2 <= 1.0 {
        return Err(Error::UnboundedMaximisation {
            context: "adversary_response_branch1",
            reason: format!("needs γ > 1, got γ = {}", params.gamma()),
        });
    }
    let v = pred * (g2 / (g2 - 1.0));
    let value = pred.norm_squared() * g2 / (g2 - 1.0);
    Ok((v, value))
}

/// Adversary's optimal next state against the hedged value shape.
///
/// Maximises `t |v|² − γ² |a_x − v|²` where `a_x = A x`; requires
/// `0 < t < γ²`. Returns `v = a_x · γ²/(γ² − t)` and the optimum
/// `|a_x|² / (t⁻¹ − γ⁻²)`.
pub fn adversary_response_branch0(
    ax: &DVector<f64>,
    t_coeff: f64,
    params: &ProblemParams,
) -> Result<(DVector<f64>, f64)> {
    let g2 = params.gamma() * params.gamma();
    if !(t_coeff > 0.0) || t_coeff >= g2 {
        return Err(Error::UnboundedMaximisation {
            context: "adversary_response_branch0",
            reason: format!("needs 0 < t < γ² = {g2}, got t = {t_coeff}"),
        });
    }
    let v = ax * (g2 / (g2 - t_coeff));
    let value = ax.norm_squared() * t_coeff * g2 / (g2 - t_coeff);
    Ok((v, value))
}
