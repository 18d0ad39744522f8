//! Disturbance and parameter strategies played against the controller.
//!
//! The environment owns two choices the controller never sees directly: the
//! hidden scenario `(A, i)`, drawn once per episode, and the per-step
//! disturbance `w`. Four disturbance strategies are provided — a value-seeking
//! worst case, independent Gaussian noise, silence, and a constant push — all
//! driven by an explicit random stream so that episodes replay bit-for-bit.

use nalgebra::DVector;
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    adversary_response_branch0, adversary_response_branch1, v_star, DataTriple, GameState,
    ProblemParams, Scenario, Sign,
};
use crate::linalg::{haar_orthogonal, ScaledOrthogonal};
use crate::optim::{nelder_mead, NmOptions};

/// Evaluation budget for the worst-case polish, counted per disturbance.
const WORST_CASE_POLISH_EVALS: usize = 200;

/// Which disturbance strategy the environment plays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversaryKind {
    /// Seeks the continuation value: closed-form candidate responses refined
    /// by a short derivative-free polish.
    WorstCase,
    /// Independent `N(0, std²)` components.
    Gaussian { std: f64 },
    /// No disturbance.
    Zero,
    /// The same fixed vector every step.
    Constant { vector: Vec<f64> },
}

impl AdversaryKind {
    /// Checks the strategy's own invariants against the state dimension.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            AdversaryKind::Gaussian { std } => {
                if !(*std > 0.0) || !std.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "adversary.std",
                        reason: format!("gaussian std must be a positive finite real, got {std}"),
                    });
                }
            }
            AdversaryKind::Constant { vector } => {
                if vector.len() != n {
                    return Err(Error::DimensionMismatch {
                        context: "AdversaryKind::validate",
                        expected: format!("constant vector of length {n}"),
                        got: format!("length {}", vector.len()),
                    });
                }
                if vector.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "adversary.vector",
                        reason: "constant disturbance must be finite".to_string(),
                    });
                }
            }
            AdversaryKind::WorstCase | AdversaryKind::Zero => {}
        }
        Ok(())
    }
}

/// Draws the hidden episode scenario: `A = α·Haar`, sign a fair coin.
///
/// The pair stays fixed for the whole episode; the caller draws it once.
pub fn draw_scenario<R: Rng + ?Sized>(params: &ProblemParams, rng: &mut R) -> Scenario {
    let a = params.alpha() * haar_orthogonal(params.n(), rng);
    let a = ScaledOrthogonal::new(a, params.alpha())
        .expect("scaled Haar matrix lies on the manifold by construction");
    let sign = if rng.random_bool(0.5) {
        Sign::Plus
    } else {
        Sign::Minus
    };
    Scenario::new(a, sign)
}

/// Produces the next disturbance for the chosen strategy.
///
/// The adversary sees everything: the public information state, the realized
/// input, and its own hidden scenario. For `WorstCase` the step is scored by
/// the game value at the successor state; when the configured gain is below
/// the critical one (so no finite value exists) the critical-gain value
/// function is used as the score instead.
pub fn next_disturbance<R: Rng + ?Sized>(
    kind: &AdversaryKind,
    state: &GameState,
    u_realized: &DVector<f64>,
    scenario: &Scenario,
    params: &ProblemParams,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = state.n();
    match kind {
        AdversaryKind::Zero => Ok(DVector::zeros(n)),
        AdversaryKind::Constant { vector } => {
            if vector.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "next_disturbance",
                    expected: format!("constant vector of length {n}"),
                    got: format!("length {}", vector.len()),
                });
            }
            Ok(DVector::from_column_slice(vector))
        }
        AdversaryKind::Gaussian { std } => {
            if !(*std > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "adversary.std",
                    reason: format!("gaussian std must be positive, got {std}"),
                });
            }
            Ok(DVector::from_fn(n, |_, _| {
                *std * rng.sample::<f64, _>(StandardNormal)
            }))
        }
        AdversaryKind::WorstCase => worst_case_disturbance(state, u_realized, scenario, params),
    }
}

/// Value of landing the successor state at `v` given the current data.
fn successor_score(
    state: &GameState,
    u_realized: &DVector<f64>,
    v: &DVector<f64>,
    params: &ProblemParams,
) -> Result<f64> {
    let mut next = state.clone();
    next.observe(&DataTriple::new(
        v.clone(),
        state.x().clone(),
        u_realized.clone(),
    ));
    Ok(v_star(&next, params)?.0)
}

fn worst_case_disturbance(
    state: &GameState,
    u_realized: &DVector<f64>,
    scenario: &Scenario,
    params: &ProblemParams,
) -> Result<DVector<f64>> {
    // Score against the critical-gain value when the configured gain has no
    // finite game value.
    let scoring = if params.feasible() {
        params.clone()
    } else {
        ProblemParams::critical(params.n(), params.alpha())?
    };
    let ax = scenario.a().apply(state.x());
    let pred = scenario.predict(state.x(), u_realized);

    let (v1, _) = adversary_response_branch1(&pred, &scoring)?;
    let t_star = scoring.t_star().ok_or(Error::InfeasibleGain {
        gamma: scoring.gamma(),
        gamma_star: scoring.gamma_star(),
    })?;
    let (v0, _) = adversary_response_branch0(&ax, t_star, &scoring)?;

    let score1 = successor_score(state, u_realized, &v1, &scoring)?;
    let score0 = successor_score(state, u_realized, &v0, &scoring)?;
    let (mut best_v, best_score) = if score1 >= score0 {
        (v1, score1)
    } else {
        (v0, score0)
    };

    // Local polish around the better candidate; the simplex only ever
    // improves on its best vertex, so candidate dominance is preserved.
    let n = state.n();
    let opts = NmOptions {
        max_iter: WORST_CASE_POLISH_EVALS.saturating_sub(n + 1),
        ..NmOptions::default()
    };
    let step = 0.25 * (1.0 + best_v.norm());
    let polished = nelder_mead(
        |z| {
            let v = DVector::from_column_slice(z);
            match successor_score(state, u_realized, &v, &scoring) {
                Ok(score) => -score,
                Err(_) => f64::INFINITY,
            }
        },
        best_v.as_slice(),
        step,
        &opts,
    );
    if -polished.value > best_score {
        best_v = DVector::from_vec(polished.x);
    }
    Ok(best_v - pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn scenario_scalar_case_covers_all_four_outcomes() {
        let p = ProblemParams::critical(1, 0.7).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        let mut r = rng(2);
        for _ in 0..100 {
            let s = draw_scenario(&p, &mut r);
            let a = s.a().matrix()[(0, 0)];
            assert_relative_eq!(a.abs(), 0.7, max_relative = 1e-12);
            seen.insert((a > 0.0, s.sign() == Sign::Plus));
        }
        assert_eq!(seen.len(), 4, "all (±A, ±i) combinations should appear");
    }

    #[test]
    fn scenario_draws_are_deterministic_per_seed() {
        let p = ProblemParams::critical(3, 1.0).unwrap();
        let s1 = draw_scenario(&p, &mut rng(9));
        let s2 = draw_scenario(&p, &mut rng(9));
        assert_eq!(s1.a().matrix(), s2.a().matrix());
        assert_eq!(s1.sign(), s2.sign());
    }

    #[test]
    fn scenario_signs_balance_over_many_draws() {
        let p = ProblemParams::critical(10, 1.0).unwrap();
        let mut r = rng(5);
        let draws = 1_000usize;
        let mut plus = 0usize;
        for _ in 0..draws {
            if draw_scenario(&p, &mut r).sign() == Sign::Plus {
                plus += 1;
            }
        }
        let frac = plus as f64 / draws as f64;
        // Fair coin: 3·SE = 3·0.5/√draws.
        let bound = 3.0 * 0.5 / (draws as f64).sqrt();
        assert!(
            (frac - 0.5).abs() <= bound,
            "sign fraction {frac} outside 3·SE of 0.5"
        );
    }

    #[test]
    fn zero_adversary_returns_zero() {
        let p = ProblemParams::critical(2, 1.0).unwrap();
        let state = GameState::new(DVector::from_vec(vec![1.0, -2.0]));
        let scenario = draw_scenario(&p, &mut rng(1));
        let u = DVector::from_vec(vec![0.5, 0.5]);
        let w =
            next_disturbance(&AdversaryKind::Zero, &state, &u, &scenario, &p, &mut rng(0)).unwrap();
        assert_eq!(w.norm(), 0.0);
    }

    #[test]
    fn constant_adversary_returns_its_vector() {
        let p = ProblemParams::critical(2, 1.0).unwrap();
        let state = GameState::new(DVector::from_vec(vec![1.0, 0.0]));
        let scenario = draw_scenario(&p, &mut rng(1));
        let u = DVector::zeros(2);
        let kind = AdversaryKind::Constant {
            vector: vec![0.1, -0.2],
        };
        let w = next_disturbance(&kind, &state, &u, &scenario, &p, &mut rng(0)).unwrap();
        assert_eq!(w, DVector::from_vec(vec![0.1, -0.2]));
        // Dimension mismatch is refused rather than truncated.
        let bad = AdversaryKind::Constant {
            vector: vec![1.0, 2.0, 3.0],
        };
        assert!(next_disturbance(&bad, &state, &u, &scenario, &p, &mut rng(0)).is_err());
    }

    #[test]
    fn gaussian_adversary_matches_requested_std() {
        let p = ProblemParams::critical(1, 1.0).unwrap();
        let state = GameState::new(DVector::from_vec(vec![1.0]));
        let scenario = draw_scenario(&p, &mut rng(1));
        let u = DVector::zeros(1);
        let kind = AdversaryKind::Gaussian { std: 0.01 };
        let mut r = rng(11);
        let draws = 100_000usize;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let w = next_disturbance(&kind, &state, &u, &scenario, &p, &mut r).unwrap();
            sum_sq += w.norm_squared();
        }
        let std_hat = (sum_sq / draws as f64).sqrt();
        assert!(
            (std_hat - 0.01).abs() <= 0.0002,
            "empirical std {std_hat} off by more than 2%"
        );
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        assert!(AdversaryKind::Gaussian { std: 0.0 }.validate(1).is_err());
        assert!(AdversaryKind::Gaussian { std: -1.0 }.validate(1).is_err());
        assert!(AdversaryKind::Gaussian { std: 0.5 }.validate(1).is_ok());
        assert!(AdversaryKind::Constant { vector: vec![1.0] }
            .validate(2)
            .is_err());
        assert!(AdversaryKind::Constant {
            vector: vec![1.0, f64::NAN]
        }
        .validate(2)
        .is_err());
        assert!(AdversaryKind::WorstCase.validate(5).is_ok());
        assert!(AdversaryKind::Zero.validate(5).is_ok());
    }

    #[test]
    fn adversary_kind_round_trips_through_serde() {
        for kind in [
            AdversaryKind::WorstCase,
            AdversaryKind::Gaussian { std: 0.25 },
            AdversaryKind::Zero,
            AdversaryKind::Constant {
                vector: vec![1.0, -1.0],
            },
        ] {
            let text = serde_json::to_string(&kind).unwrap();
            let back: AdversaryKind = serde_json::from_str(&text).unwrap();
            assert_eq!(kind, back);
        }
        let parsed: AdversaryKind = serde_json::from_str(r#"{"kind":"worst_case"}"#).unwrap();
        assert_eq!(parsed, AdversaryKind::WorstCase);
        assert!(serde_json::from_str::<AdversaryKind>(r#"{"kind":"gaussian"}"#).is_err());
    }

    #[test]
    fn worst_case_dominates_both_closed_form_candidates() {
        let p = ProblemParams::critical(1, 1.0).unwrap();
        let state = GameState::new(DVector::from_vec(vec![1.0]));
        let scenario = draw_scenario(&p, &mut rng(21));
        let u = DVector::from_vec(vec![-0.4]);
        let w = next_disturbance(
            &AdversaryKind::WorstCase,
            &state,
            &u,
            &scenario,
            &p,
            &mut rng(0),
        )
        .unwrap();
        let pred = scenario.predict(state.x(), &u);
        let v_returned = &pred + &w;
        let returned_score = successor_score(&state, &u, &v_returned, &p).unwrap();

        let (v1, _) = adversary_response_branch1(&pred, &p).unwrap();
        let ax = scenario.a().apply(state.x());
        let (v0, _) = adversary_response_branch0(&ax, p.t_star().unwrap(), &p).unwrap();
        for candidate in [v1, v0] {
            let candidate_score = successor_score(&state, &u, &candidate, &p).unwrap();
            assert!(
                returned_score >= candidate_score - 1e-9,
                "returned score {returned_score} below candidate {candidate_score}"
            );
        }
    }

    #[test]
    fn worst_case_dominance_holds_on_data_rich_states() {
        let p = ProblemParams::critical(2, 1.0).unwrap();
        let mut r = rng(33);
        let scenario = draw_scenario(&p, &mut r);
        let mut state = GameState::new(DVector::from_vec(vec![1.0, -0.5]));
        // Walk a few noisy steps to accumulate data.
        for _ in 0..4 {
            let u = DVector::from_fn(2, |_, _| r.sample::<f64, _>(StandardNormal));
            let w = DVector::from_fn(2, |_, _| 0.1 * r.sample::<f64, _>(StandardNormal));
            let x_next = scenario.predict(state.x(), &u) + &w;
            state.observe(&DataTriple::new(x_next, state.x().clone(), u));
        }
        let u = DVector::from_vec(vec![0.3, 0.3]);
        let w = next_disturbance(
            &AdversaryKind::WorstCase,
            &state,
            &u,
            &scenario,
            &p,
            &mut rng(0),
        )
        .unwrap();
        let pred = scenario.predict(state.x(), &u);
        let v_returned = &pred + &w;
        let returned_score = successor_score(&state, &u, &v_returned, &p).unwrap();
        let (v1, _) = adversary_response_branch1(&pred, &p).unwrap();
        let ax = scenario.a().apply(state.x());
        let (v0, _) = adversary_response_branch0(&ax, p.t_star().unwrap(), &p).unwrap();
        for candidate in [v1, v0] {
            let candidate_score = successor_score(&state, &u, &candidate, &p).unwrap();
            assert!(returned_score >= candidate_score - 1e-9);
        }
    }

    #[test]
    fn worst_case_falls_back_to_critical_gain_when_infeasible() {
        let p = ProblemParams::with_gamma_factor(1, 1.0, 0.9).unwrap();
        assert!(!p.feasible());
        let state = GameState::new(DVector::from_vec(vec![1.0]));
        let scenario = draw_scenario(&p, &mut rng(3));
        let u = DVector::from_vec(vec![0.2]);
        let w = next_disturbance(
            &AdversaryKind::WorstCase,
            &state,
            &u,
            &scenario,
            &p,
            &mut rng(0),
        )
        .unwrap();
        assert!(w[0].is_finite());
    }

    #[test]
    fn worst_case_is_deterministic() {
        let p = ProblemParams::critical(2, 0.5).unwrap();
        let state = GameState::new(DVector::from_vec(vec![0.4, 1.1]));
        let scenario = draw_scenario(&p, &mut rng(7));
        let u = DVector::from_vec(vec![-0.1, 0.6]);
        let w1 = next_disturbance(
            &AdversaryKind::WorstCase,
            &state,
            &u,
            &scenario,
            &p,
            &mut rng(0),
        )
        .unwrap();
        let w2 = next_disturbance(
            &AdversaryKind::WorstCase,
            &state,
            &u,
            &scenario,
            &p,
            &mut rng(99),
        )
        .unwrap();
        assert_eq!(w1, w2, "worst case ignores the rng and replays exactly");
    }
}
