//! Minimax dual control for fully actuated linear systems.
//!
//! This crate implements the explicit solution of a minimax adaptive control
//! problem: the plant is `x_{t+1} = A x_t + B u_t + w_t` where the dynamics
//! matrix satisfies `A Aᵀ = α² I` with known magnitude `α` but unknown
//! orientation, the input matrix is `B = ±I` with unknown sign, and the
//! adversary picks both the hidden parameters and the disturbance sequence.
//! The controller pays `Σ (|x_t|² − γ² |w_t|²)`; the game has a finite value
//! exactly when `γ ≥ γ* = α + √(1 + α²)`, and at the critical gain the value
//! admits a closed form over an information state `(x, Z)` where `Z`
//! accumulates outer products of observed transition triples.
//!
//! Module map:
//!
//! * [`linalg`] — the small dense kernel: nuclear norm, maximisation of
//!   `⟨A, M⟩` over scaled-orthogonal `A`, Haar orthogonal sampling, unit
//!   sphere sampling.
//! * [`game`] — problem parameters, the information state, value functions,
//!   the scalar recursion that decides feasibility, and the adversary's
//!   closed-form stage responses.
//! * [`controller`] — the optimal policy: functional extraction from data,
//!   scenario selection, the exploration/exploitation decision rule, input
//!   sampling, a derivative-free numerical policy, and parameter estimation.
//! * [`adversary`] — disturbance generators, from benign noise to the
//!   value-guided worst case.
//! * [`optim`] — a dependency-free Nelder–Mead simplex minimiser used by the
//!   numerical policy, the verifier and the worst-case adversary.
//! * [`verify`] — numerical checks for the identities behind the policy:
//!   the static min-max identity, the Bellman fixed point, value-iteration
//!   monotonicity, the feasibility threshold and policy cross-validation.
//! * [`sim`] — experiment configuration and drivers: episodes, the
//!   two-chain synchronisation example and the gain-bound audit.
//! * [`output`] — deterministic CSV/SVG/JSON writers for experiment outputs.

// Validations use `!(v > 0.0)` so that NaN fails them; `partial_cmp` would
// obscure that intent.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod controller;
pub mod error;
pub mod game;
pub mod linalg;
pub mod optim;
pub mod output;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
