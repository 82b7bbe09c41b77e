//! Exact computational toolkit for logarithmic differential modules on
//! p-adic polyannuli.
//!
//! Everything runs in exact rational arithmetic: coefficients are
//! arbitrary-precision rationals, and a nonarchimedean norm value p^(-e)
//! is represented by its rational exponent e alone, so every norm
//! inequality in the library is decided exactly rather than in floating
//! point.
//!
//! Modules:
//! - [`padic`]: p-adic valuations and exponent-scale norm values.
//! - [`series`]: truncated multivariate Laurent/power series with exact
//!   Gauss norms at p-power radii, derivations, and tail-decay bounds.
//! - [`linalg`]: dense exact matrices, kernels, nilpotency tests.
//! - [`connection`]: log-connections on polyannuli, residues, the
//!   canonical gauge recursion, convergence radius bounds, and Taylor
//!   transport.
//! - [`unipotence`]: binomial operator polynomials, limit-operator
//!   extraction of horizontal sections, unipotent filtrations.
//! - [`tate`]: weighted Tate algebra elements, leading terms under a
//!   last-variable-dominant order, and norm-controlled division.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod connection;
pub mod linalg;
pub mod padic;
pub mod series;
pub mod tate;
pub mod unipotence;

pub use connection::{
    build_unipotent, canonical_gauge_1var, convergence_radius_bound, eta_convergence_check,
    iterated_gauge, taylor_cocycle_check, taylor_transport, GaugeTransform, LogConnection,
    MonodromyData, ResidueMatrix,
};
pub use linalg::Matrix;
pub use padic::{Exp, NormExp, Prime, Rat, Valuation};
pub use series::{corner_maximum, gauss_norm, tail_decay_witness, RadiusTuple, TruncatedSeries, Window};
pub use tate::{norm_controlled_reduce, polydisc_hadamard_check, stability_threshold, IdealBasis, TateElement};
pub use unipotence::{
    binomial_decompose, dl_closed_form, dl_operator, horizontal_limit, q_difference_support,
    q_poly, unipotent_filtration, FiltrationResult, IntegerValuedPoly, LimitStrategy,
};
