//! Solver for second order linear ODEs `y'' + q(t) y = 0` whose coefficient has
//! turning points, built around slowly varying phase functions.
//!
//! A phase function `α` represents a basis of solutions as
//! `u = cos(α)/√α'`, `v = sin(α)/√α'`. Because `α` varies slowly even when the
//! solutions oscillate rapidly, it can be represented by compact piecewise
//! Chebyshev expansions and the cost of constructing it is essentially
//! independent of the frequency. Turning points are handled by solving the
//! third order linear equation satisfied by `w = 1/α'` instead of the
//! nonlinear equation satisfied by `α'` itself, which keeps full relative
//! accuracy deep into the nonoscillatory regime.
//!
//! Module map:
//!
//! * [`cheb`] — piecewise Chebyshev expansions: transforms, evaluation,
//!   spectral differentiation and integration, tail-ratio error estimator.
//! * [`odesolve`] — adaptive two-phase Chebyshev collocation solver for
//!   first order systems `y' = F(t, y)`.
//! * [`phase`] — windowing, phase construction across turning points,
//!   basis evaluation, connection coefficients, multi-interval gluing.
//! * [`specfun`] — coefficient families for the test equations, a gamma
//!   function, an Airy series oracle, and condition-number estimates.
//! * [`bench`] — experiment harness, reference solves, serialization.

pub mod bench;
pub mod cheb;
pub mod odesolve;
pub mod phase;
pub mod specfun;

pub use cheb::{ChebGrid, PiecewiseExpansion};
pub use odesolve::{AdaptiveConfig, PiecewiseSolution, SystemSpec};
