//! Construction and evaluation of slowly varying phase functions for
//! `y'' + q(t) y = 0` across turning points.
//!
//! A phase function `α` with `α' > 0` generates the solution basis
//! `u = cos(α)/√α'`, `v = sin(α)/√α'`. Its derivative satisfies the third
//! order nonlinear equation
//!
//! ```text
//! q - (α')² + (3/4)(α''/α')² - α'''/(2α') = 0,
//! ```
//!
//! while the reciprocal `w = 1/α'` satisfies the third order *linear*
//! equation `w''' + 4 q w' + 2 q' w = 0`. Solving the linear equation is what
//! preserves relative accuracy of `α'` in the nonoscillatory regime, where it
//! decays below anything a direct solve of the nonlinear equation can see.
//!
//! Construction proceeds in two steps. A "windowing" solve on an interval
//! where `q > 0` blends the coefficient into a constant, integrates the
//! nonlinear equation back from the flat end, and reads off `α'` and `α''` of
//! a slowly varying phase at the window's edge. Those two numbers determine
//! initial values for `w`, and the adaptive solver then carries `w` across
//! the whole interval, truncating where it exceeds the blow-up cap. Odd-order
//! turning points admit one global phase; even-order ones get independent
//! left and right phases glued by connection coefficients.

use crate::cheb::{ChebError, ChebGrid, PiecewiseExpansion};
use crate::odesolve::{
    solve_adaptive, AdaptiveConfig, LinearSamples, LinearSystem, NonlinearSystem,
    PiecewiseSolution, SolveError, SystemSpec,
};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

/// How the derivative of the coefficient is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    /// `q'` is evaluated by a user-supplied routine.
    Supplied,
    /// `q'` is computed by expanding `q` on each interval the solver
    /// considers and differentiating the expansion.
    Spectral,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Evaluator for the coefficient `q(t)` and, optionally, `q'(t)`.
#[derive(Clone)]
pub struct CoefficientSpec {
    q: ScalarFn,
    dq: Option<ScalarFn>,
    mode: DerivativeMode,
}

impl CoefficientSpec {
    /// Coefficient with an analytic derivative.
    pub fn with_derivative(
        q: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dq: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            q: Arc::new(q),
            dq: Some(Arc::new(dq)),
            mode: DerivativeMode::Supplied,
        }
    }

    /// Coefficient whose derivative is obtained spectrally.
    pub fn spectral(q: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            q: Arc::new(q),
            dq: None,
            mode: DerivativeMode::Spectral,
        }
    }

    /// Same coefficient, different derivative mode. Asking for supplied mode
    /// without a derivative falls back to spectral.
    pub fn with_mode(&self, mode: DerivativeMode) -> Self {
        let mut s = self.clone();
        s.mode = if mode == DerivativeMode::Supplied && s.dq.is_none() {
            DerivativeMode::Spectral
        } else {
            mode
        };
        s
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn q(&self, t: f64) -> f64 {
        (self.q)(t)
    }

    /// Supplied derivative, if the spec carries one.
    pub fn dq_supplied(&self, t: f64) -> Option<f64> {
        self.dq.as_ref().map(|f| f(t))
    }
}

/// Reduce `y'' + p y' + q y = 0` to normal form: the returned closure is
/// `q̃ = q - p'/2 - p²/4`, the coefficient of the transformed equation
/// `ỹ'' + q̃ ỹ = 0`. The phase function is invariant under this reduction,
/// so a basis for the original equation is recovered by multiplying the
/// normal-form basis by `exp(-∫p/2)`.
pub fn normal_form(
    q: impl Fn(f64) -> f64 + Send + Sync + 'static,
    p: impl Fn(f64) -> f64 + Send + Sync + 'static,
    dp: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
    move |t| q(t) - 0.5 * dp(t) - 0.25 * p(t) * p(t)
}

/// Sign of the leading coefficient `C` in `q(t) ~ C (t - c)^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeadingSign {
    Positive,
    Negative,
}

/// A turning point: location, vanishing order of `q`, and leading sign.
#[derive(Debug, Clone, Copy)]
pub struct TurningPointSpec {
    pub location: f64,
    pub order: u32,
    pub sign: LeadingSign,
}

/// Values of `α'` and `α''` produced by the windowing procedure.
#[derive(Debug, Clone, Copy)]
pub struct WindowValues {
    pub alpha_p: f64,
    pub alpha_pp: f64,
}

/// Accuracy knobs for phase construction.
#[derive(Debug, Clone)]
pub struct PhaseConfig {
    pub eps: f64,
    pub order: usize,
    pub max_intervals: usize,
    pub blowup_cap: f64,
    /// Windowing interval override; chosen automatically when absent.
    pub window: Option<(f64, f64)>,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            eps: 1e-12,
            order: 16,
            max_intervals: 200_000,
            blowup_cap: 1e300,
            window: None,
        }
    }
}

impl PhaseConfig {
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps,
            ..Self::default()
        }
    }

    fn solver(&self) -> AdaptiveConfig {
        AdaptiveConfig {
            eps: self.eps,
            order: self.order,
            max_intervals: self.max_intervals,
            blowup_cap: self.blowup_cap,
            min_width: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum PhaseError {
    #[error("invalid window interval [{lo}, {hi}]: {reason}")]
    InvalidWindow { lo: f64, hi: f64, reason: String },
    #[error("no oscillatory window region found in [{lo}, {hi}]")]
    NoWindow { lo: f64, hi: f64 },
    #[error("invalid turning point: {0}")]
    InvalidTurningPoint(String),
    #[error("phase slope must be positive, got {0}")]
    NonpositiveSlope(f64),
    #[error("phase functions do not share the junction point")]
    DomainMismatch,
    #[error("fit system is singular or ill-conditioned (estimate {0:.3e})")]
    IllConditioned(f64),
    #[error("junction {0} lies outside the achieved domain of a neighbouring phase")]
    JunctionCoverage(f64),
    #[error("conditions must lie in a single subinterval of the glued basis")]
    ConditionPlacement,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Cheb(#[from] ChebError),
}

// First order form of the phase-derivative equation for y = (α', α''):
// y0' = y1,  y1' = 2 y0 q - 2 y0³ + (3/2) y1²/y0.
fn phase_derivative_system(q: ScalarFn) -> NonlinearSystem {
    let qj = q.clone();
    NonlinearSystem::new(
        2,
        move |t, y| {
            let p = y[0];
            if p <= 0.0 {
                return vec![f64::NAN, f64::NAN];
            }
            vec![
                y[1],
                2.0 * p * q(t) - 2.0 * p * p * p + 1.5 * y[1] * y[1] / p,
            ]
        },
        move |t, y| {
            let (p, s) = (y[0], y[1]);
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    0.0,
                    1.0,
                    2.0 * qj(t) - 6.0 * p * p - 1.5 * s * s / (p * p),
                    3.0 * s / p,
                ],
            )
        },
    )
}

fn window_blend(q: ScalarFn, a0: f64, b0: f64, mirrored: bool) -> Result<ScalarFn, PhaseError> {
    let mid = 0.5 * (a0 + b0);
    let qm = q(mid);
    if !(qm > 0.0) {
        return Err(PhaseError::InvalidWindow {
            lo: a0,
            hi: b0,
            reason: format!("q at the midpoint is {qm}, need a positive value"),
        });
    }
    let nu2 = qm;
    let rate = 12.0 / (b0 - a0);
    Ok(Arc::new(move |t: f64| {
        let x = rate * (t - mid);
        let phi = 0.5 * (1.0 + libm::erf(if mirrored { -x } else { x }));
        phi * nu2 + (1.0 - phi) * q(t)
    }))
}

fn window_values_impl(
    spec: &CoefficientSpec,
    a0: f64,
    b0: f64,
    config: &PhaseConfig,
    mirrored: bool,
) -> Result<WindowValues, PhaseError> {
    if !(a0 < b0) {
        return Err(PhaseError::InvalidWindow {
            lo: a0,
            hi: b0,
            reason: "empty interval".into(),
        });
    }
    let nu = spec.q(0.5 * (a0 + b0)).sqrt();
    let qt = window_blend(spec.q.clone(), a0, b0, mirrored)?;
    let sys = SystemSpec::Nonlinear(phase_derivative_system(qt));
    // the blended coefficient is flat at the launch end, so (nu, 0) is the
    // exact slowly varying phase there
    let t0 = if mirrored { a0 } else { b0 };
    let out = if mirrored { b0 } else { a0 };
    let sol = solve_adaptive(&sys, a0, b0, t0, &[nu, 0.0], &config.solver())?;
    let alpha_p = sol.eval(0, out)?;
    let alpha_pp = sol.eval(1, out)?;
    if !(alpha_p > 0.0) || !alpha_p.is_finite() || !alpha_pp.is_finite() {
        return Err(PhaseError::NonpositiveSlope(alpha_p));
    }
    Ok(WindowValues { alpha_p, alpha_pp })
}

/// Windowing on `[a0, b0]`: blend `q` into the constant `q((a0+b0)/2)` on the
/// right part of the interval, integrate the phase-derivative equation back
/// from `b0`, and return `α'(a0)`, `α''(a0)` of a slowly varying phase for
/// the original coefficient. Requires `q ≥ 0` on the interval.
pub fn window_values(
    spec: &CoefficientSpec,
    a0: f64,
    b0: f64,
    config: &PhaseConfig,
) -> Result<WindowValues, PhaseError> {
    window_values_impl(spec, a0, b0, config, false)
}

/// Mirrored windowing: flat near `a0`, returns values at `b0` instead.
pub fn window_values_at_right(
    spec: &CoefficientSpec,
    a0: f64,
    b0: f64,
    config: &PhaseConfig,
) -> Result<WindowValues, PhaseError> {
    window_values_impl(spec, a0, b0, config, true)
}

/// `α'''` from the phase-derivative equation, given `q`, `α'` and `α''` at a
/// point: `α''' = 2 α' q - 2 (α')³ + (3/2) (α'')²/α'`.
pub fn kummer_alpha_ppp(q_c: f64, alpha_p: f64, alpha_pp: f64) -> Result<f64, PhaseError> {
    if !(alpha_p > 0.0) {
        return Err(PhaseError::NonpositiveSlope(alpha_p));
    }
    Ok(2.0 * alpha_p * q_c - 2.0 * alpha_p.powi(3) + 1.5 * alpha_pp * alpha_pp / alpha_p)
}

/// Initial values of `w = 1/α'` and its first two derivatives from the phase
/// derivatives at a point.
pub fn appell_initial_values(
    alpha_p: f64,
    alpha_pp: f64,
    alpha_ppp: f64,
) -> Result<(f64, f64, f64), PhaseError> {
    if !(alpha_p > 0.0) {
        return Err(PhaseError::NonpositiveSlope(alpha_p));
    }
    let w = 1.0 / alpha_p;
    let wp = -alpha_pp / (alpha_p * alpha_p);
    let wpp = 2.0 * alpha_pp * alpha_pp / alpha_p.powi(3) - alpha_ppp / (alpha_p * alpha_p);
    Ok((w, wp, wpp))
}

// Linear 3-system for (w, w', w''): w''' = -4 q w' - 2 q' w. In spectral mode
// q' comes from differentiating an expansion of q on the interval at hand.
fn appell_system(spec: &CoefficientSpec, order: usize) -> Result<LinearSystem, PhaseError> {
    let q = spec.q.clone();
    let grid = Arc::new(ChebGrid::new(order)?);
    let dq: Option<ScalarFn> = match spec.mode {
        DerivativeMode::Supplied => Some(spec.dq.clone().ok_or_else(|| {
            PhaseError::InvalidTurningPoint("supplied derivative mode without q'".into())
        })?),
        DerivativeMode::Spectral => None,
    };
    Ok(LinearSystem::new_sampled(3, move |ts| {
        let qv: Vec<f64> = ts.iter().map(|&t| q(t)).collect();
        let dqv: Vec<f64> = match &dq {
            Some(f) => ts.iter().map(|&t| f(t)).collect(),
            None => {
                let half = 0.5 * (ts[ts.len() - 1] - ts[0]);
                let c = grid.vals_to_coeffs(&qv);
                let d = crate::cheb::deriv_row(&c, half);
                grid.coeffs_to_vals(&d)
            }
        };
        let mats = qv
            .iter()
            .zip(&dqv)
            .map(|(&qi, &dqi)| {
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -2.0 * dqi, -4.0 * qi, 0.0],
                )
            })
            .collect();
        let rhs = ts.iter().map(|_| nalgebra::DVector::zeros(3)).collect();
        LinearSamples { mats, rhs }
    }))
}

/// Solve `w''' + 4 q w' + 2 q' w = 0` over `[a, b]` from values of
/// `(w, w', w'')` at `c`, with blow-up truncation active.
pub fn solve_appell(
    spec: &CoefficientSpec,
    a: f64,
    b: f64,
    c: f64,
    ivals: (f64, f64, f64),
    config: &PhaseConfig,
) -> Result<PiecewiseSolution, PhaseError> {
    let sys = SystemSpec::Linear(appell_system(spec, config.order)?);
    Ok(solve_adaptive(
        &sys,
        a,
        b,
        c,
        &[ivals.0, ivals.1, ivals.2],
        &config.solver(),
    )?)
}

/// A phase function: `α`, `α'`, `α''` as piecewise expansions with
/// `α' > 0` on the achieved domain.
#[derive(Debug, Clone)]
pub struct PhaseFunction {
    pub alpha: PiecewiseExpansion,
    pub alpha_p: PiecewiseExpansion,
    pub alpha_pp: PiecewiseExpansion,
    truncated_left: bool,
    truncated_right: bool,
}

impl PhaseFunction {
    /// Assemble a phase function from compatible expansions. `α'` must be
    /// positive at the breakpoints and interval midpoints.
    pub fn from_expansions(
        alpha: PiecewiseExpansion,
        alpha_p: PiecewiseExpansion,
        alpha_pp: PiecewiseExpansion,
    ) -> Result<Self, PhaseError> {
        if alpha.domain() != alpha_p.domain() || alpha_p.domain() != alpha_pp.domain() {
            return Err(PhaseError::DomainMismatch);
        }
        let bp = alpha_p.breakpoints();
        for w in bp.windows(2) {
            for t in [w[0], 0.5 * (w[0] + w[1])] {
                let v = alpha_p.eval(t)?;
                if !(v > 0.0) {
                    return Err(PhaseError::NonpositiveSlope(v));
                }
            }
        }
        Ok(Self {
            alpha,
            alpha_p,
            alpha_pp,
            truncated_left: false,
            truncated_right: false,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        self.alpha_p.domain()
    }

    pub fn truncated_left(&self) -> bool {
        self.truncated_left
    }

    pub fn truncated_right(&self) -> bool {
        self.truncated_right
    }

    /// `(α, α', α'')` at `t`.
    pub fn eval3(&self, t: f64) -> Result<(f64, f64, f64), ChebError> {
        Ok((
            self.alpha.eval(t)?,
            self.alpha_p.eval(t)?,
            self.alpha_pp.eval(t)?,
        ))
    }

    fn reflect(&self, center: f64) -> PhaseFunction {
        PhaseFunction {
            alpha: self.alpha.reflect(center, true),
            alpha_p: self.alpha_p.reflect(center, false),
            alpha_pp: self.alpha_pp.reflect(center, true),
            truncated_left: self.truncated_right,
            truncated_right: self.truncated_left,
        }
    }
}

/// Convert an Appell solution `(w, w', w'')` into a phase function with
/// `α(anchor) = 0`: `α' = 1/w` and `α'' = -w'/w²` are re-expanded on the
/// accepted intervals and `α` is produced by spectral integration.
pub fn phase_from_appell(
    sol: &PiecewiseSolution,
    anchor: f64,
    order: usize,
) -> Result<PhaseFunction, PhaseError> {
    let grid = ChebGrid::new(order)?;
    let w = sol.component(0);
    let wp = sol.component(1);
    let bp = w.breakpoints().to_vec();
    let mut p_rows = Vec::with_capacity(w.num_intervals() * (order + 1));
    let mut pp_rows = Vec::with_capacity(w.num_intervals() * (order + 1));
    for i in 0..w.num_intervals() {
        let wv = grid.coeffs_to_vals(w.row(i));
        let wpv = grid.coeffs_to_vals(wp.row(i));
        let mut ap = Vec::with_capacity(order + 1);
        let mut app = Vec::with_capacity(order + 1);
        for (wi, wpi) in wv.iter().zip(&wpv) {
            if !(*wi > 0.0) {
                return Err(PhaseError::NonpositiveSlope(1.0 / wi));
            }
            ap.push(1.0 / wi);
            // (wp/w)/w rather than wp/w² so magnitudes near 1e300 cannot
            // overflow in the intermediate
            app.push(-(wpi / wi) / wi);
        }
        p_rows.extend(grid.vals_to_coeffs(&ap));
        pp_rows.extend(grid.vals_to_coeffs(&app));
    }
    let alpha_p = PiecewiseExpansion::new(order, bp.clone(), p_rows)?;
    let alpha_pp = PiecewiseExpansion::new(order, bp, pp_rows)?;
    let alpha = alpha_p.integrate(anchor, 0.0)?;
    Ok(PhaseFunction {
        alpha,
        alpha_p,
        alpha_pp,
        truncated_left: sol.truncated_left(),
        truncated_right: sol.truncated_right(),
    })
}

/// A solution basis built from phase functions: a single phase for odd-order
/// turning points, or a left/right pair glued by connection coefficients for
/// even-order ones.
#[derive(Debug, Clone)]
pub enum PhaseBasis {
    Single(PhaseFunction),
    Split {
        left: PhaseFunction,
        right: PhaseFunction,
        junction: f64,
        c11: f64,
        c12: f64,
        c21: f64,
        c22: f64,
    },
}

impl PhaseBasis {
    pub fn domain(&self) -> (f64, f64) {
        match self {
            PhaseBasis::Single(p) => p.domain(),
            PhaseBasis::Split { left, right, .. } => (left.domain().0, right.domain().1),
        }
    }
}

/// Values of the basis pair and their derivatives at a point.
#[derive(Debug, Clone, Copy)]
pub struct BasisValues {
    pub u: f64,
    pub v: f64,
    pub up: f64,
    pub vp: f64,
}

fn raw_basis_values(pf: &PhaseFunction, t: f64) -> Result<BasisValues, ChebError> {
    let (a, ap, app) = pf.eval3(t)?;
    let sq = ap.sqrt();
    let (sin, cos) = a.sin_cos();
    let u = cos / sq;
    let v = sin / sq;
    // u' = -√α' sin - (α''/2α') u, arranged so (α')^(-3/2) never forms
    let r = 0.5 * app / ap;
    Ok(BasisValues {
        u,
        v,
        up: -sq * sin - r * u,
        vp: sq * cos - r * v,
    })
}

/// Evaluate the basis `(u, v, u', v')` at `t`.
pub fn basis_eval(basis: &PhaseBasis, t: f64) -> Result<BasisValues, ChebError> {
    match basis {
        PhaseBasis::Single(p) => raw_basis_values(p, t),
        PhaseBasis::Split {
            left,
            right,
            junction,
            c11,
            c12,
            c21,
            c22,
        } => {
            if t <= *junction {
                raw_basis_values(left, t)
            } else {
                let b = raw_basis_values(right, t)?;
                Ok(BasisValues {
                    u: c11 * b.u + c12 * b.v,
                    v: c21 * b.u + c22 * b.v,
                    up: c11 * b.up + c12 * b.vp,
                    vp: c21 * b.up + c22 * b.vp,
                })
            }
        }
    }
}

/// Connection coefficients gluing a left and right phase that share a
/// junction point, chosen so the glued `u` is continuously differentiable.
///
/// `c11 = c22 = sqrt(α'_R/α'_L)` and `c21 = 0` make `u` and `v` continuous;
/// matching the one-sided derivatives of `u` forces
/// `c12 = (α'_L α''_R - α'_R α''_L) / (2 (α'_L α'_R)^{3/2})`.
pub fn connection_coeffs(
    left: &PhaseFunction,
    right: &PhaseFunction,
) -> Result<(f64, f64, f64, f64), PhaseError> {
    let c = left.domain().1;
    if right.domain().0 != c {
        return Err(PhaseError::DomainMismatch);
    }
    let (_, pl, sl) = left.eval3(c)?;
    let (_, pr, sr) = right.eval3(c)?;
    if !(pl > 0.0) || !(pr > 0.0) {
        return Err(PhaseError::NonpositiveSlope(pl.min(pr)));
    }
    let c11 = (pr / pl).sqrt();
    let c12 = (pl * sr - pr * sl) / (2.0 * (pl * pr).powf(1.5));
    Ok((c11, c12, 0.0, c11))
}

fn sample_scale(spec: &CoefficientSpec, a: f64, b: f64) -> f64 {
    (0..=200)
        .map(|k| spec.q(a + (b - a) * k as f64 / 200.0).abs())
        .fold(0.0f64, f64::max)
}

fn classify_check(
    spec: &CoefficientSpec,
    a: f64,
    b: f64,
    tp: &TurningPointSpec,
) -> Result<(), PhaseError> {
    let c = tp.location;
    if !(a < c && c < b) {
        return Err(PhaseError::InvalidTurningPoint(format!(
            "location {c} outside ({a}, {b})"
        )));
    }
    if tp.order == 0 {
        return Err(PhaseError::InvalidTurningPoint("order must be >= 1".into()));
    }
    let scale = sample_scale(spec, a, b);
    if !(spec.q(c).abs() <= 1e-8 * scale) {
        return Err(PhaseError::InvalidTurningPoint(format!(
            "q({c}) = {:.3e} is not small against the sampled scale {scale:.3e}",
            spec.q(c)
        )));
    }
    let h = 1e-3 * (b - a);
    let (ql, qr) = (spec.q(c - h), spec.q(c + h));
    let even = tp.order % 2 == 0;
    let ok = match (even, tp.sign) {
        (false, LeadingSign::Positive) => ql < 0.0 && qr > 0.0,
        (false, LeadingSign::Negative) => ql > 0.0 && qr < 0.0,
        (true, LeadingSign::Positive) => ql > 0.0 && qr > 0.0,
        (true, LeadingSign::Negative) => {
            return Err(PhaseError::InvalidTurningPoint(
                "even order with negative leading sign: solutions do not oscillate".into(),
            ))
        }
    };
    if !ok {
        return Err(PhaseError::InvalidTurningPoint(format!(
            "sign pattern q({:.6}) = {ql:.3e}, q({:.6}) = {qr:.3e} does not match order {} with {:?} leading sign",
            c - h,
            c + h,
            tp.order,
            tp.sign
        )));
    }
    Ok(())
}

// Window anchored at `edge` growing toward `inner`, with width grown from a
// quarter of the span by doubling until q at the window midpoint clears a
// positivity floor and the blend transition is adiabatic. The branch error of
// the windowed solve behaves like exp(-(ω σ/2)²) with ω the oscillation
// frequency at the blend centre and σ = W/12 its width, so W keeps doubling
// until ω σ is comfortable or the window fills the available span.
fn sized_window(spec: &CoefficientSpec, edge: f64, inner: f64) -> Result<(f64, f64), PhaseError> {
    let span = (inner - edge).abs();
    let (lo, hi) = (edge.min(inner), edge.max(inner));
    let floor = 1e-8 * sample_scale(spec, lo, hi);
    let dir = (inner - edge).signum();
    let mut w = 0.25 * span;
    loop {
        let qm = spec.q(edge + dir * 0.5 * w);
        if qm > floor {
            let adiabatic = qm.sqrt() * w / 6.0;
            if adiabatic >= 12.0 || w >= span {
                let other = edge + dir * w;
                return Ok((edge.min(other), edge.max(other)));
            }
        } else if w >= span {
            return Err(PhaseError::NoWindow { lo, hi });
        }
        w = (2.0 * w).min(span);
    }
}

#[allow(clippy::too_many_arguments)]
fn build_phase_at(
    spec: &CoefficientSpec,
    a: f64,
    b: f64,
    window: (f64, f64),
    launch: f64,
    anchor: f64,
    config: &PhaseConfig,
    window_at_right: bool,
) -> Result<PhaseFunction, PhaseError> {
    let wv = if window_at_right {
        window_values_at_right(spec, window.0, window.1, config)?
    } else {
        window_values(spec, window.0, window.1, config)?
    };
    let appp = kummer_alpha_ppp(spec.q(launch), wv.alpha_p, wv.alpha_pp)?;
    let ivals = appell_initial_values(wv.alpha_p, wv.alpha_pp, appp)?;
    let sol = solve_appell(spec, a, b, launch, ivals, config)?;
    phase_from_appell(&sol, anchor, config.order)
}

/// Construct the phase basis for a coefficient with a single turning point on
/// `(a, b)`.
///
/// Odd order with positive leading sign: windowing on `[c, c + W]` yields
/// `α'(c)`, `α''(c)`; the Appell solve carries `w = 1/α'` over `[a, b]` with
/// truncation where it exceeds the cap, and `α` is anchored to zero at `c`.
/// Odd order with negative leading sign is handled by reflecting the problem
/// about `c`. Even order with positive leading sign builds independent left
/// and right phases (windowing over each full side) glued by connection
/// coefficients. Even order with negative sign is rejected.
pub fn build_phase(
    spec: &CoefficientSpec,
    a: f64,
    b: f64,
    tp: &TurningPointSpec,
    config: &PhaseConfig,
) -> Result<PhaseBasis, PhaseError> {
    classify_check(spec, a, b, tp)?;
    let c = tp.location;
    let even = tp.order % 2 == 0;
    match (even, tp.sign) {
        (false, LeadingSign::Positive) => {
            let window = match config.window {
                Some(w) => w,
                None => sized_window(spec, c, b)?,
            };
            let pf = build_phase_at(spec, a, b, window, window.0, c, config, false)?;
            Ok(PhaseBasis::Single(pf))
        }
        (false, LeadingSign::Negative) => {
            // reflect about c, build the positive-sign problem, reflect back
            let q = spec.q.clone();
            let refl = CoefficientSpec {
                q: Arc::new(move |s| q(2.0 * c - s)),
                dq: spec.dq.clone().map(|dq| {
                    let f: ScalarFn = Arc::new(move |s: f64| -dq(2.0 * c - s));
                    f
                }),
                mode: spec.mode,
            };
            let rtp = TurningPointSpec {
                location: c,
                order: tp.order,
                sign: LeadingSign::Positive,
            };
            let mut rcfg = config.clone();
            rcfg.window = config.window.map(|(lo, hi)| (2.0 * c - hi, 2.0 * c - lo));
            match build_phase(&refl, 2.0 * c - b, 2.0 * c - a, &rtp, &rcfg)? {
                PhaseBasis::Single(pf) => Ok(PhaseBasis::Single(pf.reflect(c))),
                PhaseBasis::Split { .. } => unreachable!("odd order builds a single phase"),
            }
        }
        (true, LeadingSign::Positive) => {
            // windowing runs at the outer end of each side and the phases are
            // launched from there; the two constructions mirror each other, so
            // for a symmetric coefficient the phases meet at c with equal
            // slopes
            let wl = sized_window(spec, a, c)?;
            let wr = sized_window(spec, b, c)?;
            let left = build_phase_at(spec, a, c, wl, a, c, config, false)?;
            let right = build_phase_at(spec, c, b, wr, b, c, config, true)?;
            let (c11, c12, c21, c22) = connection_coeffs(&left, &right)?;
            Ok(PhaseBasis::Split {
                left,
                right,
                junction: c,
                c11,
                c12,
                c21,
                c22,
            })
        }
        (true, LeadingSign::Negative) => Err(PhaseError::InvalidTurningPoint(
            "even order with negative leading sign: solutions do not oscillate".into(),
        )),
    }
}

/// A boundary condition `a·y(point) + b·y'(point) = rhs`.
#[derive(Debug, Clone, Copy)]
pub struct Condition {
    pub point: f64,
    pub coef_y: f64,
    pub coef_dy: f64,
    pub rhs: f64,
}

impl Condition {
    pub fn value(point: f64, rhs: f64) -> Self {
        Self {
            point,
            coef_y: 1.0,
            coef_dy: 0.0,
            rhs,
        }
    }

    pub fn derivative(point: f64, rhs: f64) -> Self {
        Self {
            point,
            coef_y: 0.0,
            coef_dy: 1.0,
            rhs,
        }
    }
}

fn solve_2x2(m: [[f64; 2]; 2], r: [f64; 2]) -> Result<(f64, f64), PhaseError> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let frob2 = m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1];
    let cond = frob2 / det.abs();
    if det == 0.0 || !cond.is_finite() || cond > 1e12 {
        return Err(PhaseError::IllConditioned(cond));
    }
    Ok((
        (r[0] * m[1][1] - r[1] * m[0][1]) / det,
        (r[1] * m[0][0] - r[0] * m[1][0]) / det,
    ))
}

/// Coefficients `(d1, d2)` such that `y = d1 u + d2 v` satisfies the two
/// conditions. Fails when the 2x2 system is singular or its condition
/// estimate exceeds `1e12`.
pub fn fit_solution(
    basis: &PhaseBasis,
    cond1: &Condition,
    cond2: &Condition,
) -> Result<(f64, f64), PhaseError> {
    let mut m = [[0.0; 2]; 2];
    let mut r = [0.0; 2];
    for (row, cond) in [cond1, cond2].into_iter().enumerate() {
        let b = basis_eval(basis, cond.point)?;
        m[row][0] = cond.coef_y * b.u + cond.coef_dy * b.up;
        m[row][1] = cond.coef_y * b.v + cond.coef_dy * b.vp;
        r[row] = cond.rhs;
    }
    solve_2x2(m, r)
}

/// A sequence of phase bases covering adjacent subintervals, glued at the
/// junction points by 2x2 transfer matrices that match `y` and `y'`.
#[derive(Debug, Clone)]
pub struct MultiPhaseBasis {
    pub bases: Vec<PhaseBasis>,
    pub junctions: Vec<f64>,
    /// `transfer[i]` maps `(d1, d2)` of basis `i` to the pair of basis `i+1`.
    pub transfer: Vec<[[f64; 2]; 2]>,
}

impl MultiPhaseBasis {
    fn segment(&self, t: f64) -> usize {
        self.junctions.partition_point(|&x| x <= t)
    }
}

// Widest interval around the sampled maximum of q on which q stays above a
// fraction of that maximum, clipped to the middle half of the subinterval.
fn auto_window(spec: &CoefficientSpec, lo: f64, hi: f64) -> Result<(f64, f64), PhaseError> {
    const N: usize = 400;
    let ts: Vec<f64> = (0..=N)
        .map(|k| lo + (hi - lo) * k as f64 / N as f64)
        .collect();
    let qs: Vec<f64> = ts.iter().map(|&t| spec.q(t)).collect();
    let (imax, qmax) = qs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(ia, qa), (i, &q)| {
            if q > qa {
                (i, q)
            } else {
                (ia, qa)
            }
        });
    if !(qmax > 0.0) {
        return Err(PhaseError::NoWindow { lo, hi });
    }
    let cut = 1e-3 * qmax;
    let mut i0 = imax;
    while i0 > 0 && qs[i0 - 1] > cut {
        i0 -= 1;
    }
    let mut i1 = imax;
    while i1 < N && qs[i1 + 1] > cut {
        i1 += 1;
    }
    let m = ts[imax];
    let quarter = 0.25 * (hi - lo);
    let w0 = ts[i0].max(m - quarter);
    let w1 = ts[i1].min(m + quarter);
    if !(w1 - w0 > 0.02 * (hi - lo)) || !(spec.q(0.5 * (w0 + w1)) > 1e-8 * qmax) {
        return Err(PhaseError::NoWindow { lo, hi });
    }
    Ok((w0, w1))
}

/// Build one phase basis per subinterval delimited by the given junction
/// points and glue them into a global representation. Each subinterval must
/// contain an oscillatory region where the windowing procedure can run;
/// `window_hints` (one optional entry per subinterval) overrides the
/// automatic window choice. Subintervals are built in parallel.
pub fn build_phase_multi(
    spec: &CoefficientSpec,
    a: f64,
    b: f64,
    junctions: &[f64],
    window_hints: Option<&[Option<(f64, f64)>]>,
    config: &PhaseConfig,
) -> Result<MultiPhaseBasis, PhaseError> {
    if junctions.windows(2).any(|w| !(w[0] < w[1]))
        || junctions.iter().any(|&x| !(a < x && x < b))
    {
        return Err(PhaseError::InvalidTurningPoint(
            "junctions must be strictly increasing inside (a, b)".into(),
        ));
    }
    if let Some(h) = window_hints {
        if h.len() != junctions.len() + 1 {
            return Err(PhaseError::InvalidTurningPoint(format!(
                "expected {} window hints, got {}",
                junctions.len() + 1,
                h.len()
            )));
        }
    }
    let mut edges = Vec::with_capacity(junctions.len() + 2);
    edges.push(a);
    edges.extend_from_slice(junctions);
    edges.push(b);

    let bases: Vec<Result<PhaseBasis, PhaseError>> = (0..edges.len() - 1)
        .into_par_iter()
        .map(|i| {
            let (lo, hi) = (edges[i], edges[i + 1]);
            let window = match window_hints.and_then(|h| h[i]) {
                Some(w) => w,
                None => auto_window(spec, lo, hi)?,
            };
            let pf = build_phase_at(spec, lo, hi, window, window.0, window.0, config, false)?;
            Ok(PhaseBasis::Single(pf))
        })
        .collect();
    let bases: Vec<PhaseBasis> = bases.into_iter().collect::<Result<_, _>>()?;

    let mut transfer = Vec::with_capacity(junctions.len());
    for (i, &x) in junctions.iter().enumerate() {
        let (li, ri) = (&bases[i], &bases[i + 1]);
        let (ld, rd) = (li.domain(), ri.domain());
        if !(ld.0 <= x && x <= ld.1) || !(rd.0 <= x && x <= rd.1) {
            return Err(PhaseError::JunctionCoverage(x));
        }
        let bl = basis_eval(li, x)?;
        let br = basis_eval(ri, x)?;
        // columns of M are (u, u') and (v, v'); transfer = Mr^{-1} Ml
        let (g1, g2) = solve_2x2([[br.u, br.v], [br.up, br.vp]], [bl.u, bl.up])?;
        let (h1, h2) = solve_2x2([[br.u, br.v], [br.up, br.vp]], [bl.v, bl.vp])?;
        transfer.push([[g1, h1], [g2, h2]]);
    }
    Ok(MultiPhaseBasis {
        bases,
        junctions: junctions.to_vec(),
        transfer,
    })
}

/// A particular solution over a glued basis: one `(d1, d2)` pair per
/// subinterval, continuous and C¹ at every junction.
#[derive(Debug, Clone)]
pub struct MultiSolution<'a> {
    basis: &'a MultiPhaseBasis,
    pairs: Vec<(f64, f64)>,
}

impl MultiPhaseBasis {
    /// Fit a solution from two conditions placed in the same subinterval and
    /// propagate it across every junction.
    pub fn solve(
        &self,
        cond1: &Condition,
        cond2: &Condition,
    ) -> Result<MultiSolution<'_>, PhaseError> {
        let seg = self.segment(cond1.point);
        if self.segment(cond2.point) != seg {
            return Err(PhaseError::ConditionPlacement);
        }
        let mut pairs = vec![(0.0, 0.0); self.bases.len()];
        pairs[seg] = fit_solution(&self.bases[seg], cond1, cond2)?;
        for i in seg..self.bases.len() - 1 {
            let g = &self.transfer[i];
            let (d1, d2) = pairs[i];
            pairs[i + 1] = (g[0][0] * d1 + g[0][1] * d2, g[1][0] * d1 + g[1][1] * d2);
        }
        for i in (0..seg).rev() {
            let g = &self.transfer[i];
            let (e1, e2) = pairs[i + 1];
            pairs[i] = solve_2x2([[g[0][0], g[0][1]], [g[1][0], g[1][1]]], [e1, e2])?;
        }
        Ok(MultiSolution { basis: self, pairs })
    }
}

impl MultiSolution<'_> {
    pub fn eval(&self, t: f64) -> Result<f64, ChebError> {
        let i = self.basis.segment(t);
        let b = basis_eval(&self.basis.bases[i], t)?;
        let (d1, d2) = self.pairs[i];
        Ok(d1 * b.u + d2 * b.v)
    }

    pub fn eval_deriv(&self, t: f64) -> Result<f64, ChebError> {
        let i = self.basis.segment(t);
        let b = basis_eval(&self.basis.bases[i], t)?;
        let (d1, d2) = self.pairs[i];
        Ok(d1 * b.up + d2 * b.vp)
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }
}

/// Residual of the phase-derivative equation at each point, normalized by
/// `max(|q|, (α')²)`. `α'''` is obtained by differentiating the `α''`
/// expansion spectrally.
pub fn kummer_residual_many(
    spec: &CoefficientSpec,
    pf: &PhaseFunction,
    ts: &[f64],
) -> Result<Vec<f64>, ChebError> {
    let alpha_ppp = pf.alpha_pp.differentiate();
    ts.iter()
        .map(|&t| {
            let ap = pf.alpha_p.eval(t)?;
            let app = pf.alpha_pp.eval(t)?;
            let appp = alpha_ppp.eval(t)?;
            let q = spec.q(t);
            let res = q - ap * ap + 0.75 * (app / ap) * (app / ap) - appp / (2.0 * ap);
            Ok(res / q.abs().max(ap * ap).max(1e-300))
        })
        .collect()
}

/// Single-point variant of [`kummer_residual_many`].
pub fn kummer_residual(
    spec: &CoefficientSpec,
    pf: &PhaseFunction,
    t: f64,
) -> Result<f64, ChebError> {
    Ok(kummer_residual_many(spec, pf, &[t])?[0])
}

/// Residual of `w''' + 4 q w' + 2 q' w` at `t` for an Appell solution,
/// normalized by the largest term magnitude.
pub fn appell_residual(
    spec: &CoefficientSpec,
    sol: &PiecewiseSolution,
    t: f64,
) -> Result<f64, ChebError> {
    let w = sol.eval(0, t)?;
    let wp = sol.eval(1, t)?;
    let wppp = sol.component(2).differentiate().eval(t)?;
    let dq = match spec.mode {
        DerivativeMode::Supplied => spec.dq_supplied(t).unwrap_or(f64::NAN),
        DerivativeMode::Spectral => {
            let c0 = sol.component(0);
            let i = c0.interval_index(t).ok_or({
                let (lo, hi) = c0.domain();
                ChebError::OutOfDomain { t, lo, hi }
            })?;
            let bp = c0.breakpoints();
            let qe = PiecewiseExpansion::from_fn(c0.order(), bp[i], bp[i + 1], |x| spec.q(x))?;
            qe.differentiate().eval(t)?
        }
    };
    let terms = [wppp, 4.0 * spec.q(t) * wp, 2.0 * dq * w];
    let scale = terms.iter().fold(1e-300f64, |a, x| a.max(x.abs()));
    Ok(terms.iter().sum::<f64>() / scale)
}
