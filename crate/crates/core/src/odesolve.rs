//! Adaptive Chebyshev collocation solver for first order systems
//! `y' = F(t, y)` with a condition at an arbitrary point of the interval.
//!
//! The solver works in two phases. It first covers `[a0, t0]` by solving
//! terminal value problems right to left, then covers `[t0, b0]` by solving
//! initial value problems left to right. On each candidate interval the local
//! problem is recast through the spectral integration operator and solved by
//! collocation at the Chebyshev extrema; the interval is accepted when the
//! upper-half coefficient energy of every solution component falls below the
//! accuracy target, otherwise it is split in half and both halves are
//! re-queued. Accepted intervals seed their neighbours with endpoint values,
//! so the solution is never recomputed on an accepted interval.
//!
//! A sweep phase stops early when a solution component exceeds the blow-up
//! cap; the achieved domain then shrinks and the corresponding truncation
//! flag is set. This is what truncates a phase-function domain when `1/α'`
//! approaches the limits of double precision.

use crate::cheb::{tail_ratio, ChebError, ChebGrid, PiecewiseExpansion};
use nalgebra::{DMatrix, DVector};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

/// Node-sampled data of a linear right-hand side `F(t, y) = A(t) y + g(t)`.
pub struct LinearSamples {
    pub mats: Vec<DMatrix<f64>>,
    pub rhs: Vec<DVector<f64>>,
}

/// Linear system `y' = A(t) y + g(t)`.
///
/// The sampler receives the collocation nodes of a candidate interval
/// (ascending, endpoints included) and returns `A` and `g` at each of them.
/// This indirection lets a caller evaluate coefficients spectrally on the
/// interval under consideration instead of pointwise.
pub struct LinearSystem {
    dim: usize,
    sampler: Box<dyn Fn(&[f64]) -> LinearSamples + Send + Sync>,
}

impl LinearSystem {
    pub fn new_sampled(
        dim: usize,
        sampler: impl Fn(&[f64]) -> LinearSamples + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            sampler: Box::new(sampler),
        }
    }

    /// Pointwise evaluators for `A(t)` and `g(t)`.
    pub fn new(
        dim: usize,
        a: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        g: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self::new_sampled(dim, move |ts| LinearSamples {
            mats: ts.iter().map(|&t| a(t)).collect(),
            rhs: ts.iter().map(|&t| g(t)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, ts: &[f64]) -> LinearSamples {
        (self.sampler)(ts)
    }
}

/// Nonlinear system `y' = F(t, y)` with its Jacobian `∂F/∂y`.
pub struct NonlinearSystem {
    dim: usize,
    rhs: Box<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>,
    jacobian: Box<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>,
}

impl NonlinearSystem {
    pub fn new(
        dim: usize,
        rhs: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian: impl Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            rhs: Box::new(rhs),
            jacobian: Box::new(jacobian),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Right-hand side of the system handed to the solver.
pub enum SystemSpec {
    Linear(LinearSystem),
    Nonlinear(NonlinearSystem),
}

impl SystemSpec {
    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::Linear(s) => s.dim,
            SystemSpec::Nonlinear(s) => s.dim,
        }
    }
}

/// Accuracy and budget knobs of the adaptive solver.
#[derive(Debug, Clone)]
pub struct AdaptiveConfig {
    /// Tail-ratio acceptance threshold.
    pub eps: f64,
    /// Chebyshev order `l` of the local expansions (even).
    pub order: usize,
    /// Budget of local solves before giving up.
    pub max_intervals: usize,
    /// Early-termination magnitude cap for the sweep phases.
    pub blowup_cap: f64,
    /// Smallest allowed interval width; defaults to `1e-13 (b0 - a0)`.
    pub min_width: Option<f64>,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            eps: 1e-12,
            order: 16,
            max_intervals: 200_000,
            blowup_cap: 1e300,
            min_width: None,
        }
    }
}

/// Piecewise solution of a first order system: one expansion per component,
/// all sharing breakpoints.
#[derive(Debug, Clone)]
pub struct PiecewiseSolution {
    components: Vec<PiecewiseExpansion>,
    truncated_left: bool,
    truncated_right: bool,
}

impl PiecewiseSolution {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &PiecewiseExpansion {
        &self.components[i]
    }

    pub fn into_components(self) -> Vec<PiecewiseExpansion> {
        self.components
    }

    /// Achieved domain, possibly smaller than requested after truncation.
    pub fn domain(&self) -> (f64, f64) {
        self.components[0].domain()
    }

    pub fn truncated_left(&self) -> bool {
        self.truncated_left
    }

    pub fn truncated_right(&self) -> bool {
        self.truncated_right
    }

    pub fn eval(&self, component: usize, t: f64) -> Result<f64, ChebError> {
        self.components[component].eval(t)
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("singular collocation system on [{0}, {1}]")]
    Singular(f64, f64),
    #[error("Newton iteration failed to converge on [{0}, {1}]")]
    NewtonStalled(f64, f64),
    #[error("non-finite right-hand side on [{0}, {1}]")]
    NonFinite(f64, f64),
    #[error(
        "resolution failure: {detail} (worst tail ratio {worst_tail:.3e}, smallest width {smallest_width:.3e})"
    )]
    Resolution {
        worst_tail: f64,
        smallest_width: f64,
        detail: String,
    },
    #[error(transparent)]
    Cheb(#[from] ChebError),
}

/// Value condition at one endpoint of a local solve.
#[derive(Debug, Clone)]
pub struct EndpointCondition {
    pub point: f64,
    pub values: Vec<f64>,
}

struct LocalResult {
    /// Chebyshev coefficients per component.
    rows: Vec<Vec<f64>>,
    /// Node values per component.
    vals: Vec<Vec<f64>>,
}

enum LocalFail {
    Singular,
    NonFinite,
    NewtonStalled,
}

fn solve_linear_interval(
    grid: &ChebGrid,
    sys: &LinearSystem,
    c0: f64,
    d0: f64,
    cond_at_right: bool,
    w: &[f64],
) -> Result<LocalResult, LocalFail> {
    let ts = grid.mapped_nodes(c0, d0);
    let samples = sys.sample(&ts);
    assemble_and_solve(grid, sys.dim, c0, d0, cond_at_right, w, &samples)
}

// u(t) = w + ∫ A u + g, collocated at the nodes: (I - h K A) u = w + h K g.
fn assemble_and_solve(
    grid: &ChebGrid,
    n: usize,
    c0: f64,
    d0: f64,
    cond_at_right: bool,
    w: &[f64],
    samples: &LinearSamples,
) -> Result<LocalResult, LocalFail> {
    let np = grid.order() + 1;
    let half = 0.5 * (d0 - c0);
    let k = grid.integration_matrix(cond_at_right);
    let dimn = np * n;
    let mut m = DMatrix::<f64>::identity(dimn, dimn);
    let mut rhs = DVector::<f64>::zeros(dimn);
    for i in 0..np {
        for p in 0..n {
            rhs[i * n + p] = w[p];
        }
        for j in 0..np {
            let kij = half * k[(i, j)];
            let aj = &samples.mats[j];
            let gj = &samples.rhs[j];
            for p in 0..n {
                rhs[i * n + p] += kij * gj[p];
                for q in 0..n {
                    m[(i * n + p, j * n + q)] -= kij * aj[(p, q)];
                }
            }
        }
    }
    if m.iter().any(|x| !x.is_finite()) || rhs.iter().any(|x| !x.is_finite()) {
        return Err(LocalFail::NonFinite);
    }
    let sol = m.lu().solve(&rhs).ok_or(LocalFail::Singular)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(LocalFail::NonFinite);
    }
    let mut vals = vec![vec![0.0; np]; n];
    for i in 0..np {
        for p in 0..n {
            vals[p][i] = sol[i * n + p];
        }
    }
    let rows = vals.iter().map(|v| grid.vals_to_coeffs(v)).collect();
    Ok(LocalResult { rows, vals })
}

fn solve_nonlinear_interval(
    grid: &ChebGrid,
    sys: &NonlinearSystem,
    c0: f64,
    d0: f64,
    cond_at_right: bool,
    w: &[f64],
    eps: f64,
) -> Result<LocalResult, LocalFail> {
    let n = sys.dim;
    let np = grid.order() + 1;
    let ts = grid.mapped_nodes(c0, d0);

    // trapezoidal march from the conditioned endpoint as the Newton seed
    let mut y = vec![vec![0.0f64; n]; np];
    let order: Vec<usize> = if cond_at_right {
        (0..np).rev().collect()
    } else {
        (0..np).collect()
    };
    y[order[0]].copy_from_slice(w);
    for s in 1..np {
        let (prev, cur) = (order[s - 1], order[s]);
        let h = ts[cur] - ts[prev];
        let f_prev = (sys.rhs)(ts[prev], &y[prev]);
        let predict: Vec<f64> = (0..n).map(|p| y[prev][p] + h * f_prev[p]).collect();
        let f_pred = (sys.rhs)(ts[cur], &predict);
        for p in 0..n {
            y[cur][p] = y[prev][p] + 0.5 * h * (f_prev[p] + f_pred[p]);
        }
        if y[cur].iter().any(|x| !x.is_finite()) {
            return Err(LocalFail::NonFinite);
        }
    }

    // Newton: each iterate solves the problem linearized about the previous one
    for _ in 0..20 {
        let mut mats = Vec::with_capacity(np);
        let mut rhs = Vec::with_capacity(np);
        for i in 0..np {
            let f = (sys.rhs)(ts[i], &y[i]);
            if f.iter().any(|x| !x.is_finite()) {
                return Err(LocalFail::NonFinite);
            }
            let jac = (sys.jacobian)(ts[i], &y[i]);
            if jac.iter().any(|x| !x.is_finite()) {
                return Err(LocalFail::NonFinite);
            }
            let yv = DVector::from_column_slice(&y[i]);
            let g = DVector::from_column_slice(&f) - &jac * yv;
            mats.push(jac);
            rhs.push(g);
        }
        let samples = LinearSamples { mats, rhs };
        let res = assemble_and_solve(grid, n, c0, d0, cond_at_right, w, &samples)?;
        let mut step: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for p in 0..n {
            for i in 0..np {
                step = step.max((res.vals[p][i] - y[i][p]).abs());
                scale = scale.max(res.vals[p][i].abs());
            }
        }
        for i in 0..np {
            for p in 0..n {
                y[i][p] = res.vals[p][i];
            }
        }
        if step <= eps * scale {
            return Ok(res);
        }
    }
    Err(LocalFail::NewtonStalled)
}

fn solve_local(
    grid: &ChebGrid,
    sys: &SystemSpec,
    c0: f64,
    d0: f64,
    cond_at_right: bool,
    w: &[f64],
    eps: f64,
) -> Result<LocalResult, LocalFail> {
    match sys {
        SystemSpec::Linear(l) => solve_linear_interval(grid, l, c0, d0, cond_at_right, w),
        SystemSpec::Nonlinear(nl) => {
            solve_nonlinear_interval(grid, nl, c0, d0, cond_at_right, w, eps)
        }
    }
}

/// Solve a linear problem on a single interval with the value given at one
/// endpoint. Returns one order-`l` expansion per component.
pub fn solve_local_linear(
    sys: &LinearSystem,
    interval: (f64, f64),
    condition: &EndpointCondition,
    config: &AdaptiveConfig,
) -> Result<Vec<PiecewiseExpansion>, SolveError> {
    let grid = ChebGrid::new(config.order)?;
    let cond_at_right = check_local_inputs(sys.dim, interval, condition)?;
    let (c0, d0) = interval;
    let res = solve_linear_interval(&grid, sys, c0, d0, cond_at_right, &condition.values)
        .map_err(|e| local_fail_to_error(e, c0, d0))?;
    rows_to_expansions(config.order, c0, d0, res.rows)
}

/// Solve a nonlinear problem on a single interval: trapezoidal predictor
/// followed by Newton refinement of the collocation equations.
pub fn solve_local_nonlinear(
    sys: &NonlinearSystem,
    interval: (f64, f64),
    condition: &EndpointCondition,
    config: &AdaptiveConfig,
) -> Result<Vec<PiecewiseExpansion>, SolveError> {
    let grid = ChebGrid::new(config.order)?;
    let cond_at_right = check_local_inputs(sys.dim, interval, condition)?;
    let (c0, d0) = interval;
    let res = solve_nonlinear_interval(
        &grid,
        sys,
        c0,
        d0,
        cond_at_right,
        &condition.values,
        config.eps,
    )
    .map_err(|e| local_fail_to_error(e, c0, d0))?;
    rows_to_expansions(config.order, c0, d0, res.rows)
}

fn check_local_inputs(
    dim: usize,
    interval: (f64, f64),
    condition: &EndpointCondition,
) -> Result<bool, SolveError> {
    let (c0, d0) = interval;
    if !(c0 < d0) || !c0.is_finite() || !d0.is_finite() {
        return Err(SolveError::InvalidInput(format!(
            "degenerate interval [{c0}, {d0}]"
        )));
    }
    if condition.values.len() != dim {
        return Err(SolveError::InvalidInput(format!(
            "condition has {} values for a dimension-{} system",
            condition.values.len(),
            dim
        )));
    }
    if condition.point == c0 {
        Ok(false)
    } else if condition.point == d0 {
        Ok(true)
    } else {
        Err(SolveError::InvalidInput(format!(
            "condition point {} is not an endpoint of [{c0}, {d0}]",
            condition.point
        )))
    }
}

fn local_fail_to_error(e: LocalFail, c0: f64, d0: f64) -> SolveError {
    match e {
        LocalFail::Singular => SolveError::Singular(c0, d0),
        LocalFail::NonFinite => SolveError::NonFinite(c0, d0),
        LocalFail::NewtonStalled => SolveError::NewtonStalled(c0, d0),
    }
}

fn rows_to_expansions(
    order: usize,
    c0: f64,
    d0: f64,
    rows: Vec<Vec<f64>>,
) -> Result<Vec<PiecewiseExpansion>, SolveError> {
    rows.into_iter()
        .map(|r| PiecewiseExpansion::single(order, c0, d0, r).map_err(SolveError::from))
        .collect()
}

// Heap entry ordered so the backward phase pops the largest right endpoint
// and the forward phase pops the smallest left endpoint.
struct Pending {
    c0: f64,
    d0: f64,
    backward: bool,
}

impl Pending {
    fn key(&self) -> f64 {
        if self.backward {
            self.d0
        } else {
            -self.c0
        }
    }
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().total_cmp(&other.key())
    }
}

// (scaled tail norm, scaled total norm) of a coefficient row, safe against
// overflow for magnitudes near 1e300.
fn tail_and_norm(row: &[f64]) -> (f64, f64) {
    let l = row.len().saturating_sub(1);
    let m = row.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    if m == 0.0 {
        return (0.0, 0.0);
    }
    let mut total = 0.0;
    let mut tail = 0.0;
    for (j, c) in row.iter().enumerate() {
        let s = (c / m) * (c / m);
        total += s;
        if j > l / 2 {
            tail += s;
        }
    }
    (m * tail.sqrt(), m * total.sqrt())
}

struct Accepted {
    c0: f64,
    d0: f64,
    rows: Vec<Vec<f64>>,
}

struct SweepOutcome {
    accepted: Vec<Accepted>,
    truncated: bool,
}

struct SweepStats {
    solves: usize,
    worst_tail: f64,
    smallest_width: f64,
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    grid: &ChebGrid,
    sys: &SystemSpec,
    lo: f64,
    hi: f64,
    seed: &[f64],
    backward: bool,
    cfg: &AdaptiveConfig,
    min_width: f64,
    stats: &mut SweepStats,
) -> Result<SweepOutcome, SolveError> {
    let mut heap = BinaryHeap::new();
    heap.push(Pending {
        c0: lo,
        d0: hi,
        backward,
    });
    let mut frontier = seed.to_vec();
    let mut accepted: Vec<Accepted> = Vec::new();
    let mut truncated = false;

    while let Some(iv) = heap.pop() {
        let (c0, d0) = (iv.c0, iv.d0);
        let width = d0 - c0;
        stats.smallest_width = stats.smallest_width.min(width);
        stats.solves += 1;
        if stats.solves > cfg.max_intervals {
            return Err(SolveError::Resolution {
                worst_tail: stats.worst_tail,
                smallest_width: stats.smallest_width,
                detail: format!("interval budget {} exhausted", cfg.max_intervals),
            });
        }
        if frontier.iter().any(|v| v.abs() >= cfg.blowup_cap) {
            truncated = true;
            break;
        }

        let local = solve_local(grid, sys, c0, d0, backward, &frontier, cfg.eps);
        let accept = match &local {
            Err(_) => None,
            Ok(res) => {
                // Each component's tail is measured against max(its own norm,
                // 1% of the largest component norm). A component that is tiny
                // relative to the solution vector sits at the roundoff floor
                // of the local solve, where a self-relative ratio reads as
                // noise over signal and never converges under subdivision;
                // the vector-scale floor still forces its tail below eps of
                // 1% of the solution scale, which is stronger in absolute
                // terms than the plain per-component test.
                let norms: Vec<(f64, f64)> = res.rows.iter().map(|r| tail_and_norm(r)).collect();
                let vecnorm = norms.iter().fold(0.0f64, |a, (_, n)| a.max(*n));
                let tail = if vecnorm == 0.0 {
                    0.0
                } else {
                    norms
                        .iter()
                        .map(|(t, n)| t / n.max(0.01 * vecnorm))
                        .fold(0.0f64, f64::max)
                };
                stats.worst_tail = stats.worst_tail.max(tail);
                if tail <= cfg.eps {
                    Some(tail)
                } else {
                    None
                }
            }
        };
        match accept {
            None => {
                if 0.5 * width < min_width {
                    return Err(SolveError::Resolution {
                        worst_tail: stats.worst_tail,
                        smallest_width: stats.smallest_width,
                        detail: format!(
                            "minimum interval width {min_width:.3e} reached near [{c0}, {d0}] without acceptance"
                        ),
                    });
                }
                let mid = 0.5 * (c0 + d0);
                heap.push(Pending {
                    c0,
                    d0: mid,
                    backward,
                });
                heap.push(Pending {
                    c0: mid,
                    d0,
                    backward,
                });
            }
            Some(_) => {
                let res = local.ok().unwrap();
                let max_abs = res
                    .vals
                    .iter()
                    .flat_map(|v| v.iter())
                    .fold(0.0f64, |a, x| a.max(x.abs()));
                frontier = if backward {
                    res.vals.iter().map(|v| v[0]).collect()
                } else {
                    res.vals.iter().map(|v| *v.last().unwrap()).collect()
                };
                accepted.push(Accepted {
                    c0,
                    d0,
                    rows: res.rows,
                });
                if max_abs >= cfg.blowup_cap {
                    truncated = true;
                    break;
                }
            }
        }
    }
    Ok(SweepOutcome {
        accepted,
        truncated,
    })
}

/// Adaptively solve `y' = F(t, y)` on `[a0, b0]` given `y(t0) = v`.
pub fn solve_adaptive(
    sys: &SystemSpec,
    a0: f64,
    b0: f64,
    t0: f64,
    v: &[f64],
    cfg: &AdaptiveConfig,
) -> Result<PiecewiseSolution, SolveError> {
    if !(a0 < b0) || !(a0..=b0).contains(&t0) || !a0.is_finite() || !b0.is_finite() {
        return Err(SolveError::InvalidInput(format!(
            "bad domain a0={a0}, b0={b0}, t0={t0}"
        )));
    }
    if v.len() != sys.dim() {
        return Err(SolveError::InvalidInput(format!(
            "initial vector has {} entries for a dimension-{} system",
            v.len(),
            sys.dim()
        )));
    }
    if !(cfg.eps > 0.0) || !(cfg.blowup_cap > 1.0) || cfg.max_intervals == 0 {
        return Err(SolveError::InvalidInput(
            "config requires eps > 0, blowup_cap > 1, max_intervals >= 1".into(),
        ));
    }
    let grid = ChebGrid::new(cfg.order)?;
    let min_width = cfg.min_width.unwrap_or(1e-13 * (b0 - a0));
    let mut stats = SweepStats {
        solves: 0,
        worst_tail: 0.0,
        smallest_width: f64::INFINITY,
    };

    let back = if t0 > a0 {
        sweep(&grid, sys, a0, t0, v, true, cfg, min_width, &mut stats)?
    } else {
        SweepOutcome {
            accepted: Vec::new(),
            truncated: false,
        }
    };
    let fwd = if b0 > t0 {
        sweep(&grid, sys, t0, b0, v, false, cfg, min_width, &mut stats)?
    } else {
        SweepOutcome {
            accepted: Vec::new(),
            truncated: false,
        }
    };
    if back.accepted.is_empty() && fwd.accepted.is_empty() {
        return Err(SolveError::Resolution {
            worst_tail: stats.worst_tail,
            smallest_width: stats.smallest_width,
            detail: "no interval was accepted".into(),
        });
    }

    // backward acceptance order is right-to-left
    let mut intervals: Vec<&Accepted> = back.accepted.iter().rev().collect();
    intervals.extend(fwd.accepted.iter());
    let n = sys.dim();
    let mut breakpoints = Vec::with_capacity(intervals.len() + 1);
    breakpoints.push(intervals[0].c0);
    for iv in &intervals {
        debug_assert_eq!(*breakpoints.last().unwrap(), iv.c0);
        breakpoints.push(iv.d0);
    }
    let mut components = Vec::with_capacity(n);
    for p in 0..n {
        let mut coeffs = Vec::with_capacity(intervals.len() * (cfg.order + 1));
        for iv in &intervals {
            coeffs.extend_from_slice(&iv.rows[p]);
        }
        components.push(PiecewiseExpansion::new(
            cfg.order,
            breakpoints.clone(),
            coeffs,
        )?);
    }
    Ok(PiecewiseSolution {
        components,
        truncated_left: back.truncated,
        truncated_right: fwd.truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(eps: f64) -> AdaptiveConfig {
        AdaptiveConfig {
            eps,
            ..AdaptiveConfig::default()
        }
    }

    fn scalar_linear(a: impl Fn(f64) -> f64 + Send + Sync + 'static) -> LinearSystem {
        LinearSystem::new(
            1,
            move |t| DMatrix::from_element(1, 1, a(t)),
            |_| DVector::zeros(1),
        )
    }

    #[test]
    fn local_linear_exponential() {
        let sys = scalar_linear(|_| 1.0);
        let sol = solve_local_linear(
            &sys,
            (0.0, 1.0),
            &EndpointCondition {
                point: 0.0,
                values: vec![1.0],
            },
            &cfg(1e-12),
        )
        .unwrap();
        let e = std::f64::consts::E;
        assert!((sol[0].eval(1.0).unwrap() - e).abs() / e < 1e-13);
        // residual at the nodes: derivative of the expansion against A y
        let d = sol[0].differentiate();
        for k in 0..=16 {
            let t = k as f64 / 16.0;
            let r = d.eval(t).unwrap() - sol[0].eval(t).unwrap();
            assert!(r.abs() < 1e3 * f64::EPSILON * e);
        }
    }

    #[test]
    fn local_linear_constant_and_terminal() {
        let zero = scalar_linear(|_| 0.0);
        let sol = solve_local_linear(
            &zero,
            (2.0, 3.0),
            &EndpointCondition {
                point: 2.0,
                values: vec![5.0],
            },
            &cfg(1e-12),
        )
        .unwrap();
        assert!((sol[0].eval(2.7).unwrap() - 5.0).abs() < 1e-14);

        let decay = scalar_linear(|_| -1.0);
        let sol = solve_local_linear(
            &decay,
            (0.0, 1.0),
            &EndpointCondition {
                point: 1.0,
                values: vec![1.0],
            },
            &cfg(1e-12),
        )
        .unwrap();
        let e = std::f64::consts::E;
        assert!((sol[0].eval(0.0).unwrap() - e).abs() / e < 1e-12);
    }

    #[test]
    fn local_inputs_validated() {
        let sys = scalar_linear(|_| 1.0);
        let bad = solve_local_linear(
            &sys,
            (0.0, 1.0),
            &EndpointCondition {
                point: 0.5,
                values: vec![1.0],
            },
            &cfg(1e-12),
        );
        assert!(matches!(bad, Err(SolveError::InvalidInput(_))));
    }

    #[test]
    fn local_nonlinear_riccati() {
        // r' = -r^2, r(0) = 1  =>  r = 1/(1+t)
        let sys = NonlinearSystem::new(
            1,
            |_, y| vec![-y[0] * y[0]],
            |_, y| DMatrix::from_element(1, 1, -2.0 * y[0]),
        );
        let sol = solve_local_nonlinear(
            &sys,
            (0.0, 1.0),
            &EndpointCondition {
                point: 0.0,
                values: vec![1.0],
            },
            &cfg(1e-12),
        )
        .unwrap();
        assert!((sol[0].eval(1.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn local_nonlinear_growing() {
        // y' = y^2, y(0) = 1  =>  y = 1/(1-t)
        let sys = NonlinearSystem::new(
            1,
            |_, y| vec![y[0] * y[0]],
            |_, y| DMatrix::from_element(1, 1, 2.0 * y[0]),
        );
        let sol = solve_local_nonlinear(
            &sys,
            (0.0, 0.5),
            &EndpointCondition {
                point: 0.0,
                values: vec![1.0],
            },
            &cfg(1e-12),
        )
        .unwrap();
        assert!((sol[0].eval(0.5).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_exponential_and_interior_start() {
        let sys = SystemSpec::Linear(scalar_linear(|_| 1.0));
        let sol = solve_adaptive(&sys, 0.0, 1.0, 0.0, &[1.0], &cfg(1e-12)).unwrap();
        let e = std::f64::consts::E;
        assert!((sol.eval(0, 1.0).unwrap() - e).abs() / e < 1e-12);
        assert!(!sol.truncated_left() && !sol.truncated_right());

        let sol = solve_adaptive(&sys, 0.0, 1.0, 0.5, &[1.0], &cfg(1e-12)).unwrap();
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            let want = (t - 0.5).exp();
            assert!((sol.eval(0, t).unwrap() - want).abs() < 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn adaptive_oscillatory_needs_subdivision() {
        // y'' = -100 y as a 2-system; y = cos(10 t)
        let sys = SystemSpec::Linear(LinearSystem::new(
            2,
            |_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -100.0, 0.0]),
            |_| DVector::zeros(2),
        ));
        let sol = solve_adaptive(&sys, 0.0, 10.0, 0.0, &[1.0, 0.0], &cfg(1e-12)).unwrap();
        assert!(sol.component(0).num_intervals() > 4);
        for k in 0..=100 {
            let t = 10.0 * k as f64 / 100.0;
            assert!((sol.eval(0, t).unwrap() - (10.0 * t).cos()).abs() < 5e-11);
        }
        // every accepted interval re-passes the tail test
        for p in 0..2 {
            let c = sol.component(p);
            for i in 0..c.num_intervals() {
                assert!(tail_ratio(c.row(i)) <= 1e-12);
            }
        }
    }

    #[test]
    fn adaptive_agrees_with_single_local_solve() {
        let make = || scalar_linear(|t: f64| t.sin());
        let local = solve_local_linear(
            &make(),
            (0.0, 1.0),
            &EndpointCondition {
                point: 0.0,
                values: vec![1.0],
            },
            &cfg(1e-12),
        )
        .unwrap();
        let adaptive = solve_adaptive(
            &SystemSpec::Linear(make()),
            0.0,
            1.0,
            0.0,
            &[1.0],
            &cfg(1e-12),
        )
        .unwrap();
        for k in 0..=50 {
            let t = k as f64 / 50.0;
            let a = local[0].eval(t).unwrap();
            let b = adaptive.eval(0, t).unwrap();
            assert!((a - b).abs() <= 10.0 * 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn adaptive_deterministic_under_budget_change() {
        let run = |max_intervals: usize| {
            let sys = SystemSpec::Linear(LinearSystem::new(
                2,
                |_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -25.0, 0.0]),
                |_| DVector::zeros(2),
            ));
            let mut c = cfg(1e-10);
            c.max_intervals = max_intervals;
            solve_adaptive(&sys, 0.0, 5.0, 0.0, &[0.0, 5.0], &c).unwrap()
        };
        let a = run(40_000);
        let b = run(80_000);
        assert_eq!(a.component(0).breakpoints(), b.component(0).breakpoints());
        assert_eq!(a.component(0).coeffs(), b.component(0).coeffs());
    }

    #[test]
    fn adaptive_kummer_constant_coefficient() {
        // phase-derivative system for constant q = nu^2: terminal values
        // (nu, 0) give the exact solution alpha' = nu, alpha'' = 0
        let nu = 10.0;
        let q = move |_t: f64| nu * nu;
        let sys = SystemSpec::Nonlinear(NonlinearSystem::new(
            2,
            move |t, y| {
                let p = y[0];
                if p <= 0.0 {
                    return vec![f64::NAN, f64::NAN];
                }
                vec![y[1], 2.0 * p * q(t) - 2.0 * p * p * p + 1.5 * y[1] * y[1] / p]
            },
            move |t, y| {
                let (p, s) = (y[0], y[1]);
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        0.0,
                        1.0,
                        2.0 * q(t) - 6.0 * p * p - 1.5 * s * s / (p * p),
                        3.0 * s / p,
                    ],
                )
            },
        ));
        let sol = solve_adaptive(&sys, 0.0, 3.0, 3.0, &[nu, 0.0], &cfg(1e-12)).unwrap();
        for k in 0..=30 {
            let t = 3.0 * k as f64 / 30.0;
            assert!((sol.eval(0, t).unwrap() - nu).abs() < 1e-11 * nu);
            assert!(sol.eval(1, t).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn adaptive_blowup_truncates() {
        // y' = -3y from t0 = 0 over [-40, 0]: the solution grows going left;
        // a small cap keeps the test fast
        let sys = SystemSpec::Linear(scalar_linear(|_| -3.0));
        let mut c = cfg(1e-10);
        c.blowup_cap = 1e10;
        let sol = solve_adaptive(&sys, -40.0, 0.0, 0.0, &[1.0], &c).unwrap();
        assert!(sol.truncated_left());
        let (lo, _) = sol.domain();
        // cap is reached near t = -ln(1e10)/3 ≈ -7.68
        assert!(lo > -12.0 && lo < -7.0, "lo = {lo}");
        let v = sol.eval(0, lo).unwrap();
        assert!(v >= 1e9 && v <= 1e12, "endpoint value {v:.3e}");
    }

    #[test]
    fn resolution_failure_reports_diagnostics() {
        // a jump in the coefficient cannot be resolved at any width
        let sys = SystemSpec::Linear(scalar_linear(|t: f64| {
            if t > 0.31234567 {
                1e6
            } else {
                -1e6
            }
        }));
        let mut c = cfg(1e-14);
        c.max_intervals = 200;
        let err = solve_adaptive(&sys, 0.0, 1.0, 0.0, &[1.0], &c).unwrap_err();
        match err {
            SolveError::Resolution {
                smallest_width, ..
            } => assert!(smallest_width < 1.0),
            other => panic!("expected resolution failure, got {other}"),
        }
    }
}
