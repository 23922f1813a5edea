//! Piecewise Chebyshev expansion machinery.
//!
//! Functions are represented as order-`l` Chebyshev series on each interval of
//! a partition `x_0 < x_1 < ... < x_m`. The nodes are the Chebyshev extrema
//! (second-kind points), stored in ascending order so that both interval
//! endpoints are nodes; the adaptive solver relies on this when chaining the
//! solution from one interval to the next.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use thiserror::Error;

/// Errors produced by the expansion machinery.
#[derive(Debug, Error)]
pub enum ChebError {
    #[error("order must be an even integer >= 2, got {0}")]
    InvalidOrder(usize),
    #[error("expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("point {t} outside domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },
    #[error("breakpoints must be a strictly increasing sequence of at least two finite values")]
    InvalidBreakpoints,
    #[error("coefficient data must be finite")]
    NonFinite,
}

/// Ascending Chebyshev extrema `-cos(pi j / l)`, `j = 0..=l`.
///
/// The sequence is exactly symmetric about 0 and its endpoints are exactly
/// `-1` and `1`.
pub fn cheb_nodes(order: usize) -> Result<Vec<f64>, ChebError> {
    if order < 2 || order % 2 != 0 {
        return Err(ChebError::InvalidOrder(order));
    }
    let l = order;
    let mut nodes = vec![0.0; l + 1];
    for j in 0..l / 2 {
        let x = -(PI * j as f64 / l as f64).cos();
        nodes[j] = x;
        nodes[l - j] = -x;
    }
    nodes[l / 2] = 0.0;
    nodes[0] = -1.0;
    nodes[l] = 1.0;
    Ok(nodes)
}

/// Map values at the `n+1` extrema (ascending) to Chebyshev coefficients.
///
/// The interpolant `sum_j λ_j T_j` matches the values at every node.
pub fn vals_to_coeffs(values: &[f64]) -> Result<Vec<f64>, ChebError> {
    if values.len() < 2 {
        return Err(ChebError::SizeMismatch {
            expected: 2,
            got: values.len(),
        });
    }
    let n = values.len() - 1;
    let ct = cos_table(n);
    let mut coeffs = vec![0.0; n + 1];
    for (i, c) in coeffs.iter_mut().enumerate() {
        // T_i(x_j) = (-1)^i cos(pi i j / n) for ascending extrema; the common
        // (-1)^i is factored out and applied once below
        let mut acc = 0.5 * (values[0] + values[n] * ct[(i * n) % (2 * n)]);
        for (j, v) in values.iter().enumerate().take(n).skip(1) {
            acc += v * ct[(i * j) % (2 * n)];
        }
        let norm = if i == 0 || i == n { n as f64 } else { n as f64 / 2.0 };
        *c = sign(i) * acc / norm;
    }
    Ok(coeffs)
}

/// Inverse of [`vals_to_coeffs`]: evaluate the series at the extrema.
pub fn coeffs_to_vals(coeffs: &[f64]) -> Result<Vec<f64>, ChebError> {
    if coeffs.len() < 2 {
        return Err(ChebError::SizeMismatch {
            expected: 2,
            got: coeffs.len(),
        });
    }
    let n = coeffs.len() - 1;
    let ct = cos_table(n);
    let mut vals = vec![0.0; n + 1];
    for (j, v) in vals.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, c) in coeffs.iter().enumerate() {
            acc += c * sign(i) * ct[(i * j) % (2 * n)];
        }
        *v = acc;
    }
    Ok(vals)
}

#[inline]
fn sign(i: usize) -> f64 {
    if i % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

// cos(pi m / n) for m in 0..2n, built from the first quadrant so that the
// symmetries hold exactly.
fn cos_table(n: usize) -> Vec<f64> {
    let mut ct = vec![0.0; 2 * n];
    for m in 0..=n / 2 {
        let c = (PI * m as f64 / n as f64).cos();
        ct[m] = c;
        ct[n - m] = -c;
    }
    if n % 2 == 0 {
        ct[n / 2] = 0.0;
    }
    ct[0] = 1.0;
    ct[n] = -1.0;
    for m in 1..n {
        ct[2 * n - m] = ct[m];
    }
    ct
}

/// Fraction of coefficient energy in the upper half of a Chebyshev series.
///
/// For coefficients `λ_0..λ_l` this is
/// `sqrt(sum_{j>l/2} λ_j^2) / sqrt(sum_j λ_j^2)`, the statistic used by the
/// adaptive solver to accept or reject an interval. An all-zero vector yields
/// 0. The computation is scaled by the largest magnitude so it stays finite
/// for coefficients near the overflow threshold.
pub fn tail_ratio(coeffs: &[f64]) -> f64 {
    let l = coeffs.len().saturating_sub(1);
    let m = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    if m == 0.0 || !m.is_finite() {
        return if m == 0.0 { 0.0 } else { 1.0 };
    }
    let mut total = 0.0;
    let mut tail = 0.0;
    for (j, c) in coeffs.iter().enumerate() {
        let s = (c / m) * (c / m);
        total += s;
        if j > l / 2 {
            tail += s;
        }
    }
    (tail / total).sqrt()
}

/// Clenshaw evaluation of `sum_j a_j T_j(s)` for `s` in `[-1, 1]`.
pub(crate) fn clenshaw(coeffs: &[f64], s: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs.iter().skip(1).rev() {
        let t = 2.0 * s * b1 - b2 + c;
        b2 = b1;
        b1 = t;
    }
    s * b1 - b2 + coeffs[0]
}

/// Coefficients of the derivative, including the affine chain-rule factor
/// `1/half_width`. Output has the same length with a zero top coefficient.
pub(crate) fn deriv_row(coeffs: &[f64], half_width: f64) -> Vec<f64> {
    let n = coeffs.len() - 1;
    let mut out = vec![0.0; n + 1];
    if n == 0 {
        return out;
    }
    out[n - 1] = 2.0 * n as f64 * coeffs[n];
    if n >= 2 {
        out[n - 2] = 2.0 * (n - 1) as f64 * coeffs[n - 1];
    }
    for j in (0..n.saturating_sub(2)).rev() {
        out[j] = out[j + 2] + 2.0 * (j + 1) as f64 * coeffs[j + 1];
    }
    out[0] *= 0.5;
    for c in &mut out {
        *c /= half_width;
    }
    out
}

/// Coefficients of an antiderivative scaled by `half_width`, one order higher.
/// The constant term is left at zero; callers anchor it.
pub(crate) fn antideriv_row(coeffs: &[f64], half_width: f64) -> Vec<f64> {
    let n = coeffs.len() - 1;
    let mut out = vec![0.0; n + 2];
    let a = |j: usize| if j <= n { coeffs[j] } else { 0.0 };
    out[1] = half_width * (a(0) - a(2) / 2.0);
    for j in 2..=n + 1 {
        out[j] = half_width * (a(j - 1) - a(j + 1)) / (2.0 * j as f64);
    }
    out
}

/// An order-`l` Chebyshev series on each interval of a partition.
///
/// Row `i` of the coefficient table covers `[x_i, x_{i+1})`; the last row's
/// interval is closed on the right. Values at an interior breakpoint therefore
/// come from the interval to its right.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseExpansion {
    order: usize,
    breakpoints: Vec<f64>,
    coeffs: Vec<f64>, // row-major, rows of length order + 1
}

impl PiecewiseExpansion {
    /// Build an expansion from a partition and row-major coefficients.
    pub fn new(
        order: usize,
        breakpoints: Vec<f64>,
        coeffs: Vec<f64>,
    ) -> Result<Self, ChebError> {
        if breakpoints.len() < 2
            || breakpoints.windows(2).any(|w| !(w[0] < w[1]))
            || breakpoints.iter().any(|x| !x.is_finite())
        {
            return Err(ChebError::InvalidBreakpoints);
        }
        let rows = breakpoints.len() - 1;
        if coeffs.len() != rows * (order + 1) {
            return Err(ChebError::SizeMismatch {
                expected: rows * (order + 1),
                got: coeffs.len(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(ChebError::NonFinite);
        }
        Ok(Self {
            order,
            breakpoints,
            coeffs,
        })
    }

    /// Single-interval expansion on `[a, b]`.
    pub fn single(order: usize, a: f64, b: f64, row: Vec<f64>) -> Result<Self, ChebError> {
        Self::new(order, vec![a, b], row)
    }

    /// Expand `f` on `[a, b]` by interpolation at the mapped extrema.
    pub fn from_fn(
        order: usize,
        a: f64,
        b: f64,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, ChebError> {
        let nodes = cheb_nodes(order)?;
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let vals: Vec<f64> = nodes.iter().map(|s| f(mid + half * s)).collect();
        Self::single(order, a, b, vals_to_coeffs(&vals)?)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn num_intervals(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Coefficients of interval `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.order + 1;
        &self.coeffs[i * w..(i + 1) * w]
    }

    /// Row-major coefficient table.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Covered domain `[x_0, x_m]`.
    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    /// Index of the interval containing `t` under the half-open membership
    /// rule, or `None` outside the domain.
    pub fn interval_index(&self, t: f64) -> Option<usize> {
        let (lo, hi) = self.domain();
        if !(lo..=hi).contains(&t) {
            return None;
        }
        let i = self.breakpoints.partition_point(|&x| x <= t);
        Some(i.saturating_sub(1).min(self.num_intervals() - 1))
    }

    /// Evaluate at `t`.
    pub fn eval(&self, t: f64) -> Result<f64, ChebError> {
        let i = self.interval_index(t).ok_or_else(|| {
            let (lo, hi) = self.domain();
            ChebError::OutOfDomain { t, lo, hi }
        })?;
        Ok(self.eval_in(i, t))
    }

    /// Evaluate at each point of `ts`.
    pub fn eval_many(&self, ts: &[f64]) -> Result<Vec<f64>, ChebError> {
        ts.iter().map(|&t| self.eval(t)).collect()
    }

    fn eval_in(&self, i: usize, t: f64) -> f64 {
        let (a, b) = (self.breakpoints[i], self.breakpoints[i + 1]);
        let s = (2.0 * t - (a + b)) / (b - a);
        clenshaw(self.row(i), s)
    }

    /// Derivative, with the same breakpoints and order.
    pub fn differentiate(&self) -> PiecewiseExpansion {
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for i in 0..self.num_intervals() {
            let half = 0.5 * (self.breakpoints[i + 1] - self.breakpoints[i]);
            coeffs.extend_from_slice(&deriv_row(self.row(i), half));
        }
        PiecewiseExpansion {
            order: self.order,
            breakpoints: self.breakpoints.clone(),
            coeffs,
        }
    }

    /// Antiderivative `A` of order `l+1` with `A(anchor) = value`, continuous
    /// across breakpoints.
    pub fn integrate(&self, anchor: f64, value: f64) -> Result<PiecewiseExpansion, ChebError> {
        let (lo, hi) = self.domain();
        if !(lo..=hi).contains(&anchor) {
            return Err(ChebError::OutOfDomain { t: anchor, lo, hi });
        }
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(self.num_intervals());
        let mut running = 0.0; // value at the left edge of the current interval
        for i in 0..self.num_intervals() {
            let half = 0.5 * (self.breakpoints[i + 1] - self.breakpoints[i]);
            let mut row = antideriv_row(self.row(i), half);
            // pick the constant term so the row evaluates to `running` at s = -1
            let at_left: f64 = row
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, c)| c * sign(j))
                .sum();
            row[0] = running - at_left;
            running = row.iter().sum();
            rows.push(row);
        }
        let mut out = PiecewiseExpansion {
            order: self.order + 1,
            breakpoints: self.breakpoints.clone(),
            coeffs: rows.concat(),
        };
        let shift = value - out.eval(anchor)?;
        let w = out.order + 1;
        for i in 0..out.num_intervals() {
            out.coeffs[i * w] += shift;
        }
        Ok(out)
    }

    /// Reflect about `center`: the result represents `±f(2 center - t)`.
    pub(crate) fn reflect(&self, center: f64, negate: bool) -> PiecewiseExpansion {
        let m = self.num_intervals();
        let mut breakpoints: Vec<f64> =
            self.breakpoints.iter().rev().map(|x| 2.0 * center - x).collect();
        // keep the anchor exact when it is itself a breakpoint
        for (rev, orig) in breakpoints.iter_mut().zip(self.breakpoints.iter().rev()) {
            if *orig == center {
                *rev = center;
            }
        }
        let w = self.order + 1;
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for i in (0..m).rev() {
            let row = self.row(i);
            let outer = if negate { -1.0 } else { 1.0 };
            coeffs.extend(row.iter().enumerate().map(|(j, c)| outer * sign(j) * c));
        }
        debug_assert_eq!(coeffs.len(), m * w);
        PiecewiseExpansion {
            order: self.order,
            breakpoints,
            coeffs,
        }
    }

    /// Largest coefficient magnitude over all intervals.
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()))
    }
}

/// Chebyshev extrema grid with the dense transforms used by the collocation
/// solver: value/coefficient maps and the spectral integration operators
/// anchored at either endpoint.
#[derive(Debug, Clone)]
pub struct ChebGrid {
    order: usize,
    nodes: Vec<f64>,
    v2c: DMatrix<f64>,
    c2v: DMatrix<f64>,
    int_left: DMatrix<f64>,
    int_right: DMatrix<f64>,
}

impl ChebGrid {
    pub fn new(order: usize) -> Result<Self, ChebError> {
        let nodes = cheb_nodes(order)?;
        let n = order + 1;
        let mut v2c = DMatrix::zeros(n, n);
        for i in 0..n {
            let e: Vec<f64> = (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect();
            let col = vals_to_coeffs(&e).expect("unit vector transform");
            for (r, c) in col.iter().enumerate() {
                v2c[(r, i)] = *c;
            }
        }
        let ct = cos_table(order);
        let mut c2v = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                c2v[(j, i)] = sign(i) * ct[(i * j) % (2 * order)];
            }
        }
        // S maps l+1 coefficients to the l+2 coefficients of the antiderivative
        // anchored at s = -1; T evaluates an (l+1)-order series at the nodes.
        let mut s_mat = DMatrix::zeros(n + 1, n);
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let mut row = antideriv_row(&e, 1.0);
            let at_left: f64 = row
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, c)| c * sign(j))
                .sum();
            row[0] = -at_left;
            for (r, c) in row.iter().enumerate() {
                s_mat[(r, k)] = *c;
            }
        }
        let mut t_mat = DMatrix::zeros(n, n + 1);
        for j in 0..n {
            for i in 0..=n {
                t_mat[(j, i)] = sign(i) * ct[(i * j) % (2 * order)];
            }
        }
        let int_left = &t_mat * &s_mat * &v2c;
        let mut int_right = int_left.clone();
        let last = int_left.row(n - 1).into_owned();
        for j in 0..n {
            for i in 0..n {
                int_right[(i, j)] -= last[j];
            }
        }
        Ok(Self {
            order,
            nodes,
            v2c,
            c2v,
            int_left,
            int_right,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Nodes in `[-1, 1]`, ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Nodes mapped to `[a, b]`.
    pub fn mapped_nodes(&self, a: f64, b: f64) -> Vec<f64> {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut out: Vec<f64> = self.nodes.iter().map(|s| mid + half * s).collect();
        out[0] = a;
        out[self.order] = b;
        out
    }

    pub fn vals_to_coeffs(&self, vals: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(vals);
        (&self.v2c * v).data.into()
    }

    pub fn coeffs_to_vals(&self, coeffs: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(coeffs);
        (&self.c2v * v).data.into()
    }

    /// Integration operator on node values: `(K f)(x_i) = ∫ f` from the left
    /// (`-1`) or right (`+1`) endpoint, before the `half_width` scale.
    pub(crate) fn integration_matrix(&self, from_right: bool) -> &DMatrix<f64> {
        if from_right {
            &self.int_right
        } else {
            &self.int_left
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    #[test]
    fn nodes_small_orders() {
        assert_eq!(cheb_nodes(2).unwrap(), vec![-1.0, 0.0, 1.0]);
        let n4 = cheb_nodes(4).unwrap();
        let r = 0.5f64.sqrt();
        assert_eq!(n4[0], -1.0);
        assert!((n4[1] + r).abs() < 1e-16);
        assert_eq!(n4[2], 0.0);
        assert!((n4[3] - r).abs() < 1e-16);
        assert_eq!(n4[4], 1.0);
        for l in [16usize, 24] {
            let n = cheb_nodes(l).unwrap();
            for j in 0..=l {
                assert_eq!(n[j], -n[l - j], "symmetry at {j}");
            }
            assert!(n.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn nodes_reject_bad_order() {
        assert!(matches!(cheb_nodes(1), Err(ChebError::InvalidOrder(1))));
        assert!(matches!(cheb_nodes(3), Err(ChebError::InvalidOrder(3))));
        assert!(matches!(cheb_nodes(0), Err(ChebError::InvalidOrder(0))));
    }

    #[test]
    fn transform_recovers_basis_elements() {
        let nodes = cheb_nodes(8).unwrap();
        // values of T_2 at the nodes
        let vals: Vec<f64> = nodes.iter().map(|x| 2.0 * x * x - 1.0).collect();
        let c = vals_to_coeffs(&vals).unwrap();
        for (j, cj) in c.iter().enumerate() {
            let want = if j == 2 { 1.0 } else { 0.0 };
            assert!((cj - want).abs() < 1e-14, "coeff {j} = {cj}");
        }
        let ones = vec![1.0; 9];
        let c = vals_to_coeffs(&ones).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15);
        assert!(c[1..].iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn transform_round_trip() {
        let mut rng = StdRng::seed_from_u64(7);
        for l in [2usize, 8, 16, 30] {
            let vals: Vec<f64> = (0..=l).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let back = coeffs_to_vals(&vals_to_coeffs(&vals).unwrap()).unwrap();
            let m = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (v, b) in vals.iter().zip(&back) {
                assert!((v - b).abs() <= 1e-14 * m);
            }
        }
    }

    #[test]
    fn transform_size_mismatch() {
        assert!(vals_to_coeffs(&[1.0]).is_err());
    }

    #[test]
    fn eval_basis_and_membership() {
        // T_3 on a single interval
        let e = PiecewiseExpansion::single(4, -1.0, 1.0, vec![0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((e.eval(0.5).unwrap() - (-1.0)).abs() < 1e-15);
        let c = PiecewiseExpansion::single(2, -3.0, 5.0, vec![7.0, 0.0, 0.0]).unwrap();
        assert_eq!(c.eval(-3.0).unwrap(), 7.0);
        assert_eq!(c.eval(4.9).unwrap(), 7.0);
        assert!(c.eval(5.1).is_err());

        // membership: interior breakpoint belongs to the right interval
        let two = PiecewiseExpansion::new(
            2,
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 0.0, 5.0, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(two.interval_index(1.0), Some(1));
        assert_eq!(two.eval(1.0).unwrap(), 5.0);
        assert_eq!(two.interval_index(2.0), Some(1));
        assert_eq!(two.eval(2.0).unwrap(), 5.0);
        assert_eq!(two.interval_index(0.0), Some(0));
    }

    #[test]
    fn differentiate_examples() {
        let t2 = PiecewiseExpansion::single(2, -1.0, 1.0, vec![0.0, 0.0, 1.0]).unwrap();
        let d = t2.differentiate();
        assert_eq!(d.row(0), &[0.0, 4.0, 0.0]);

        let sq = PiecewiseExpansion::from_fn(8, 0.0, 2.0, |t| t * t).unwrap();
        let d = sq.differentiate();
        for k in 0..=50 {
            let t = 2.0 * k as f64 / 50.0;
            assert!((d.eval(t).unwrap() - 2.0 * t).abs() < 1e-13);
        }

        let s = PiecewiseExpansion::from_fn(16, 0.0, 1.0, |t| t.sin()).unwrap();
        let d = s.differentiate();
        for k in 0..100 {
            let t = k as f64 / 99.0;
            assert!((d.eval(t).unwrap() - t.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn integrate_examples() {
        let t1 = PiecewiseExpansion::single(2, -1.0, 1.0, vec![0.0, 1.0, 0.0]).unwrap();
        let a = t1.integrate(0.0, 0.0).unwrap();
        let row = a.row(0);
        assert!((row[0] - 0.25).abs() < 1e-15);
        assert!(row[1].abs() < 1e-15);
        assert!((row[2] - 0.25).abs() < 1e-15);

        let one = PiecewiseExpansion::single(2, -1.0, 1.0, vec![1.0, 0.0, 0.0]).unwrap();
        let a = one.integrate(-1.0, 0.0).unwrap();
        let row = a.row(0);
        assert!((row[0] - 1.0).abs() < 1e-15);
        assert!((row[1] - 1.0).abs() < 1e-15);
        assert!(row[2].abs() < 1e-15 && row[3].abs() < 1e-15);
        assert!(a.integrate(3.0, 0.0).is_err());
    }

    #[test]
    fn integrate_differentiate_round_trip() {
        let mut rng = StdRng::seed_from_u64(11);
        let order = 12;
        let rows: Vec<f64> = (0..2 * (order + 1))
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let e = PiecewiseExpansion::new(order, vec![-0.5, 0.3, 2.0], rows).unwrap();
        let a = e.integrate(0.3, 1.5).unwrap();
        assert!((a.eval(0.3).unwrap() - 1.5).abs() < 1e-13);
        let d = a.differentiate();
        let mut worst: f64 = 0.0;
        for k in 0..=400 {
            let t = -0.5 + 2.5 * k as f64 / 400.0;
            worst = worst.max((d.eval(t).unwrap() - e.eval(t).unwrap()).abs());
        }
        assert!(worst < 1e-12, "round trip error {worst}");
        // continuity of the antiderivative at the breakpoint
        let left = {
            let row = a.row(0);
            row.iter().sum::<f64>()
        };
        assert!((left - a.eval(0.3).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn tail_ratio_examples() {
        let mut e0 = vec![0.0; 17];
        e0[0] = 1.0;
        assert_eq!(tail_ratio(&e0), 0.0);
        let mut el = vec![0.0; 17];
        el[16] = 1.0;
        assert_eq!(tail_ratio(&el), 1.0);
        let ones = vec![1.0; 17];
        assert!((tail_ratio(&ones) - (8.0f64 / 17.0).sqrt()).abs() < 1e-15);
        assert_eq!(tail_ratio(&vec![0.0; 17]), 0.0);
        // near-overflow coefficients stay finite
        let big = vec![1e300; 17];
        assert!((tail_ratio(&big) - (8.0f64 / 17.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grid_transforms_are_inverse() {
        let g = ChebGrid::new(16).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let vals: Vec<f64> = (0..17).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let back = g.coeffs_to_vals(&g.vals_to_coeffs(&vals));
        for (v, b) in vals.iter().zip(&back) {
            assert!((v - b).abs() < 1e-13);
        }
    }

    #[test]
    fn grid_integration_matrices() {
        let g = ChebGrid::new(16).unwrap();
        // f = exp on [-1,1]: left-anchored integral is exp(s) - exp(-1)
        let f: Vec<f64> = g.nodes().iter().map(|s| s.exp()).collect();
        let kf = g.integration_matrix(false) * DVector::from_column_slice(&f);
        for (i, s) in g.nodes().iter().enumerate() {
            let want = s.exp() - (-1.0f64).exp();
            assert!((kf[i] - want).abs() < 1e-13);
        }
        let kf = g.integration_matrix(true) * DVector::from_column_slice(&f);
        for (i, s) in g.nodes().iter().enumerate() {
            let want = s.exp() - 1.0f64.exp();
            assert!((kf[i] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn reflect_matches_pointwise() {
        let e = PiecewiseExpansion::from_fn(10, 1.0, 3.0, |t| (t * 1.3).sin() + t * t).unwrap();
        let r = e.reflect(1.0, false);
        for k in 0..=40 {
            let t = -1.0 + 2.0 * k as f64 / 40.0;
            let want = e.eval(2.0 - t).unwrap();
            assert!((r.eval(t).unwrap() - want).abs() < 1e-13);
        }
        let rn = e.reflect(1.0, true);
        assert!((rn.eval(0.0).unwrap() + e.eval(2.0).unwrap()).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn prop_polynomial_recovery(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let l = 14usize;
            let deg = rng.gen_range(0..=l);
            let coeffs: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nodes = cheb_nodes(l).unwrap();
            let vals: Vec<f64> = nodes.iter().map(|&s| clenshaw(&coeffs, s)).collect();
            let rec = vals_to_coeffs(&vals).unwrap();
            let scale = coeffs.iter().fold(1e-30f64, |a, c| a.max(c.abs()));
            for j in 0..=l {
                let want = if j <= deg { coeffs[j] } else { 0.0 };
                prop_assert!((rec[j] - want).abs() <= 1e-13 * scale);
            }
        }

        #[test]
        fn prop_clenshaw_matches_direct(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let coeffs: Vec<f64> = (0..=16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = rng.gen_range(-1.0..1.0);
            // direct T_j recurrence
            let (mut t0, mut t1) = (1.0, s);
            let mut direct = coeffs[0] + coeffs[1] * s;
            for c in coeffs.iter().skip(2) {
                let t2 = 2.0 * s * t1 - t0;
                direct += c * t2;
                t0 = t1;
                t1 = t2;
            }
            let scale = coeffs.iter().fold(1.0f64, |a, c| a.max(c.abs()));
            prop_assert!((clenshaw(&coeffs, s) - direct).abs() <= 1e-14 * scale * 16.0);
        }

        #[test]
        fn prop_tail_ratio_scale_invariant(seed in 0u64..200, c in prop::sample::select(vec![1e-8f64, 0.5, 3.0, 1e12])) {
            let mut rng = StdRng::seed_from_u64(seed);
            let coeffs: Vec<f64> = (0..=16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let scaled: Vec<f64> = coeffs.iter().map(|x| c * x).collect();
            let (a, b) = (tail_ratio(&coeffs), tail_ratio(&scaled));
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn prop_integrate_then_differentiate(seed in 0u64..200) {
            let mut rng = StdRng::seed_from_u64(seed);
            let order = 10usize;
            let rows: Vec<f64> = (0..2 * (order + 1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let e = PiecewiseExpansion::new(order, vec![0.0, 1.0, 2.5], rows).unwrap();
            let d = e.integrate(1.0, 0.0).unwrap().differentiate();
            let scale = e.max_abs_coeff();
            for k in 0..=60 {
                let t = 2.5 * k as f64 / 60.0;
                prop_assert!((d.eval(t).unwrap() - e.eval(t).unwrap()).abs() <= 1e-12 * scale.max(1.0));
            }
        }
    }
}
