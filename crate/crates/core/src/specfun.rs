//! Coefficient families for the test equations, a real gamma function, a
//! high-accuracy Airy series oracle, and condition-number estimates.
//!
//! The Airy oracle sums the Maclaurin series in double-double arithmetic so
//! that the cancellation inherent in the series (the partial sums reach `~1e6`
//! while the result is of order one) costs none of the 16 digits a double can
//! hold. It exists to validate the phase-function evaluation path and is
//! restricted to `|t| <= 8`.

use crate::phase::{CoefficientSpec, DerivativeMode, LeadingSign, TurningPointSpec};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecFunError {
    #[error("gamma pole at {0}")]
    Pole(f64),
    #[error("argument {0} outside supported range {1}")]
    OutOfRange(f64, &'static str),
}

/// Machine epsilon used by the condition-number error predictions.
pub const EPS0: f64 = f64::EPSILON;

// Lanczos coefficients, g = 607/128, 15 terms.
const LANCZOS_G: f64 = 4.7421875;
const LANCZOS: [f64; 15] = [
    0.99999999999999709182,
    57.156235665862923517,
    -59.597960355475491248,
    14.136097974741747174,
    -0.49191381609762019978,
    0.33994649984811888699e-4,
    0.46523628927048575665e-4,
    -0.98374475304879564677e-4,
    0.15808870322491248884e-3,
    -0.21026444172410488319e-3,
    0.21743961811521264320e-3,
    -0.16431810653676389022e-3,
    0.84418223983852743293e-4,
    -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
];

// sin(pi x) without the argument-reduction error of sin(pi * x)
fn sin_pi(x: f64) -> f64 {
    let k = x.floor();
    let r = x - k;
    let s = (std::f64::consts::PI * r.min(1.0 - r)).sin();
    if (k as i64) % 2 == 0 {
        s
    } else {
        -s
    }
}

/// Real gamma function via a 15-term Lanczos sum, with reflection for
/// `x < 1/2`. Supported for `|x| <= 170` away from the poles; relative error
/// is a few ulps.
pub fn gamma_real(x: f64) -> Result<f64, SpecFunError> {
    if !x.is_finite() {
        return Err(SpecFunError::OutOfRange(x, "finite arguments"));
    }
    if x.abs() > 170.0 {
        return Err(SpecFunError::OutOfRange(x, "|x| <= 170"));
    }
    if x <= 0.0 && x == x.floor() {
        return Err(SpecFunError::Pole(x));
    }
    if x < 0.5 {
        // Gamma(x) Gamma(1-x) = pi / sin(pi x)
        let g = gamma_real(1.0 - x)?;
        return Ok(std::f64::consts::PI / (sin_pi(x) * g));
    }
    let z = x - 1.0;
    let mut ser = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        ser += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    let base = (2.0 * std::f64::consts::PI).sqrt() * ser;
    let e = z + 0.5;
    // split the power when t^e would overflow on its own
    if e * t.ln() > 700.0 {
        let half = t.powf(0.5 * e);
        Ok(base * (half * (-t).exp()) * half)
    } else {
        Ok(base * t.powf(e) * (-t).exp())
    }
}

// ---------------------------------------------------------------------------
// double-double arithmetic, just enough for the Airy series
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn new(hi: f64, lo: f64) -> Self {
        Dd { hi, lo }
    }

    fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        quick_two_sum(s, e + self.lo + o.lo)
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(Dd::new(-o.hi, -o.lo))
    }

    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        quick_two_sum(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    fn mul_f64(self, f: f64) -> Dd {
        let (p, e) = two_prod(self.hi, f);
        quick_two_sum(p, e + self.lo * f)
    }

    fn div_f64(self, d: f64) -> Dd {
        let q1 = self.hi / d;
        let (p, e) = two_prod(q1, d);
        let r = (self.hi - p) + self.lo - e;
        quick_two_sum(q1, r / d)
    }

    fn abs_hi(self) -> f64 {
        self.hi.abs()
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd::new(s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

// Ai(0), -Ai'(0) and sqrt(3) as double-double constants.
const AI0: Dd = Dd {
    hi: 0.3550280538878172,
    lo: 2.05233632436212e-17,
};
const NEG_AIP0: Dd = Dd {
    hi: 0.2588194037928068,
    lo: -2.522243111610832e-17,
};
const SQRT3: Dd = Dd {
    hi: 1.7320508075688772,
    lo: 1.0035084221806903e-16,
};

/// Values of the Airy functions and their derivatives.
#[derive(Debug, Clone, Copy)]
pub struct AiryValues {
    pub ai: f64,
    pub bi: f64,
    pub aip: f64,
    pub bip: f64,
}

/// Maclaurin-series evaluation of `Ai`, `Bi`, `Ai'`, `Bi'` for `|t| <= 8`.
pub fn airy_series(t: f64) -> Result<AiryValues, SpecFunError> {
    if !(t.abs() <= 8.0) {
        return Err(SpecFunError::OutOfRange(t, "|t| <= 8"));
    }
    let x3 = {
        let (p, e) = two_prod(t, t);
        Dd::new(p, e).mul_f64(t)
    };
    // f  = sum c_k t^{3k},      c_0 = 1
    // g  = sum e_k t^{3k+1},    e_0 = 1
    // f' = sum 3k c_k t^{3k-1}, g' = sum (3k+1) e_k t^{3k}
    let mut f = Dd::from_f64(1.0);
    let mut fp = Dd::ZERO;
    let mut g = Dd::from_f64(t);
    let mut gp = Dd::from_f64(1.0);
    let mut tf = Dd::from_f64(1.0);
    let mut tfp = {
        let (p, e) = two_prod(t, t);
        Dd::new(p, e).div_f64(2.0)
    };
    let mut tg = Dd::from_f64(t);
    let mut tgp = Dd::from_f64(1.0);
    fp = fp.add(tfp);
    let mut peak: f64 = 1.0;
    for k in 0..200usize {
        let kf = k as f64;
        tf = tf.mul(x3).div_f64((3.0 * kf + 2.0) * (3.0 * kf + 3.0));
        tg = tg.mul(x3).div_f64((3.0 * kf + 3.0) * (3.0 * kf + 4.0));
        tgp = tgp.mul(x3).div_f64((3.0 * kf + 1.0) * (3.0 * kf + 3.0));
        f = f.add(tf);
        g = g.add(tg);
        gp = gp.add(tgp);
        if k >= 1 {
            tfp = tfp.mul(x3).div_f64(3.0 * kf * (3.0 * kf + 2.0));
            fp = fp.add(tfp);
        }
        peak = peak
            .max(tf.abs_hi())
            .max(tg.abs_hi())
            .max(tgp.abs_hi())
            .max(tfp.abs_hi());
        let top = tf.abs_hi().max(tg.abs_hi()).max(tgp.abs_hi()).max(tfp.abs_hi());
        if top < 1e-40 * peak {
            break;
        }
    }
    let c1f = AI0.mul(f);
    let c2g = NEG_AIP0.mul(g);
    let c1fp = AI0.mul(fp);
    let c2gp = NEG_AIP0.mul(gp);
    Ok(AiryValues {
        ai: c1f.sub(c2g).to_f64(),
        bi: SQRT3.mul(c1f.add(c2g)).to_f64(),
        aip: c1fp.sub(c2gp).to_f64(),
        bip: SQRT3.mul(c1fp.add(c2gp)).to_f64(),
    })
}

/// Condition number of evaluation `κ_f(t) = |f'(t) t / f(t)|`, or `None` at a
/// zero of `f`.
pub fn condition_number(
    f: impl Fn(f64) -> f64,
    f_prime: impl Fn(f64) -> f64,
    t: f64,
) -> Option<f64> {
    condition_number_from_values(f(t), f_prime(t), t)
}

/// Same as [`condition_number`], from precomputed values.
pub fn condition_number_from_values(f: f64, fp: f64, t: f64) -> Option<f64> {
    if f == 0.0 {
        return None;
    }
    Some((fp * t / f).abs())
}

/// Relative accuracy predicted by a condition number in double precision.
pub fn predicted_error(kappa: f64) -> f64 {
    kappa * EPS0
}

// ---------------------------------------------------------------------------
// named coefficients
// ---------------------------------------------------------------------------

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A test-equation coefficient: evaluators for `q` and `q'`, the known
/// turning points, and a recommended domain.
#[derive(Clone)]
pub struct NamedCoefficient {
    pub id: String,
    q: ScalarFn,
    dq: ScalarFn,
    pub turning_points: Vec<TurningPointSpec>,
    pub domain: (f64, f64),
}

impl NamedCoefficient {
    pub fn q(&self, t: f64) -> f64 {
        (self.q)(t)
    }

    pub fn dq(&self, t: f64) -> f64 {
        (self.dq)(t)
    }

    /// View as a [`CoefficientSpec`] in the requested derivative mode.
    pub fn coefficient_spec(&self, mode: DerivativeMode) -> CoefficientSpec {
        let q = self.q.clone();
        match mode {
            DerivativeMode::Supplied => {
                let dq = self.dq.clone();
                CoefficientSpec::with_derivative(move |t| q(t), move |t| dq(t))
            }
            DerivativeMode::Spectral => CoefficientSpec::spectral(move |t| q(t)),
        }
    }

    /// The single declared turning point, when there is exactly one.
    pub fn single_turning_point(&self) -> Option<TurningPointSpec> {
        if self.turning_points.len() == 1 {
            Some(self.turning_points[0])
        } else {
            None
        }
    }
}

// Newton polish of a declared root; the builders' guesses are already close.
fn refine_root(q: &dyn Fn(f64) -> f64, dq: &dyn Fn(f64) -> f64, guess: f64) -> f64 {
    let mut x = guess;
    for _ in 0..60 {
        let f = q(x);
        if f == 0.0 {
            break;
        }
        let d = dq(x);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let step = f / d;
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// `q(t) = -t`: a first order turning point at 0 with decreasing `q`.
pub fn airy_q() -> NamedCoefficient {
    NamedCoefficient {
        id: "airy".into(),
        q: Arc::new(|t| -t),
        dq: Arc::new(|_| -1.0),
        turning_points: vec![TurningPointSpec {
            location: 0.0,
            order: 1,
            sign: LeadingSign::Negative,
        }],
        domain: (-200.0, 200.0),
    }
}

/// `q(t) = 1 + (1/4 - ν²)/t²`, the normal form coefficient of the cylinder
/// equation of order `ν`.
pub fn bessel_normal_q(nu: f64) -> NamedCoefficient {
    let n2 = nu * nu;
    let q = move |t: f64| 1.0 + (0.25 - n2) / (t * t);
    let dq = move |t: f64| -2.0 * (0.25 - n2) / (t * t * t);
    let mut turning_points = Vec::new();
    let mut c = 0.0;
    if nu > 0.5 {
        c = refine_root(&q, &dq, 0.5 * (4.0 * n2 - 1.0).sqrt());
        turning_points.push(TurningPointSpec {
            location: c,
            order: 1,
            sign: LeadingSign::Positive,
        });
    }
    let lo = if nu > 0.5 { c / 100.0 } else { 1e-2 };
    NamedCoefficient {
        id: format!("bessel:{nu}"),
        q: Arc::new(q),
        dq: Arc::new(dq),
        turning_points,
        domain: (lo, 100.0 * nu.max(1.0)),
    }
}

/// `q(w) = ν(ν+1) sech²(w) - μ²`, the coefficient obtained from the
/// associated Legendre equation under `t = tanh(w)`.
pub fn legendre_q(nu: f64, mu: f64) -> NamedCoefficient {
    let a = nu * (nu + 1.0);
    let m2 = mu * mu;
    let q = move |w: f64| {
        let s = 1.0 / w.cosh();
        a * s * s - m2
    };
    let dq = move |w: f64| {
        let s = 1.0 / w.cosh();
        -2.0 * a * s * s * w.tanh()
    };
    let mut turning_points = Vec::new();
    let mut wstar = 0.0;
    if mu.abs() > 0.0 && a > m2 {
        wstar = refine_root(&q, &dq, (a.sqrt() / mu.abs()).acosh());
        turning_points.push(TurningPointSpec {
            location: wstar,
            order: 1,
            sign: LeadingSign::Negative,
        });
    }
    let b = wstar + 350.0 / mu.abs().max(1.0) + 2.0;
    NamedCoefficient {
        id: format!("legendre:{nu},{mu}"),
        q: Arc::new(q),
        dq: Arc::new(dq),
        turning_points,
        domain: (0.0, b),
    }
}

/// `q(t) = t^k`: a turning point of order `k` at 0.
pub fn monomial_q(k: u32) -> NamedCoefficient {
    let ki = k as i32;
    NamedCoefficient {
        id: format!("monomial:{k}"),
        q: Arc::new(move |t| t.powi(ki)),
        dq: Arc::new(move |t| ki as f64 * t.powi(ki - 1)),
        turning_points: vec![TurningPointSpec {
            location: 0.0,
            order: k,
            sign: LeadingSign::Positive,
        }],
        domain: (-10.0, 10.0),
    }
}

/// Two Gaussian bumps plus an oscillatory floor, scaled by `ν²`; `q` dips to
/// (numerically) zero only at the origin, an order-2 turning point.
pub fn bumps_q(nu: f64) -> NamedCoefficient {
    let n2 = nu * nu;
    let q = move |t: f64| {
        let s = (0.5 * t).sin();
        n2 * ((-(t - 5.0) * (t - 5.0)).exp()
            + (-(t + 5.0) * (t + 5.0)).exp()
            + s * s / (1.0 + t * t))
    };
    let dq = move |t: f64| {
        let s = (0.5 * t).sin();
        let w = 1.0 + t * t;
        n2 * (-2.0 * (t - 5.0) * (-(t - 5.0) * (t - 5.0)).exp()
            - 2.0 * (t + 5.0) * (-(t + 5.0) * (t + 5.0)).exp()
            + (0.5 * t.sin() * w - 2.0 * t * s * s) / (w * w))
    };
    NamedCoefficient {
        id: format!("bumps:{nu}"),
        q: Arc::new(q),
        dq: Arc::new(dq),
        turning_points: vec![TurningPointSpec {
            location: 0.0,
            order: 2,
            sign: LeadingSign::Positive,
        }],
        domain: (-10.0, 10.0),
    }
}

/// A coefficient with three sign changes on `(-10, 10)`, scaled by `ν²`.
pub fn three_tp_q(nu: f64) -> NamedCoefficient {
    let n2 = nu * nu;
    let base = move |t: f64| {
        (-(t + 5.0) * (t + 5.0)).exp() - (t - 5.0) * (-(t - 5.0) * (t - 5.0)).exp()
            - 6.0 * (-25.0f64).exp()
    };
    let dbase = move |t: f64| {
        -2.0 * (t + 5.0) * (-(t + 5.0) * (t + 5.0)).exp()
            + (2.0 * (t - 5.0) * (t - 5.0) - 1.0) * (-(t - 5.0) * (t - 5.0)).exp()
    };
    let q = move |t: f64| n2 * base(t);
    let dq = move |t: f64| n2 * dbase(t);
    let turning_points = vec![
        TurningPointSpec {
            location: refine_root(&base, &dbase, -9.8175),
            order: 1,
            sign: LeadingSign::Positive,
        },
        TurningPointSpec {
            location: refine_root(&base, &dbase, 0.0),
            order: 1,
            sign: LeadingSign::Positive,
        },
        TurningPointSpec {
            location: refine_root(&base, &dbase, 5.0 - 8e-11),
            order: 1,
            sign: LeadingSign::Negative,
        },
    ];
    NamedCoefficient {
        id: format!("three:{nu}"),
        q: Arc::new(q),
        dq: Arc::new(dq),
        turning_points,
        domain: (-10.0, 10.0),
    }
}

/// `q(t) = ν² (1 + cos(π t))`: order-2 turning points at every odd integer.
pub fn cosine_q(nu: f64) -> NamedCoefficient {
    let n2 = nu * nu;
    let q = move |t: f64| n2 * (1.0 + (std::f64::consts::PI * t).cos());
    let dq = move |t: f64| -n2 * std::f64::consts::PI * (std::f64::consts::PI * t).sin();
    let turning_points = (-5..=6)
        .map(|k| TurningPointSpec {
            location: (2 * k - 1) as f64,
            order: 2,
            sign: LeadingSign::Positive,
        })
        .collect();
    NamedCoefficient {
        id: format!("cosine:{nu}"),
        q: Arc::new(q),
        dq: Arc::new(dq),
        turning_points,
        domain: (-11.0, 11.0),
    }
}

/// Initial values at the turning point for the standard solution pair of
/// `y'' + t^k y = 0`, with `ν = 1/(2+k)`:
///
/// ```text
/// u(0) = 0,                         u'(0) =  sqrt(π/(2+k)) ν^ν / Γ(ν+1),
/// v(0) = -sqrt(π/(2+k)) ν^-ν Γ(ν)/π, v'(0) = -sqrt(π/(2+k)) ν^ν Γ(-ν) cos(πν)/π.
/// ```
///
/// The pair has Wronskian 1.
#[derive(Debug, Clone, Copy)]
pub struct MonomialBasisIcs {
    pub u0: f64,
    pub up0: f64,
    pub v0: f64,
    pub vp0: f64,
}

pub fn monomial_basis_ics(k: u32) -> Result<MonomialBasisIcs, SpecFunError> {
    let nu = 1.0 / (2.0 + k as f64);
    let s = (std::f64::consts::PI / (2.0 + k as f64)).sqrt();
    let nu_nu = nu.powf(nu);
    let up0 = s * nu_nu / gamma_real(nu + 1.0)?;
    let v0 = -s * gamma_real(nu)? / (nu_nu * std::f64::consts::PI);
    let vp0 = -s * nu_nu * gamma_real(-nu)? * (std::f64::consts::PI * nu).cos()
        / std::f64::consts::PI;
    Ok(MonomialBasisIcs {
        u0: 0.0,
        up0,
        v0,
        vp0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn gamma_anchors() {
        let pi = std::f64::consts::PI;
        assert!(rel(gamma_real(0.5).unwrap(), pi.sqrt()) < 1e-13);
        assert!(rel(gamma_real(5.0).unwrap(), 24.0) < 1e-13);
        assert!(rel(gamma_real(-0.5).unwrap(), -2.0 * pi.sqrt()) < 1e-13);
        assert!(rel(gamma_real(0.25).unwrap(), 3.6256099082219083119) < 1e-13);
        assert!(rel(gamma_real(1.25).unwrap(), 0.90640247705547707798) < 1e-13);
        assert!(rel(gamma_real(-3.5).unwrap(), 0.27008820585226910892) < 1e-13);
        assert!(rel(gamma_real(0.001).unwrap(), 999.4237724845954453) < 1e-13);
        assert!(rel(gamma_real(33.33).unwrap(), 8.3142678602644750341e35) < 1e-13);
        assert!(rel(gamma_real(170.0).unwrap(), 4.2690680090047052749e304) < 1e-13);
        assert!(matches!(gamma_real(0.0), Err(SpecFunError::Pole(_))));
        assert!(matches!(gamma_real(-3.0), Err(SpecFunError::Pole(_))));
        assert!(gamma_real(171.0).is_err());
    }

    #[test]
    fn airy_anchors() {
        // Ai(0) = 3^(-2/3)/Γ(2/3)
        let v = airy_series(0.0).unwrap();
        let want = 3.0f64.powf(-2.0 / 3.0) / gamma_real(2.0 / 3.0).unwrap();
        assert!(rel(v.ai, want) < 1e-14);
        assert!(rel(airy_series(1.0).unwrap().ai, 0.13529241631288141552) < 1e-13);
        assert!(rel(airy_series(1.0).unwrap().bi, 1.2074235949528712594) < 1e-13);
        assert!(rel(airy_series(-8.0).unwrap().ai, -0.052705050356386202622) < 1e-12);
        assert!(rel(airy_series(-8.0).unwrap().bi, -0.33125158075113785997) < 1e-12);
        assert!(rel(airy_series(8.0).unwrap().ai, 4.6922076160992316256e-8) < 1e-12);
        assert!(rel(airy_series(8.0).unwrap().bi, 1199586.0041244599309) < 1e-12);
        assert!(rel(airy_series(3.0).unwrap().aip, -0.011912976705951318474) < 1e-12);
        assert!(airy_series(8.5).is_err());
        assert!(airy_series(-9.0).is_err());
    }

    #[test]
    fn airy_wronskian() {
        let inv_pi = 1.0 / std::f64::consts::PI;
        for t in [-5.0, 0.0, 3.0] {
            let v = airy_series(t).unwrap();
            let w = v.ai * v.bip - v.aip * v.bi;
            assert!((w - inv_pi).abs() < 1e-12 * inv_pi, "w = {w} at {t}");
        }
    }

    #[test]
    fn builder_derivatives_match_finite_differences() {
        let builders: Vec<NamedCoefficient> = vec![
            airy_q(),
            bessel_normal_q(100.0),
            legendre_q(120.0, 20.0),
            monomial_q(3),
            monomial_q(2),
            bumps_q(10.0),
            three_tp_q(10.0),
            cosine_q(10.0),
        ];
        let mut rng = StdRng::seed_from_u64(42);
        for nc in &builders {
            let (a, b) = nc.domain;
            let pad = 0.05 * (b - a);
            let dqscale = (0..=100)
                .map(|k| nc.dq(a + pad + (b - a - 2.0 * pad) * k as f64 / 100.0).abs())
                .fold(0.0f64, f64::max);
            for _ in 0..100 {
                let t = rng.gen_range(a + pad..b - pad);
                let h = 1e-6 * t.abs().max(1.0);
                let fd = (nc.q(t + h) - nc.q(t - h)) / (2.0 * h);
                let d = nc.dq(t);
                assert!(
                    (fd - d).abs() <= 1e-7 * d.abs().max(dqscale),
                    "{}: dq mismatch at {t}: {fd} vs {d}",
                    nc.id
                );
            }
        }
    }

    #[test]
    fn builder_roots() {
        let three = three_tp_q(1.0);
        let roots: Vec<f64> = three.turning_points.iter().map(|t| t.location).collect();
        assert!((roots[0] - (-9.817493179110059)).abs() < 1e-12);
        assert!(roots[1].abs() < 1e-12);
        assert!((roots[2] - 4.999999999916672).abs() < 1e-12);
        for tp in &three.turning_points {
            assert!(three.q(tp.location).abs() <= 1e-12);
        }

        let bes = bessel_normal_q(100.0);
        let c = bes.turning_points[0].location;
        assert!((c - 99.998749992187402342).abs() < 1e-10);
        assert!(bes.q(c).abs() <= 1e-12);

        let cos = cosine_q(1.0);
        assert_eq!(cos.turning_points.len(), 12);
        let locs: Vec<f64> = cos.turning_points.iter().map(|t| t.location).collect();
        assert_eq!(locs[0], -11.0);
        assert_eq!(locs[11], 11.0);
        for l in &locs {
            assert_eq!(cos.q(*l), 0.0);
        }

        let leg = legendre_q(120.0, 20.0);
        assert!((leg.turning_points[0].location - 2.4820967426575039858).abs() < 1e-12);
    }

    #[test]
    fn monomial_ics_anchors() {
        for k in 1..=9 {
            let ics = monomial_basis_ics(k).unwrap();
            assert_eq!(ics.u0, 0.0);
            let w = ics.u0 * ics.vp0 - ics.up0 * ics.v0;
            assert!((w - 1.0).abs() < 1e-12, "wronskian {w} for k={k}");
        }
        let ics = monomial_basis_ics(2).unwrap();
        assert!(rel(ics.up0, 0.69136733903629335053) < 1e-13);
        assert!(rel(ics.v0, -1.4464090846320771425) < 1e-13);
        assert!(rel(ics.vp0, 0.69136733903629335053) < 1e-13);
    }

    #[test]
    fn condition_number_examples() {
        // f = t^3
        let k = condition_number(|t| t * t * t, |t| 3.0 * t * t, 2.0).unwrap();
        assert!((k - 3.0).abs() < 1e-14);
        let k = condition_number(f64::exp, f64::exp, -7.25).unwrap();
        assert!((k - 7.25).abs() < 1e-14);
        let k = condition_number(f64::cos, |t| -t.sin(), 0.0).unwrap();
        assert_eq!(k, 0.0);
        assert!(condition_number(f64::sin, f64::cos, 0.0).is_none());
        assert_eq!(predicted_error(10.0), 10.0 * EPS0);
    }

    #[test]
    fn sin_pi_matches_reduction() {
        for x in [-10.5, -3.25, -0.5, 0.25, 7.75, 101.5] {
            let direct = (std::f64::consts::PI * x).sin();
            assert!((sin_pi(x) - direct).abs() < 1e-12);
        }
        assert_eq!(sin_pi(5.0), 0.0);
    }
}
