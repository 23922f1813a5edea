use phasefn::phase::*;
use phasefn::specfun::*;

fn main() {
    let nc = monomial_q(3);
    let spec = nc.coefficient_spec(DerivativeMode::Supplied);
    let want = 0.39151360564424219565f64;
    for eps in [1e-10, 1e-12, 3e-14] {
        let mut cfg = PhaseConfig::with_eps(eps);
        cfg.window = Some((0.0, 10.0));
        let wv = window_values(&spec, 0.0, 10.0, &cfg).unwrap();
        println!("eps={eps:.0e}: alpha'(0) rel={:.2e}  alpha''(0)={:.6e}", (wv.alpha_p/want-1.0).abs(), wv.alpha_pp);
    }
    // also: with order 24 instead of 16
    for order in [16usize, 24, 32] {
        let mut cfg = PhaseConfig::default();
        cfg.order = order;
        cfg.window = Some((0.0, 10.0));
        let wv = window_values(&spec, 0.0, 10.0, &cfg).unwrap();
        println!("l={order}: alpha'(0) rel={:.2e}", (wv.alpha_p/want-1.0).abs());
    }
}
