//! Closed-form reference solutions used to cross-check simulations.
//!
//! These are computed by quadrature or direct algebra, independently of
//! the RK4/fixed-point path they are compared against.

/// Cumulative composite Simpson: antiderivative values of `f` at the grid
/// points, one Simpson panel per interval using the interval midpoint.
pub fn cumulative_simpson(f: impl Fn(f64) -> f64, times: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    out.push(0.0);
    for pair in times.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let h = b - a;
        acc += h / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
        out.push(acc);
    }
    out
}

/// First gap component of the two-state augmented example, from the
/// variation-of-constants formula for `Ė1 - w(t) E1 = h1(t)`, `E1(0) = 0`:
/// `E1(t) = exp(W(t)) ∫_0^t h1(τ) exp(-W(τ)) dτ` with `W = ∫ w` and
/// `h1 = (λ1 - w) ẽ1 - λ2 ẽ2` along `ẽ_i(τ) = exp(λ_i τ) e0_i`.
///
/// All integrals are evaluated by composite Simpson on the given grid
/// (with midpoints), matching the integrator's fourth order.
pub fn paper2d_gap1_quadrature(
    w: impl Fn(f64) -> f64,
    lambda: (f64, f64),
    e0: (f64, f64),
    times: &[f64],
) -> Vec<f64> {
    let (l1, l2) = lambda;
    let (e1, e2) = e0;
    let h1 = |tau: f64| (l1 - w(tau)) * (l1 * tau).exp() * e1 - l2 * (l2 * tau).exp() * e2;

    // refined grid (half steps) so the inner integrand has W available at
    // its own panel midpoints
    let mut refined = Vec::with_capacity(times.len() * 2 - 1);
    for pair in times.windows(2) {
        refined.push(pair[0]);
        refined.push(0.5 * (pair[0] + pair[1]));
    }
    refined.push(*times.last().unwrap());
    let w_cum = cumulative_simpson(&w, &refined);

    let integrand = |idx: usize| h1(refined[idx]) * (-w_cum[idx]).exp();
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    out.push(0.0);
    for (k, pair) in times.windows(2).enumerate() {
        let h = pair[1] - pair[0];
        acc += h / 6.0 * (integrand(2 * k) + 4.0 * integrand(2 * k + 1) + integrand(2 * k + 2));
        out.push((w_cum[2 * k + 2]).exp() * acc);
    }
    out
}

/// Third state of the chained plant under the static associated law
/// `u = (λ1 x1, λ2 x2)`:
/// `x3(t) = x3(0) - λ1 x1(0) x2(0) / (λ1 + λ2) * (1 - exp((λ1 + λ2) t))`.
pub fn chained3_x3_closed_form(lambda: (f64, f64), x0: (f64, f64, f64), t: f64) -> f64 {
    let (l1, l2) = lambda;
    let (x1, x2, x3) = x0;
    x3 - l1 * x1 * x2 / (l1 + l2) * (1.0 - ((l1 + l2) * t).exp())
}

/// Third gap component for the chained plant:
/// `E3(t) = e3(0) (exp(λ3 t) - 1) - λ1 e1(0) e2(0) (exp((λ1+λ2) t) - 1) / (λ1 + λ2)`.
pub fn chained3_gap3_closed_form(lambda: (f64, f64, f64), e0: (f64, f64, f64), t: f64) -> f64 {
    let (l1, l2, l3) = lambda;
    let (e1, e2, e3) = e0;
    e3 * ((l3 * t).exp() - 1.0) - l1 * e1 * e2 * (((l1 + l2) * t).exp() - 1.0) / (l1 + l2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_polynomials_exactly() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.3).collect();
        // Simpson is exact through cubics
        let cubic = |t: f64| 2.0 * t * t * t - t + 1.0;
        let exact = |t: f64| 0.5 * t * t * t * t - 0.5 * t * t + t;
        for (k, v) in cumulative_simpson(cubic, &times).iter().enumerate() {
            assert!((v - exact(times[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn simpson_converges_at_fourth_order() {
        let run = |n: usize| -> f64 {
            let times: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
            let vals = cumulative_simpson(f64::sin, &times);
            (vals[n] - (1.0 - 1.0f64.cos())).abs()
        };
        let ratio = run(50) / run(100);
        assert!(ratio > 14.0, "ratio {ratio}");
    }

    #[test]
    fn gap1_quadrature_matches_constant_disturbance_algebra() {
        // with w = -2 and unit eigenvalues the integral is elementary:
        // E1(t) = 2 (exp(-t) - exp(-2t))
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.01).collect();
        let vals = paper2d_gap1_quadrature(|_| -2.0, (-1.0, -1.0), (1.0, 1.0), &times);
        for (k, v) in vals.iter().enumerate().step_by(100) {
            let t = times[k];
            let exact = 2.0 * ((-t).exp() - (-2.0 * t).exp());
            assert!((v - exact).abs() < 1e-10, "t = {t}: {v} vs {exact}");
        }
        // decays to zero
        assert!(vals.last().unwrap().abs() < 1e-8);
    }

    #[test]
    fn gap1_quadrature_zero_disturbance_limit() {
        // w = 0: E1(t) -> e2(0) - e1(0)
        let times: Vec<f64> = (0..=4000).map(|k| k as f64 * 0.01).collect();
        let vals = paper2d_gap1_quadrature(|_| 0.0, (-1.0, -1.0), (1.0, 0.25), &times);
        let expected = 0.25 - 1.0;
        assert!((vals.last().unwrap() - expected).abs() < 1e-8);
    }

    #[test]
    fn chained3_limits() {
        let x3_inf = chained3_x3_closed_form((-1.0, -1.0), (1.0, 1.0, 1.0), 1e3);
        assert!((x3_inf - 0.5).abs() < 1e-12);
        let e3_inf = chained3_gap3_closed_form((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0), 1e3);
        assert!((e3_inf - -0.5).abs() < 1e-12);
        // gap starts at zero
        assert_eq!(
            chained3_gap3_closed_form((-1.0, -2.0, -3.0), (1.0, 1.0, 1.0), 0.0),
            0.0
        );
    }
}
