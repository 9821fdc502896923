//! Special functions: log-gamma, regularized incomplete beta/gamma, and the
//! distribution CDFs/quantiles built on them.

use crate::error::{Error, Result};
use crate::numerics::Probability;

const LN_2PI: f64 = 1.837_877_066_409_345_6;
const LN_PI: f64 = 1.144_729_885_849_400_2;

// Lanczos approximation, g = 7, 9 terms.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural logarithm of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_unchecked(x))
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection: ln Γ(x) = ln(π / sin(πx)) − ln Γ(1 − x)
        LN_PI - (std::f64::consts::PI * x).sin().ln() - ln_gamma_unchecked(1.0 - x)
    } else {
        let z = x - 1.0;
        let mut acc = LANCZOS[0];
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + LANCZOS_G + 0.5;
        0.5 * LN_2PI + (z + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Regularized incomplete beta function `I_x(a, b)`.
///
/// Continued-fraction evaluation (modified Lentz), with the usual symmetry
/// switch at `x > (a + 1) / (a + b + 2)` so the fraction converges fast on
/// both sides.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<Probability> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("reg_inc_beta requires x in [0,1], got {x}")));
    }
    if a <= 0.0 || b <= 0.0 {
        return Err(Error::Domain(format!(
            "reg_inc_beta requires a, b > 0, got a={a}, b={b}"
        )));
    }
    if x == 0.0 {
        return Ok(Probability::ZERO);
    }
    if x == 1.0 {
        return Ok(Probability::ONE);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln()
        - (ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b));
    let front = ln_front.exp();
    let value = if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    };
    Ok(Probability::clamped(value))
}

// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-16;
    const FPMIN: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// CDF of the F distribution with `d1`, `d2` degrees of freedom at `y >= 0`.
pub fn f_cdf(y: f64, d1: f64, d2: f64) -> Result<Probability> {
    if !y.is_finite() || y < 0.0 {
        return Err(Error::Domain(format!("f_cdf requires y >= 0, got {y}")));
    }
    if d1 <= 0.0 || d2 <= 0.0 {
        return Err(Error::Domain(format!(
            "f_cdf requires d1, d2 > 0, got d1={d1}, d2={d2}"
        )));
    }
    if y == 0.0 {
        return Ok(Probability::ZERO);
    }
    reg_inc_beta(d1 * y / (d1 * y + d2), 0.5 * d1, 0.5 * d2)
}

/// Upper tail `1 - f_cdf(y; d1, d2)`, evaluated through the complementary
/// incomplete beta so small tail probabilities keep full precision.
pub fn f_sf(y: f64, d1: f64, d2: f64) -> Result<Probability> {
    if !y.is_finite() || y < 0.0 {
        return Err(Error::Domain(format!("f_sf requires y >= 0, got {y}")));
    }
    if d1 <= 0.0 || d2 <= 0.0 {
        return Err(Error::Domain(format!(
            "f_sf requires d1, d2 > 0, got d1={d1}, d2={d2}"
        )));
    }
    if y == 0.0 {
        return Ok(Probability::ONE);
    }
    reg_inc_beta(d2 / (d1 * y + d2), 0.5 * d2, 0.5 * d1)
}

/// Regularized lower incomplete gamma function `P(a, x)`.
///
/// Series for `x < a + 1`, continued fraction otherwise.
pub fn reg_lower_gamma(a: f64, x: f64) -> Result<Probability> {
    if a <= 0.0 {
        return Err(Error::Domain(format!("reg_lower_gamma requires a > 0, got {a}")));
    }
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!("reg_lower_gamma requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(Probability::ZERO);
    }
    let value = if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cf(a, x)
    };
    Ok(Probability::clamped(value))
}

fn gamma_series(a: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 1000;
    const EPS: f64 = 1e-16;
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (a * x.ln() - x - ln_gamma_unchecked(a)).exp()
}

fn gamma_cf(a: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 1000;
    const EPS: f64 = 1e-16;
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h * (a * x.ln() - x - ln_gamma_unchecked(a)).exp()
}

/// Chi-squared CDF with `k` degrees of freedom.
pub fn chisq_cdf(q: f64, k: u32) -> Result<Probability> {
    if k == 0 {
        return Err(Error::Domain("chisq_cdf requires k >= 1".into()));
    }
    reg_lower_gamma(0.5 * k as f64, 0.5 * q)
}

/// Chi-squared quantile: `q` such that `chisq_cdf(q, k) = p`, for `p in [0, 1)`.
///
/// Bracketed bisection down to a coarse interval, then Newton steps against
/// the density.
pub fn chisq_quantile(p: f64, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("chisq_quantile requires k >= 1".into()));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "chisq_quantile requires p in [0, 1), got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let kf = k as f64;
    // Expand an upper bracket.
    let mut hi = kf.max(1.0);
    while chisq_cdf(hi, k)?.value() < p {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Domain(format!("chisq_quantile bracket failed for p={p}")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if chisq_cdf(mid, k)?.value() < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Newton polish. The density is strictly positive on the bracket interior.
    let ln_norm = -0.5 * kf * std::f64::consts::LN_2 - ln_gamma_unchecked(0.5 * kf);
    let mut q = 0.5 * (lo + hi);
    for _ in 0..12 {
        let f = chisq_cdf(q, k)?.value() - p;
        let ln_pdf = ln_norm + (0.5 * kf - 1.0) * q.ln() - 0.5 * q;
        let step = f / ln_pdf.exp();
        let next = q - step;
        if next.is_finite() && next > 0.0 {
            q = next;
        }
        if step.abs() <= 1e-13 * q.max(1.0) {
            break;
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson quadrature, the independent oracle for the
    /// incomplete-beta and F-CDF checks.
    pub(crate) fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
        }
        fn recurse(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            whole: f64,
            m: f64,
            fm: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let (left, lm, flm) = simpson(f, a, fa, m, fm);
            let (right, rm, frm) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                left + right + delta / 15.0
            } else {
                recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                    + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let (whole, m, fm) = simpson(f, a, fa, b, fb);
        recurse(f, a, fa, b, fb, whole, m, fm, tol, 50)
    }

    fn beta_density(a: f64, b: f64) -> impl Fn(f64) -> f64 {
        let ln_b = ln_gamma(a).unwrap() + ln_gamma(b).unwrap() - ln_gamma(a + b).unwrap();
        move |t: f64| {
            if t <= 0.0 || t >= 1.0 {
                0.0
            } else {
                ((a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln() - ln_b).exp()
            }
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).unwrap().abs() < 1e-14);
        assert!(ln_gamma(2.0).unwrap().abs() < 1e-14);
        // Γ(1/2) = √π
        let expected = std::f64::consts::PI.sqrt().ln();
        assert!((ln_gamma(0.5).unwrap() - expected).abs() < 1e-13);
        // Γ(11) = 10!
        let expected = (3_628_800.0f64).ln();
        assert!((ln_gamma(11.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ln_gamma_domain_error() {
        assert!(ln_gamma(0.0).is_err());
        assert!(ln_gamma(-1.5).is_err());
        assert!(ln_gamma(f64::NAN).is_err());
    }

    #[test]
    fn ln_gamma_recurrence() {
        // |ln Γ(x+1) − ln Γ(x) − ln x| small across the working range.
        let mut x = 0.1;
        while x < 1e4 {
            let lhs = ln_gamma(x + 1.0).unwrap() - ln_gamma(x).unwrap() - x.ln();
            assert!(lhs.abs() <= 1e-10, "recurrence violated at x={x}: {lhs:e}");
            x *= 1.37;
        }
    }

    #[test]
    fn reg_inc_beta_endpoints_and_symmetry() {
        assert_eq!(reg_inc_beta(0.0, 2.0, 5.0).unwrap().value(), 0.0);
        assert_eq!(reg_inc_beta(1.0, 2.0, 5.0).unwrap().value(), 1.0);
        // I_{1/2}(a, a) = 1/2
        let half = reg_inc_beta(0.5, 3.0, 3.0).unwrap().value();
        assert!((half - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reg_inc_beta_against_quadrature() {
        // Closed form first: I_{0.25}(2,3) = 6x² − 8x³ + 3x⁴ at x = 1/4.
        let exact = 0.26171875;
        let got = reg_inc_beta(0.25, 2.0, 3.0).unwrap().value();
        assert!((got - exact).abs() < 1e-12);

        // Arcsine law closed form for the singular-endpoint case:
        // I_x(1/2, 1/2) = (2/π) asin(√x).
        let got = reg_inc_beta(0.1, 0.5, 0.5).unwrap().value();
        let exact = 2.0 / std::f64::consts::PI * (0.1f64.sqrt()).asin();
        assert!((got - exact).abs() < 1e-12);

        // Quadrature oracle on cases with a bounded density (a, b >= 1).
        let cases = [
            (0.25, 2.0, 3.0),
            (0.7, 4.5, 1.25),
            (0.9, 10.0, 2.0),
            (0.35, 25.0, 17.0),
            (0.55, 1.0, 23.5),
        ];
        for &(x, a, b) in &cases {
            let oracle = adaptive_simpson(&beta_density(a, b), 0.0, x, 1e-13);
            let got = reg_inc_beta(x, a, b).unwrap().value();
            assert!(
                (got - oracle).abs() < 1e-10,
                "I_{x}({a},{b}): got {got}, oracle {oracle}"
            );
        }
    }

    #[test]
    fn reg_inc_beta_domain_errors() {
        assert!(reg_inc_beta(-0.1, 1.0, 1.0).is_err());
        assert!(reg_inc_beta(1.1, 1.0, 1.0).is_err());
        assert!(reg_inc_beta(0.5, 0.0, 1.0).is_err());
        assert!(reg_inc_beta(0.5, 1.0, -2.0).is_err());
    }

    #[test]
    fn f_cdf_endpoints_and_median() {
        assert_eq!(f_cdf(0.0, 2.0, 10.0).unwrap().value(), 0.0);
        // F(a, a) has median 1.
        let med = f_cdf(1.0, 5.0, 5.0).unwrap().value();
        assert!((med - 0.5).abs() < 1e-12);
        assert!(f_cdf(-0.5, 2.0, 10.0).is_err());
    }

    #[test]
    fn f_cdf_closed_form_and_quadrature() {
        // d1 = 2, d2 = 10: I_x(1, 5) = 1 − (1 − x)^5 with x = 2y/(2y + 10).
        let x: f64 = 6.0 / 16.0;
        let exact = 1.0 - (1.0 - x).powi(5);
        let got = f_cdf(3.0, 2.0, 10.0).unwrap().value();
        assert!((got - exact).abs() < 1e-13);

        // Independent route: integrate the F density directly.
        let (d1, d2, y) = (3.0, 7.0, 2.2);
        let ln_b = ln_gamma(0.5 * d1).unwrap() + ln_gamma(0.5 * d2).unwrap()
            - ln_gamma(0.5 * (d1 + d2)).unwrap();
        let density = move |t: f64| {
            if t <= 0.0 {
                0.0
            } else {
                (0.5 * d1 * (d1 / d2).ln() + (0.5 * d1 - 1.0) * t.ln()
                    - 0.5 * (d1 + d2) * (1.0 + d1 * t / d2).ln()
                    - ln_b)
                    .exp()
            }
        };
        let oracle = adaptive_simpson(&density, 0.0, y, 1e-13);
        let got = f_cdf(y, d1, d2).unwrap().value();
        assert!((got - oracle).abs() < 1e-10);
    }

    #[test]
    fn f_sf_complements_f_cdf() {
        for &(y, d1, d2) in &[(0.5, 2.0, 8.0), (3.7, 2.0, 47.0), (12.0, 4.0, 6.0)] {
            let cdf = f_cdf(y, d1, d2).unwrap().value();
            let sf = f_sf(y, d1, d2).unwrap().value();
            assert!((cdf + sf - 1.0).abs() < 1e-12);
        }
        // Deep tail keeps precision instead of rounding to 0.
        let sf = f_sf(1e4, 2.0, 40.0).unwrap().value();
        assert!(sf > 0.0 && sf < 1e-30);
    }

    #[test]
    fn chisq_quantile_known_values() {
        assert_eq!(chisq_quantile(0.0, 4).unwrap(), 0.0);
        // Closed form for k = 4: CDF(q) = 1 − e^{−q/2}(1 + q/2).
        let cdf4 = |q: f64| 1.0 - (-0.5 * q).exp() * (1.0 + 0.5 * q);
        for &p in &[0.5, 0.9, 0.99, 0.999] {
            // Bisection oracle on the closed form.
            let (mut lo, mut hi) = (0.0f64, 100.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if cdf4(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let oracle = 0.5 * (lo + hi);
            let got = chisq_quantile(p, 4).unwrap();
            assert!((got - oracle).abs() < 1e-9, "p={p}: got {got}, oracle {oracle}");
        }
        assert!((chisq_quantile(0.99, 4).unwrap() - 13.2767).abs() < 1e-3);
        assert!((chisq_quantile(0.5, 4).unwrap() - 3.3567).abs() < 1e-3);
    }

    #[test]
    fn chisq_quantile_domain_errors() {
        assert!(chisq_quantile(1.0, 4).is_err());
        assert!(chisq_quantile(-0.1, 4).is_err());
        assert!(chisq_quantile(0.5, 0).is_err());
    }

    #[test]
    fn chisq_round_trip() {
        for k in [1u32, 2, 4, 7, 30] {
            for &p in &[0.01, 0.2, 0.5, 0.8, 0.99, 0.9999] {
                let q = chisq_quantile(p, k).unwrap();
                let back = chisq_cdf(q, k).unwrap().value();
                assert!((back - p).abs() < 1e-7, "k={k}, p={p}: round-trip {back}");
            }
        }
    }

    #[test]
    fn chisq_quantile_monotone() {
        let mut prev = 0.0;
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let q = chisq_quantile(p, 4).unwrap();
            assert!(q >= prev);
            prev = q;
        }
    }
}
