//! Small numeric helpers shared across modules.

use statrs::function::erf;

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    erf::erfc(x)
}

/// Inverse complementary error function, polished to double precision.
///
/// The rational-approximation seed from `statrs` is refined with two Newton
/// steps on `erfc(x) - y = 0` so that round trips through [`erfc`] hold to
/// better than 1e-12 over the range used by Q-factor conversions.
pub fn erfc_inv(y: f64) -> f64 {
    if !(0.0..=2.0).contains(&y) {
        return f64::NAN;
    }
    if y == 0.0 {
        return f64::INFINITY;
    }
    if y == 2.0 {
        return f64::NEG_INFINITY;
    }
    let mut x = erf::erfc_inv(y);
    // d/dx erfc(x) = -2/sqrt(pi) * exp(-x^2)
    for _ in 0..2 {
        let f = erf::erfc(x) - y;
        let d = -2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp();
        if d == 0.0 {
            break;
        }
        x -= f / d;
    }
    x
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// ln(1 + e^x), stable for large |x|.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Binary entropy in bits; 0*log0 = 0.
pub fn binary_entropy(p: f64) -> f64 {
    debug_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
    let mut h = 0.0;
    for v in [p, 1.0 - p] {
        if v > 0.0 {
            h -= v * v.log2();
        }
    }
    h
}

/// Golden-section search for the maximum of a unimodal function on [lo, hi].
///
/// Returns (argmax, max). `hit_boundary` in the second tuple slot of the
/// extended variant flags a maximum within `2*tol` of either bracket end.
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> (f64, f64, bool) {
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    let boundary = (x - lo).abs() < 2.0 * tol || (hi - x).abs() < 2.0 * tol;
    (x, fx, boundary)
}
