//! Scalar root finding on a bracketing interval.
//!
//! Brent's method: inverse quadratic interpolation with a secant/bisection
//! safeguard. The bracket `[a, b]` must satisfy `f(a) * f(b) <= 0`.

use crate::error::{Error, Result};

/// Find a root of `f` in `[a, b]` to absolute x-tolerance `tol`.
pub fn brent<F>(f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if !fa.is_finite() || !fb.is_finite() {
        return Err(Error::RootBracket(format!(
            "non-finite endpoint values f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::RootBracket(format!(
            "no sign change on [{a}, {b}]: f(a) = {fa:.3e}, f(b) = {fb:.3e}"
        )));
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;

    for _ in 0..max_iter {
        if fb.abs() > fc.abs() {
            // Keep b as the best estimate.
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // Attempt inverse quadratic interpolation (secant if a == c).
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * xm * s, 1.0 - s)
            } else {
                let q = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0)),
                    (q - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::RootBracket(format!("non-finite value f({b}) = {fb}")));
        }
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }
    Err(Error::RootBracket(format!(
        "no convergence after {max_iter} iterations (last bracket width {:.3e})",
        (c - b).abs()
    )))
}

/// Expand `hi` geometrically from `lo` until `f` changes sign, then solve.
///
/// `hi_limit` caps the expansion; reaching it without a sign change is an
/// error carrying `context`.
pub fn brent_expanding<F>(
    f: F,
    lo: f64,
    mut hi: f64,
    hi_limit: f64,
    tol: f64,
    max_iter: usize,
    context: &str,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let flo = f(lo);
    loop {
        let fhi = f(hi);
        if fhi.is_finite() && flo.signum() != fhi.signum() {
            return brent(&f, lo, hi, tol, max_iter);
        }
        if hi >= hi_limit {
            return Err(Error::RootBracket(format!(
                "{context}: no sign change up to limit {hi_limit:.3e}"
            )));
        }
        hi = (hi * 2.0).min(hi_limit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn test_quadratic_root() {
        let r = brent(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 100).unwrap();
        assert_abs_diff_eq!(r, std::f64::consts::SQRT_2, epsilon = 1e-13);
    }

    #[test]
    fn test_transcendental_root() {
        // x = cos(x) near 0.739.
        let r = brent(|x| x - x.cos(), 0.0, 1.0, 1e-14, 100).unwrap();
        assert_abs_diff_eq!(r - r.cos(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn test_root_at_endpoint() {
        let r = brent(|x| x - 1.0, 1.0, 3.0, 1e-12, 100).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn test_no_bracket_errors() {
        let err = brent(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).unwrap_err();
        assert!(matches!(err, Error::RootBracket(_)));
    }

    #[test]
    fn test_steep_function() {
        let r = brent(|x| (50.0 * (x - 0.123)).tanh(), 0.0, 1.0, 1e-14, 200).unwrap();
        assert_abs_diff_eq!(r, 0.123, epsilon = 1e-12);
    }

    #[test]
    fn test_expanding_bracket() {
        let r = brent_expanding(|x| x.ln(), 0.5, 0.6, 1e6, 1e-14, 200, "log root").unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn test_expanding_bracket_limit_errors() {
        let err =
            brent_expanding(|x| -1.0 - x * x, 0.0, 1.0, 64.0, 1e-12, 100, "hopeless").unwrap_err();
        assert!(matches!(err, Error::RootBracket(_)));
    }
}
