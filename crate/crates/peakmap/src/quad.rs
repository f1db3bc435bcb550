//! Adaptive quadrature over finite intervals.
//!
//! Adaptive Simpson with interval bisection and the usual Richardson error
//! estimate `|S2 - S1| / 15`. The interval is seeded with a fixed initial
//! panelization (so features narrower than the naive three-point sample
//! spacing still register), then panels are split until the local estimate
//! meets its share of the absolute tolerance or the subdivision budget runs
//! out.

use crate::error::{Error, Result};

/// Default absolute tolerance used by the time-map integrals.
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
/// Default subdivision budget.
pub const DEFAULT_MAX_SUBDIVISIONS: usize = 10_000;
/// Panels the interval is cut into before adaptation begins.
const INITIAL_PANELS: usize = 16;

/// Integrate `f` over `[a, b]` to absolute tolerance `abs_tol`.
///
/// Returns an error if `f` evaluates to a non-finite value or the budget of
/// `max_subdivisions` interval splits is exhausted.
pub fn integrate<F>(f: F, a: f64, b: f64, abs_tol: f64, max_subdivisions: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid(format!("integration bounds ({a}, {b}) must be finite")));
    }
    if abs_tol <= 0.0 {
        return Err(Error::invalid("quadrature tolerance must be positive"));
    }
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    let eval = |x: f64| -> Result<f64> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::QuadratureDomain(format!("integrand non-finite at x = {x}")))
        }
    };

    // Work stack of (left, mid, f(left), f(mid), f(right), simpson, tol).
    struct Seg {
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        s: f64,
        tol: f64,
    }
    let simpson = |fa: f64, fm: f64, fb: f64, h: f64| (fa + 4.0 * fm + fb) * h / 6.0;

    let width = (hi - lo) / INITIAL_PANELS as f64;
    let panel_tol = abs_tol / INITIAL_PANELS as f64;
    let mut stack = Vec::with_capacity(2 * INITIAL_PANELS);
    for k in 0..INITIAL_PANELS {
        let pa = lo + k as f64 * width;
        let pb = if k + 1 == INITIAL_PANELS { hi } else { lo + (k + 1) as f64 * width };
        let fa = eval(pa)?;
        let fb = eval(pb)?;
        let fm = eval(0.5 * (pa + pb))?;
        let s = simpson(fa, fm, fb, pb - pa);
        stack.push(Seg { a: pa, b: pb, fa, fm, fb, s, tol: panel_tol });
    }
    let mut total = 0.0;
    let mut splits = 0usize;

    while let Some(seg) = stack.pop() {
        let m = 0.5 * (seg.a + seg.b);
        let lm = 0.5 * (seg.a + m);
        let rm = 0.5 * (m + seg.b);
        let flm = eval(lm)?;
        let frm = eval(rm)?;
        let sl = simpson(seg.fa, flm, seg.fm, m - seg.a);
        let sr = simpson(seg.fm, frm, seg.fb, seg.b - m);
        let err = (sl + sr - seg.s) / 15.0;
        // Interval width underflow: accept the refined estimate as-is.
        if err.abs() <= seg.tol || m - seg.a < f64::EPSILON * m.abs().max(1.0) {
            total += sl + sr + err;
            continue;
        }
        splits += 1;
        if splits > max_subdivisions {
            return Err(Error::QuadratureBudget(format!(
                "exceeded {max_subdivisions} subdivisions (tol {abs_tol:.1e})"
            )));
        }
        let half_tol = 0.5 * seg.tol;
        stack.push(Seg { a: seg.a, b: m, fa: seg.fa, fm: flm, fb: seg.fm, s: sl, tol: half_tol });
        stack.push(Seg { a: m, b: seg.b, fa: seg.fm, fm: frm, fb: seg.fb, s: sr, tol: half_tol });
    }
    Ok(sign * total)
}
