//! Small numerical kernels: bracketed bisection, adaptive Simpson
//! quadrature and golden-section maximisation.

use crate::error::{Error, Result};

const MAX_BISECT_ITERS: usize = 200;
const MAX_SIMPSON_DEPTH: u32 = 48;

/// Root of `f` on `[lo, hi]` by bisection. `f(lo)` and `f(hi)` must differ in
/// sign (a zero at either end is returned directly).
pub fn bisect<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a), f(b));
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::NoRootInBracket { lo, hi, reason: "function is NaN at an endpoint".into() });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoRootInBracket {
            lo,
            hi,
            reason: format!("no sign change (f(lo) = {fa}, f(hi) = {fb})"),
        });
    }
    for _ in 0..MAX_BISECT_ITERS {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol {
            return Ok(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, MAX_SIMPSON_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::NonConvergentIntegration { lo: a, hi: b });
    }
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::NonConvergentIntegration { lo: a, hi: b });
    }
    // halving stops at the rounding floor of the running estimate
    let child_tol = (0.5 * tol).max(1e-13 * (left + right).abs());
    Ok(simpson_step(f, a, m, fa, flm, fm, left, child_tol, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, child_tol, depth - 1)?)
}

/// Maximiser of a unimodal `f` on `[a, b]` by golden-section search.
pub fn golden_max<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
