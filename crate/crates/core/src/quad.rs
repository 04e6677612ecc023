//! Adaptive Simpson quadrature on finite intervals.
//!
//! Kept deliberately small: the integrands in this crate (noise densities and
//! polynomial-weighted densities) are smooth away from a handful of points,
//! and adaptive Simpson with a generous depth limit resolves them to near
//! machine precision. Infinite domains are handled by the callers, which know
//! their integrands' decay and choose explicit cutoffs.

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Uses adaptive Simpson with Richardson extrapolation. The tolerance is
/// distributed across subintervals in the usual halving scheme; the depth
/// limit (48) corresponds to subintervals ~1e-14 of the original width, at
/// which point the refinement is accepted as-is.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let m = 0.5 * (lo + hi);
    let (flo, fm, fhi) = (f(lo), f(m), f(hi));
    let whole = simpson(lo, hi, flo, fm, fhi);
    sign * adapt(&f, lo, hi, flo, fm, fhi, whole, tol.abs().max(1e-300), 48)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let refined = left + right;
    if depth == 0 || (refined - whole).abs() <= 15.0 * tol {
        refined + (refined - whole) / 15.0
    } else {
        let half = 0.5 * tol;
        adapt(f, a, m, fa, flm, fm, left, half, depth - 1)
            + adapt(f, m, b, fm, frm, fb, right, half, depth - 1)
    }
}
