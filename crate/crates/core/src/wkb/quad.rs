//! Adaptive Simpson quadrature.
//!
//! The boundary quadratures feed integrands that are smooth after an
//! endpoint substitution, so a classic adaptive Simpson rule with
//! Richardson-corrected panels is accurate and simple to reason about.

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Non-finite samples abort the refinement of the offending panel (the
/// callers substitute away their singularities, so this only guards
/// roundoff at panel edges).
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = finite_or_zero(f(a));
    let fb = finite_or_zero(f(b));
    let m = 0.5 * (a + b);
    let fm = finite_or_zero(f(m));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(f, a, b, fa, fm, fb, whole, tol, 52)
}

#[inline]
fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
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
    let flm = finite_or_zero(f(lm));
    let frm = finite_or_zero(f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        // Richardson correction of the composite estimate
        left + right + delta / 15.0
    } else {
        adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exact() {
        let v = integrate(&|x| 3.0 * x * x, 0.0, 2.0, 1e-12);
        assert_abs_diff_eq!(v, 8.0, epsilon = 1e-10);
    }

    #[test]
    fn oscillatory() {
        let v = integrate(&|x: f64| x.sin(), 0.0, PI, 1e-12);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn endpoint_sqrt_kink() {
        // integral of sqrt(1 - x) over [0, 1] = 2/3
        let v = integrate(&|x: f64| (1.0 - x).sqrt(), 0.0, 1.0, 1e-12);
        assert_abs_diff_eq!(v, 2.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_interval() {
        assert_eq!(integrate(&|x| x, 1.0, 1.0, 1e-12), 0.0);
    }
}
