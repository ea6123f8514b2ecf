//! Far-field boundary quadratures and their power-law closed forms.
//!
//! In nondimensional variables the leading-order exit boundary of the
//! no-diffusion region, the first correction splitting the double root,
//! and the on-boundary action are single quadratures over the flow:
//!
//! ```text
//! a0(x) = - int_0^x v(s) (1 - v(s)/v(x))^(-1/2) ds
//! a1(x) = + sqrt( a0'(x) / (1/(2 v(x)))' ),      b1 = -a1
//! S0(x, a0(x)) = - int_0^x a0'(s) / (2 v(s)) ds
//! ```
//!
//! The `(1 - v/v(x))^(-1/2)` endpoint singularity is integrable; the
//! substitution `s = x - t^2` clusters nodes at the endpoint and leaves a
//! bounded integrand, which is what [`exit_boundary_a0`] integrates.

use crate::flow::FlowSpec;
use crate::wkb::quad;
use crate::wkb::WkbError;

/// Relative scale below which `v(x) - v(s)` is replaced by its tangent
/// limit to dodge catastrophic cancellation at the substitution endpoint.
const CANCEL_GUARD: f64 = 1e-13;

fn require_increasing(flow: &FlowSpec, x: f64) -> Result<(), WkbError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(WkbError::Domain(format!("x must be positive, got {x}")));
    }
    if !flow.is_increasing_on(x) {
        return Err(WkbError::Domain(format!(
            "flow is not strictly increasing on (0, {x}]"
        )));
    }
    Ok(())
}

/// Leading-order exit boundary `a0(x) < 0` of the no-diffusion region.
///
/// Relative accuracy around 1e-10 away from pathological flows; the
/// contract requires 1e-8.
pub fn exit_boundary_a0(flow: &FlowSpec, x: f64) -> Result<f64, WkbError> {
    require_increasing(flow, x)?;
    let vx = flow.eval(x).map_err(WkbError::Flow)?;
    let dvx = flow.eval_derivative(x).map_err(WkbError::Flow)?;
    // s = x - t^2: ds = -2t dt, integrand v(s) (v(x)/(v(x)-v(s)))^(1/2) 2t
    let g = |t: f64| -> f64 {
        let s = (x - t * t).max(0.0);
        let vs = flow.eval(s).unwrap_or(0.0);
        let dv = vx - vs;
        if dv <= CANCEL_GUARD * vx {
            // tangent limit: v(x) - v(s) ~ v'(x) t^2
            if dvx > 0.0 {
                2.0 * vx * (vx / dvx).sqrt()
            } else {
                0.0
            }
        } else {
            2.0 * t * vs * (vx / dv).sqrt()
        }
    };
    let sqrt_x = x.sqrt();
    let tol = 1e-12 * (1.0 + vx * x);
    Ok(-quad::integrate(&g, 0.0, sqrt_x, tol))
}

/// `a0'(x)` by five-point Richardson differencing of the quadrature.
pub fn exit_boundary_a0_derivative(flow: &FlowSpec, x: f64) -> Result<f64, WkbError> {
    let h = 1e-3 * x;
    let m2 = exit_boundary_a0(flow, x - 2.0 * h)?;
    let m1 = exit_boundary_a0(flow, x - h)?;
    let p1 = exit_boundary_a0(flow, x + h)?;
    let p2 = exit_boundary_a0(flow, x + 2.0 * h)?;
    Ok((m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h))
}

/// First-order correction `a1(x) >= 0` to the exit boundary (positive
/// root of `a1^2 = a0' / (1/(2v))'`). The entrance-boundary correction is
/// `b1 = -a1`.
pub fn exit_correction_a1(flow: &FlowSpec, x: f64) -> Result<f64, WkbError> {
    require_increasing(flow, x)?;
    let v = flow.eval(x).map_err(WkbError::Flow)?;
    let dv = flow.eval_derivative(x).map_err(WkbError::Flow)?;
    if !(dv > 0.0) {
        return Err(WkbError::Domain(format!("v'({x}) = {dv} must be positive")));
    }
    let da0 = exit_boundary_a0_derivative(flow, x)?;
    // (1/(2v))' = -v'/(2 v^2)
    let radicand = da0 * (-2.0 * v * v / dv);
    if radicand < 0.0 {
        return Err(WkbError::Domain(format!(
            "negative radicand {radicand} for a1 at x = {x}"
        )));
    }
    Ok(radicand.sqrt())
}

/// Resummation of `a0 + eps a1` into the class of decreasing functions:
/// `abar = a0 / (1 - eps a1/a0)`; agrees with `a0 + eps a1` to O(eps^2).
pub fn resummed_exit(a0: f64, a1: f64, eps: f64) -> Result<f64, WkbError> {
    let denom = 1.0 - eps * a1 / a0;
    if !(denom > 0.0) {
        return Err(WkbError::ResummationInvalid { denom });
    }
    Ok(a0 / denom)
}

/// The action accumulated along the ray touching the exit boundary at
/// `x`: `S0(x, a0(x)) = - int_0^x a0'/(2v)`. Evaluated in the
/// integrated-by-parts form
///
/// ```text
/// S0 = -a0(x)/(2 v(x)) - int_0^x a0(s) v'(s) / (2 v(s)^2) ds,
/// ```
///
/// which only samples `a0` itself (the boundary term at 0 vanishes since
/// `a0 ~ -s^{beta+1}` beats `v ~ s^beta`).
pub fn action_on_exit_boundary(flow: &FlowSpec, x: f64) -> Result<f64, WkbError> {
    require_increasing(flow, x)?;
    let vx = flow.eval(x).map_err(WkbError::Flow)?;
    let a0x = exit_boundary_a0(flow, x)?;
    let g = |s: f64| -> f64 {
        let v = flow.eval(s).unwrap_or(0.0);
        if v <= 0.0 {
            return 0.0;
        }
        let dv = flow.eval_derivative(s).unwrap_or(0.0);
        let a0 = exit_boundary_a0(flow, s).unwrap_or(0.0);
        a0 * dv / (2.0 * v * v)
    };
    // open the lower endpoint: the integrand tends to a finite limit but
    // 0/0 at s = 0 exactly
    let lo = 1e-8 * x;
    let tail = quad::integrate(&g, lo, x, 1e-10 * (1.0 + x));
    Ok(-a0x / (2.0 * vx) - tail)
}

/// Power-law closed forms for `v(x) = sgn(x) |x|^beta` (unit amplitude):
/// `a0`, `a1` and the on-boundary action in terms of the Beta function.
pub mod power_law_closed_form {
    /// `a0(x) = -x^{beta+1} B(1/2, 1 + 1/beta) / beta`.
    pub fn a0(beta: f64, x: f64) -> f64 {
        -x.powf(beta + 1.0) * beta_fn(0.5, 1.0 + 1.0 / beta) / beta
    }

    /// `a1(x) = x^{beta+1/2} [2 (1/beta + 1/beta^2) B(1/2, 1 + 1/beta)]^{1/2}`.
    pub fn a1(beta: f64, x: f64) -> f64 {
        let b = beta_fn(0.5, 1.0 + 1.0 / beta);
        x.powf(beta + 0.5) * (2.0 * (1.0 / beta + 1.0 / (beta * beta)) * b).sqrt()
    }

    /// `S0(x, a0(x)) = x (1 + 1/beta) B(1/2, 1 + 1/beta) / 2`.
    pub fn action(beta: f64, x: f64) -> f64 {
        x * (1.0 + 1.0 / beta) * beta_fn(0.5, 1.0 + 1.0 / beta) / 2.0
    }

    /// Beta function via Lanczos log-gamma.
    pub fn beta_fn(a: f64, b: f64) -> f64 {
        (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
    }

    /// Lanczos approximation (g = 7, 9 terms), |rel err| < 1e-13 on the
    /// arguments used here.
    pub fn ln_gamma(x: f64) -> f64 {
        const COEF: [f64; 9] = [
            0.99999999999980993,
            676.5203681218851,
            -1259.1392167224028,
            771.32342877765313,
            -176.61502916214059,
            12.507343278686905,
            -0.13857109526572012,
            9.9843695780195716e-6,
            1.5056327351493116e-7,
        ];
        if x < 0.5 {
            // reflection
            return std::f64::consts::PI.ln()
                - (std::f64::consts::PI * x).sin().ln()
                - ln_gamma(1.0 - x);
        }
        let x = x - 1.0;
        let mut acc = COEF[0];
        for (i, c) in COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}
