//! Numeric caustic location by two-family ray shooting.
//!
//! For a target `(x, y)` in the far field there are two families of rays
//! from the origin: type C rays launch with `p_x = +1` and head directly
//! into `x > 0`; type A rays launch with `p_x = -1`, loop through `x < 0`
//! and come back. Both families are parameterized by the conserved
//! momentum `p_y = q`; turning members correspond to exit-boundary touch
//! points via `q = -1/(2 v(x_touch))`. The caustic `y = c(x)` is where
//! the minimal actions of the two families agree. Near it the A family
//! folds: a second root (ray B) exists and is a local maximum of the
//! action.
//!
//! The no-diffusion region's O(eps) influence on the rays is ignored
//! here, consistent with the leading-order character of the caustic.

use crate::flow::FlowSpec;
use crate::wkb::boundary::exit_boundary_a0;
use crate::wkb::ray::{integrate_ray, RayState, StopCondition};
use crate::wkb::WkbError;

/// One solved shot: launch momentum, arrival data.
#[derive(Debug, Clone, Copy)]
pub struct Shot {
    pub q: f64,
    pub y_end: f64,
    pub action: f64,
}

/// Launch sign of `p_x` at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayFamily {
    /// `p_x(0) = +1`: straight into `x > 0`.
    Direct,
    /// `p_x(0) = -1`: into `x < 0`, looping back.
    Looping,
}

fn shoot(flow: &FlowSpec, family: RayFamily, q: f64, x_target: f64) -> Result<Shot, WkbError> {
    let px0 = match family {
        RayFamily::Direct => 1.0,
        RayFamily::Looping => -1.0,
    };
    let init = RayState::launch(0.0, 0.0, px0, q);
    let path = integrate_ray(flow, init, StopCondition::XReaches(x_target))?;
    let end = path.end();
    Ok(Shot {
        q,
        y_end: end.y,
        action: end.action,
    })
}

/// Sample launch momenta for a family. Direct rays admit
/// `q in (-1/(2 v(x_target)), +inf)`; looping rays need `q > 0`.
fn q_grid(flow: &FlowSpec, family: RayFamily, x_target: f64) -> Result<Vec<f64>, WkbError> {
    let v = flow.eval(x_target).map_err(WkbError::Flow)?;
    let mut qs = Vec::new();
    match family {
        RayFamily::Direct => {
            let q_min = -0.5 / v;
            // approach the touching ray geometrically, then sweep outward
            for k in 1..=24 {
                qs.push(q_min * (1.0 - 2.0f64.powi(-k)));
            }
            qs.push(0.0);
            for k in -10..=14 {
                qs.push(2.0f64.powi(k));
            }
        }
        RayFamily::Looping => {
            for k in -14..=14 {
                qs.push(2.0f64.powi(k) / (2.0 * v));
            }
        }
    }
    qs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(qs)
}

/// All rays of a family from the origin to `(x_target, y_target)`,
/// found by bracketing `y_end(q) = y_target` on the sample grid.
pub fn solve_family(
    flow: &FlowSpec,
    family: RayFamily,
    x_target: f64,
    y_target: f64,
) -> Result<Vec<Shot>, WkbError> {
    let qs = q_grid(flow, family, x_target)?;
    let mut shots = Vec::with_capacity(qs.len());
    for &q in &qs {
        if let Ok(s) = shoot(flow, family, q, x_target) {
            shots.push(s);
        }
    }
    let mut roots = Vec::new();
    for w in shots.windows(2) {
        let (g0, g1) = (w[0].y_end - y_target, w[1].y_end - y_target);
        if g0 == 0.0 {
            roots.push(w[0]);
            continue;
        }
        if (g0 < 0.0) != (g1 < 0.0) {
            // bisect on q
            let (mut qlo, mut qhi, mut glo) = (w[0].q, w[1].q, g0);
            let mut best = w[1];
            for _ in 0..90 {
                let qm = 0.5 * (qlo + qhi);
                if qm == qlo || qm == qhi {
                    break;
                }
                let s = shoot(flow, family, qm, x_target)?;
                let g = s.y_end - y_target;
                best = s;
                if g == 0.0 {
                    break;
                }
                if (g < 0.0) == (glo < 0.0) {
                    qlo = qm;
                    glo = g;
                } else {
                    qhi = qm;
                }
            }
            roots.push(best);
        }
    }
    Ok(roots)
}

/// Minimal action over a family at a point, when any ray reaches it.
pub fn min_action(
    flow: &FlowSpec,
    family: RayFamily,
    x: f64,
    y: f64,
) -> Result<Option<f64>, WkbError> {
    let roots = solve_family(flow, family, x, y)?;
    Ok(roots
        .iter()
        .map(|s| s.action)
        .min_by(|a, b| a.partial_cmp(b).unwrap()))
}

/// Locate the caustic `y = c(x)`: the level where the minimal looping
/// action equals the minimal direct action. Bisection over `y` between
/// the exit boundary and the axis.
pub fn caustic_numeric(flow: &FlowSpec, x: f64) -> Result<f64, WkbError> {
    if !(x > 0.0) {
        return Err(WkbError::Domain(format!("caustic needs x > 0, got {x}")));
    }
    let a0 = exit_boundary_a0(flow, x)?;
    let diff = |y: f64| -> Result<Option<f64>, WkbError> {
        let sa = min_action(flow, RayFamily::Looping, x, y)?;
        let sc = min_action(flow, RayFamily::Direct, x, y)?;
        Ok(match (sa, sc) {
            (Some(a), Some(c)) => Some(a - c),
            _ => None,
        })
    };
    // scan from just below the axis down toward the exit boundary
    let mut bracket: Option<(f64, f64, f64)> = None;
    let mut prev: Option<(f64, f64)> = None;
    for k in 1..=60 {
        let y = a0.abs() * -(k as f64) / 61.0;
        if let Some(g) = diff(y)? {
            if let Some((yp, gp)) = prev {
                if (gp < 0.0) != (g < 0.0) {
                    bracket = Some((yp, y, gp));
                    break;
                }
            }
            prev = Some((y, g));
        }
    }
    let (mut ylo, mut yhi, mut glo) =
        bracket.ok_or_else(|| WkbError::NoCaustic { x, a0 })?;
    for _ in 0..60 {
        let ym = 0.5 * (ylo + yhi);
        if ym == ylo || ym == yhi {
            break;
        }
        match diff(ym)? {
            Some(g) if (g < 0.0) == (glo < 0.0) => {
                ylo = ym;
                glo = g;
            }
            Some(_) => yhi = ym,
            None => return Err(WkbError::NoCaustic { x, a0 }),
        }
    }
    Ok(0.5 * (ylo + yhi))
}
