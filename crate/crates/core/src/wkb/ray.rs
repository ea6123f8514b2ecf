//! Hamiltonian ray tracing for the far-field eikonal problem.
//!
//! Rays are characteristics of `H(x, y, p_x, p_y) = -v(x) p_y + p_x^2/2`
//! on the level set `H = 1/2`:
//!
//! ```text
//! dx/dtau  = p_x          dp_x/dtau = v'(x) p_y
//! dy/dtau  = -v(x)        dp_y/dtau = 0
//! ```
//!
//! with the action accumulated as `dS/dtau = p_x^2 - p_y v(x)`. Ray time
//! runs away from the origin (opposite to particle time). Inside the
//! no-diffusion region the Hamiltonian degenerates to `-v(x) p_y = 1/2`,
//! `x` is frozen, and the action increment is `(y_start - y_end)/(2 v)`;
//! that segment type is handled by [`no_diffusion_action`], not by the
//! integrator.

use crate::flow::FlowSpec;
use crate::wkb::WkbError;

/// Phase-space state of a ray plus accumulated action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayState {
    pub x: f64,
    pub y: f64,
    pub px: f64,
    pub py: f64,
    pub tau: f64,
    pub action: f64,
}

impl RayState {
    pub fn launch(x: f64, y: f64, px: f64, py: f64) -> Self {
        RayState {
            x,
            y,
            px,
            py,
            tau: 0.0,
            action: 0.0,
        }
    }

    /// `H = -v(x) p_y + p_x^2 / 2`.
    pub fn hamiltonian(&self, flow: &FlowSpec) -> Result<f64, WkbError> {
        Ok(-flow.eval(self.x).map_err(WkbError::Flow)? * self.py + 0.5 * self.px * self.px)
    }
}

/// Why integration stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopCondition {
    /// First crossing of `x = target` (after leaving the start value).
    XReaches(f64),
    /// First zero of `p_x` (exit-boundary touch).
    PxZero,
    /// Fixed ray-time horizon.
    TauLimit(f64),
}

/// A sampled ray trajectory.
#[derive(Debug, Clone)]
pub struct RayPath {
    pub states: Vec<RayState>,
    /// Max |H - H(0)| observed at accepted steps.
    pub h_drift: f64,
    /// True when the requested stop event fired (false: tau safety limit).
    pub event_hit: bool,
}

impl RayPath {
    pub fn end(&self) -> &RayState {
        self.states.last().expect("path has at least the launch state")
    }
}

const TAU_SAFETY: f64 = 1e4;
const MAX_STEPS: usize = 2_000_000;
const ATOL: f64 = 1e-12;
const RTOL: f64 = 1e-12;

type V5 = [f64; 5];

#[inline]
fn rhs(flow: &FlowSpec, s: &V5) -> Result<V5, WkbError> {
    let v = flow.eval(s[0]).map_err(WkbError::Flow)?;
    let dv = flow.eval_derivative(s[0]).map_err(WkbError::Flow)?;
    Ok([s[2], -v, dv * s[3], 0.0, s[2] * s[2] - s[3] * v])
}

/// One Dormand-Prince 5(4) step; returns (5th-order state, error estimate).
fn dopri_step(flow: &FlowSpec, s: &V5, k1: &V5, h: f64) -> Result<(V5, V5, f64), WkbError> {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const E: [f64; 7] = [
        35.0 / 384.0 - 5179.0 / 57600.0,
        0.0,
        500.0 / 1113.0 - 7571.0 / 16695.0,
        125.0 / 192.0 - 393.0 / 640.0,
        -2187.0 / 6784.0 + 92097.0 / 339200.0,
        11.0 / 84.0 - 187.0 / 2100.0,
        -1.0 / 40.0,
    ];
    let mut k = [[0.0f64; 5]; 7];
    k[0] = *k1;
    for stage in 0..6 {
        let mut ys = *s;
        for j in 0..=stage {
            let a = A[stage][j];
            if a != 0.0 {
                for m in 0..5 {
                    ys[m] += h * a * k[j][m];
                }
            }
        }
        k[stage + 1] = rhs(flow, &ys)?;
    }
    // stage 7 state equals the 5th-order solution (FSAL layout)
    let mut out = *s;
    for j in 0..6 {
        let a = A[5][j];
        if a != 0.0 {
            for m in 0..5 {
                out[m] += h * a * k[j][m];
            }
        }
    }
    let mut err = [0.0f64; 5];
    for m in 0..5 {
        let mut e = 0.0;
        for (j, kj) in k.iter().enumerate() {
            e += E[j] * kj[m];
        }
        err[m] = h * e;
    }
    // FSAL derivative for the next step
    let knext = rhs(flow, &out)?;
    let mut en = 0.0f64;
    for m in 0..5 {
        let sc = ATOL + RTOL * s[m].abs().max(out[m].abs());
        en += (err[m] / sc) * (err[m] / sc);
    }
    let _ = knext;
    Ok((out, err, (en / 5.0).sqrt()))
}

fn event_value(stop: &StopCondition, s: &V5) -> Option<f64> {
    match stop {
        StopCondition::XReaches(xt) => Some(s[0] - xt),
        StopCondition::PxZero => Some(s[2]),
        StopCondition::TauLimit(_) => None,
    }
}

/// Integrate a ray from `init` until the stop condition fires.
///
/// `init` must be on-shell: `|H - 1/2| <= 1e-10`. The returned path keeps
/// every accepted step plus the event-refined endpoint, and reports the
/// worst Hamiltonian drift seen along the way.
pub fn integrate_ray(
    flow: &FlowSpec,
    init: RayState,
    stop: StopCondition,
) -> Result<RayPath, WkbError> {
    let h0 = init.hamiltonian(flow)?;
    if (h0 - 0.5).abs() > 1e-10 {
        return Err(WkbError::OffShell { h: h0 });
    }
    let tau_end = match stop {
        StopCondition::TauLimit(t) => t.min(TAU_SAFETY),
        _ => TAU_SAFETY,
    };
    let mut s: V5 = [init.x, init.y, init.px, init.py, init.action];
    let mut tau = init.tau;
    let mut h = 1e-6f64;
    let mut path = vec![init];
    let mut drift = 0.0f64;
    let mut g_prev = event_value(&stop, &s);
    let mut event_hit = false;

    for _ in 0..MAX_STEPS {
        if tau >= tau_end {
            event_hit = matches!(stop, StopCondition::TauLimit(_));
            break;
        }
        let h_try = h.min(tau_end - tau);
        let k1 = rhs(flow, &s)?;
        let (out, _err, en) = dopri_step(flow, &s, &k1, h_try)?;
        if en > 1.0 {
            h = h_try * (0.9 * en.powf(-0.2)).max(0.2);
            continue;
        }
        // accepted
        let tau_new = tau + h_try;
        let g_new = event_value(&stop, &out);
        if let (Some(g0), Some(g1)) = (g_prev, g_new) {
            if g0 != 0.0 && (g1 == 0.0 || (g0 < 0.0) != (g1 < 0.0)) {
                // bisect the event time within [tau, tau_new]
                let (se, te) = refine_event(flow, &s, tau, h_try, g0, &stop)?;
                push_state(&mut path, &se, te);
                let hh = hamiltonian_of(flow, &se)?;
                drift = drift.max((hh - h0).abs());
                event_hit = true;
                break;
            }
        }
        s = out;
        tau = tau_new;
        g_prev = g_new;
        push_state(&mut path, &s, tau);
        let hh = hamiltonian_of(flow, &s)?;
        drift = drift.max((hh - h0).abs());
        h = h_try * (0.9 * en.max(1e-10).powf(-0.2)).min(5.0);
    }

    if !event_hit && !matches!(stop, StopCondition::TauLimit(_)) {
        return Err(WkbError::NoEvent {
            tau: path.last().unwrap().tau,
        });
    }
    Ok(RayPath {
        states: path,
        h_drift: drift,
        event_hit,
    })
}

fn hamiltonian_of(flow: &FlowSpec, s: &V5) -> Result<f64, WkbError> {
    Ok(-flow.eval(s[0]).map_err(WkbError::Flow)? * s[3] + 0.5 * s[2] * s[2])
}

fn push_state(path: &mut Vec<RayState>, s: &V5, tau: f64) {
    path.push(RayState {
        x: s[0],
        y: s[1],
        px: s[2],
        py: s[3],
        tau,
        action: s[4],
    });
}

/// Bisection on the step size from a fixed left state; each candidate is
/// one high-order RK step, so the located event inherits the step error.
fn refine_event(
    flow: &FlowSpec,
    s_left: &V5,
    tau_left: f64,
    h_full: f64,
    g_left: f64,
    stop: &StopCondition,
) -> Result<(V5, f64), WkbError> {
    let mut lo = 0.0f64;
    let mut hi = h_full;
    let k1 = rhs(flow, s_left)?;
    let mut best = *s_left;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let (out, _e, _en) = dopri_step(flow, s_left, &k1, mid)?;
        let g = event_value(stop, &out).unwrap();
        if g == 0.0 {
            return Ok((out, tau_left + mid));
        }
        if (g < 0.0) == (g_left < 0.0) {
            lo = mid;
        } else {
            hi = mid;
            best = out;
        }
    }
    Ok((best, tau_left + hi))
}

/// Action increment along a frozen-`x` segment inside the no-diffusion
/// region: `(y_start - y_end) / (2 v(x))`.
pub fn no_diffusion_action(
    flow: &FlowSpec,
    x: f64,
    y_start: f64,
    y_end: f64,
) -> Result<f64, WkbError> {
    let v = flow.eval(x).map_err(WkbError::Flow)?;
    if v == 0.0 {
        return Err(WkbError::Domain("v(x) = 0 on a frozen segment".into()));
    }
    Ok((y_start - y_end) / (2.0 * v))
}

/// Branch selector for the explicit linear-flow action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

/// Closed-form action for linear flow `v(x) = x` in `x >= 0`:
///
/// ```text
/// S_pm(x, y) = (2/3) (x^2 / tau_pm + tau_pm) pm x/3,
/// tau_pm = sqrt(x^2 pm 6y) pm x,
/// ```
///
/// `Minus` is the minimal action below the caustic, `Plus` above it.
pub fn linear_action(x: f64, y: f64, branch: Branch) -> Result<f64, WkbError> {
    let sign = match branch {
        Branch::Plus => 1.0,
        Branch::Minus => -1.0,
    };
    let radicand = x * x + sign * 6.0 * y;
    if radicand < 0.0 {
        return Err(WkbError::BranchUndefined { x, y });
    }
    let tau = radicand.sqrt() + sign * x;
    if tau <= 0.0 {
        return Err(WkbError::BranchUndefined { x, y });
    }
    Ok(2.0 / 3.0 * (x * x / tau + tau) + sign * x / 3.0)
}

/// The region 1 / region 3 caustic for linear flow: `c(x) = -x^2/(4 sqrt 3)`.
pub fn linear_caustic(x: f64) -> f64 {
    -x * x / (4.0 * 3.0f64.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn origin_launch_must_be_on_shell() {
        let f = FlowSpec::linear();
        // at (0,0): H = px^2/2, so px = 1 is on-shell and px = 0.5 is not
        let bad = RayState::launch(0.0, 0.0, 0.5, -1.0);
        assert!(matches!(
            integrate_ray(&f, bad, StopCondition::TauLimit(1.0)),
            Err(WkbError::OffShell { .. })
        ));
        let good = RayState::launch(0.0, 0.0, 1.0, -1.0);
        assert!(integrate_ray(&f, good, StopCondition::TauLimit(1.0)).is_ok());
    }

    #[test]
    fn hamiltonian_conserved_along_ray() {
        let f = FlowSpec::linear();
        let init = RayState::launch(0.0, 0.0, 1.0, -0.3);
        let path = integrate_ray(&f, init, StopCondition::TauLimit(5.0)).unwrap();
        assert!(path.h_drift <= 1e-9, "H drift {}", path.h_drift);
        // p_y never changes
        for s in &path.states {
            assert_eq!(s.py, -0.3);
        }
    }

    #[test]
    fn px_along_touching_ray_matches_formula() {
        // ray that touches the exit boundary at x0: p_y = -1/(2 v(x0)),
        // and along it p_x = (1 - v(x)/v(x0))^(1/2)
        let f = FlowSpec::linear();
        let x0 = 1.3;
        let init = RayState::launch(0.0, 0.0, 1.0, -0.5 / x0);
        let path = integrate_ray(&f, init, StopCondition::PxZero).unwrap();
        for s in path.states.iter().step_by(7) {
            let expect = (1.0 - s.x / x0).max(0.0).sqrt();
            assert_abs_diff_eq!(s.px, expect, epsilon = 1e-7);
        }
        // the touch happens at x = x0
        assert_abs_diff_eq!(path.end().x, x0, epsilon = 1e-8);
    }

    #[test]
    fn x_reaches_event() {
        let f = FlowSpec::linear();
        let init = RayState::launch(0.0, 0.0, 1.0, -0.1);
        let path = integrate_ray(&f, init, StopCondition::XReaches(0.7)).unwrap();
        assert_abs_diff_eq!(path.end().x, 0.7, epsilon = 1e-10);
    }

    #[test]
    fn no_diffusion_segment_action() {
        let f = FlowSpec::linear();
        let ds = no_diffusion_action(&f, 1.0, -1.0, -2.0).unwrap();
        assert_abs_diff_eq!(ds, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn linear_action_equality_on_caustic() {
        for &x in &[0.5, 1.0, 2.0, 3.0] {
            let c = linear_caustic(x);
            let sp = linear_action(x, c, Branch::Plus).unwrap();
            let sm = linear_action(x, c, Branch::Minus).unwrap();
            assert_abs_diff_eq!(sp, sm, epsilon = 1e-10);
        }
    }

    #[test]
    fn linear_action_branch_ordering() {
        // S- wins below the caustic, S+ above
        for &x in &[0.8, 1.5] {
            let c = linear_caustic(x);
            let below = 1.8 * c;
            let above = 0.3 * c;
            assert!(
                linear_action(x, below, Branch::Minus).unwrap()
                    < linear_action(x, below, Branch::Plus).unwrap()
            );
            assert!(
                linear_action(x, above, Branch::Plus).unwrap()
                    < linear_action(x, above, Branch::Minus).unwrap()
            );
        }
    }

    #[test]
    fn linear_action_branch_domain() {
        assert!(matches!(
            linear_action(1.0, -1.0, Branch::Plus),
            Err(WkbError::BranchUndefined { .. })
        ));
        assert!(linear_action(1.0, -1.0, Branch::Minus).is_ok());
    }

    #[test]
    fn linear_action_matches_ray_integration() {
        // integrate a ray to a target point, compare the accumulated
        // action with the closed form on the matching branch
        let f = FlowSpec::linear();
        // direct ray (type C): px0 = +1, py = q
        for &q in &[-0.3, 0.2, 1.0] {
            let init = RayState::launch(0.0, 0.0, 1.0, q);
            let path = integrate_ray(&f, init, StopCondition::XReaches(1.0)).unwrap();
            let end = path.end();
            let s_closed = linear_action(end.x, end.y, Branch::Minus).unwrap();
            assert_abs_diff_eq!(end.action, s_closed, epsilon = 1e-6);
        }
        // looping ray (type A): px0 = -1, py = q > 0
        for &q in &[0.6, 1.0] {
            let init = RayState::launch(0.0, 0.0, -1.0, q);
            let path = integrate_ray(&f, init, StopCondition::XReaches(1.0)).unwrap();
            let end = path.end();
            let s_closed = linear_action(end.x, end.y, Branch::Plus).unwrap();
            assert_abs_diff_eq!(end.action, s_closed, epsilon = 1e-6);
        }
    }

    #[test]
    fn vertical_launch_action_matches_closed_form() {
        // x = 0, y > 0: tau_plus = sqrt(6 y), S_plus = (2/3) sqrt(6 y)
        let y = 0.7;
        let s = linear_action(0.0, y, Branch::Plus).unwrap();
        assert_abs_diff_eq!(s, 2.0 / 3.0 * (6.0 * y).sqrt(), epsilon = 1e-12);
    }
}
