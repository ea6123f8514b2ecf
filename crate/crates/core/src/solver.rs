//! Obstacle-form backward-equation solver.
//!
//! `phi` is timestepped to steady state under
//!
//! ```text
//! d(phi)/dt = v(x) d(phi)/dy + D [d2(phi)/dx2]^+ - lambda phi,
//! ```
//!
//! with `phi = 1` pinned at the origin node and zero initial data. Two
//! schemes are available:
//!
//! * [`Scheme::Split`]: operator splitting; the hyperbolic part is
//!   semi-Lagrangian (each node takes the value linearly interpolated at
//!   `(x, y + v(x) dt)`), the diffusive part is forward Euler with the
//!   obstacle `[.]^+`, and the marking term is an exact `exp(-lambda dt)`
//!   factor. No advective CFL restriction, so it suits unbounded
//!   (tanh-stretched) grids.
//! * [`Scheme::Upwind`]: forward Euler with first-order upwind `y`
//!   differencing; bounded grids only, both CFL limits enforced.
//!
//! The antisymmetry `phi(-x,-y) = phi(x,y)` is built in: only `x >= 0`
//! is updated, the virtual column left of center reads mirrored data,
//! and the `x < 0` half is filled by reflection, making the symmetry
//! exact by construction. Updates are data-parallel over fixed-size row
//! blocks, so results are bit-identical for any worker count.

use crate::flow::{FlowKind, FlowSpec};
use crate::grid::{second_diff_coeffs, second_difference_x, Grid2D, ScalarField};
use crate::regions::{extract_boundaries, ControlRegion};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver config: {0}")]
    Invalid(String),
    #[error("CFL violation: dt = {dt} exceeds the stable limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error(
        "no steady state within {steps} steps: residual {residual} > tol {tol}"
    )]
    NotConverged {
        steps: usize,
        residual: f64,
        tol: f64,
        history: Vec<(usize, f64)>,
    },
    #[error("solution contains non-finite values")]
    NonFinite,
}

/// Timestepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Split,
    Upwind,
}

/// Boundary condition on the outer x edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XBoundary {
    /// Absorbing: `phi = 0` on the edge columns.
    Killing,
    /// Mirror (zero-flux) walls.
    Reflecting,
}

/// Marking rate: constant, or the spatial profile `lambda(x) = |x|^Lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum MarkingRate {
    Constant(f64),
    PowerLaw { scale: f64, exponent: f64 },
}

impl MarkingRate {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            MarkingRate::Constant(l) => l,
            MarkingRate::PowerLaw { scale, exponent } => scale * x.abs().powf(exponent),
        }
    }

    /// A positive reference rate for time scales (T_max defaults etc).
    pub fn reference(&self) -> f64 {
        match *self {
            MarkingRate::Constant(l) => l,
            MarkingRate::PowerLaw { scale, .. } => scale,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Diffusivity `D > 0` (the ON control is `sigma = sqrt(2D)`).
    pub d: f64,
    pub marking: MarkingRate,
    /// Timestep; `None` picks the largest stable step (safety 0.9).
    pub dt: Option<f64>,
    /// Steady-state tolerance on `sup |phi_new - phi| / dt`.
    pub steady_tol: f64,
    pub max_steps: usize,
    pub scheme: Scheme,
    pub x_boundary: XBoundary,
    /// Tie-break threshold of the control classification: diffusion ON
    /// where curvature `>= -threshold`.
    pub curvature_threshold: f64,
    /// Keep `phi = 1` at the origin node (the hitting target).
    pub pin_origin: bool,
    /// Solve the always-on-diffusion linear equation instead of the
    /// obstacle form (for control-dominance comparisons).
    pub always_on_diffusion: bool,
    /// Permit `beta <= Lambda` configurations (degenerate scaling).
    pub allow_degenerate_marking: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            d: 2.0,
            marking: MarkingRate::Constant(1.0),
            dt: None,
            steady_tol: 1e-8,
            max_steps: 50_000_000,
            scheme: Scheme::Split,
            x_boundary: XBoundary::Killing,
            curvature_threshold: 0.0,
            pin_origin: true,
            always_on_diffusion: false,
            allow_degenerate_marking: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self, flow: &FlowSpec) -> Result<(), SolveError> {
        if !(self.d > 0.0) {
            return Err(SolveError::Invalid(format!("D must be positive: {}", self.d)));
        }
        if !(self.steady_tol > 0.0) {
            return Err(SolveError::Invalid("steady_tol must be positive".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(SolveError::Invalid(format!("dt must be positive: {dt}")));
            }
        }
        match self.marking {
            MarkingRate::Constant(l) => {
                if !(l >= 0.0) {
                    return Err(SolveError::Invalid(format!("lambda must be >= 0: {l}")));
                }
            }
            MarkingRate::PowerLaw { scale, exponent } => {
                if !(scale > 0.0) {
                    return Err(SolveError::Invalid("marking scale must be positive".into()));
                }
                // the near-field balance degenerates unless beta > Lambda
                let beta = match flow.kind {
                    FlowKind::PowerLaw { beta } => Some(beta),
                    _ => None,
                };
                match beta {
                    Some(b) if b > exponent => {}
                    _ if self.allow_degenerate_marking => {}
                    Some(b) => {
                        return Err(SolveError::Invalid(format!(
                            "spatial marking |x|^{exponent} needs flow exponent beta > Lambda \
                             (beta = {b}); set allow_degenerate_marking to override"
                        )))
                    }
                    None => {
                        return Err(SolveError::Invalid(
                            "spatial marking is only supported for power-law flows; \
                             set allow_degenerate_marking to override"
                                .into(),
                        ))
                    }
                }
            }
        }
        Ok(())
    }
}

/// Steady solution and derived control region.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub phi: ScalarField,
    pub region: ControlRegion,
    pub steps: usize,
    pub final_residual: f64,
    pub dt: f64,
    /// `(step, residual per unit time)`, sampled sparsely plus the final.
    pub residual_history: Vec<(usize, f64)>,
}

/// Precomputed per-run stepping machinery on the `x >= 0` half.
struct StepPlan {
    nx: usize,
    ny: usize,
    /// center column (x = 0).
    cx: usize,
    dt: f64,
    d: f64,
    scheme: Scheme,
    x_boundary: XBoundary,
    pin: Option<(usize, usize)>,
    always_on: bool,
    /// per-column velocity, columns cx..nx.
    v: Vec<f64>,
    /// per-column kill factor exp(-lambda(x) dt).
    kill: Vec<f64>,
    /// curvature stencil (cm, c0, cp) per column cx..nx.
    xcoef: Vec<(f64, f64, f64)>,
    /// split scheme: departure row and weight per (iy, column).
    departures: Vec<(u32, f64)>,
    /// upwind scheme: per-row spacing to the upper/lower neighbour.
    dy_up: Vec<f64>,
    dy_dn: Vec<f64>,
    /// last interior x spacing (reflecting-wall stencil).
    wall_h: f64,
    rows_per_chunk: usize,
}

impl StepPlan {
    fn build(
        flow: &FlowSpec,
        grid: &Arc<Grid2D>,
        cfg: &SolverConfig,
    ) -> Result<Self, SolveError> {
        cfg.validate(flow)?;
        let (nx, ny) = (grid.nx(), grid.ny());
        let (cx, _cy) = grid
            .origin_index()
            .ok_or_else(|| SolveError::Invalid("grid must contain the origin node".into()))?;
        if matches!(cfg.scheme, Scheme::Upwind)
            && (matches!(grid.x.spec, crate::grid::AxisSpec::Unbounded { .. })
                || matches!(grid.y.spec, crate::grid::AxisSpec::Unbounded { .. }))
        {
            return Err(SolveError::Invalid(
                "the upwind scheme requires a bounded grid; use the split scheme".into(),
            ));
        }

        let ncols = nx - cx;
        let mut v = Vec::with_capacity(ncols);
        for ix in cx..nx {
            v.push(
                flow.eval(grid.x.phys[ix])
                    .map_err(|e| SolveError::Invalid(format!("flow: {e}")))?,
            );
        }

        // stable timestep
        let xs = &grid.x.phys;
        let ys = &grid.y.phys;
        let mut diff_rate: f64 = 0.0; // max over nodes of 2D/(hm*hp)
        for ix in 1..nx - 1 {
            let (hm, hp) = (xs[ix] - xs[ix - 1], xs[ix + 1] - xs[ix]);
            diff_rate = diff_rate.max(2.0 * cfg.d / (hm * hp));
        }
        let mut adv_rate: f64 = 0.0; // upwind only
        if matches!(cfg.scheme, Scheme::Upwind) {
            for (k, &vx) in v.iter().enumerate() {
                let ix = cx + k;
                let _ = ix;
                for iy in 1..ny - 1 {
                    let dy = if vx >= 0.0 {
                        ys[iy + 1] - ys[iy]
                    } else {
                        ys[iy] - ys[iy - 1]
                    };
                    adv_rate = adv_rate.max(vx.abs() / dy);
                }
            }
        }
        let limit = 0.9 / (diff_rate + adv_rate).max(1e-300);
        let dt = match cfg.dt {
            Some(dt) => {
                if dt > limit / 0.9 {
                    return Err(SolveError::Cfl {
                        dt,
                        limit: limit / 0.9,
                    });
                }
                dt
            }
            None => limit,
        };

        let mut kill = Vec::with_capacity(ncols);
        for ix in cx..nx {
            kill.push((-cfg.marking.eval(grid.x.phys[ix]) * dt).exp());
        }

        let mut xcoef = Vec::with_capacity(ncols);
        for ix in cx..nx {
            if ix == 0 || ix == nx - 1 {
                xcoef.push((0.0, 0.0, 0.0)); // handled separately
            } else {
                xcoef.push(second_diff_coeffs(xs[ix] - xs[ix - 1], xs[ix + 1] - xs[ix]));
            }
        }

        // semi-Lagrangian departure plan: row-major [iy][column]
        let mut departures = Vec::new();
        if matches!(cfg.scheme, Scheme::Split) {
            departures.reserve(ny * ncols);
            for iy in 0..ny {
                for (k, &vx) in v.iter().enumerate() {
                    let _ = k;
                    let yd = ys[iy] + vx * dt;
                    let (j, w) = if yd <= ys[0] {
                        (0u32, 0.0)
                    } else if yd >= ys[ny - 1] {
                        ((ny - 1) as u32, 0.0)
                    } else {
                        let j = ys.partition_point(|&p| p <= yd) - 1;
                        let w = (yd - ys[j]) / (ys[j + 1] - ys[j]);
                        (j as u32, w)
                    };
                    departures.push((j, w));
                }
            }
        }

        let mut dy_up = vec![1.0; ny];
        let mut dy_dn = vec![1.0; ny];
        for iy in 1..ny - 1 {
            dy_up[iy] = ys[iy + 1] - ys[iy];
            dy_dn[iy] = ys[iy] - ys[iy - 1];
        }

        let wall_h = xs[nx - 1] - xs[nx - 2];

        // fixed chunking keeps results independent of the worker count
        let rows_per_chunk = (8192 / ncols.max(1)).clamp(1, ny).max(1);

        Ok(StepPlan {
            nx,
            ny,
            cx,
            dt,
            d: cfg.d,
            scheme: cfg.scheme,
            x_boundary: cfg.x_boundary,
            pin: cfg.pin_origin.then(|| grid.origin_index().unwrap()),
            always_on: cfg.always_on_diffusion,
            v,
            kill,
            xcoef,
            departures,
            dy_up,
            dy_dn,
            wall_h,
            rows_per_chunk,
        })
    }

    /// Mirror of a full-grid index for the virtual column `cx - 1`:
    /// `(cx - 1, iy) -> (cx + 1, ny - 1 - iy)`.
    #[inline]
    fn mirror_left(&self, iy: usize) -> usize {
        (self.ny - 1 - iy) * self.nx + self.cx + 1
    }

    /// Advect `cur` into `out` on the half domain (split scheme).
    fn advect_half(&self, cur: &[f64], out: &mut [f64]) {
        let (nx, ny, cx) = (self.nx, self.ny, self.cx);
        let ncols = nx - cx;
        let chunk = self.rows_per_chunk * nx;
        out.par_chunks_mut(chunk).enumerate().for_each(|(ci, rows)| {
            let iy0 = ci * self.rows_per_chunk;
            for (r, row) in rows.chunks_mut(nx).enumerate() {
                let iy = iy0 + r;
                if iy == 0 || iy == ny - 1 {
                    for k in cx..nx {
                        row[k] = 0.0;
                    }
                    continue;
                }
                let dep = &self.departures[iy * ncols..(iy + 1) * ncols];
                for k in 0..ncols {
                    let (j, w) = dep[k];
                    let j = j as usize;
                    let ix = cx + k;
                    let lo = cur[j * nx + ix];
                    let hi = if w > 0.0 { cur[(j + 1) * nx + ix] } else { lo };
                    row[ix] = lo + w * (hi - lo);
                }
            }
        });
    }

    /// Diffuse + kill + clip `src` into `out` on the half domain.
    fn diffuse_half(&self, src: &[f64], out: &mut [f64]) {
        let (nx, ny, cx) = (self.nx, self.ny, self.cx);
        let ddt = self.d * self.dt;
        let chunk = self.rows_per_chunk * nx;
        let always_on = self.always_on;
        out.par_chunks_mut(chunk).enumerate().for_each(|(ci, rows)| {
            let iy0 = ci * self.rows_per_chunk;
            for (r, row) in rows.chunks_mut(nx).enumerate() {
                let iy = iy0 + r;
                if iy == 0 || iy == ny - 1 {
                    for k in cx..nx {
                        row[k] = 0.0;
                    }
                    continue;
                }
                let s = &src[iy * nx..(iy + 1) * nx];
                for k in 0..(nx - cx) {
                    let ix = cx + k;
                    let left = if ix == cx {
                        // virtual column from the antisymmetric reflection
                        src[self.mirror_left(iy)]
                    } else {
                        s[ix - 1]
                    };
                    let kappa = if ix == nx - 1 {
                        match self.x_boundary {
                            XBoundary::Killing => {
                                row[ix] = 0.0;
                                continue;
                            }
                            XBoundary::Reflecting => {
                                let h = self.wall_h;
                                2.0 * (left - s[ix]) / (h * h)
                            }
                        }
                    } else {
                        let (cm, c0, cp) = self.xcoef[k];
                        cm * left + c0 * s[ix] + cp * s[ix + 1]
                    };
                    let gain = if always_on { kappa } else { kappa.max(0.0) };
                    let val = (s[ix] + ddt * gain) * self.kill[k];
                    row[ix] = val.clamp(0.0, 1.0);
                }
            }
        });
    }

    /// One fused upwind step: advection + obstacle diffusion + killing.
    fn upwind_step(&self, cur: &[f64], out: &mut [f64]) {
        let (nx, ny, cx) = (self.nx, self.ny, self.cx);
        let ddt = self.d * self.dt;
        let dt = self.dt;
        let chunk = self.rows_per_chunk * nx;
        let always_on = self.always_on;
        out.par_chunks_mut(chunk).enumerate().for_each(|(ci, rows)| {
            let iy0 = ci * self.rows_per_chunk;
            for (r, row) in rows.chunks_mut(nx).enumerate() {
                let iy = iy0 + r;
                if iy == 0 || iy == ny - 1 {
                    for k in cx..nx {
                        row[k] = 0.0;
                    }
                    continue;
                }
                let s = &cur[iy * nx..(iy + 1) * nx];
                let su = &cur[(iy + 1) * nx..(iy + 2) * nx];
                let sd = &cur[(iy - 1) * nx..iy * nx];
                for k in 0..(nx - cx) {
                    let ix = cx + k;
                    let vx = self.v[k];
                    // upwind advection: information comes from larger y
                    // when v > 0
                    let adv = if vx > 0.0 {
                        vx * (su[ix] - s[ix]) / self.dy_up[iy]
                    } else if vx < 0.0 {
                        vx * (s[ix] - sd[ix]) / self.dy_dn[iy]
                    } else {
                        0.0
                    };
                    let left = if ix == cx {
                        cur[self.mirror_left(iy)]
                    } else {
                        s[ix - 1]
                    };
                    let kappa = if ix == nx - 1 {
                        match self.x_boundary {
                            XBoundary::Killing => {
                                row[ix] = 0.0;
                                continue;
                            }
                            XBoundary::Reflecting => {
                                let h = self.wall_h;
                                2.0 * (left - s[ix]) / (h * h)
                            }
                        }
                    } else {
                        let (cm, c0, cp) = self.xcoef[k];
                        cm * left + c0 * s[ix] + cp * s[ix + 1]
                    };
                    let gain = if always_on { kappa } else { kappa.max(0.0) };
                    let val = (s[ix] + dt * adv + ddt * gain) * self.kill[k];
                    row[ix] = val.clamp(0.0, 1.0);
                }
            }
        });
    }

    fn apply_pin(&self, buf: &mut [f64]) {
        if let Some((ix, iy)) = self.pin {
            buf[iy * self.nx + ix] = 1.0;
        }
    }

    /// Residual `sup |a - b|` over the active half (max is
    /// order-independent, so this is deterministic under any chunking).
    fn residual_half(&self, a: &[f64], b: &[f64]) -> f64 {
        let (nx, cx) = (self.nx, self.cx);
        let chunk = self.rows_per_chunk * nx;
        a.par_chunks(chunk)
            .zip(b.par_chunks(chunk))
            .map(|(ca, cb)| {
                let mut m = 0.0f64;
                for (ra, rb) in ca.chunks(nx).zip(cb.chunks(nx)) {
                    for ix in cx..nx {
                        m = m.max((ra[ix] - rb[ix]).abs());
                    }
                }
                m
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Fill `x < 0` from the antisymmetric image of `x > 0`.
    fn reflect_fill(&self, buf: &mut [f64]) {
        let (nx, ny, cx) = (self.nx, self.ny, self.cx);
        for iy in 0..ny {
            for ix in 0..cx {
                buf[iy * nx + ix] = buf[(ny - 1 - iy) * nx + (nx - 1 - ix)];
            }
        }
    }
}

/// One split-scheme timestep of a full-grid field (exposed for tests and
/// step-level experiments; `solve_steady` runs the same kernel in-loop).
pub fn step_split(
    phi: &ScalarField,
    flow: &FlowSpec,
    cfg: &SolverConfig,
) -> Result<ScalarField, SolveError> {
    let mut cfg = cfg.clone();
    cfg.scheme = Scheme::Split;
    step_once(phi, flow, &cfg)
}

/// One upwind timestep of a full-grid field.
pub fn step_upwind(
    phi: &ScalarField,
    flow: &FlowSpec,
    cfg: &SolverConfig,
) -> Result<ScalarField, SolveError> {
    let mut cfg = cfg.clone();
    cfg.scheme = Scheme::Upwind;
    step_once(phi, flow, &cfg)
}

fn step_once(
    phi: &ScalarField,
    flow: &FlowSpec,
    cfg: &SolverConfig,
) -> Result<ScalarField, SolveError> {
    let plan = StepPlan::build(flow, &phi.grid, cfg)?;
    let mut out = ScalarField::zeros(phi.grid.clone(), &phi.name);
    let mut tmp = vec![0.0f64; phi.values.len()];
    match plan.scheme {
        Scheme::Split => {
            plan.advect_half(&phi.values, &mut tmp);
            plan.diffuse_half(&tmp, &mut out.values);
        }
        Scheme::Upwind => {
            plan.upwind_step(&phi.values, &mut out.values);
        }
    }
    plan.apply_pin(&mut out.values);
    plan.reflect_fill(&mut out.values);
    Ok(out)
}

/// Timestep to steady state and classify the induced control.
pub fn solve_steady(
    flow: &FlowSpec,
    grid: &Arc<Grid2D>,
    cfg: &SolverConfig,
) -> Result<SolveResult, SolveError> {
    let plan = StepPlan::build(flow, grid, cfg)?;
    let n = grid.nx() * grid.ny();
    let mut cur = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    let mut tmp = vec![0.0f64; n];
    plan.apply_pin(&mut cur);

    let mut history: Vec<(usize, f64)> = Vec::new();
    let stride = (cfg.max_steps / 1000).max(100);
    let mut residual = f64::INFINITY;
    let mut steps = 0;

    while steps < cfg.max_steps {
        match plan.scheme {
            Scheme::Split => {
                plan.advect_half(&cur, &mut tmp);
                plan.diffuse_half(&tmp, &mut next);
            }
            Scheme::Upwind => plan.upwind_step(&cur, &mut next),
        }
        plan.apply_pin(&mut next);
        steps += 1;
        residual = plan.residual_half(&next, &cur) / plan.dt;
        std::mem::swap(&mut cur, &mut next);
        if steps % stride == 0 || residual < cfg.steady_tol {
            history.push((steps, residual));
        }
        if residual < cfg.steady_tol {
            break;
        }
    }
    if residual >= cfg.steady_tol {
        return Err(SolveError::NotConverged {
            steps,
            residual,
            tol: cfg.steady_tol,
            history,
        });
    }

    plan.reflect_fill(&mut cur);
    let mut phi = ScalarField::zeros(grid.clone(), "phi");
    phi.values = cur;
    if !phi.all_finite() {
        return Err(SolveError::NonFinite);
    }
    let region = classify_control(&phi, cfg.curvature_threshold, cfg.d);
    Ok(SolveResult {
        phi,
        region,
        steps,
        final_residual: residual,
        dt: plan.dt,
        residual_history: history,
    })
}

/// Bang-bang control from the curvature sign: diffusion ON
/// (`sigma = sqrt(2D)`) where the discrete `d2 phi/dx2 >= -threshold`,
/// OFF elsewhere. The boundary polylines are extracted immediately.
pub fn classify_control(phi: &ScalarField, threshold: f64, d: f64) -> ControlRegion {
    let curv = second_difference_x(phi);
    let off: Vec<bool> = curv.values.iter().map(|&k| k < -threshold).collect();
    let mut region = ControlRegion::from_indicator(phi.grid.clone(), off, (2.0 * d).sqrt());
    region.curvature = Some(curv.values);
    region.threshold = threshold;
    extract_boundaries(&mut region);
    region
}
