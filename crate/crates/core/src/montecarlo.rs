//! Pathwise validation of the solved control by Euler-Maruyama
//! simulation of
//!
//! ```text
//! dX = sigma(X, Y) dB,   dY = v(X) dt,
//! ```
//!
//! with `sigma in {0, sqrt(2D)}` looked up from the solved control field
//! at the nearest grid node (the control is bang-bang; interpolating the
//! indicator would invent intermediate controls). A path succeeds when
//! it enters the delta-ball around the origin before its exponential
//! marking time; timeouts and grid exits are failures, counted
//! separately.
//!
//! Paths use counter-based RNG streams: path `i` draws from the ChaCha
//! stream `(seed, i)`, so results are bit-identical for any worker
//! count and parallel schedule.

use crate::flow::FlowSpec;
use crate::regions::ControlRegion;
use crate::solver::MarkingRate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid Monte Carlo config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct McConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Hit radius of the origin target ball.
    pub delta: f64,
    /// Path time cap; timeouts count as failures, reported separately.
    pub t_max: f64,
    pub start: (f64, f64),
    /// Reflect `X` at these walls instead of counting an exit.
    pub x_reflect: Option<(f64, f64)>,
    /// Record full traces for the first k paths.
    pub trace_paths: usize,
}

impl McConfig {
    fn validate(&self, min_spacing: f64) -> Result<(), McError> {
        if !(self.dt > 0.0) {
            return Err(McError::Invalid(format!("dt must be positive: {}", self.dt)));
        }
        if self.n_paths == 0 {
            return Err(McError::Invalid("n_paths must be >= 1".into()));
        }
        if !(self.delta >= 0.5 * min_spacing) {
            return Err(McError::Invalid(format!(
                "delta = {} is below half the near-origin grid spacing {}",
                self.delta, min_spacing
            )));
        }
        if !(self.t_max > 0.0) {
            return Err(McError::Invalid("t_max must be positive".into()));
        }
        Ok(())
    }
}

/// Terminal state of one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathOutcome {
    Hit,
    Marked,
    TimedOut,
    Exited,
}

/// Per-path summary used by the aggregate statistics.
#[derive(Debug, Clone)]
pub struct PathStats {
    pub outcome: PathOutcome,
    pub duration: f64,
    /// Completed full winds about the origin.
    pub winds: usize,
    /// Max radius per completed wind, in order.
    pub wind_max_radius: Vec<f64>,
}

/// Winding statistics over successful paths.
#[derive(Debug, Clone, Serialize)]
pub struct WindingStats {
    pub successes: usize,
    pub mean_winds: f64,
    /// Fraction of successful paths whose final (up to) 3 completed
    /// winds have strictly decreasing max radius.
    pub spiral_fraction: f64,
    /// Mean length of the maximal strictly-decreasing suffix of the
    /// per-wind max radii.
    pub mean_spiral_depth: f64,
}

/// Aggregate Monte Carlo estimate.
#[derive(Debug, Clone, Serialize)]
pub struct McResult {
    pub p_hat: f64,
    pub stderr: f64,
    pub hits: usize,
    pub marked: usize,
    pub timed_out: usize,
    pub exited: usize,
    pub n_paths: usize,
    pub winding: WindingStats,
}

/// A recorded trace row: (t, x, y, sigma).
pub type TraceRow = (f64, f64, f64, f64);

/// Simulate one path under the solved policy. `path_index` selects the
/// RNG stream.
pub fn simulate_path(
    policy: &ControlRegion,
    flow: &FlowSpec,
    cfg: &McConfig,
    path_index: u64,
    mut trace: Option<&mut Vec<TraceRow>>,
    marking: &MarkingRate,
) -> PathStats {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path_index);
    let g = &policy.grid;
    let (x_lo, x_hi) = (g.x.phys[0], g.x.phys[g.nx() - 1]);
    let (y_lo, y_hi) = (g.y.phys[0], g.y.phys[g.ny() - 1]);

    // marking: a constant rate pre-samples the exponential time; a
    // spatial rate accumulates hazard against a unit exponential budget
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let (t_mark, hazard_budget) = match marking {
        MarkingRate::Constant(l) => {
            let t = if *l > 0.0 { -u.ln() / l } else { f64::INFINITY };
            (t, f64::INFINITY)
        }
        MarkingRate::PowerLaw { .. } => (f64::INFINITY, -u.ln()),
    };

    let (mut x, mut y) = cfg.start;
    let mut t = 0.0f64;
    let mut hazard = 0.0f64;
    let sqrt_dt = cfg.dt.sqrt();

    // winding bookkeeping
    let mut theta_acc = 0.0f64;
    let mut wind_max_radius: Vec<f64> = Vec::new();
    let mut current_max_r = (x * x + y * y).sqrt();
    let mut winds_done = 0usize;

    let outcome = loop {
        let r2 = x * x + y * y;
        if r2 <= cfg.delta * cfg.delta {
            break PathOutcome::Hit;
        }
        if t >= t_mark || hazard >= hazard_budget {
            break PathOutcome::Marked;
        }
        if t >= cfg.t_max {
            break PathOutcome::TimedOut;
        }
        if x < x_lo || x > x_hi || y < y_lo || y > y_hi {
            break PathOutcome::Exited;
        }

        let (ix, iy) = g.nearest_node(x, y);
        let sigma = policy.sigma_at(ix, iy);
        if let Some(tr) = trace.as_deref_mut() {
            tr.push((t, x, y, sigma));
        }

        let v = flow.eval(x).unwrap_or(0.0);
        if let MarkingRate::PowerLaw { .. } = marking {
            hazard += marking.eval(x) * cfg.dt;
        }
        let (px, py) = (x, y);
        if sigma > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            x += sigma * sqrt_dt * z;
        }
        y += v * cfg.dt;
        t += cfg.dt;
        if let Some((lo, hi)) = cfg.x_reflect {
            while x < lo || x > hi {
                if x < lo {
                    x = 2.0 * lo - x;
                }
                if x > hi {
                    x = 2.0 * hi - x;
                }
            }
        }

        // winding: accumulated turn of the radius vector
        let cross = px * y - py * x;
        let dot = px * x + py * y;
        if cross != 0.0 || dot != 0.0 {
            theta_acc += cross.atan2(dot);
        }
        let r = (x * x + y * y).sqrt();
        current_max_r = current_max_r.max(r);
        let w = (theta_acc.abs() / std::f64::consts::TAU) as usize;
        if w > winds_done {
            wind_max_radius.push(current_max_r);
            current_max_r = r;
            winds_done = w;
        }
    };

    PathStats {
        outcome,
        duration: t,
        winds: winds_done,
        wind_max_radius,
    }
}

/// True when the final (up to) `k` completed winds have strictly
/// decreasing max radius.
fn spiral_in(wind_max_radius: &[f64], k: usize) -> bool {
    let n = wind_max_radius.len();
    let take = k.min(n);
    if take < 2 {
        return true;
    }
    wind_max_radius[n - take..]
        .windows(2)
        .all(|w| w[1] < w[0])
}

/// Length of the maximal strictly-decreasing suffix.
fn spiral_depth(wind_max_radius: &[f64]) -> usize {
    let mut depth = 0;
    let mut prev = f64::NEG_INFINITY;
    for &r in wind_max_radius.iter().rev() {
        if depth == 0 || r > prev {
            depth += 1;
            prev = r;
        } else {
            break;
        }
    }
    depth.min(wind_max_radius.len())
}

/// Run `n_paths` independent paths and aggregate. Deterministic for a
/// fixed `(seed, cfg)` under any parallelism; aggregation runs in path
/// order.
pub fn estimate_success(
    policy: &ControlRegion,
    flow: &FlowSpec,
    cfg: &McConfig,
    marking: &MarkingRate,
) -> Result<(McResult, Vec<Vec<TraceRow>>), McError> {
    cfg.validate(policy.grid.x.min_spacing().min(policy.grid.y.min_spacing()))?;

    let stats: Vec<PathStats> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(policy, flow, cfg, i, None, marking))
        .collect();

    // traces are re-simulated serially for the first k paths: identical
    // streams reproduce identical paths
    let mut traces = Vec::new();
    for i in 0..cfg.trace_paths.min(cfg.n_paths) {
        let mut tr = Vec::new();
        simulate_path(policy, flow, cfg, i as u64, Some(&mut tr), marking);
        traces.push(tr);
    }

    let mut hits = 0;
    let mut marked = 0;
    let mut timed_out = 0;
    let mut exited = 0;
    let mut winds_sum = 0usize;
    let mut spiral_ok = 0usize;
    let mut depth_sum = 0usize;
    for s in &stats {
        match s.outcome {
            PathOutcome::Hit => {
                hits += 1;
                winds_sum += s.winds;
                if spiral_in(&s.wind_max_radius, 3) {
                    spiral_ok += 1;
                }
                depth_sum += spiral_depth(&s.wind_max_radius);
            }
            PathOutcome::Marked => marked += 1,
            PathOutcome::TimedOut => timed_out += 1,
            PathOutcome::Exited => exited += 1,
        }
    }
    let n = cfg.n_paths as f64;
    let p = hits as f64 / n;
    let winding = WindingStats {
        successes: hits,
        mean_winds: if hits > 0 {
            winds_sum as f64 / hits as f64
        } else {
            0.0
        },
        spiral_fraction: if hits > 0 {
            spiral_ok as f64 / hits as f64
        } else {
            0.0
        },
        mean_spiral_depth: if hits > 0 {
            depth_sum as f64 / hits as f64
        } else {
            0.0
        },
    };
    Ok((
        McResult {
            p_hat: p,
            stderr: (p * (1.0 - p) / n).sqrt(),
            hits,
            marked,
            timed_out,
            exited,
            n_paths: cfg.n_paths,
            winding,
        },
        traces,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AxisSpec, Grid2D};
    use crate::solver::MarkingRate;
    use std::sync::Arc;

    fn all_on_policy(g: Arc<Grid2D>, d: f64) -> ControlRegion {
        ControlRegion::from_indicator(g.clone(), vec![false; g.nx() * g.ny()], (2.0 * d).sqrt())
    }

    fn all_off_policy(g: Arc<Grid2D>) -> ControlRegion {
        ControlRegion::from_indicator(g.clone(), vec![true; g.nx() * g.ny()], 2.0)
    }

    fn box_grid() -> Arc<Grid2D> {
        Grid2D::build(
            AxisSpec::Bounded {
                lo: -1.0,
                hi: 1.0,
                n: 65,
            },
            AxisSpec::Bounded {
                lo: -1.0,
                hi: 1.0,
                n: 65,
            },
            true,
        )
        .unwrap()
    }

    fn base_cfg() -> McConfig {
        McConfig {
            dt: 1e-3,
            n_paths: 200,
            seed: 7,
            delta: 0.05,
            t_max: 20.0,
            start: (0.5, -0.5),
            x_reflect: None,
            trace_paths: 0,
        }
    }

    #[test]
    fn all_off_policy_is_deterministic_vertical_motion() {
        // sigma = 0 everywhere: x frozen, y drifts up through v(x) > 0;
        // a start that misses the ball gives success probability 0
        let g = box_grid();
        let policy = all_off_policy(g);
        let cfg = McConfig {
            start: (0.5, -0.5),
            delta: 0.05,
            n_paths: 50,
            ..base_cfg()
        };
        let (res, _) = estimate_success(
            &policy,
            &FlowSpec::linear(),
            &cfg,
            &MarkingRate::Constant(1.0),
        )
        .unwrap();
        assert_eq!(res.hits, 0);
        assert_eq!(res.p_hat, 0.0);
        // every path either marks or leaves through the top
        assert_eq!(res.marked + res.exited + res.timed_out, 50);
    }

    #[test]
    fn almost_sure_hit_without_marking() {
        // lambda -> 0, reflecting x walls, always-on diffusion: success
        // approaches 1 as t_max grows
        let g = box_grid();
        let policy = all_on_policy(g, 2.0);
        let mut prev = -1.0;
        for (t_max, _) in [(1.0, ()), (5.0, ()), (40.0, ())] {
            let cfg = McConfig {
                t_max,
                n_paths: 300,
                delta: 0.1,
                x_reflect: Some((-1.0, 1.0)),
                ..base_cfg()
            };
            let (res, _) = estimate_success(
                &policy,
                &FlowSpec::linear(),
                &cfg,
                &MarkingRate::Constant(1e-12),
            )
            .unwrap();
            assert!(
                res.p_hat >= prev - 0.05,
                "success not growing with t_max: {} after {}",
                res.p_hat,
                prev
            );
            prev = res.p_hat;
        }
        assert!(prev > 0.9, "long-horizon success only {prev}");
    }

    #[test]
    fn reproducible_across_worker_counts() {
        let g = box_grid();
        let policy = all_on_policy(g, 2.0);
        let cfg = base_cfg();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                estimate_success(
                    &policy,
                    &FlowSpec::linear(),
                    &cfg,
                    &MarkingRate::Constant(1.0),
                )
                .unwrap()
                .0
            })
        };
        let a = run(1);
        let b = run(2);
        assert_eq!(a.hits, b.hits);
        assert_eq!(a.p_hat, b.p_hat);
        assert_eq!(a.winding.mean_winds, b.winding.mean_winds);
    }

    #[test]
    fn stderr_halves_with_quadrupled_paths() {
        let g = box_grid();
        let policy = all_on_policy(g, 2.0);
        let run = |n: usize| {
            let cfg = McConfig {
                n_paths: n,
                ..base_cfg()
            };
            estimate_success(
                &policy,
                &FlowSpec::linear(),
                &cfg,
                &MarkingRate::Constant(1.0),
            )
            .unwrap()
            .0
        };
        let a = run(2000);
        let b = run(8000);
        // CLT: quadrupling paths halves the standard error (+-10% since
        // p_hat itself fluctuates)
        let ratio = a.stderr / b.stderr;
        assert!(
            (ratio - 2.0).abs() < 0.2,
            "stderr ratio {ratio}, a={}, b={}",
            a.stderr,
            b.stderr
        );
    }

    #[test]
    fn delta_monotonicity() {
        // a larger target ball cannot reduce the success estimate
        let g = box_grid();
        let policy = all_on_policy(g, 2.0);
        let run = |delta: f64| {
            let cfg = McConfig {
                delta,
                n_paths: 1500,
                ..base_cfg()
            };
            estimate_success(
                &policy,
                &FlowSpec::linear(),
                &cfg,
                &MarkingRate::Constant(1.0),
            )
            .unwrap()
            .0
            .p_hat
        };
        let (p1, p2, p3) = (run(0.05), run(0.1), run(0.2));
        assert!(p1 <= p2 + 0.02 && p2 <= p3 + 0.02, "{p1} {p2} {p3}");
    }

    #[test]
    fn rejects_sub_gridscale_delta() {
        let g = box_grid();
        let policy = all_on_policy(g, 2.0);
        let cfg = McConfig {
            delta: 1e-6,
            ..base_cfg()
        };
        assert!(estimate_success(
            &policy,
            &FlowSpec::linear(),
            &cfg,
            &MarkingRate::Constant(1.0)
        )
        .is_err());
    }

    #[test]
    fn traces_replay_the_same_path() {
        let g = box_grid();
        let policy = all_on_policy(g, 2.0);
        let cfg = McConfig {
            trace_paths: 2,
            n_paths: 4,
            ..base_cfg()
        };
        let (_, traces) = estimate_success(
            &policy,
            &FlowSpec::linear(),
            &cfg,
            &MarkingRate::Constant(1.0),
        )
        .unwrap();
        assert_eq!(traces.len(), 2);
        assert!(!traces[0].is_empty());
        // re-simulating path 0 gives the identical trace
        let mut tr = Vec::new();
        simulate_path(
            &policy,
            &FlowSpec::linear(),
            &cfg,
            0,
            Some(&mut tr),
            &MarkingRate::Constant(1.0),
        );
        assert_eq!(tr, traces[0]);
    }

    #[test]
    fn spiral_helpers() {
        assert!(spiral_in(&[5.0, 3.0, 1.0], 3));
        assert!(!spiral_in(&[1.0, 3.0, 2.0], 3));
        assert!(spiral_in(&[2.0], 3));
        assert_eq!(spiral_depth(&[5.0, 1.0, 3.0, 2.0, 1.0]), 3);
        assert_eq!(spiral_depth(&[1.0, 2.0]), 1);
    }
}
