//! No-diffusion region geometry: boundary extraction, near-field scaling
//! fits, and snap/gap diagnostics on solved control fields.
//!
//! The optimal control switches diffusion off where the discrete
//! curvature `d^2 phi / dx^2` dips below the (tie-breaking) threshold.
//! For `x > 0` the OFF region sits in `y < 0`, bounded above by the exit
//! boundary `y = a(x)` and below by the entrance boundary `y = b(x)`;
//! near the origin `-b(x) ~ x^alpha` with
//! `alpha = (beta - 1 + sqrt(beta^2 + 2 beta + 9))/2`.

use crate::flow::FlowSpec;
use crate::grid::{Grid2D, ScalarField};
use crate::snap::{exp_profile_fit, least_squares_line, n_metric, psi_from_phi, ExpFit, NMetric, ProfileLine};
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegionsError {
    #[error("too few boundary points in the fit window: {found} < {need}")]
    TooFewPoints { need: usize, found: usize },
    #[error("scaling exponent undefined: beta must exceed Lambda (beta = {beta}, Lambda = {lambda_exp})")]
    DegenerateMarking { beta: f64, lambda_exp: f64 },
    #[error("beta must be positive, got {0}")]
    BadBeta(f64),
    #[error("snap diagnostics need a bounded flow (sup v finite)")]
    UnboundedFlow,
    #[error("no off region found")]
    EmptyRegion,
    #[error("snap analysis failed: {0}")]
    Snap(#[from] crate::snap::SnapError),
}

/// One column of a component's boundary: exit `a` above, entrance `b`
/// below (for the `x > 0, y < 0` part of the region).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundaryColumn {
    pub x: f64,
    pub a: f64,
    pub b: f64,
}

/// A 4-connected component of the OFF set with its boundary polylines.
#[derive(Debug, Clone, Serialize)]
pub struct RegionComponent {
    pub node_count: usize,
    /// Ordered by x; one entry per grid column intersecting the component.
    pub columns: Vec<BoundaryColumn>,
}

impl RegionComponent {
    pub fn x_min(&self) -> f64 {
        self.columns.first().map(|c| c.x).unwrap_or(f64::NAN)
    }

    pub fn x_max(&self) -> f64 {
        self.columns.last().map(|c| c.x).unwrap_or(f64::NAN)
    }

    /// Entrance polyline `(x, b(x))`.
    pub fn entrance(&self) -> Vec<(f64, f64)> {
        self.columns.iter().map(|c| (c.x, c.b)).collect()
    }

    /// Exit polyline `(x, a(x))`.
    pub fn exit(&self) -> Vec<(f64, f64)> {
        self.columns.iter().map(|c| (c.x, c.a)).collect()
    }
}

/// Per-node on/off control indicator plus extracted geometry.
#[derive(Debug, Clone)]
pub struct ControlRegion {
    pub grid: Arc<Grid2D>,
    /// true = diffusion OFF at this node.
    pub off: Vec<bool>,
    /// Discrete curvature used for the classification; enables sub-cell
    /// boundary refinement. Absent for synthetic indicators.
    pub curvature: Option<Vec<f64>>,
    /// Tie-break threshold used in the classification.
    pub threshold: f64,
    /// Control value where diffusion is ON (`sqrt(2 D)`).
    pub sigma_on: f64,
    /// Filled by [`extract_boundaries`]; largest component first.
    pub components: Vec<RegionComponent>,
}

impl ControlRegion {
    /// Build from a raw indicator (no curvature refinement available).
    pub fn from_indicator(grid: Arc<Grid2D>, off: Vec<bool>, sigma_on: f64) -> Self {
        assert_eq!(off.len(), grid.nx() * grid.ny());
        ControlRegion {
            grid,
            off,
            curvature: None,
            threshold: 0.0,
            sigma_on,
            components: Vec::new(),
        }
    }

    #[inline]
    pub fn is_off(&self, ix: usize, iy: usize) -> bool {
        self.off[self.grid.idx(ix, iy)]
    }

    /// Control value at a node.
    pub fn sigma_at(&self, ix: usize, iy: usize) -> f64 {
        if self.is_off(ix, iy) {
            0.0
        } else {
            self.sigma_on
        }
    }

    /// The control field as a scalar field (for serialization).
    pub fn sigma_field(&self) -> ScalarField {
        let mut f = ScalarField::zeros(self.grid.clone(), "sigma");
        for iy in 0..self.grid.ny() {
            for ix in 0..self.grid.nx() {
                f.set(ix, iy, self.sigma_at(ix, iy));
            }
        }
        f
    }

    /// Components that live in `x > 0`, sorted by increasing `x_min`.
    pub fn components_positive_x(&self) -> Vec<&RegionComponent> {
        let mut cs: Vec<&RegionComponent> = self
            .components
            .iter()
            .filter(|c| c.x_max() > 0.0)
            .collect();
        cs.sort_by(|p, q| p.x_min().partial_cmp(&q.x_min()).unwrap());
        cs
    }

    /// The origin-adjacent component in `x > 0` (smallest `x_min`).
    pub fn primary_component(&self) -> Option<&RegionComponent> {
        self.components_positive_x().into_iter().next()
    }
}

/// Locate contiguous OFF runs per column, stitch them into 4-connected
/// components, and build per-component boundary polylines. Run endpoints
/// are refined by linear interpolation of the classifying curvature
/// between the bracketing nodes when curvature data is present.
pub fn extract_boundaries(region: &mut ControlRegion) {
    let g = region.grid.clone();
    let (nx, ny) = (g.nx(), g.ny());

    // column runs: (ix, lo, hi) with inclusive node indices
    let mut runs: Vec<(usize, usize, usize)> = Vec::new();
    let mut col_starts: Vec<usize> = Vec::with_capacity(nx + 1);
    for ix in 0..nx {
        col_starts.push(runs.len());
        let mut iy = 0;
        while iy < ny {
            if region.off[g.idx(ix, iy)] {
                let lo = iy;
                while iy + 1 < ny && region.off[g.idx(ix, iy + 1)] {
                    iy += 1;
                }
                runs.push((ix, lo, iy));
            }
            iy += 1;
        }
    }
    col_starts.push(runs.len());

    // union-find over runs; adjacent columns connect on interval overlap
    let mut parent: Vec<usize> = (0..runs.len()).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for ix in 1..nx {
        let (a0, a1) = (col_starts[ix - 1], col_starts[ix]);
        let (b0, b1) = (col_starts[ix], col_starts[ix + 1]);
        for ra in a0..a1 {
            for rb in b0..b1 {
                let (_, lo_a, hi_a) = runs[ra];
                let (_, lo_b, hi_b) = runs[rb];
                if lo_a <= hi_b && lo_b <= hi_a {
                    let (pa, pb) = (find(&mut parent, ra), find(&mut parent, rb));
                    if pa != pb {
                        parent[pa] = pb;
                    }
                }
            }
        }
    }

    // group runs by root, build column envelopes
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for r in 0..runs.len() {
        let root = find(&mut parent, r);
        groups.entry(root).or_default().push(r);
    }

    let mut components = Vec::new();
    for (_, members) in groups {
        let mut node_count = 0;
        // per column: envelope over this component's runs
        let mut envelope: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for &r in &members {
            let (ix, lo, hi) = runs[r];
            node_count += hi - lo + 1;
            envelope
                .entry(ix)
                .and_modify(|e| {
                    e.0 = e.0.min(lo);
                    e.1 = e.1.max(hi);
                })
                .or_insert((lo, hi));
        }
        let columns = envelope
            .into_iter()
            .map(|(ix, (lo, hi))| BoundaryColumn {
                x: g.x.phys[ix],
                a: refine_endpoint(region, &g, ix, hi, true),
                b: refine_endpoint(region, &g, ix, lo, false),
            })
            .collect();
        components.push(RegionComponent {
            node_count,
            columns,
        });
    }
    components.sort_by(|p, q| q.node_count.cmp(&p.node_count));
    region.components = components;
}

/// Sub-cell endpoint: interpolate the curvature crossing `kappa =
/// -threshold` between the outermost OFF node and its ON neighbour.
fn refine_endpoint(
    region: &ControlRegion,
    g: &Grid2D,
    ix: usize,
    iy_off: usize,
    upward: bool,
) -> f64 {
    let y_off = g.y.phys[iy_off];
    let neighbor = if upward {
        if iy_off + 1 >= g.ny() {
            return y_off;
        }
        iy_off + 1
    } else {
        if iy_off == 0 {
            return y_off;
        }
        iy_off - 1
    };
    if region.off[g.idx(ix, neighbor)] {
        // neighbour belongs to another run of the same column (envelope
        // interior); keep the node location
        return y_off;
    }
    let Some(curv) = &region.curvature else {
        return y_off;
    };
    let k_off = curv[g.idx(ix, iy_off)];
    let k_on = curv[g.idx(ix, neighbor)];
    let target = -region.threshold;
    if !(k_on > k_off) {
        return y_off;
    }
    let t = ((target - k_off) / (k_on - k_off)).clamp(0.0, 1.0);
    let y_on = g.y.phys[neighbor];
    y_off + t * (y_on - y_off)
}

/// Least-squares power-law fit of an entrance boundary.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub rms_residual: f64,
    pub points: usize,
}

/// Ordinary least squares of `log(-b)` on `log x` over the window.
/// Needs at least 8 vertices with `-b > 0` inside the window.
pub fn fit_entrance_exponent(
    boundary: &[(f64, f64)],
    window: (f64, f64),
) -> Result<ScalingFit, RegionsError> {
    let pts: Vec<(f64, f64)> = boundary
        .iter()
        .filter(|(x, b)| *x >= window.0 && *x <= window.1 && *b < 0.0 && *x > 0.0)
        .map(|(x, b)| (x.ln(), (-b).ln()))
        .collect();
    if pts.len() < 8 {
        return Err(RegionsError::TooFewPoints {
            need: 8,
            found: pts.len(),
        });
    }
    let fit = least_squares_line(&pts);
    let rms = (pts
        .iter()
        .map(|(u, w)| {
            let r = w - (fit.intercept + fit.rate * u);
            r * r
        })
        .sum::<f64>()
        / pts.len() as f64)
        .sqrt();
    Ok(ScalingFit {
        exponent: fit.rate,
        intercept: fit.intercept,
        window,
        rms_residual: rms,
        points: pts.len(),
    })
}

/// Near-field scaling exponent predicted by the half-wind balance, with
/// a spatial marking rate `lambda(x) ~ |x|^Lambda`:
///
/// ```text
/// alpha = ( beta - Lambda - 1
///         + sqrt(beta^2 + 2 beta + 9 + Lambda^2 - 2 beta Lambda + 2 Lambda) ) / 2
/// ```
///
/// `Lambda = 0` reduces to `alpha = (beta - 1 + sqrt(beta^2 + 2 beta + 9))/2`.
pub fn predicted_alpha(beta: f64, lambda_exp: f64) -> Result<f64, RegionsError> {
    if !(beta > 0.0) {
        return Err(RegionsError::BadBeta(beta));
    }
    if beta <= lambda_exp {
        return Err(RegionsError::DegenerateMarking { beta, lambda_exp });
    }
    let disc = beta * beta + 2.0 * beta + 9.0 + lambda_exp * lambda_exp
        - 2.0 * beta * lambda_exp
        + 2.0 * lambda_exp;
    Ok(0.5 * (beta - lambda_exp - 1.0 + disc.sqrt()))
}

/// Settings for the snap diagnostics. Defaults match a desk-scale solve
/// in nondimensional variables (`sup v = 1`).
#[derive(Debug, Clone)]
pub struct SnapDetection {
    /// A y-row is filament-like when all its OFF runs are at most this
    /// many cells wide (resolution-limited definition).
    pub max_filament_cells: usize,
    /// psi-constancy confirmation: N on the small-velocity side between
    /// two beyond-onset stations must stay below this.
    pub n_tol: f64,
    /// Station pairs `(y1, y2)` at which N is reported.
    pub stations: Vec<(f64, f64)>,
    /// x-range for the reported N metrics.
    pub xi: (f64, f64),
    /// Depths (below the onset) of the two confirmation stations.
    pub confirm_offsets: (f64, f64),
    /// Override for the filament decay-fit y-range.
    pub filament_fit_range: Option<(f64, f64)>,
}

impl Default for SnapDetection {
    fn default() -> Self {
        SnapDetection {
            max_filament_cells: 3,
            n_tol: 1e-2,
            stations: Vec::new(),
            xi: (f64::NEG_INFINITY, 1.0),
            confirm_offsets: (1.0, 2.5),
            filament_fit_range: None,
        }
    }
}

/// Snap diagnostics of a solved bounded-flow run.
#[derive(Debug, Clone, Serialize)]
pub struct SnapReport {
    pub degenerate: bool,
    pub x_m: f64,
    /// Onset depth of the filament regime, when found.
    pub y_m: Option<f64>,
    /// x of the grid column carrying the filament.
    pub filament_x: Option<f64>,
    /// Fitted decay rate of `log phi` along the filament (per unit |y|).
    pub decay_rate: Option<f64>,
    pub decay_fit: Option<ExpFit>,
    /// psi-constancy metric used for the degeneracy confirmation.
    pub confirmation_n: Option<f64>,
    /// N at the requested station pairs.
    pub n_metrics: Vec<NMetric>,
}

/// Detect degeneration of the no-diffusion region onto the lines
/// `x = -sgn(y) x_m`, estimate the onset depth and the filament decay
/// rate, and evaluate the psi-similarity metric at the requested
/// stations. The field must be solved in nondimensional variables.
pub fn snap_report(
    region: &ControlRegion,
    phi: &ScalarField,
    flow: &FlowSpec,
    eps: f64,
    det: &SnapDetection,
) -> Result<SnapReport, RegionsError> {
    let (x_m, _v_max) = flow.supremum().ok_or(RegionsError::UnboundedFlow)?;
    let g = region.grid.clone();
    let (nx, ny) = (g.nx(), g.ny());

    // per y-row (y < 0): OFF runs along x. A row is filament-like when
    // every run is narrow and centred near x_m.
    let mut rows: Vec<(usize, bool)> = Vec::new(); // (iy, filament-like)
    for iy in 0..ny {
        let y = g.y.phys[iy];
        if y >= 0.0 {
            continue;
        }
        let mut any_off = false;
        let mut filament = true;
        let mut ix = 0;
        while ix < nx {
            if region.off[g.idx(ix, iy)] {
                any_off = true;
                let lo = ix;
                while ix + 1 < nx && region.off[g.idx(ix + 1, iy)] {
                    ix += 1;
                }
                let width_cells = ix - lo + 1;
                let center = 0.5 * (g.x.phys[lo] + g.x.phys[ix]);
                let local_cell = g.x.phys[(ix + 1).min(nx - 1)] - g.x.phys[ix];
                let x_slack = (3.0 * local_cell).max(0.05 * x_m);
                if width_cells > det.max_filament_cells || (center - x_m).abs() > x_slack {
                    filament = false;
                }
            }
            ix += 1;
        }
        if any_off {
            rows.push((iy, filament));
        }
    }
    if rows.is_empty() {
        return Err(RegionsError::EmptyRegion);
    }

    // rows are ordered by iy, i.e. deepest (most negative y) first; the
    // onset is the shallowest row of the all-filament prefix, and the
    // prefix must start at the deepest OFF row for the regime to extend
    // to the far field.
    let mut onset: Option<f64> = None;
    for &(iy, fil) in rows.iter() {
        if !fil {
            break;
        }
        onset = Some(g.y.phys[iy].abs());
    }

    let geometric = onset.is_some();
    let y_m = onset;

    // filament column: nearest to x_m
    let fil_ix = g.x.nearest_index(x_m);
    let filament_x = Some(g.x.phys[fil_ix]);

    // confirmation: psi y-independence on the small-velocity side
    let psi = psi_from_phi(phi, eps);
    let confirmation_n = y_m.and_then(|ym| {
        let (o1, o2) = det.confirm_offsets;
        let y1 = -(ym + o1);
        let y2 = -(ym + o2);
        n_metric(&psi, f64::NEG_INFINITY, x_m - 0.05, y1, y2)
            .ok()
            .map(|m| m.value)
    });

    let degenerate = geometric && confirmation_n.map(|n| n <= det.n_tol).unwrap_or(false);

    // decay fit along the filament
    let (decay_fit, decay_rate) = if let Some(ym) = y_m {
        let (lo, hi) = det
            .filament_fit_range
            .unwrap_or((g.y.phys[1].max(-8.0), -(ym + 0.5)));
        match exp_profile_fit(
            phi,
            ProfileLine::FixedX {
                x: x_m,
                y_lo: lo,
                y_hi: hi,
            },
        ) {
            Ok(f) => (Some(f), Some(f.rate.abs())),
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };

    // requested station metrics
    let mut n_metrics = Vec::new();
    for &(y1, y2) in &det.stations {
        n_metrics.push(n_metric(&psi, det.xi.0, det.xi.1, y1, y2)?);
    }

    Ok(SnapReport {
        degenerate,
        x_m,
        y_m,
        filament_x,
        decay_rate,
        decay_fit,
        confirmation_n,
        n_metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AxisSpec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(n: usize) -> Arc<Grid2D> {
        Grid2D::build(
            AxisSpec::Bounded {
                lo: -1.0,
                hi: 1.0,
                n,
            },
            AxisSpec::Bounded {
                lo: -1.0,
                hi: 1.0,
                n,
            },
            true,
        )
        .unwrap()
    }

    #[test]
    fn rectangle_indicator_extracts_exact_envelope() {
        let g = grid(21); // spacing 0.1: nodes land on 0.2, 0.4, -0.3, -0.1
        let mut off = vec![false; g.nx() * g.ny()];
        for iy in 0..g.ny() {
            for ix in 0..g.nx() {
                let (x, y) = (g.x.phys[ix], g.y.phys[iy]);
                if (0.2..=0.4).contains(&x) && (-0.3..=-0.1).contains(&y) {
                    off[g.idx(ix, iy)] = true;
                }
            }
        }
        let mut region = ControlRegion::from_indicator(g, off, 2.0);
        extract_boundaries(&mut region);
        assert_eq!(region.components.len(), 1);
        let c = &region.components[0];
        assert_eq!(c.columns.len(), 3);
        for col in &c.columns {
            assert_abs_diff_eq!(col.a, -0.1, epsilon = 1e-12);
            assert_abs_diff_eq!(col.b, -0.3, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(c.x_min(), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(c.x_max(), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn empty_indicator_gives_no_components() {
        let g = grid(17);
        let mut region = ControlRegion::from_indicator(g.clone(), vec![false; g.nx() * g.ny()], 2.0);
        extract_boundaries(&mut region);
        assert!(region.components.is_empty());
    }

    #[test]
    fn two_blobs_are_two_components() {
        let g = grid(33);
        let mut off = vec![false; g.nx() * g.ny()];
        for iy in 0..g.ny() {
            for ix in 0..g.nx() {
                let (x, y) = (g.x.phys[ix], g.y.phys[iy]);
                if (0.125..=0.25).contains(&x) && (-0.5..=-0.25).contains(&y) {
                    off[g.idx(ix, iy)] = true;
                }
                if (0.625..=0.75).contains(&x) && (-0.5..=-0.25).contains(&y) {
                    off[g.idx(ix, iy)] = true;
                }
            }
        }
        let mut region = ControlRegion::from_indicator(g, off, 2.0);
        extract_boundaries(&mut region);
        assert_eq!(region.components.len(), 2);
        let pos = region.components_positive_x();
        assert!(pos[0].x_min() < pos[1].x_min());
    }

    #[test]
    fn boundaries_bracket_every_off_node() {
        // an irregular blob
        let g = grid(33);
        let mut off = vec![false; g.nx() * g.ny()];
        for iy in 0..g.ny() {
            for ix in 0..g.nx() {
                let (x, y) = (g.x.phys[ix], g.y.phys[iy]);
                if x > 0.1 && y < -0.1 && (x * x + y * y) < 0.5 && y > -0.6 - 0.3 * x {
                    off[g.idx(ix, iy)] = true;
                }
            }
        }
        let mut region = ControlRegion::from_indicator(g.clone(), off, 2.0);
        extract_boundaries(&mut region);
        for c in &region.components {
            for col in &c.columns {
                let ix = g.x.nearest_index(col.x);
                for iy in 0..g.ny() {
                    if region.is_off(ix, iy) {
                        let y = g.y.phys[iy];
                        assert!(y <= col.a + 1e-12 && y >= col.b - 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn curvature_refinement_moves_endpoint_between_nodes() {
        let g = grid(21);
        let mut off = vec![false; g.nx() * g.ny()];
        let ix = 12;
        for iy in 4..=7 {
            off[g.idx(ix, iy)] = true;
        }
        // synthetic curvature: -1 on OFF nodes, +1 on ON: crossing halfway
        let mut curv = vec![1.0; g.nx() * g.ny()];
        for iy in 4..=7 {
            curv[g.idx(ix, iy)] = -1.0;
        }
        let mut region = ControlRegion::from_indicator(g.clone(), off, 2.0);
        region.curvature = Some(curv);
        extract_boundaries(&mut region);
        let c = &region.components[0];
        let col = &c.columns[0];
        let h = 0.1;
        assert_abs_diff_eq!(col.a, g.y.phys[7] + 0.5 * h, epsilon = 1e-12);
        assert_abs_diff_eq!(col.b, g.y.phys[4] - 0.5 * h, epsilon = 1e-12);
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let alpha = 3.0f64.sqrt();
        let boundary: Vec<(f64, f64)> = (1..200)
            .map(|i| {
                let x = i as f64 * 0.005;
                (x, -x.powf(alpha))
            })
            .collect();
        let fit = fit_entrance_exponent(&boundary, (0.05, 0.8)).unwrap();
        assert_abs_diff_eq!(fit.exponent, alpha, epsilon = 1e-12);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn fit_needs_enough_points() {
        let boundary = vec![(0.1, -0.01), (0.2, -0.05)];
        assert!(matches!(
            fit_entrance_exponent(&boundary, (0.0, 1.0)),
            Err(RegionsError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn predicted_alpha_table_values() {
        // beta = 1 gives sqrt(3); the table rows follow the same surd
        assert_abs_diff_eq!(predicted_alpha(1.0, 0.0).unwrap(), 3.0f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            predicted_alpha(0.5, 0.0).unwrap(),
            (41.0f64.sqrt() - 1.0) / 4.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            predicted_alpha(1.5, 0.0).unwrap(),
            (57.0f64.sqrt() + 1.0) / 4.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            predicted_alpha(2.0, 0.0).unwrap(),
            (17.0f64.sqrt() + 1.0) / 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn predicted_alpha_lambda_reduction_and_domain() {
        // Lambda = 0 reduces to the plain form
        for &beta in &[0.5, 1.0, 2.0, 3.0] {
            let a = predicted_alpha(beta, 0.0).unwrap();
            let plain = 0.5 * (beta - 1.0 + (beta * beta + 2.0 * beta + 9.0).sqrt());
            assert_abs_diff_eq!(a, plain, epsilon = 1e-15);
        }
        assert!(matches!(
            predicted_alpha(1.0, 1.0),
            Err(RegionsError::DegenerateMarking { .. })
        ));
        assert!(matches!(
            predicted_alpha(0.5, 2.0),
            Err(RegionsError::DegenerateMarking { .. })
        ));
        assert!(predicted_alpha(-1.0, 0.0).is_err());
    }

    #[test]
    fn predicted_alpha_increasing_in_beta() {
        let mut prev = 0.0;
        let mut beta = 0.25;
        while beta <= 4.0 {
            let a = predicted_alpha(beta, 0.0).unwrap();
            assert!(a > prev, "alpha not increasing at beta = {beta}");
            prev = a;
            beta += 0.05;
        }
    }

    proptest! {
        // synthetic -x^alpha recovered to 1e-10 over alpha in [1, 3]
        #[test]
        fn fit_recovery_property(alpha in 1.0f64..3.0) {
            let boundary: Vec<(f64, f64)> = (1..100)
                .map(|i| {
                    let x = i as f64 * 0.01;
                    (x, -x.powf(alpha))
                })
                .collect();
            let fit = fit_entrance_exponent(&boundary, (0.05, 0.9)).unwrap();
            prop_assert!((fit.exponent - alpha).abs() < 1e-10);
        }
    }
}
