//! Exact-snap diagnostics for bounded flows.
//!
//! When the no-diffusion region degenerates to the lines
//! `x = -sgn(y) x_m`, the solved field saturates its advective bound
//! `phi <= exp(-eps^{-2} |y| / 2)` up to a multiplicative constant, so
//! the substitution
//!
//! ```text
//! psi(x, y) = exp(+eps^{-2} |y| / 2) phi(x, y)
//! ```
//!
//! becomes y-independent in the snapped areas (`|y| > y_m`, `x` on the
//! small-velocity side of the filament). The similarity metric `N`
//! quantifies y-independence between two grid stations; exponential
//! profile fits check the predicted `exp(sqrt(2) eps^{-2} x)` decay on
//! the far side. All field manipulations run in log space: the fields
//! decay through hundreds of e-folds across the grid.

use crate::grid::ScalarField;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SnapError {
    #[error("empty x-range [{0}, {1}]")]
    EmptyRange(f64, f64),
    #[error("need at least {need} positive nodes on the line, found {found}")]
    TooFewNodes { need: usize, found: usize },
}

/// `phi` after removal of the leading advective decay.
#[derive(Debug, Clone)]
pub struct PsiField {
    pub field: ScalarField,
    pub eps: f64,
}

/// `psi(x, y) = exp(log phi + eps^{-2} |y| / 2)`, with `psi = 0` where
/// `phi = 0`. Assumes `phi` was solved in nondimensional variables with
/// `sup v = 1`.
pub fn psi_from_phi(phi: &ScalarField, eps: f64) -> PsiField {
    let g = phi.grid.clone();
    let k = 0.5 / (eps * eps);
    let mut out = ScalarField::zeros(g.clone(), "psi");
    for iy in 0..g.ny() {
        let boost = k * g.y.phys[iy].abs();
        for ix in 0..g.nx() {
            let p = phi.at(ix, iy);
            if p > 0.0 {
                out.set(ix, iy, (p.ln() + boost).exp());
            }
        }
    }
    PsiField { field: out, eps }
}

/// Result of an [`n_metric`] evaluation, with the stations snapped to
/// actual grid rows.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NMetric {
    pub value: f64,
    pub y1: f64,
    pub y2: f64,
    /// Node count that entered the supremum.
    pub nodes: usize,
}

/// Similarity of `psi` between two y-stations over `x in [xi1, xi2]`:
/// `sup |psi(x,y1) - psi(x,y2)| / (psi(x,y1) + psi(x,y2))`.
///
/// Stations snap to the nearest grid rows (reported in the result);
/// nodes where both values vanish are skipped. Infinite `xi` bounds
/// select the whole axis.
pub fn n_metric(
    psi: &PsiField,
    xi1: f64,
    xi2: f64,
    y1: f64,
    y2: f64,
) -> Result<NMetric, SnapError> {
    if !(xi1 < xi2) {
        return Err(SnapError::EmptyRange(xi1, xi2));
    }
    let g = &psi.field.grid;
    let j1 = g.y.nearest_index(y1);
    let j2 = g.y.nearest_index(y2);
    let mut sup = 0.0f64;
    let mut nodes = 0;
    for ix in 0..g.nx() {
        let x = g.x.phys[ix];
        if x < xi1 || x > xi2 {
            continue;
        }
        let (p1, p2) = (psi.field.at(ix, j1), psi.field.at(ix, j2));
        if p1 == 0.0 && p2 == 0.0 {
            continue;
        }
        nodes += 1;
        sup = sup.max((p1 - p2).abs() / (p1 + p2));
    }
    if nodes == 0 {
        return Err(SnapError::EmptyRange(xi1, xi2));
    }
    Ok(NMetric {
        value: sup,
        y1: g.y.phys[j1],
        y2: g.y.phys[j2],
        nodes,
    })
}

/// A line through the field: fixed `y` over an x-range, or fixed `x`
/// over a y-range. Coordinates snap to grid nodes.
#[derive(Debug, Clone, Copy)]
pub enum ProfileLine {
    FixedY { y: f64, x_lo: f64, x_hi: f64 },
    FixedX { x: f64, y_lo: f64, y_hi: f64 },
}

/// Exponential profile fit along a line.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpFit {
    /// Slope of `log phi` against the running coordinate.
    pub rate: f64,
    /// Pearson correlation of (coordinate, log phi).
    pub correlation: f64,
    pub intercept: f64,
    pub nodes: usize,
}

/// Least-squares fit of `log phi` against the coordinate along `line`.
/// Requires at least 8 strictly positive nodes.
pub fn exp_profile_fit(phi: &ScalarField, line: ProfileLine) -> Result<ExpFit, SnapError> {
    let g = &phi.grid;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    match line {
        ProfileLine::FixedY { y, x_lo, x_hi } => {
            let iy = g.y.nearest_index(y);
            for ix in 0..g.nx() {
                let x = g.x.phys[ix];
                if x >= x_lo && x <= x_hi {
                    let p = phi.at(ix, iy);
                    if p > 0.0 {
                        pts.push((x, p.ln()));
                    }
                }
            }
        }
        ProfileLine::FixedX { x, y_lo, y_hi } => {
            let ix = g.x.nearest_index(x);
            for iy in 0..g.ny() {
                let y = g.y.phys[iy];
                if y >= y_lo && y <= y_hi {
                    let p = phi.at(ix, iy);
                    if p > 0.0 {
                        pts.push((y, p.ln()));
                    }
                }
            }
        }
    }
    if pts.len() < 8 {
        return Err(SnapError::TooFewNodes {
            need: 8,
            found: pts.len(),
        });
    }
    Ok(least_squares_line(&pts))
}

/// Ordinary least squares of `w` on `u` with Pearson correlation.
pub(crate) fn least_squares_line(pts: &[(f64, f64)]) -> ExpFit {
    let n = pts.len() as f64;
    let (mut su, mut sw) = (0.0, 0.0);
    for &(u, w) in pts {
        su += u;
        sw += w;
    }
    let (mu, mw) = (su / n, sw / n);
    let (mut suu, mut sww, mut suw) = (0.0, 0.0, 0.0);
    for &(u, w) in pts {
        suu += (u - mu) * (u - mu);
        sww += (w - mw) * (w - mw);
        suw += (u - mu) * (w - mw);
    }
    let rate = suw / suu;
    let correlation = if sww > 0.0 {
        (suw / (suu * sww).sqrt()).abs()
    } else {
        1.0
    };
    ExpFit {
        rate,
        correlation,
        intercept: mw - rate * mu,
        nodes: pts.len(),
    }
}
