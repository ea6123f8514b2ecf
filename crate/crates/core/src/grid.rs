//! Stretched tensor-product grids and node-indexed scalar fields.
//!
//! Unbounded axes use a tanh map: computational coordinates `c` live on a
//! uniform lattice strictly inside `(-1, 1)` and physical coordinates are
//! `x = L atanh(c)`, so the near-origin region is resolved finely and the
//! far field coarsens. Bounded axes are uniform in physical space.
//!
//! Fields are stored row-major with `y` as the outer index.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

/// Magic bytes of the binary field dump (24-byte header: magic, nx, ny).
pub const FIELD_MAGIC: &[u8; 8] = b"KMOCFLD1";

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad field file: {0}")]
    BadFile(String),
}

/// Declarative description of one grid axis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AxisSpec {
    /// Uniform nodes on `[lo, hi]`, endpoints included.
    Bounded { lo: f64, hi: f64, n: usize },
    /// Tanh-stretched image of the whole real line: `x = scale * atanh(c)`
    /// with `c` uniform in `(-1, 1)` exclusive.
    Unbounded { scale: f64, n: usize },
}

impl AxisSpec {
    pub fn n(&self) -> usize {
        match self {
            AxisSpec::Bounded { n, .. } | AxisSpec::Unbounded { n, .. } => *n,
        }
    }

    fn validate(&self) -> Result<(), GridError> {
        let n = self.n();
        if n < 16 {
            return Err(GridError::Invalid(format!("need >= 16 nodes, got {n}")));
        }
        match *self {
            AxisSpec::Bounded { lo, hi, .. } => {
                if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                    return Err(GridError::Invalid(format!("bad bounds [{lo}, {hi}]")));
                }
            }
            AxisSpec::Unbounded { scale, .. } => {
                if !(scale > 0.0) || !scale.is_finite() {
                    return Err(GridError::Invalid(format!("bad stretch scale {scale}")));
                }
            }
        }
        Ok(())
    }
}

/// One materialized axis: node coordinates in computational and physical
/// space, both strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub spec: AxisSpec,
    pub comp: Vec<f64>,
    pub phys: Vec<f64>,
}

impl Axis {
    fn build(spec: AxisSpec) -> Result<Self, GridError> {
        spec.validate()?;
        let (comp, phys): (Vec<f64>, Vec<f64>) = match spec {
            AxisSpec::Bounded { lo, hi, n } => {
                let h = (hi - lo) / (n - 1) as f64;
                let phys: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
                let comp = phys
                    .iter()
                    .map(|&x| (2.0 * x - lo - hi) / (hi - lo))
                    .collect();
                (comp, phys)
            }
            AxisSpec::Unbounded { scale, n } => {
                // c_i = -1 + 2(i+1)/(n+1): uniform, negation-closed,
                // endpoints excluded
                let comp: Vec<f64> = (0..n)
                    .map(|i| -1.0 + 2.0 * (i + 1) as f64 / (n + 1) as f64)
                    .collect();
                let phys = comp.iter().map(|&c| scale * c.atanh()).collect();
                (comp, phys)
            }
        };
        for w in phys.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(GridError::Invalid("physical nodes not increasing".into()));
            }
        }
        Ok(Axis { spec, comp, phys })
    }

    pub fn n(&self) -> usize {
        self.phys.len()
    }

    /// Physical -> computational map.
    pub fn comp_of(&self, x: f64) -> f64 {
        match self.spec {
            AxisSpec::Bounded { lo, hi, .. } => (2.0 * x - lo - hi) / (hi - lo),
            AxisSpec::Unbounded { scale, .. } => (x / scale).tanh(),
        }
    }

    /// Smallest physical spacing between adjacent nodes.
    pub fn min_spacing(&self) -> f64 {
        self.phys
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// True when the node set is exactly closed under negation.
    pub fn is_negation_closed(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| self.phys[i] == -self.phys[n - 1 - i])
    }

    /// Index of the node at 0, when present.
    pub fn center_index(&self) -> Option<usize> {
        let n = self.n();
        (n % 2 == 1 && self.phys[n / 2] == 0.0).then_some(n / 2)
    }

    /// Index of the node nearest to `x` (clamped to the axis).
    pub fn nearest_index(&self, x: f64) -> usize {
        let i = self.phys.partition_point(|&p| p < x);
        if i == 0 {
            0
        } else if i >= self.n() {
            self.n() - 1
        } else if x - self.phys[i - 1] <= self.phys[i] - x {
            i - 1
        } else {
            i
        }
    }
}

/// Tensor-product grid of an x axis and a y axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub x: Axis,
    pub y: Axis,
}

impl Grid2D {
    /// Build a grid from axis specs.
    ///
    /// With `symmetric = true` both axes must be negation-closed with an
    /// odd node count (so the origin is a node); this is required by the
    /// solver's reflection `phi(-x,-y) = phi(x,y)`.
    pub fn build(x: AxisSpec, y: AxisSpec, symmetric: bool) -> Result<Arc<Self>, GridError> {
        let x = Axis::build(x)?;
        let y = Axis::build(y)?;
        let g = Grid2D { x, y };
        if symmetric {
            if !g.x.is_negation_closed() || !g.y.is_negation_closed() {
                return Err(GridError::Invalid(
                    "symmetric grid requires negation-closed axes (lo = -hi)".into(),
                ));
            }
            if g.origin_index().is_none() {
                return Err(GridError::Invalid(
                    "symmetric grid requires odd node counts so (0,0) is a node".into(),
                ));
            }
        }
        Ok(Arc::new(g))
    }

    pub fn nx(&self) -> usize {
        self.x.n()
    }

    pub fn ny(&self) -> usize {
        self.y.n()
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx() + ix
    }

    /// `(ix, iy)` of the node at the origin, when it exists.
    pub fn origin_index(&self) -> Option<(usize, usize)> {
        Some((self.x.center_index()?, self.y.center_index()?))
    }

    pub fn nearest_node(&self, x: f64, y: f64) -> (usize, usize) {
        (self.x.nearest_index(x), self.y.nearest_index(y))
    }
}

/// Scalar data indexed by grid nodes.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<Grid2D>,
    pub name: String,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Arc<Grid2D>, name: &str) -> Self {
        let n = grid.nx() * grid.ny();
        ScalarField {
            grid,
            name: name.to_string(),
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Arc<Grid2D>, name: &str, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid, name);
        let g = out.grid.clone();
        for iy in 0..g.ny() {
            for ix in 0..g.nx() {
                out.values[g.idx(ix, iy)] = f(g.x.phys[ix], g.y.phys[iy]);
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.idx(ix, iy)]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, v: f64) {
        let i = self.grid.idx(ix, iy);
        self.values[i] = v;
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// CSV dump with schema `x,y,value`, one row per node, 17 significant
    /// digits, y-major node order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), GridError> {
        writeln!(w, "x,y,value")?;
        let g = &self.grid;
        for iy in 0..g.ny() {
            for ix in 0..g.nx() {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e}",
                    g.x.phys[ix],
                    g.y.phys[iy],
                    self.at(ix, iy)
                )?;
            }
        }
        Ok(())
    }

    /// Compact binary dump: 24-byte header (magic, nx, ny as little-endian
    /// u64) followed by row-major (y-outer) little-endian f64 values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), GridError> {
        w.write_all(FIELD_MAGIC)?;
        w.write_all(&(self.grid.nx() as u64).to_le_bytes())?;
        w.write_all(&(self.grid.ny() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read back a binary dump written by [`write_binary`]. The values are
    /// returned with the stored shape; the caller re-attaches a grid.
    pub fn read_binary<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f64>), GridError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FIELD_MAGIC {
            return Err(GridError::BadFile("bad magic".into()));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let nx = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let ny = u64::from_le_bytes(b8) as usize;
        let mut values = vec![0.0f64; nx * ny];
        let mut buf = vec![0u8; nx * ny * 8];
        r.read_exact(&mut buf)?;
        for (i, c) in buf.chunks_exact(8).enumerate() {
            values[i] = f64::from_le_bytes(c.try_into().unwrap());
        }
        Ok((nx, ny, values))
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<(), GridError> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn write_binary_path(&self, path: &Path) -> Result<(), GridError> {
        let f = std::fs::File::create(path)?;
        self.write_binary(std::io::BufWriter::new(f))
    }
}

/// Three-point stencil coefficients for `d^2/dx^2` on a nonuniform grid:
/// `f'' ~ cm f[i-1] + c0 f[i] + cp f[i+1]`, exact for quadratics.
#[inline]
pub fn second_diff_coeffs(hm: f64, hp: f64) -> (f64, f64, f64) {
    let s = hm + hp;
    (2.0 / (hm * s), -2.0 / (hm * hp), 2.0 / (hp * s))
}

/// Discrete `d^2/dx^2` of a field on the (possibly nonuniform) physical
/// grid. Interior nodes use the centered three-point stencil; boundary
/// columns use the one-sided second divided difference over the nearest
/// three nodes (also exact for quadratics).
pub fn second_difference_x(field: &ScalarField) -> ScalarField {
    let g = field.grid.clone();
    let nx = g.nx();
    assert!(nx >= 3, "second_difference_x needs >= 3 nodes in x");
    let mut out = ScalarField::zeros(g.clone(), &format!("{}_xx", field.name));
    let xs = &g.x.phys;
    for iy in 0..g.ny() {
        let row = &field.values[iy * nx..(iy + 1) * nx];
        let orow = &mut out.values[iy * nx..(iy + 1) * nx];
        for ix in 1..nx - 1 {
            let (cm, c0, cp) = second_diff_coeffs(xs[ix] - xs[ix - 1], xs[ix + 1] - xs[ix]);
            orow[ix] = cm * row[ix - 1] + c0 * row[ix] + cp * row[ix + 1];
        }
        orow[0] = one_sided_second(xs[0], xs[1], xs[2], row[0], row[1], row[2]);
        orow[nx - 1] = one_sided_second(
            xs[nx - 3],
            xs[nx - 2],
            xs[nx - 1],
            row[nx - 3],
            row[nx - 2],
            row[nx - 1],
        );
    }
    out
}

/// Twice the second divided difference over three arbitrary nodes.
#[inline]
fn one_sided_second(x0: f64, x1: f64, x2: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let d01 = (f1 - f0) / (x1 - x0);
    let d12 = (f2 - f1) / (x2 - x1);
    2.0 * (d12 - d01) / (x2 - x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform_grid(n: usize) -> Arc<Grid2D> {
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

    fn stretched_grid(n: usize) -> Arc<Grid2D> {
        Grid2D::build(
            AxisSpec::Unbounded { scale: 2.0, n },
            AxisSpec::Unbounded { scale: 2.0, n },
            true,
        )
        .unwrap()
    }

    #[test]
    fn bounded_axis_spacing() {
        let g = uniform_grid(129);
        assert_abs_diff_eq!(g.x.min_spacing(), 1.0 / 64.0, epsilon = 1e-15);
        assert_eq!(g.origin_index(), Some((64, 64)));
    }

    #[test]
    fn unbounded_axis_center_and_scale() {
        let g = Grid2D::build(
            AxisSpec::Unbounded { scale: 2.0, n: 201 },
            AxisSpec::Unbounded { scale: 2.0, n: 17 },
            true,
        )
        .unwrap();
        assert_eq!(g.x.phys[100], 0.0);
        // c = tanh(1) maps back to physical x = L
        let c = 1.0f64.tanh();
        let x = 2.0 * c.atanh();
        assert_abs_diff_eq!(x, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn round_trip_mapping() {
        for g in [uniform_grid(65), stretched_grid(65)] {
            for ax in [&g.x, &g.y] {
                for (i, &x) in ax.phys.iter().enumerate() {
                    assert_abs_diff_eq!(ax.comp_of(x), ax.comp[i], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn negation_closed() {
        for g in [uniform_grid(65), stretched_grid(64 + 1)] {
            assert!(g.x.is_negation_closed());
            assert!(g.y.is_negation_closed());
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(Grid2D::build(
            AxisSpec::Bounded {
                lo: 0.0,
                hi: 0.0,
                n: 33
            },
            AxisSpec::Unbounded { scale: 1.0, n: 33 },
            false
        )
        .is_err());
        assert!(Grid2D::build(
            AxisSpec::Unbounded { scale: -1.0, n: 33 },
            AxisSpec::Unbounded { scale: 1.0, n: 33 },
            false
        )
        .is_err());
        assert!(Grid2D::build(
            AxisSpec::Unbounded { scale: 1.0, n: 8 },
            AxisSpec::Unbounded { scale: 1.0, n: 33 },
            false
        )
        .is_err());
        // even node count cannot hold the origin
        assert!(Grid2D::build(
            AxisSpec::Unbounded { scale: 1.0, n: 32 },
            AxisSpec::Unbounded { scale: 1.0, n: 33 },
            true
        )
        .is_err());
    }

    #[test]
    fn second_difference_exact_for_quadratics() {
        let g = uniform_grid(65);
        let f = ScalarField::from_fn(g.clone(), "f", |x, _| x * x);
        let d = second_difference_x(&f);
        for iy in 0..g.ny() {
            for ix in 0..g.nx() {
                assert_abs_diff_eq!(d.at(ix, iy), 2.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn second_difference_annihilates_affine() {
        for g in [uniform_grid(33), stretched_grid(33)] {
            let f = ScalarField::from_fn(g.clone(), "f", |x, _| 3.0 * x - 7.0);
            let d = second_difference_x(&f);
            for v in &d.values {
                assert!(v.abs() < 1e-9, "affine not annihilated: {v}");
            }
        }
    }

    #[test]
    fn second_difference_converges_on_stretched_grid() {
        // f = x^3 -> f'' = 6x; halving the spacing should show order >= 1.9
        let err = |n: usize| -> f64 {
            let g = stretched_grid(n);
            let f = ScalarField::from_fn(g.clone(), "f", |x, _| x * x * x);
            let d = second_difference_x(&f);
            let mut e = 0.0f64;
            for iy in [g.ny() / 2] {
                for ix in 1..g.nx() - 1 {
                    let x = g.x.phys[ix];
                    if x.abs() < 1.5 {
                        e = e.max((d.at(ix, iy) - 6.0 * x).abs());
                    }
                }
            }
            e
        };
        let e1 = err(65);
        let e2 = err(129);
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "observed order {order} (e1={e1}, e2={e2})");
    }

    #[test]
    fn binary_round_trip() {
        let g = stretched_grid(17);
        let f = ScalarField::from_fn(g, "phi", |x, y| (x + 2.0 * y).sin());
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], FIELD_MAGIC);
        assert_eq!(buf.len(), 24 + 17 * 17 * 8);
        let (nx, ny, vals) = ScalarField::read_binary(&buf[..]).unwrap();
        assert_eq!((nx, ny), (17, 17));
        assert_eq!(vals, f.values);
    }

    #[test]
    fn csv_has_header_and_17_digits() {
        let g = uniform_grid(17);
        let f = ScalarField::from_fn(g, "phi", |x, y| x * y);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "x,y,value");
        let first = lines.next().unwrap();
        assert!(first.split(',').all(|t| t.contains('e')));
    }

    #[test]
    fn nearest_index_clamps() {
        let g = uniform_grid(17);
        assert_eq!(g.x.nearest_index(-5.0), 0);
        assert_eq!(g.x.nearest_index(5.0), 16);
        assert_eq!(g.x.nearest_index(0.01), 8);
    }
}
