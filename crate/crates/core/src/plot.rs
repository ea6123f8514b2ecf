//! Self-contained SVG renderings of an artifact directory: boundary
//! curves, `phi` contours at the levels `3^-n`, and the far-field
//! overlay. No timestamps or external assets, so re-rendering is
//! byte-identical.

use crate::config::RunConfig;
use crate::flow::FlowKind;
use crate::grid::{AxisSpec, Grid2D, ScalarField};
use crate::pipeline::PipelineError;
use std::fmt::Write as _;
use std::path::Path;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 40.0;

struct Canvas {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
    body: String,
}

impl Canvas {
    fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Self {
        let pad_x = 0.05 * (x_hi - x_lo).max(1e-12);
        let pad_y = 0.05 * (y_hi - y_lo).max(1e-12);
        Canvas {
            x_lo: x_lo - pad_x,
            x_hi: x_hi + pad_x,
            y_lo: y_lo - pad_y,
            y_hi: y_hi + pad_y,
            body: String::new(),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_lo) / (self.x_hi - self.x_lo) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        // svg y grows downward
        H - MARGIN - (y - self.y_lo) / (self.y_hi - self.y_lo) * (H - 2.0 * MARGIN)
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, dash: Option<&str>) {
        if pts.len() < 2 {
            return;
        }
        let mut d = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.2},{:.2}",
                if i == 0 { "M" } else { " L" },
                self.px(*x),
                self.py(*y)
            );
        }
        let dash = dash
            .map(|v| format!(" stroke-dasharray=\"{v}\""))
            .unwrap_or_default();
        let _ = writeln!(
            self.body,
            "<path d=\"{d}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.2\"{dash}/>"
        );
    }

    /// Many small segments as one path (contour rendering).
    fn segments(&mut self, segs: &[((f64, f64), (f64, f64))], stroke: &str) {
        if segs.is_empty() {
            return;
        }
        let mut d = String::new();
        for ((x0, y0), (x1, y1)) in segs {
            let _ = write!(
                d,
                "M{:.2},{:.2} L{:.2},{:.2} ",
                self.px(*x0),
                self.py(*y0),
                self.px(*x1),
                self.py(*y1)
            );
        }
        let _ = writeln!(
            self.body,
            "<path d=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1\"/>",
            d.trim_end()
        );
    }

    fn vline(&mut self, x: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            "<path d=\"M{:.2},{:.2} L{:.2},{:.2}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>",
            self.px(x),
            self.py(self.y_lo),
            self.px(x),
            self.py(self.y_hi)
        );
    }

    fn text(&mut self, x: f64, y: f64, s: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-family=\"monospace\" font-size=\"12\">{s}</text>"
        );
    }

    fn axes(&mut self, title: &str) {
        let _ = writeln!(
            self.body,
            "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#999\"/>",
            W - 2.0 * MARGIN,
            H - 2.0 * MARGIN
        );
        self.text(MARGIN, MARGIN - 8.0, title);
        // zero axes when inside the range
        if self.x_lo < 0.0 && self.x_hi > 0.0 {
            let x = self.px(0.0);
            let _ = writeln!(
                self.body,
                "<path d=\"M{x:.2},{:.2} L{x:.2},{:.2}\" stroke=\"#ddd\" stroke-width=\"0.7\"/>",
                self.py(self.y_lo),
                self.py(self.y_hi)
            );
        }
        if self.y_lo < 0.0 && self.y_hi > 0.0 {
            let y = self.py(0.0);
            let _ = writeln!(
                self.body,
                "<path d=\"M{:.2},{y:.2} L{:.2},{y:.2}\" stroke=\"#ddd\" stroke-width=\"0.7\"/>",
                self.px(self.x_lo),
                self.px(self.x_hi)
            );
        }
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" width=\"{W}\" height=\"{H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }
}

fn read_csv(path: &Path) -> Result<Vec<Vec<f64>>, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| PipelineError::Analysis(format!("bad csv {path:?}: {e}")))?);
    }
    Ok(rows)
}

/// Marching-squares segments of one contour level.
fn contour_segments(f: &ScalarField, level: f64) -> Vec<((f64, f64), (f64, f64))> {
    let g = &f.grid;
    let mut segs = Vec::new();
    for iy in 0..g.ny() - 1 {
        for ix in 0..g.nx() - 1 {
            let (x0, x1) = (g.x.phys[ix], g.x.phys[ix + 1]);
            let (y0, y1) = (g.y.phys[iy], g.y.phys[iy + 1]);
            let v00 = f.at(ix, iy);
            let v10 = f.at(ix + 1, iy);
            let v01 = f.at(ix, iy + 1);
            let v11 = f.at(ix + 1, iy + 1);
            let mut pts = Vec::with_capacity(4);
            let cross = |a: f64, b: f64| (a > level) != (b > level) && (a - b).abs() > 0.0;
            if cross(v00, v10) {
                let t = (level - v00) / (v10 - v00);
                pts.push((x0 + t * (x1 - x0), y0));
            }
            if cross(v10, v11) {
                let t = (level - v10) / (v11 - v10);
                pts.push((x1, y0 + t * (y1 - y0)));
            }
            if cross(v01, v11) {
                let t = (level - v01) / (v11 - v01);
                pts.push((x0 + t * (x1 - x0), y1));
            }
            if cross(v00, v01) {
                let t = (level - v00) / (v01 - v00);
                pts.push((x0, y0 + t * (y1 - y0)));
            }
            match pts.len() {
                2 => segs.push((pts[0], pts[1])),
                4 => {
                    // saddle: pair deterministically
                    segs.push((pts[0], pts[3]));
                    segs.push((pts[1], pts[2]));
                }
                _ => {}
            }
        }
    }
    segs
}

/// Render every plot the artifact directory supports. Requires the run
/// manifest; missing inputs are reported by name.
pub fn render_all(dir: &Path, cfg: &RunConfig) -> Result<Vec<String>, PipelineError> {
    if !dir.join("manifest.json").exists() {
        return Err(PipelineError::Analysis(format!(
            "missing input: manifest.json in {dir:?} (run the pipeline first)"
        )));
    }
    let mut made = Vec::new();

    // contours of phi at 3^-n
    let grid_path = dir.join("grid.json");
    let phi_path = dir.join("phi.bin");
    for (p, name) in [(&grid_path, "grid.json"), (&phi_path, "phi.bin")] {
        if !p.exists() {
            return Err(PipelineError::Analysis(format!("missing input: {name}")));
        }
    }
    let gj: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&grid_path)?)
        .map_err(|e| PipelineError::Analysis(format!("bad grid.json: {e}")))?;
    let ax: AxisSpec = serde_json::from_value(gj["x"].clone())
        .map_err(|e| PipelineError::Analysis(format!("bad grid.json x: {e}")))?;
    let ay: AxisSpec = serde_json::from_value(gj["y"].clone())
        .map_err(|e| PipelineError::Analysis(format!("bad grid.json y: {e}")))?;
    let grid = Grid2D::build(ax, ay, false).map_err(|e| PipelineError::Analysis(e.to_string()))?;
    let (nx, ny, values) = {
        let f = std::fs::File::open(&phi_path)?;
        ScalarField::read_binary(std::io::BufReader::new(f))
            .map_err(|e| PipelineError::Analysis(e.to_string()))?
    };
    if (nx, ny) != (grid.nx(), grid.ny()) {
        return Err(PipelineError::Analysis(
            "phi.bin shape does not match grid.json".into(),
        ));
    }
    let mut phi = ScalarField::zeros(grid.clone(), "phi");
    phi.values = values;

    {
        let mut c = Canvas::new(
            grid.x.phys[0],
            grid.x.phys[nx - 1],
            grid.y.phys[0],
            grid.y.phys[ny - 1],
        );
        c.axes("phi contours at 3^-n, n = 1..7");
        for n in 1..=7 {
            let level = 3.0f64.powi(-n);
            let segs = contour_segments(&phi, level);
            c.segments(&segs, "#1f77b4");
        }
        std::fs::write(dir.join("contours.svg"), c.finish())?;
        made.push("contours.svg".to_string());
    }

    // boundary curves (with gap markers for flat-gap flows)
    let comp_path = dir.join("components.csv");
    if comp_path.exists() {
        let rows = read_csv(&comp_path)?;
        let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (0.0f64, 1e-9f64, 0.0f64, 1e-9f64);
        for r in &rows {
            x_lo = x_lo.min(r[1]);
            x_hi = x_hi.max(r[1]);
            y_lo = y_lo.min(r[2].min(r[3]));
            y_hi = y_hi.max(r[2].max(r[3]));
        }
        let mut c = Canvas::new(x_lo, x_hi, y_lo, y_hi);
        c.axes("no-diffusion region: exit a(x) and entrance b(x)");
        if rows.is_empty() {
            c.text(W / 2.0 - 80.0, H / 2.0, "warning: empty off region");
        } else {
            let max_comp = rows.iter().map(|r| r[0] as usize).max().unwrap_or(0);
            for comp in 0..=max_comp {
                let a: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| r[0] as usize == comp)
                    .map(|r| (r[1], r[2]))
                    .collect();
                let b: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| r[0] as usize == comp)
                    .map(|r| (r[1], r[3]))
                    .collect();
                c.polyline(&a, "#d62728", None);
                c.polyline(&b, "#1f77b4", None);
            }
        }
        if let FlowKind::FlatGap { xi, eta } = cfg.flow.kind {
            for v in [xi, eta, -xi, -eta] {
                c.vline(v, "#555");
            }
        }
        std::fs::write(dir.join("boundaries.svg"), c.finish())?;
        made.push("boundaries.svg".to_string());
    }

    // far-field overlay
    let wkb_path = dir.join("wkb_compare.csv");
    if wkb_path.exists() {
        let rows = read_csv(&wkb_path)?;
        if !rows.is_empty() {
            let x_hi = rows.iter().map(|r| r[0]).fold(0.0f64, f64::max);
            let y_lo = rows
                .iter()
                .flat_map(|r| r[1..].iter().copied())
                .filter(|v| v.is_finite())
                .fold(0.0f64, f64::min);
            let mut c = Canvas::new(0.0, x_hi, y_lo, 0.0);
            c.axes("numerical boundaries vs far-field asymptotics");
            let col = |k: usize| -> Vec<(f64, f64)> {
                rows.iter()
                    .filter(|r| r[k].is_finite())
                    .map(|r| (r[0], r[k]))
                    .collect()
            };
            c.polyline(&col(1), "#d62728", None); // a numerical
            c.polyline(&col(2), "#1f77b4", None); // b numerical
            c.polyline(&col(3), "#d62728", Some("5 3")); // a0
            c.polyline(&col(4), "#ff7f0e", Some("5 3")); // abar
            c.polyline(&col(5), "#1f77b4", Some("5 3")); // b asymptotic
            std::fs::write(dir.join("wkb_compare.svg"), c.finish())?;
            made.push("wkb_compare.svg".to_string());
        }
    }

    Ok(made)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn small_field() -> ScalarField {
        let g = Grid2D::build(
            AxisSpec::Bounded {
                lo: -1.0,
                hi: 1.0,
                n: 33,
            },
            AxisSpec::Bounded {
                lo: -1.0,
                hi: 1.0,
                n: 33,
            },
            true,
        )
        .unwrap();
        ScalarField::from_fn(g, "phi", |x, y| (-(x * x + y * y) * 8.0).exp())
    }

    #[test]
    fn contour_segments_surround_the_peak() {
        let f = small_field();
        let segs = contour_segments(&f, 1.0 / 3.0);
        assert!(segs.len() > 8);
        // all segment points near the level circle r^2 = ln(3)/8
        let r = (3.0f64.ln() / 8.0).sqrt();
        for ((x0, y0), _) in &segs {
            let rr = (x0 * x0 + y0 * y0).sqrt();
            assert!((rr - r).abs() < 0.1, "point off the level set: {rr} vs {r}");
        }
    }

    #[test]
    fn contour_of_constant_field_is_empty() {
        let g = small_field().grid.clone();
        let f = ScalarField::from_fn(Arc::clone(&g), "phi", |_, _| 0.5);
        assert!(contour_segments(&f, 1.0 / 3.0).is_empty());
    }
}
