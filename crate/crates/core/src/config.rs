//! Declarative run configuration (TOML, one flat section per module).
//!
//! ```toml
//! [flow]
//! kind = "power_law"        # power_law | capped_linear | flat_gap |
//! beta = 1.0                #   capped_parabola | tabulated
//! amplitude = 1.0
//!
//! [grid]
//! x = { kind = "unbounded", scale = 2.83, n = 257 }
//! y = { kind = "bounded", lo = -1.0, hi = 1.0, n = 257 }
//!
//! [solver]
//! d = 2.0
//! lambda = 1.0              # or lambda_scale + lambda_exponent
//! scheme = "split"          # split | upwind
//! steady_tol = 1e-8
//! x_boundary = "killing"    # killing | reflecting
//!
//! [analysis]
//! boundaries = true
//! scaling_fit = true
//! # fit_window = [0.0625, 0.3]
//! wkb_compare = false
//! mc_validate = false
//! snap_report = false
//!
//! [mc]
//! n_paths = 100000
//! dt = 0.001
//! seed = 42
//! start = [0.5, -0.5]
//!
//! [output]
//! dir = "out"
//! plots = true
//! ```

use crate::flow::FlowSpec;
use crate::grid::{AxisSpec, Grid2D, GridError};
use crate::solver::{MarkingRate, Scheme, SolverConfig, XBoundary};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid grid: {0}")]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub flow: FlowSpec,
    pub grid: GridSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x: AxisSpec,
    pub y: AxisSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "d_default")]
    pub d: f64,
    /// Constant marking rate.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Spatial marking `lambda(x) = lambda_scale |x|^lambda_exponent`.
    #[serde(default)]
    pub lambda_scale: Option<f64>,
    #[serde(default)]
    pub lambda_exponent: Option<f64>,
    #[serde(default = "scheme_default")]
    pub scheme: Scheme,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "steady_tol_default")]
    pub steady_tol: f64,
    #[serde(default = "max_steps_default")]
    pub max_steps: usize,
    #[serde(default = "x_boundary_default")]
    pub x_boundary: XBoundary,
    #[serde(default)]
    pub curvature_threshold: f64,
    #[serde(default)]
    pub allow_degenerate_marking: bool,
}

fn d_default() -> f64 {
    2.0
}
fn scheme_default() -> Scheme {
    Scheme::Split
}
fn steady_tol_default() -> f64 {
    1e-8
}
fn max_steps_default() -> usize {
    50_000_000
}
fn x_boundary_default() -> XBoundary {
    XBoundary::Killing
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default)]
    pub boundaries: bool,
    #[serde(default)]
    pub scaling_fit: bool,
    /// Fit window `[x_lo, x_hi]`; default `[8 dx_min, 0.3 x_extent]`.
    #[serde(default)]
    pub fit_window: Option<(f64, f64)>,
    #[serde(default)]
    pub wkb_compare: bool,
    /// Nondimensionalization scales for the WKB overlay; defaults:
    /// `X = 2 sqrt(D/lambda)`, `V = v(X)`.
    #[serde(default)]
    pub x_scale: Option<f64>,
    #[serde(default)]
    pub v_scale: Option<f64>,
    #[serde(default)]
    pub mc_validate: bool,
    /// phi levels probed by the Monte Carlo validation.
    #[serde(default)]
    pub probe_levels: Vec<f64>,
    #[serde(default)]
    pub snap_report: bool,
    /// Station pairs `(y1, y2)` for the psi-similarity metric.
    #[serde(default)]
    pub stations: Vec<(f64, f64)>,
    /// x-range of the similarity supremum; open ends when omitted.
    #[serde(default)]
    pub snap_xi: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "n_paths_default")]
    pub n_paths: usize,
    #[serde(default = "mc_dt_default")]
    pub dt: f64,
    #[serde(default = "seed_default")]
    pub seed: u64,
    /// Hit radius; default: the near-origin grid spacing.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Path time cap; default `20 / lambda`.
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default = "start_default")]
    pub start: (f64, f64),
    #[serde(default)]
    pub trace_paths: usize,
}

fn n_paths_default() -> usize {
    10_000
}
fn mc_dt_default() -> f64 {
    1e-3
}
fn seed_default() -> u64 {
    42
}
fn start_default() -> (f64, f64) {
    (0.5, -0.5)
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            n_paths: n_paths_default(),
            dt: mc_dt_default(),
            seed: seed_default(),
            delta: None,
            t_max: None,
            start: start_default(),
            trace_paths: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "out_dir_default")]
    pub dir: String,
    #[serde(default)]
    pub plots: bool,
}

fn out_dir_default() -> String {
    "out".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: out_dir_default(),
            plots: false,
        }
    }
}

impl RunConfig {
    pub fn from_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    /// Structural validation beyond deserialization: flow invariants,
    /// marking-rate exclusivity, and analysis-stage dependencies.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.flow
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        match (self.solver.lambda, self.solver.lambda_scale) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "give either lambda or lambda_scale/lambda_exponent, not both".into(),
                ))
            }
            (None, None) => {
                return Err(ConfigError::Invalid(
                    "solver needs lambda (or lambda_scale + lambda_exponent)".into(),
                ))
            }
            (None, Some(_)) if self.solver.lambda_exponent.is_none() => {
                return Err(ConfigError::Invalid(
                    "lambda_scale requires lambda_exponent".into(),
                ))
            }
            _ => {}
        }
        if self.analysis.scaling_fit && !self.analysis.boundaries {
            return Err(ConfigError::Invalid(
                "scaling_fit needs boundaries = true (it consumes the entrance polyline)".into(),
            ));
        }
        if self.analysis.wkb_compare && !self.analysis.boundaries {
            return Err(ConfigError::Invalid(
                "wkb_compare needs boundaries = true".into(),
            ));
        }
        if let Some((lo, hi)) = self.analysis.fit_window {
            if !(lo > 0.0 && hi > lo) {
                return Err(ConfigError::Invalid(format!(
                    "bad fit window [{lo}, {hi}]"
                )));
            }
        }
        if self.analysis.snap_report && self.flow.supremum().is_none() {
            return Err(ConfigError::Invalid(
                "snap_report needs a bounded flow (capped kinds)".into(),
            ));
        }
        Ok(())
    }

    pub fn marking(&self) -> MarkingRate {
        match (self.solver.lambda, self.solver.lambda_scale) {
            (Some(l), _) => MarkingRate::Constant(l),
            (None, Some(scale)) => MarkingRate::PowerLaw {
                scale,
                exponent: self.solver.lambda_exponent.unwrap_or(0.0),
            },
            (None, None) => unreachable!("validated"),
        }
    }

    pub fn build_grid(&self) -> Result<Arc<Grid2D>, ConfigError> {
        Ok(Grid2D::build(self.grid.x, self.grid.y, true)?)
    }

    pub fn build_solver(&self) -> SolverConfig {
        SolverConfig {
            d: self.solver.d,
            marking: self.marking(),
            dt: self.solver.dt,
            steady_tol: self.solver.steady_tol,
            max_steps: self.solver.max_steps,
            scheme: self.solver.scheme,
            x_boundary: self.solver.x_boundary,
            curvature_threshold: self.solver.curvature_threshold,
            pin_origin: true,
            always_on_diffusion: false,
            allow_degenerate_marking: self.solver.allow_degenerate_marking,
        }
    }

    /// Reference marking rate (time scale for Monte Carlo defaults).
    pub fn lambda_reference(&self) -> f64 {
        self.marking().reference()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowKind;

    const MINIMAL: &str = r#"
[flow]
kind = "power_law"
beta = 1.0

[grid]
x = { kind = "unbounded", scale = 2.83, n = 257 }
y = { kind = "unbounded", scale = 2.83, n = 257 }

[solver]
d = 2.0
lambda = 1.0
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.flow.kind, FlowKind::PowerLaw { beta: 1.0 });
        assert_eq!(cfg.flow.amplitude, 1.0);
        assert_eq!(cfg.solver.steady_tol, 1e-8);
        assert!(matches!(cfg.marking(), MarkingRate::Constant(l) if l == 1.0));
        assert_eq!(cfg.mc.n_paths, 10_000);
        assert_eq!(cfg.output.dir, "out");
        cfg.build_grid().unwrap();
    }

    #[test]
    fn malformed_toml_is_a_parse_error() {
        assert!(matches!(
            RunConfig::from_str("[flow\nkind = ???"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn unknown_keys_rejected() {
        let s = MINIMAL.replace("lambda = 1.0", "lambda = 1.0\nbogus_key = 3");
        assert!(RunConfig::from_str(&s).is_err());
    }

    #[test]
    fn marking_exclusivity() {
        let s = MINIMAL.replace(
            "lambda = 1.0",
            "lambda = 1.0\nlambda_scale = 1.0\nlambda_exponent = 0.5",
        );
        assert!(RunConfig::from_str(&s).is_err());
        let s = MINIMAL.replace("lambda = 1.0", "");
        assert!(RunConfig::from_str(&s).is_err());
        let s = MINIMAL.replace("lambda = 1.0", "lambda_scale = 1.0\nlambda_exponent = 0.5");
        let cfg = RunConfig::from_str(&s).unwrap();
        assert!(matches!(cfg.marking(), MarkingRate::PowerLaw { .. }));
    }

    #[test]
    fn analysis_dependencies_checked() {
        let s = MINIMAL.to_string() + "\n[analysis]\nscaling_fit = true\n";
        assert!(RunConfig::from_str(&s).is_err());
        let s = MINIMAL.to_string() + "\n[analysis]\nboundaries = true\nscaling_fit = true\n";
        assert!(RunConfig::from_str(&s).is_ok());
    }

    #[test]
    fn snap_needs_bounded_flow() {
        let s = MINIMAL.to_string() + "\n[analysis]\nsnap_report = true\n";
        assert!(RunConfig::from_str(&s).is_err());
        let s = s.replace("kind = \"power_law\"\nbeta = 1.0", "kind = \"capped_linear\"");
        assert!(RunConfig::from_str(&s).is_ok());
    }

    #[test]
    fn flow_validation_applies_to_deserialized_specs() {
        let s = MINIMAL.replace("beta = 1.0", "beta = -2.0");
        assert!(matches!(
            RunConfig::from_str(&s),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn tabulated_flow_round_trips() {
        let s = MINIMAL.replace(
            "kind = \"power_law\"\nbeta = 1.0",
            "kind = \"tabulated\"\nsamples = [[0.0, 0.0], [1.0, 1.0], [2.0, 1.5]]",
        );
        let cfg = RunConfig::from_str(&s).unwrap();
        assert!(matches!(cfg.flow.kind, FlowKind::Tabulated { .. }));
        assert_eq!(cfg.flow.eval(2.0).unwrap(), 1.5);
    }
}
