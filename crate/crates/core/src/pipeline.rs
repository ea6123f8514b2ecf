//! Configuration-driven pipeline: solve, extract, analyze, emit.
//!
//! Every run writes its artifacts into one output directory and finishes
//! with a `manifest.json` listing each emitted file with its SHA-256.
//! Re-running an identical config reproduces byte-identical CSV/JSON
//! outputs.
//!
//! Exit-code contract (used by the CLI): config errors 2, solver
//! non-convergence 3, analysis precondition failures 4, I/O troubles 1.

use crate::config::{ConfigError, RunConfig};
use crate::flow::{FlowKind, FlowSpec};
use crate::grid::{GridError, ScalarField};
use crate::montecarlo::{estimate_success, McConfig, McError, McResult};
use crate::regions::{
    fit_entrance_exponent, predicted_alpha, snap_report, RegionsError, ScalingFit, SnapDetection,
    SnapReport,
};
use crate::snap::SnapError;
use crate::solver::{solve_steady, SolveError, SolveResult, XBoundary};
use crate::wkb::{self, Nondim, WkbBoundaries, WkbError};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver: {0}")]
    Solve(SolveError),
    #[error("analysis: {0}")]
    Analysis(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// CLI exit code.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Solve(e) => match e {
                SolveError::Invalid(_) | SolveError::Cfl { .. } => 2,
                _ => 3,
            },
            PipelineError::Analysis(_) => 4,
            PipelineError::Io(_) => 1,
        }
    }
}

impl From<SolveError> for PipelineError {
    fn from(e: SolveError) -> Self {
        PipelineError::Solve(e)
    }
}

impl From<GridError> for PipelineError {
    fn from(e: GridError) -> Self {
        PipelineError::Config(ConfigError::Grid(e))
    }
}

macro_rules! analysis_err {
    ($t:ty) => {
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::Analysis(e.to_string())
            }
        }
    };
}
analysis_err!(RegionsError);
analysis_err!(WkbError);
analysis_err!(SnapError);
analysis_err!(McError);

/// Pipeline stage selected by the CLI subcommand. Each stage runs its
/// prerequisites; [`Stage::All`] honors the config's analysis toggles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Solve,
    Boundaries,
    FitScaling,
    Wkb,
    Mc,
    Snap,
    All,
}

/// Overrides passed on the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    files: Vec<ManifestEntry>,
}

/// Format a float with 17 significant digits (CSV contract).
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

struct Emitter {
    dir: PathBuf,
    written: Vec<String>,
}

impl Emitter {
    fn new(dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir)?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), PipelineError> {
        std::fs::write(self.dir.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let mut s = serde_json::to_string_pretty(value).expect("serializable");
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn finish(mut self) -> Result<PathBuf, PipelineError> {
        self.written.sort();
        let mut files = Vec::new();
        for name in &self.written {
            let bytes = std::fs::read(self.dir.join(name))?;
            let mut h = Sha256::new();
            h.update(&bytes);
            files.push(ManifestEntry {
                path: name.clone(),
                bytes: bytes.len() as u64,
                sha256: format!("{:x}", h.finalize()),
            });
        }
        let manifest = Manifest { files };
        let mut s = serde_json::to_string_pretty(&manifest).expect("serializable");
        s.push('\n');
        std::fs::write(self.dir.join("manifest.json"), s)?;
        Ok(self.dir)
    }
}

#[derive(Serialize)]
struct SolveSummary {
    steps: usize,
    final_residual: f64,
    dt: f64,
}

#[derive(Serialize)]
struct ScalingFitReport {
    #[serde(flatten)]
    fit: ScalingFit,
    predicted_alpha: Option<f64>,
    relative_error: Option<f64>,
}

#[derive(Serialize)]
struct ProbeReport {
    start: (f64, f64),
    phi_pde: f64,
    #[serde(flatten)]
    mc: McResult,
    delta: f64,
    delta_sweep: Vec<DeltaPoint>,
    /// Max |p_hat(delta') - p_hat(delta)| over the sweep.
    delta_allowance: f64,
}

#[derive(Serialize)]
struct DeltaPoint {
    delta: f64,
    p_hat: f64,
    stderr: f64,
}

#[derive(Serialize)]
struct McReport {
    seed: u64,
    dt: f64,
    n_paths: usize,
    t_max: f64,
    probes: Vec<ProbeReport>,
}

#[derive(Serialize)]
struct SnapJson {
    eps: f64,
    criterion: wkb::SnapCriterion,
    #[serde(flatten)]
    report: SnapReport,
}

/// Execute the pipeline for `stage`, returning the artifact directory.
pub fn run(cfg: &RunConfig, stage: Stage, opts: &RunOptions) -> Result<PathBuf, PipelineError> {
    let flow = cfg.flow.clone();
    let grid = cfg.build_grid()?;
    let scfg = cfg.build_solver();

    let want = |on: bool, s: Stage| -> bool {
        match stage {
            Stage::All => on,
            _ => stage == s,
        }
    };
    let do_boundaries = want(cfg.analysis.boundaries, Stage::Boundaries)
        || want(cfg.analysis.scaling_fit, Stage::FitScaling)
        || want(cfg.analysis.wkb_compare, Stage::Wkb);
    let do_fit = want(cfg.analysis.scaling_fit, Stage::FitScaling);
    let do_wkb = want(cfg.analysis.wkb_compare, Stage::Wkb);
    let do_mc = want(cfg.analysis.mc_validate, Stage::Mc);
    let do_snap = want(cfg.analysis.snap_report, Stage::Snap);

    let out_dir = opts
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let mut em = Emitter::new(&out_dir)?;
    let say = |m: &str| {
        if !opts.quiet {
            eprintln!("[kolmoc] {m}");
        }
    };

    // --- solve ---------------------------------------------------------
    say("solving to steady state");
    let solved: SolveResult = solve_steady(&flow, &grid, &scfg)?;
    say(&format!(
        "steady after {} steps (residual {:.3e}, dt {:.3e})",
        solved.steps, solved.final_residual, solved.dt
    ));

    em.write_json(
        "grid.json",
        &serde_json::json!({ "x": grid.x.spec, "y": grid.y.spec }),
    )?;
    em.write_json(
        "solve.json",
        &SolveSummary {
            steps: solved.steps,
            final_residual: solved.final_residual,
            dt: solved.dt,
        },
    )?;
    {
        let mut csv = String::from("step,residual\n");
        for (s, r) in &solved.residual_history {
            let _ = writeln!(csv, "{s},{}", fmt(*r));
        }
        em.write("convergence.csv", csv.as_bytes())?;
    }
    emit_field(&mut em, "phi", &solved.phi)?;
    emit_field(&mut em, "sigma", &solved.region.sigma_field())?;

    // --- boundaries ------------------------------------------------------
    if do_boundaries {
        say("extracting no-diffusion boundaries");
        let mut csv = String::from("component,x,a,b\n");
        for (ci, comp) in solved.region.components.iter().enumerate() {
            for col in &comp.columns {
                let _ = writeln!(csv, "{ci},{},{},{}", fmt(col.x), fmt(col.a), fmt(col.b));
            }
        }
        em.write("components.csv", csv.as_bytes())?;

        let mut csv = String::from("x,a,b\n");
        if let Some(primary) = solved.region.primary_component() {
            for col in primary.columns.iter().filter(|c| c.x > 0.0) {
                let _ = writeln!(csv, "{},{},{}", fmt(col.x), fmt(col.a), fmt(col.b));
            }
        }
        em.write("boundaries.csv", csv.as_bytes())?;
    }

    // --- near-field scaling fit -----------------------------------------
    if do_fit {
        say("fitting the entrance-boundary exponent");
        let window = fit_window(cfg, &grid);
        let primary = solved
            .region
            .primary_component()
            .ok_or_else(|| PipelineError::Analysis("no off-region component to fit".into()))?;
        let fit = fit_entrance_exponent(&primary.entrance(), window)?;
        let predicted = match flow.kind {
            FlowKind::PowerLaw { beta } => {
                let lam_exp = match scfg.marking {
                    crate::solver::MarkingRate::PowerLaw { exponent, .. } => exponent,
                    _ => 0.0,
                };
                predicted_alpha(beta, lam_exp).ok()
            }
            _ => None,
        };
        em.write_json(
            "scaling_fit.json",
            &ScalingFitReport {
                fit,
                predicted_alpha: predicted,
                relative_error: predicted.map(|a| (fit.exponent - a).abs() / a),
            },
        )?;
    }

    // --- far-field comparison --------------------------------------------
    if do_wkb {
        say("computing far-field boundary asymptotics");
        let (nd, eps) = nondim_for(cfg, &flow)?;
        let xs_nd: Vec<f64> = (1..=60).map(|i| i as f64 * 0.025).collect();
        let wb = WkbBoundaries::compute(&flow_nondim(&flow)?, &xs_nd, eps)?;
        let mut csv = String::from("x,a0,a1,b1,abar,s0\n");
        for i in 0..wb.xs.len() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                fmt(wb.xs[i]),
                fmt(wb.a0[i]),
                fmt(wb.a1[i]),
                fmt(wb.b1[i]),
                fmt(wb.abar[i]),
                fmt(wb.s0[i])
            );
        }
        em.write("wkb_boundaries.csv", csv.as_bytes())?;

        // dimensional overlay against the numerical boundaries
        let primary = solved
            .region
            .primary_component()
            .ok_or_else(|| PipelineError::Analysis("no off-region for wkb overlay".into()))?;
        let ysc = nd.y_scale();
        let nb = flow_nondim(&flow)?;
        let mut csv = String::from("x,a_num,b_num,a0,abar,b_asym\n");
        for col in primary.columns.iter().filter(|c| c.x > 0.0) {
            let xn = col.x / nd.x_scale;
            if !nb.is_increasing_on(xn) {
                continue;
            }
            let a0 = wkb::exit_boundary_a0(&nb, xn)?;
            let a1 = wkb::exit_correction_a1(&nb, xn)?;
            let abar = wkb::resummed_exit(a0, a1, eps).unwrap_or(f64::NAN);
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                fmt(col.x),
                fmt(col.a),
                fmt(col.b),
                fmt(ysc * a0),
                fmt(ysc * abar),
                fmt(ysc * (a0 - eps * a1))
            );
        }
        em.write("wkb_compare.csv", csv.as_bytes())?;
    }

    // --- Monte Carlo validation -------------------------------------------
    if do_mc {
        say("running Monte Carlo validation");
        let report = run_mc(cfg, &flow, &solved, opts)?;
        em.write_json("mc_result.json", &report.0)?;
        if !report.1.is_empty() {
            em.write("mc_traces.csv", report.1.as_bytes())?;
        }
    }

    // --- snap diagnostics ---------------------------------------------------
    if do_snap {
        say("running snap diagnostics");
        let (json, profiles) = run_snap(cfg, &flow, &solved)?;
        em.write_json("snap_report.json", &json)?;
        for (name, csv) in profiles {
            em.write(&name, csv.as_bytes())?;
        }
    }

    let dir = em.finish()?;

    if cfg.output.plots && stage == Stage::All {
        say("rendering plots");
        crate::plot::render_all(&dir, cfg)?;
    }
    Ok(dir)
}

fn emit_field(em: &mut Emitter, name: &str, f: &ScalarField) -> Result<(), PipelineError> {
    let mut csv = Vec::new();
    f.write_csv(&mut csv)
        .map_err(|e| PipelineError::Analysis(e.to_string()))?;
    em.write(&format!("{name}.csv"), &csv)?;
    let mut bin = Vec::new();
    f.write_binary(&mut bin)
        .map_err(|e| PipelineError::Analysis(e.to_string()))?;
    em.write(&format!("{name}.bin"), &bin)?;
    Ok(())
}

/// Default fit window `[8 dx_min, 0.3 x_extent]`, excluding gridscale
/// contamination below and the far-field crossover above.
pub fn fit_window(cfg: &RunConfig, grid: &crate::grid::Grid2D) -> (f64, f64) {
    cfg.analysis.fit_window.unwrap_or_else(|| {
        let dx = grid.x.min_spacing();
        let x_ext = grid.x.phys[grid.nx() - 1];
        (8.0 * dx, 0.3 * x_ext)
    })
}

/// Nondimensionalization used by the WKB overlay: `X` from the config or
/// `2 sqrt(D/lambda)`, `V = v(X)`.
fn nondim_for(cfg: &RunConfig, flow: &FlowSpec) -> Result<(Nondim, f64), PipelineError> {
    let d = cfg.solver.d;
    let lam = cfg.lambda_reference();
    let x_scale = cfg
        .analysis
        .x_scale
        .unwrap_or_else(|| 2.0 * (d / lam).sqrt());
    let v_scale = match cfg.analysis.v_scale {
        Some(v) => v,
        None => flow
            .eval(x_scale)
            .map_err(|e| PipelineError::Analysis(e.to_string()))?,
    };
    let nd = Nondim::new(d, lam, x_scale, v_scale)?;
    let eps = nd.epsilon();
    Ok((nd, eps))
}

/// The flow in nondimensional variables. Power laws keep their form
/// under the `(X, V)` scaling used here (`V = v(X)`), so the
/// nondimensional profile is the unit-amplitude version of the same
/// kind; other kinds are only sensible when already nondimensional.
fn flow_nondim(flow: &FlowSpec) -> Result<FlowSpec, PipelineError> {
    Ok(FlowSpec {
        kind: flow.kind.clone(),
        amplitude: 1.0,
    })
}

fn run_mc(
    cfg: &RunConfig,
    flow: &FlowSpec,
    solved: &SolveResult,
    opts: &RunOptions,
) -> Result<(McReport, String), PipelineError> {
    let grid = solved.phi.grid.clone();
    let (cx, cy) = grid.origin_index().expect("solver grids hold the origin");
    let h0 = (grid.x.phys[cx + 1] - grid.x.phys[cx]).max(grid.y.phys[cy + 1] - grid.y.phys[cy]);
    let delta = cfg.mc.delta.unwrap_or(h0);
    let lam = cfg.lambda_reference();
    let t_max = cfg.mc.t_max.unwrap_or(20.0 / lam.max(1e-12));
    let seed = opts.seed.unwrap_or(cfg.mc.seed);
    let x_reflect = match (cfg.solver.x_boundary, &grid.x.spec) {
        (XBoundary::Reflecting, crate::grid::AxisSpec::Bounded { lo, hi, .. }) => {
            Some((*lo, *hi))
        }
        _ => None,
    };

    // probe points: nodes whose solved phi is nearest each requested level
    let mut probes: Vec<(f64, f64, f64)> = Vec::new(); // (x, y, phi)
    if cfg.analysis.probe_levels.is_empty() {
        let (ix, iy) = grid.nearest_node(cfg.mc.start.0, cfg.mc.start.1);
        probes.push((grid.x.phys[ix], grid.y.phys[iy], solved.phi.at(ix, iy)));
    } else {
        for &level in &cfg.analysis.probe_levels {
            let mut best: Option<(f64, usize, usize)> = None;
            for iy in 1..grid.ny() - 1 {
                for ix in cx..grid.nx() - 1 {
                    let (x, y) = (grid.x.phys[ix], grid.y.phys[iy]);
                    if (x * x + y * y).sqrt() < 3.0 * delta {
                        continue;
                    }
                    let err = (solved.phi.at(ix, iy) - level).abs();
                    if best.map(|b| err < b.0).unwrap_or(true) {
                        best = Some((err, ix, iy));
                    }
                }
            }
            let (_, ix, iy) =
                best.ok_or_else(|| PipelineError::Analysis("no probe node found".into()))?;
            probes.push((grid.x.phys[ix], grid.y.phys[iy], solved.phi.at(ix, iy)));
        }
    }

    let mut out_probes = Vec::new();
    let mut traces_csv = String::new();
    for (pi, &(x, y, phi_pde)) in probes.iter().enumerate() {
        let base_cfg = McConfig {
            dt: cfg.mc.dt,
            n_paths: cfg.mc.n_paths,
            seed,
            delta,
            t_max,
            start: (x, y),
            x_reflect,
            trace_paths: if pi == 0 { cfg.mc.trace_paths } else { 0 },
        };
        let (mc, traces) = estimate_success(&solved.region, flow, &base_cfg, &scfg_marking(cfg))?;
        if pi == 0 && !traces.is_empty() {
            traces_csv.push_str("path,t,x,y,sigma\n");
            for (pid, tr) in traces.iter().enumerate() {
                for (t, tx, ty, s) in tr {
                    let _ = writeln!(
                        traces_csv,
                        "{pid},{},{},{},{}",
                        fmt(*t),
                        fmt(*tx),
                        fmt(*ty),
                        fmt(*s)
                    );
                }
            }
        }
        // delta sweep for the bias allowance
        let min_sp = grid.x.min_spacing().min(grid.y.min_spacing());
        let mut sweep = Vec::new();
        let mut allowance = 0.0f64;
        for mult in [0.5, 2.0] {
            let dv = (delta * mult).max(0.5 * min_sp);
            if dv == delta {
                continue;
            }
            let c = McConfig {
                delta: dv,
                trace_paths: 0,
                ..base_cfg.clone()
            };
            let (m, _) = estimate_success(&solved.region, flow, &c, &scfg_marking(cfg))?;
            allowance = allowance.max((m.p_hat - mc.p_hat).abs());
            sweep.push(DeltaPoint {
                delta: dv,
                p_hat: m.p_hat,
                stderr: m.stderr,
            });
        }
        out_probes.push(ProbeReport {
            start: (x, y),
            phi_pde,
            mc,
            delta,
            delta_sweep: sweep,
            delta_allowance: allowance,
        });
    }
    Ok((
        McReport {
            seed,
            dt: cfg.mc.dt,
            n_paths: cfg.mc.n_paths,
            t_max,
            probes: out_probes,
        },
        traces_csv,
    ))
}

fn scfg_marking(cfg: &RunConfig) -> crate::solver::MarkingRate {
    cfg.marking()
}

fn run_snap(
    cfg: &RunConfig,
    flow: &FlowSpec,
    solved: &SolveResult,
) -> Result<(SnapJson, Vec<(String, String)>), PipelineError> {
    let d = cfg.solver.d;
    let lam = cfg.lambda_reference();
    // snap diagnostics live in nondimensional units: D = eps^2/2 and
    // lambda = eps^{-2}/2 make the y scale exactly 1
    if (4.0 * d * lam - 1.0).abs() > 1e-9 {
        return Err(PipelineError::Analysis(format!(
            "snap diagnostics need a nondimensional solve (4 D lambda = 1); got D = {d}, \
             lambda = {lam}: use d = eps^2/2, lambda = eps^-2/2"
        )));
    }
    let eps = (d / lam).powf(0.25);
    let criterion = wkb::snap_condition(flow)?;
    let (x_m, _) = flow.supremum().expect("validated bounded");
    let det = SnapDetection {
        stations: cfg.analysis.stations.clone(),
        xi: cfg.analysis.snap_xi.unwrap_or((f64::NEG_INFINITY, x_m)),
        ..Default::default()
    };
    let report = snap_report(&solved.region, &solved.phi, flow, eps, &det)?;

    // profile CSVs for the plotted lines
    let g = solved.phi.grid.clone();
    let mut profiles = Vec::new();
    let fil_ix = g.x.nearest_index(x_m);
    let mut csv = String::from("y,phi\n");
    for iy in 0..g.ny() {
        let v = solved.phi.at(fil_ix, iy);
        if g.y.phys[iy] < 0.0 && v > 0.0 {
            let _ = writeln!(csv, "{},{}", fmt(g.y.phys[iy]), fmt(v));
        }
    }
    profiles.push(("snap_profile_filament.csv".to_string(), csv));

    if let Some(&(y1, _)) = cfg.analysis.stations.first() {
        let iy = g.y.nearest_index(y1);
        let mut csv = String::from("x,phi\n");
        for ix in 0..g.nx() {
            let v = solved.phi.at(ix, iy);
            if v > 0.0 {
                let _ = writeln!(csv, "{},{}", fmt(g.x.phys[ix]), fmt(v));
            }
        }
        profiles.push(("snap_profile_row.csv".to_string(), csv));
    }

    Ok((
        SnapJson {
            eps,
            criterion,
            report,
        },
        profiles,
    ))
}
