//! Numerical workbench for a weak-control hitting problem: a particle
//! `(X, Y)` moves with `dY = v(X) dt` in an antisymmetric shear-type flow
//! and we may only switch the cross-stream diffusion `dX = sigma dB` on or
//! off, `sigma in {0, sqrt(2D)}`, trying to hit the origin before an
//! independent exponential clock of rate `lambda` rings.
//!
//! The optimal switching rule is bang-bang in the sign of `d^2 phi/dx^2`,
//! where `phi(x, y)` is the success probability under the optimal control.
//! This crate computes `phi` by timestepping the obstacle-form backward
//! equation
//!
//! ```text
//! d(phi)/dt = v(x) d(phi)/dy + D [d^2(phi)/dx^2]^+ - lambda phi
//! ```
//!
//! to steady state, extracts the induced no-diffusion region and its
//! entrance/exit boundaries, and validates the solved field three ways:
//!
//! * near-field scaling of the entrance boundary, `-b(x) ~ x^alpha` with
//!   `alpha = (beta - 1 + sqrt(beta^2 + 2 beta + 9)) / 2` for flows
//!   `v ~ |x|^beta` ([`regions`]),
//! * far-field ray asymptotics: boundary quadratures, Hamiltonian ray
//!   tracing, the caustic, and the degeneration ("snap") criterion
//!   ([`wkb`], [`snap`]),
//! * pathwise Monte Carlo under the solved policy ([`montecarlo`]).
//!
//! The [`pipeline`] module ties everything together behind a declarative
//! run configuration; the `kolmoc` binary exposes it as a CLI.

pub mod config;
pub mod flow;
pub mod grid;
pub mod montecarlo;
pub mod pipeline;
pub mod plot;
pub mod regions;
pub mod snap;
pub mod solver;
pub mod wkb;

pub use flow::FlowSpec;
pub use grid::{AxisSpec, Grid2D, ScalarField};
