//! Antisymmetric advection profiles `v(x)`.
//!
//! Every profile satisfies `v(-x) = -v(x)` and `v(x) > 0` for `x > 0`.
//! Evaluation always works on `|x|` and applies the sign afterwards, so
//! antisymmetry is exact in floating point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from flow evaluation and structural queries.
#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    /// Tabulated profiles cannot be evaluated outside their sample range.
    #[error("x = {x} outside tabulated range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    /// Construction rejected a malformed profile.
    #[error("invalid flow spec: {0}")]
    Invalid(String),
}

/// Kind of advection profile, before the overall amplitude is applied.
///
/// All piecewise profiles are stated for `x >= 0`; the antisymmetric
/// extension is implicit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowKind {
    /// `v(x) = sgn(x) |x|^beta`.
    PowerLaw { beta: f64 },
    /// `v(x) = x` on `|x| < 1`, `sgn(x)` otherwise.
    CappedLinear,
    /// Unit slope everywhere except a flat interval: `v'(x) = 0` on
    /// `|x| in (xi, eta)`, `v'(x) = 1` otherwise.
    FlatGap { xi: f64, eta: f64 },
    /// `v(x) = x (2 - x)` capped at its peak: `v(x) = 1` for `x >= 1`.
    /// The approach to the cap is quadratic, which puts this profile on
    /// the non-degenerating side of the snap criterion.
    CappedParabola,
    /// Linear interpolation of `(x, v)` samples given on `x >= 0` with
    /// `v(0) = 0`; antisymmetrically extended.
    Tabulated { samples: Vec<(f64, f64)> },
}

/// A declarative advection profile: a [`FlowKind`] scaled by `amplitude`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FlowSpec {
    #[serde(flatten)]
    pub kind: FlowKind,
    /// Overall scale factor multiplying the whole profile (velocity scale).
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_amplitude() -> f64 {
    1.0
}

impl FlowSpec {
    pub fn new(kind: FlowKind) -> Result<Self, FlowError> {
        Self::with_amplitude(kind, 1.0)
    }

    pub fn with_amplitude(kind: FlowKind, amplitude: f64) -> Result<Self, FlowError> {
        if !(amplitude > 0.0) || !amplitude.is_finite() {
            return Err(FlowError::Invalid(format!(
                "amplitude must be positive and finite, got {amplitude}"
            )));
        }
        match &kind {
            FlowKind::PowerLaw { beta } => {
                if !(*beta > 0.0) || !beta.is_finite() {
                    return Err(FlowError::Invalid(format!(
                        "power-law exponent must be positive, got {beta}"
                    )));
                }
            }
            FlowKind::FlatGap { xi, eta } => {
                if !(0.0 < *xi && xi < eta) || !eta.is_finite() {
                    return Err(FlowError::Invalid(format!(
                        "flat gap needs 0 < xi < eta, got ({xi}, {eta})"
                    )));
                }
            }
            FlowKind::Tabulated { samples } => {
                if samples.len() < 2 {
                    return Err(FlowError::Invalid("need at least 2 samples".into()));
                }
                if samples[0].0 != 0.0 || samples[0].1 != 0.0 {
                    return Err(FlowError::Invalid("first sample must be (0, 0)".into()));
                }
                for w in samples.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(FlowError::Invalid("abscissae must increase".into()));
                    }
                    if !(w[1].1 > 0.0) {
                        return Err(FlowError::Invalid("v must be positive for x > 0".into()));
                    }
                }
            }
            FlowKind::CappedLinear | FlowKind::CappedParabola => {}
        }
        Ok(FlowSpec { kind, amplitude })
    }

    /// Re-run construction checks (deserialized specs bypass them).
    pub fn validate(&self) -> Result<(), FlowError> {
        Self::with_amplitude(self.kind.clone(), self.amplitude).map(|_| ())
    }

    /// Shorthand for the linear shear `v(x) = amplitude * x`.
    pub fn linear() -> Self {
        FlowSpec::new(FlowKind::PowerLaw { beta: 1.0 }).unwrap()
    }

    pub fn power_law(beta: f64) -> Result<Self, FlowError> {
        FlowSpec::new(FlowKind::PowerLaw { beta })
    }

    pub fn capped_linear() -> Self {
        FlowSpec::new(FlowKind::CappedLinear).unwrap()
    }

    pub fn capped_parabola() -> Self {
        FlowSpec::new(FlowKind::CappedParabola).unwrap()
    }

    pub fn flat_gap(xi: f64, eta: f64) -> Result<Self, FlowError> {
        FlowSpec::new(FlowKind::FlatGap { xi, eta })
    }

    /// Evaluate `v(x)`. Exactly antisymmetric: computed at `|x|`, signed.
    pub fn eval(&self, x: f64) -> Result<f64, FlowError> {
        let ax = x.abs();
        let v = self.eval_abs(ax)?;
        Ok(x.signum() * self.amplitude * v)
    }

    /// Evaluate `v'(x)` (an even function of `x`).
    ///
    /// At kinks of a piecewise profile the one-sided derivative from
    /// larger `|x|` is returned.
    pub fn eval_derivative(&self, x: f64) -> Result<f64, FlowError> {
        let ax = x.abs();
        let d = match &self.kind {
            FlowKind::PowerLaw { beta } => beta * ax.powf(beta - 1.0),
            FlowKind::CappedLinear => {
                if ax < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            FlowKind::FlatGap { xi, eta } => {
                if ax >= *xi && ax < *eta {
                    0.0
                } else {
                    1.0
                }
            }
            FlowKind::CappedParabola => {
                if ax < 1.0 {
                    2.0 - 2.0 * ax
                } else {
                    0.0
                }
            }
            FlowKind::Tabulated { samples } => {
                let (lo, hi) = self.tabulated_range();
                if ax > hi {
                    return Err(FlowError::OutOfRange { x, lo, hi });
                }
                // slope of the segment on the larger-|x| side of a node
                let mut i = samples.partition_point(|s| s.0 <= ax);
                if i >= samples.len() {
                    i = samples.len() - 1;
                }
                (samples[i].1 - samples[i - 1].1) / (samples[i].0 - samples[i - 1].0)
            }
        };
        Ok(self.amplitude * d)
    }

    /// `sup v` together with `x_m = inf { x : v(x) = sup v }`, for bounded
    /// profiles; `None` when the profile is unbounded.
    pub fn supremum(&self) -> Option<(f64, f64)> {
        match &self.kind {
            FlowKind::PowerLaw { .. } | FlowKind::FlatGap { .. } => None,
            FlowKind::CappedLinear | FlowKind::CappedParabola => Some((1.0, self.amplitude)),
            FlowKind::Tabulated { samples } => {
                let vmax = samples.iter().fold(0.0f64, |m, s| m.max(s.1));
                let xm = samples.iter().find(|s| s.1 == vmax).map(|s| s.0)?;
                Some((xm, self.amplitude * vmax))
            }
        }
    }

    /// True when `v` is strictly increasing on `(0, x]`: the standing
    /// assumption of the far-field boundary quadratures.
    pub fn is_increasing_on(&self, x: f64) -> bool {
        let x = x.abs();
        match &self.kind {
            FlowKind::PowerLaw { .. } => true,
            FlowKind::CappedLinear | FlowKind::CappedParabola => x <= 1.0,
            FlowKind::FlatGap { xi, .. } => x <= *xi,
            FlowKind::Tabulated { samples } => samples
                .windows(2)
                .take_while(|w| w[0].0 < x)
                .all(|w| w[1].1 > w[0].1),
        }
    }

    fn tabulated_range(&self) -> (f64, f64) {
        if let FlowKind::Tabulated { samples } = &self.kind {
            (samples[0].0, samples[samples.len() - 1].0)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        }
    }

    fn eval_abs(&self, ax: f64) -> Result<f64, FlowError> {
        Ok(match &self.kind {
            // the linear case is the hot path of the SDE loop
            FlowKind::PowerLaw { beta } if *beta == 1.0 => ax,
            FlowKind::PowerLaw { beta } => ax.powf(*beta),
            FlowKind::CappedLinear => ax.min(1.0),
            FlowKind::FlatGap { xi, eta } => {
                if ax <= *xi {
                    ax
                } else if ax < *eta {
                    *xi
                } else {
                    xi + (ax - eta)
                }
            }
            FlowKind::CappedParabola => {
                if ax < 1.0 {
                    ax * (2.0 - ax)
                } else {
                    1.0
                }
            }
            FlowKind::Tabulated { samples } => {
                let (lo, hi) = self.tabulated_range();
                if ax > hi {
                    return Err(FlowError::OutOfRange { x: ax, lo, hi });
                }
                let i = samples.partition_point(|s| s.0 < ax).max(1);
                let (x0, v0) = samples[i - 1];
                let (x1, v1) = samples[i.min(samples.len() - 1)];
                if x1 == x0 {
                    v0
                } else {
                    v0 + (v1 - v0) * (ax - x0) / (x1 - x0)
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn all_kinds() -> Vec<FlowSpec> {
        vec![
            FlowSpec::power_law(0.5).unwrap(),
            FlowSpec::linear(),
            FlowSpec::power_law(2.0).unwrap(),
            FlowSpec::capped_linear(),
            FlowSpec::capped_parabola(),
            FlowSpec::flat_gap(0.75, 0.85).unwrap(),
            FlowSpec::new(FlowKind::Tabulated {
                samples: vec![(0.0, 0.0), (0.5, 0.3), (1.0, 1.1), (2.0, 1.4)],
            })
            .unwrap(),
        ]
    }

    #[test]
    fn linear_identity() {
        let f = FlowSpec::linear();
        assert_eq!(f.eval(0.5).unwrap(), 0.5);
        assert_eq!(f.eval(-0.5).unwrap(), -0.5);
    }

    #[test]
    fn capped_linear_saturates() {
        let f = FlowSpec::capped_linear();
        assert_eq!(f.eval(3.0).unwrap(), 1.0);
        assert_eq!(f.eval(-3.0).unwrap(), -1.0);
        assert_eq!(f.eval(0.5).unwrap(), 0.5);
        assert_eq!(f.eval_derivative(0.5).unwrap(), 1.0);
        assert_eq!(f.eval_derivative(1.0).unwrap(), 0.0); // one-sided from |x|+
    }

    #[test]
    fn capped_parabola_values() {
        let f = FlowSpec::capped_parabola();
        // max(1*(2-1), 1) = 1 at the peak
        assert_eq!(f.eval(1.0).unwrap(), 1.0);
        assert_eq!(f.eval(4.0).unwrap(), 1.0);
        assert_abs_diff_eq!(f.eval(0.5).unwrap(), 0.75, epsilon = 1e-15);
        // quadratic approach to the cap
        assert_abs_diff_eq!(f.eval_derivative(0.9).unwrap(), 0.2, epsilon = 1e-12);
        assert_eq!(f.eval_derivative(1.0).unwrap(), 0.0);
    }

    #[test]
    fn flat_gap_flat_interval() {
        let f = FlowSpec::flat_gap(0.75, 0.85).unwrap();
        assert_eq!(f.eval_derivative(0.8).unwrap(), 0.0);
        assert_eq!(f.eval_derivative(-0.8).unwrap(), 0.0);
        assert_eq!(f.eval_derivative(0.5).unwrap(), 1.0);
        assert_eq!(f.eval_derivative(0.9).unwrap(), 1.0);
        assert_abs_diff_eq!(f.eval(0.8).unwrap(), 0.75, epsilon = 1e-15);
        // continuity across the gap: v(eta) = xi, then unit slope resumes
        assert_abs_diff_eq!(f.eval(1.0).unwrap(), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn power_law_derivative() {
        let f = FlowSpec::power_law(2.0).unwrap();
        assert_abs_diff_eq!(f.eval_derivative(0.5).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn amplitude_scales_whole_profile() {
        let f = FlowSpec::with_amplitude(FlowKind::PowerLaw { beta: 1.0 }, 2.5).unwrap();
        assert_eq!(f.eval(0.4).unwrap(), 1.0);
        assert_eq!(f.eval_derivative(0.4).unwrap(), 2.5);
    }

    #[test]
    fn tabulated_out_of_range_is_an_error() {
        let f = FlowSpec::new(FlowKind::Tabulated {
            samples: vec![(0.0, 0.0), (1.0, 1.0)],
        })
        .unwrap();
        assert!(matches!(f.eval(1.5), Err(FlowError::OutOfRange { .. })));
        assert!(f.eval(-0.5).is_ok());
    }

    #[test]
    fn central_difference_matches_derivative_away_from_kinks() {
        let h = 1e-5;
        for f in all_kinds() {
            for &x in &[0.3f64, 0.5, 0.6, 1.5] {
                if let FlowKind::Tabulated { .. } = f.kind {
                    // only probe strictly inside segments
                    if x == 0.5 || x == 1.0 {
                        continue;
                    }
                }
                // skip points within h of a kink
                if matches!(
                    f.kind,
                    FlowKind::CappedLinear | FlowKind::CappedParabola | FlowKind::FlatGap { .. }
                ) && (x - 1.0).abs() < 1e-3
                {
                    continue;
                }
                let cd = (f.eval(x + h).unwrap() - f.eval(x - h).unwrap()) / (2.0 * h);
                let d = f.eval_derivative(x).unwrap();
                assert!(
                    (cd - d).abs() <= 1e-6,
                    "kind {:?} at x={x}: central {cd} vs analytic {d}",
                    f.kind
                );
            }
        }
    }

    #[test]
    fn suprema() {
        assert_eq!(FlowSpec::capped_linear().supremum(), Some((1.0, 1.0)));
        assert_eq!(FlowSpec::capped_parabola().supremum(), Some((1.0, 1.0)));
        assert_eq!(FlowSpec::linear().supremum(), None);
        assert_eq!(FlowSpec::flat_gap(0.75, 0.85).unwrap().supremum(), None);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(FlowSpec::power_law(-1.0).is_err());
        assert!(FlowSpec::power_law(0.0).is_err());
        assert!(FlowSpec::flat_gap(0.9, 0.8).is_err());
        assert!(FlowSpec::with_amplitude(FlowKind::CappedLinear, 0.0).is_err());
    }

    proptest! {
        // v(-x) = -v(x) exactly, for every kind
        #[test]
        fn antisymmetry_exact(x in -50.0f64..50.0) {
            for f in all_kinds() {
                if let (Ok(a), Ok(b)) = (f.eval(x), f.eval(-x)) {
                    prop_assert_eq!(a, -b);
                }
            }
        }

        // v(x) > 0 for x > 0
        #[test]
        fn positive_for_positive_x(x in 1e-6f64..1.9) {
            for f in all_kinds() {
                prop_assert!(f.eval(x).unwrap() > 0.0);
            }
        }
    }
}
