//! The joint longitudinal-survival likelihood.
//!
//! Each subject contributes a multivariate Gaussian density for its biomarker
//! measurements around the spline trajectory, and a piecewise-exponential
//! survival density whose log hazard is
//!
//! ```text
//! log lambda_0(t) + gamma' psi(t) + gamma_s' psi'(t) + gamma_h' int_0^t psi + z' zeta
//! ```
//!
//! The cumulative hazard has no closed form; it is integrated by
//! Gauss-Legendre quadrature separately on each baseline-hazard interval,
//! further cut at interior spline knots.

mod design;
mod likelihood;
pub mod quadrature;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spline::{make_knots, KnotStrategy, KnotVector, SplineError};

pub use design::{JointModel, SubjectDesign};
pub use likelihood::{
    cumulative_hazard, joint_loglik, log_hazard, longitudinal_loglik, subject_loglik,
    survival_logdensity,
};

/// Largest admissible hazard exponent before `exp` is considered to overflow.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("{0} is not positive definite")]
    NonPosDefCovariance(String),
    #[error("hazard exponent {value} exceeds {MAX_EXPONENT} for subject {subject}")]
    ExponentOverflow { subject: String, value: f64 },
    #[error("invalid hazard specification: {0}")]
    InvalidHazard(String),
    #[error("invalid link parameters: {0}")]
    InvalidLink(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("quadrature order {0} is below 2")]
    InvalidQuadOrder(usize),
    #[error("invalid subject {id}: {reason}")]
    InvalidSubject { id: String, reason: String },
}

/// One subject's measurements and survival outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectData {
    pub id: String,
    /// Measurement times, months.
    pub obs_times: Vec<f64>,
    /// `m_i x L` biomarker values, one row per measurement time.
    pub y: DMatrix<f64>,
    /// Covariates shifting the spline-coefficient mean.
    pub x: DVector<f64>,
    /// Baseline hazard covariates.
    pub z: DVector<f64>,
    pub event_time: f64,
    pub event: bool,
}

impl SubjectData {
    pub fn n_obs(&self) -> usize {
        self.obs_times.len()
    }

    pub fn n_markers(&self) -> usize {
        self.y.ncols()
    }

    pub fn validate(&self, end: f64) -> Result<(), ModelError> {
        let bad = |reason: String| ModelError::InvalidSubject { id: self.id.clone(), reason };
        if self.obs_times.is_empty() {
            return Err(bad("no measurements".into()));
        }
        if self.y.nrows() != self.obs_times.len() {
            return Err(bad(format!(
                "{} measurement rows for {} times",
                self.y.nrows(),
                self.obs_times.len()
            )));
        }
        if let Some(t) = self.obs_times.iter().find(|&&t| !(0.0..=end).contains(&t)) {
            return Err(bad(format!("measurement time {t} outside [0, {end}]")));
        }
        if !(self.event_time > 0.0 && self.event_time <= end) {
            return Err(bad(format!("event time {} outside (0, {end}]", self.event_time)));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite biomarker value".into()));
        }
        Ok(())
    }
}

/// Which trajectory functionals enter the hazard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    /// Current value only.
    Current,
    /// Current value and slope.
    Slope,
    /// Current value and cumulative history.
    History,
    /// All three.
    Full,
}

impl LinkKind {
    pub fn has_slope(self) -> bool {
        matches!(self, LinkKind::Slope | LinkKind::Full)
    }

    pub fn has_history(self) -> bool {
        matches!(self, LinkKind::History | LinkKind::Full)
    }

    /// Active flags for the (value, slope, history) blocks.
    pub fn active_blocks(self) -> [bool; 3] {
        [true, self.has_slope(), self.has_history()]
    }
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkKind::Current => "current",
            LinkKind::Slope => "slope",
            LinkKind::History => "history",
            LinkKind::Full => "full",
        })
    }
}

impl FromStr for LinkKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "current" => Ok(LinkKind::Current),
            "slope" => Ok(LinkKind::Slope),
            "history" => Ok(LinkKind::History),
            "full" => Ok(LinkKind::Full),
            other => Err(format!(
                "unknown link kind `{other}` (expected current, slope, history or full)"
            )),
        }
    }
}

/// Hazard regression coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub kind: LinkKind,
    pub gamma: DVector<f64>,
    pub gamma_s: DVector<f64>,
    pub gamma_h: DVector<f64>,
    pub zeta: DVector<f64>,
}

impl LinkParams {
    pub fn zeros(kind: LinkKind, n_markers: usize, n_hazard_covariates: usize) -> Self {
        LinkParams {
            kind,
            gamma: DVector::zeros(n_markers),
            gamma_s: DVector::zeros(n_markers),
            gamma_h: DVector::zeros(n_markers),
            zeta: DVector::zeros(n_hazard_covariates),
        }
    }

    /// Coefficient block by index: 0 value, 1 slope, 2 history.
    pub fn block(&self, b: usize) -> &DVector<f64> {
        match b {
            0 => &self.gamma,
            1 => &self.gamma_s,
            _ => &self.gamma_h,
        }
    }

    pub fn block_mut(&mut self, b: usize) -> &mut DVector<f64> {
        match b {
            0 => &mut self.gamma,
            1 => &mut self.gamma_s,
            _ => &mut self.gamma_h,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let l = self.gamma.len();
        if self.gamma_s.len() != l || self.gamma_h.len() != l {
            return Err(ModelError::DimensionMismatch("link blocks differ in length".into()));
        }
        if !self.kind.has_slope() && self.gamma_s.iter().any(|&v| v != 0.0) {
            return Err(ModelError::InvalidLink(format!("gamma_s must be 0 for kind {}", self.kind)));
        }
        if !self.kind.has_history() && self.gamma_h.iter().any(|&v| v != 0.0) {
            return Err(ModelError::InvalidLink(format!("gamma_h must be 0 for kind {}", self.kind)));
        }
        Ok(())
    }
}

/// Piecewise-constant baseline hazard: `lambda_0(t) = lambda_j` on `[w_j, w_{j+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardSpec {
    jumps: Vec<f64>,
    lambda: Vec<f64>,
}

impl HazardSpec {
    /// `jumps` has `J + 1` entries starting at 0 and ending at `+inf`.
    pub fn new(jumps: Vec<f64>, lambda: Vec<f64>) -> Result<Self, ModelError> {
        validate_jumps(&jumps)?;
        if lambda.len() + 1 != jumps.len() {
            return Err(ModelError::InvalidHazard(format!(
                "{} rates for {} intervals",
                lambda.len(),
                jumps.len() - 1
            )));
        }
        if let Some(v) = lambda.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(ModelError::InvalidHazard(format!("rate {v} is not positive")));
        }
        Ok(HazardSpec { jumps, lambda })
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn n_intervals(&self) -> usize {
        self.lambda.len()
    }

    pub fn interval_of(&self, t: f64) -> usize {
        interval_of(&self.jumps, t)
    }
}

pub(crate) fn validate_jumps(jumps: &[f64]) -> Result<(), ModelError> {
    if jumps.len() < 2 || jumps[0] != 0.0 || jumps[jumps.len() - 1] != f64::INFINITY {
        return Err(ModelError::InvalidHazard(
            "jump points must start at 0 and end at +inf".into(),
        ));
    }
    if jumps.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ModelError::InvalidHazard("jump points must be strictly increasing".into()));
    }
    Ok(())
}

/// Interval index `j` with `w_j <= t < w_{j+1}`.
pub fn interval_of(jumps: &[f64], t: f64) -> usize {
    let idx = jumps.partition_point(|&w| w <= t);
    idx.saturating_sub(1).min(jumps.len() - 2)
}

/// Jump points at the quantiles of the observed event times, chosen so that
/// roughly `events_per_interval` events fall in each interval. Each interior
/// jump sits halfway between the two event times it separates. The final
/// interval is open-ended.
pub fn hazard_jumps(event_times: &[f64], events_per_interval: usize) -> Vec<f64> {
    let mut events = event_times.to_vec();
    events.sort_by(|a, b| a.total_cmp(b));
    let n = events.len();
    let per = events_per_interval.max(1);
    let n_intervals = ((n as f64 / per as f64).round() as usize).max(1);
    let mut jumps = vec![0.0];
    for j in 1..n_intervals {
        let idx = ((j * n) as f64 / n_intervals as f64).round() as usize;
        if idx == 0 || idx >= n {
            continue;
        }
        let w = 0.5 * (events[idx - 1] + events[idx]);
        if w > *jumps.last().unwrap() {
            jumps.push(w);
        }
    }
    jumps.push(f64::INFINITY);
    jumps
}

/// User-facing model choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: LinkKind,
    /// Spline basis dimension.
    pub q: usize,
    pub knots: KnotStrategy,
    /// Gauss-Legendre points per hazard interval and knot span.
    pub quad_order: usize,
    /// Target number of events per baseline-hazard interval.
    pub events_per_interval: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: LinkKind::Current,
            q: 6,
            knots: KnotStrategy::Quantile,
            quad_order: 10,
            events_per_interval: 8,
        }
    }
}

/// A model configuration resolved against data: the knot vector, hazard jump
/// points and quadrature order are fixed for the whole fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStructure {
    pub kind: LinkKind,
    pub basis: KnotVector,
    pub jumps: Vec<f64>,
    pub quad_order: usize,
}

impl ModelStructure {
    pub fn new(
        kind: LinkKind,
        basis: KnotVector,
        jumps: Vec<f64>,
        quad_order: usize,
    ) -> Result<Self, ModelError> {
        validate_jumps(&jumps)?;
        if quad_order < 2 {
            return Err(ModelError::InvalidQuadOrder(quad_order));
        }
        Ok(ModelStructure { kind, basis, jumps, quad_order })
    }

    /// Places knots on the pooled measurement times and jump points on the
    /// observed event times.
    pub fn resolve(
        subjects: &[SubjectData],
        config: &ModelConfig,
        end: f64,
    ) -> Result<Self, ModelError> {
        let times: Vec<f64> = subjects.iter().flat_map(|s| s.obs_times.iter().copied()).collect();
        let basis = make_knots(&times, config.q, config.knots, end)?;
        let events: Vec<f64> =
            subjects.iter().filter(|s| s.event).map(|s| s.event_time).collect();
        let jumps = hazard_jumps(&events, config.events_per_interval);
        Self::new(config.kind, basis, jumps, config.quad_order)
    }

    pub fn n_intervals(&self) -> usize {
        self.jumps.len() - 1
    }

    pub fn q(&self) -> usize {
        self.basis.q()
    }
}

/// Cholesky-based log-determinant and inverse of an SPD matrix.
pub(crate) fn spd_inverse(
    m: &DMatrix<f64>,
    what: &str,
) -> Result<(DMatrix<f64>, f64), ModelError> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| ModelError::NonPosDefCovariance(what.to_string()))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok((chol.inverse(), logdet))
}
