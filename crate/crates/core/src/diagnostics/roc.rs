//! Cumulative/dynamic ROC curves with Kaplan-Meier weighting of censored
//! subjects.

use serde::{Deserialize, Serialize};

use super::DiagnosticsError;
use crate::gibbs::ChainState;
use crate::model::{JointModel, ModelError};

/// ROC curve for events within `horizon` of `landmark`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub landmark: f64,
    pub horizon: f64,
    /// `(false-positive rate, true-positive rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub n_at_risk: usize,
    /// Set when every marker value is tied; the curve is then the diagonal.
    pub degenerate: bool,
}

/// Kaplan-Meier survival at `h` from `(time, event)` pairs. Events are
/// counted before censorings at tied times.
fn km_survival(data: &[(f64, bool)], h: f64) -> f64 {
    let mut sorted: Vec<(f64, bool)> = data.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut at_risk = sorted.len() as f64;
    let mut surv = 1.0;
    let mut k = 0;
    while k < sorted.len() && sorted[k].0 <= h {
        let t = sorted[k].0;
        let (mut deaths, mut leaving) = (0.0, 0.0);
        while k < sorted.len() && sorted[k].0 == t {
            if sorted[k].1 {
                deaths += 1.0;
            }
            leaving += 1.0;
            k += 1;
        }
        if deaths > 0.0 {
            surv *= (at_risk - deaths) / at_risk;
        }
        at_risk -= leaving;
    }
    surv
}

/// Time-dependent ROC for the binary outcome "event within `horizon` of
/// `landmark`" among subjects still under follow-up at the landmark.
///
/// A subject is test-positive at threshold `v` when its marker is at least
/// `v`. With `S` the KM survival at the horizon and `S_v` the same among
/// positives, `TP(v) = (1 - S_v) P(M >= v) / (1 - S)` and
/// `FP(v) = S_v P(M >= v) / S`. Both rates are monotonized by a running
/// maximum.
pub fn roc_curve(
    markers: &[f64],
    event_times: &[f64],
    events: &[bool],
    landmark: f64,
    horizon: f64,
) -> Result<RocResult, DiagnosticsError> {
    if markers.len() != event_times.len() || markers.len() != events.len() {
        return Err(DiagnosticsError::DimensionMismatch(format!(
            "{} markers, {} times, {} event flags",
            markers.len(),
            event_times.len(),
            events.len()
        )));
    }
    let risk: Vec<(f64, f64, bool)> = markers
        .iter()
        .zip(event_times)
        .zip(events)
        .filter(|((_, &s), _)| s >= landmark)
        .map(|((&m, &s), &e)| (m, s - landmark, e))
        .collect();
    if risk.is_empty() {
        return Err(DiagnosticsError::NoSubjectsAtRisk { landmark });
    }
    let all: Vec<(f64, bool)> = risk.iter().map(|&(_, u, e)| (u, e)).collect();
    let surv = km_survival(&all, horizon);
    if !(surv > 0.0 && surv < 1.0) {
        return Err(DiagnosticsError::NoCasesOrControls { survival: surv });
    }
    let mut thresholds: Vec<f64> = risk.iter().map(|r| r.0).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let degenerate = thresholds.len() == 1;

    let n = risk.len() as f64;
    let mut points = vec![(0.0, 0.0)];
    let (mut fp_max, mut tp_max) = (0.0f64, 0.0f64);
    for &v in &thresholds {
        let positives: Vec<(f64, bool)> = risk.iter().filter(|r| r.0 >= v).map(|&(_, u, e)| (u, e)).collect();
        let share = positives.len() as f64 / n;
        let s_pos = km_survival(&positives, horizon);
        let tp = ((1.0 - s_pos) * share / (1.0 - surv)).clamp(0.0, 1.0);
        let fp = (s_pos * share / surv).clamp(0.0, 1.0);
        tp_max = tp_max.max(tp);
        fp_max = fp_max.max(fp);
        points.push((fp_max, tp_max));
    }
    // The lowest threshold classifies everyone positive.
    if let Some(last) = points.last_mut() {
        *last = (1.0, 1.0);
    }
    let auc = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5).sum();
    Ok(RocResult { landmark, horizon, points, auc, n_at_risk: risk.len(), degenerate })
}

/// Hazard linear predictor `gamma' psi + gamma_s' psi' + gamma_h' int psi +
/// z' zeta` at `landmark` for every subject, under `state`.
pub fn landmark_markers(model: &JointModel, state: &ChainState, landmark: f64) -> Result<Vec<f64>, ModelError> {
    let basis = &model.structure.basis;
    let t = landmark.min(basis.end());
    let rows = [basis.eval_value(t)?.values, basis.eval_derivative(t)?.values, basis.eval_integral(t)?.values];
    let active = model.structure.kind.active_blocks();
    Ok(model
        .subjects
        .iter()
        .zip(&state.beta)
        .map(|(s, beta)| {
            let mut eta = s.z.dot(&state.link.zeta);
            for b in (0..3).filter(|&b| active[b]) {
                eta += state.link.block(b).dot(&(beta * &rows[b]));
            }
            eta
        })
        .collect())
}
