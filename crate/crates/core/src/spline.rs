//! Cubic B-spline bases on clamped knot vectors.
//!
//! A trajectory is `psi(t) = sum_k beta_k B_k(t)`. Besides the value row
//! `(B_1(t), ..., B_q(t))` the basis produces two further rows that are exact
//! linear maps of the same coefficients:
//!
//! * the derivative row, built from the quadratic basis on the same knots, so
//!   that `dot(beta, row) = psi'(t)`;
//! * the integral row, built from the quartic basis on the knots padded by one
//!   extra knot at each end, so that `dot(beta, row) = int_0^t psi(v) dv`.
//!
//! Evaluation at the right end of the domain uses left limits, so the last
//! basis function equals one at `t = T`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::quantile_type6;

const CUBIC: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplineError {
    #[error("basis dimension q = {0} is below the cubic minimum of 5")]
    InvalidOrder(usize),
    #[error("interior knot {position} at {value} coincides with a neighbouring knot; the slope would be undefined")]
    DuplicateInteriorKnot { position: usize, value: f64 },
    #[error("time {t} is outside the spline domain [0, {end}]")]
    OutOfDomain { t: f64, end: f64 },
    #[error("knot placement needs at least one time point")]
    EmptyTimes,
    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),
}

/// How interior knots are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnotStrategy {
    /// Quantiles of the pooled measurement times.
    Quantile,
    /// Equally spaced on `(0, T)`.
    Equal,
}

impl fmt::Display for KnotStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KnotStrategy::Quantile => f.write_str("quantile"),
            KnotStrategy::Equal => f.write_str("equal"),
        }
    }
}

impl FromStr for KnotStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quantile" => Ok(KnotStrategy::Quantile),
            "equal" => Ok(KnotStrategy::Equal),
            other => Err(format!("unknown knot strategy `{other}` (expected quantile or equal)")),
        }
    }
}

/// Which functional of the trajectory a basis row represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Value,
    Derivative,
    Integral,
}

/// One evaluated basis row of length `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRow {
    pub values: DVector<f64>,
    pub t: f64,
    pub kind: RowKind,
}

impl BasisRow {
    pub fn dot(&self, coefficients: &[f64]) -> f64 {
        self.values.iter().zip(coefficients).map(|(a, b)| a * b).sum()
    }
}

/// Clamped cubic knot vector `u_1 <= ... <= u_{q+4}` on `[0, T]`, plus the
/// two padding knots used by the quartic integral basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    knots: Vec<f64>,
    lower_pad: f64,
    upper_pad: f64,
}

impl KnotVector {
    /// Builds a clamped cubic knot vector from its interior knots.
    pub fn from_interior(interior: &[f64], end: f64) -> Result<Self, SplineError> {
        if !(end > 0.0 && end.is_finite()) {
            return Err(SplineError::InvalidKnots(format!("domain end {end} must be positive")));
        }
        let q = interior.len() + 4;
        if q < 5 {
            return Err(SplineError::InvalidOrder(q));
        }
        let mut prev = 0.0;
        for (i, &k) in interior.iter().enumerate() {
            if !(k > prev) || !(k < end) {
                return Err(SplineError::DuplicateInteriorKnot { position: i + 1, value: k });
            }
            prev = k;
        }
        let mut knots = vec![0.0; 4];
        knots.extend_from_slice(interior);
        knots.extend_from_slice(&[end; 4]);
        Ok(KnotVector { knots, lower_pad: -1.0, upper_pad: end + 1.0 })
    }

    /// Validates a full knot vector of length `q + 4`.
    pub fn new(knots: Vec<f64>) -> Result<Self, SplineError> {
        if knots.len() < 9 {
            return Err(SplineError::InvalidOrder(knots.len().saturating_sub(4)));
        }
        let n = knots.len();
        let end = knots[n - 1];
        if knots[..4].iter().any(|&k| k != 0.0) || knots[n - 4..].iter().any(|&k| k != end) {
            return Err(SplineError::InvalidKnots(
                "the first four knots must equal 0 and the last four must equal T".into(),
            ));
        }
        Self::from_interior(&knots[4..n - 4], end)
    }

    /// Replaces the padding knots of the quartic integral basis.
    pub fn with_padding(mut self, lower: f64, upper: f64) -> Result<Self, SplineError> {
        if !(lower < 0.0) || !(upper > self.end()) {
            return Err(SplineError::InvalidKnots(format!(
                "padding knots must satisfy {lower} < 0 and {upper} > {}",
                self.end()
            )));
        }
        self.lower_pad = lower;
        self.upper_pad = upper;
        Ok(self)
    }

    /// Basis dimension.
    pub fn q(&self) -> usize {
        self.knots.len() - 4
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interior(&self) -> &[f64] {
        &self.knots[4..self.knots.len() - 4]
    }

    fn check_domain(&self, t: f64) -> Result<(), SplineError> {
        if t >= 0.0 && t <= self.end() {
            Ok(())
        } else {
            Err(SplineError::OutOfDomain { t, end: self.end() })
        }
    }

    /// Row of the `q` cubic basis functions at `t`.
    pub fn eval_value(&self, t: f64) -> Result<BasisRow, SplineError> {
        self.check_domain(t)?;
        let q = self.q();
        let mut values = DVector::zeros(q);
        let mut local = [0.0; 5];
        let span = find_span(&self.knots, CUBIC, q, t);
        basis_funs(&self.knots, span, CUBIC, t, &mut local);
        for (r, v) in local[..=CUBIC].iter().enumerate() {
            values[span - CUBIC + r] = *v;
        }
        Ok(BasisRow { values, t, kind: RowKind::Value })
    }

    /// Row `r` with `dot(beta, r) = psi'(t)`.
    ///
    /// Element `k` is `3 (N_k(t) / (u_{k+3} - u_k) - N_{k+1}(t) / (u_{k+4} - u_{k+1}))`
    /// where `N` are the quadratic B-splines on the same knots. Terms with a
    /// zero-length support vanish identically.
    pub fn eval_derivative(&self, t: f64) -> Result<BasisRow, SplineError> {
        self.check_domain(t)?;
        let q = self.q();
        let u = &self.knots;
        // Quadratic basis on the cubic knots has q + 1 members, the first and
        // last of which are identically zero on a clamped vector.
        let mut quad = vec![0.0; q + 1];
        let mut local = [0.0; 5];
        let span = find_span(u, 2, q + 1, t);
        basis_funs(u, span, 2, t, &mut local);
        for (r, v) in local[..=2].iter().enumerate() {
            quad[span - 2 + r] = *v;
        }
        let ratio = |value: f64, width: f64| if width > 0.0 { value / width } else { 0.0 };
        let values = DVector::from_fn(q, |k, _| {
            3.0 * (ratio(quad[k], u[k + 3] - u[k]) - ratio(quad[k + 1], u[k + 4] - u[k + 1]))
        });
        Ok(BasisRow { values, t, kind: RowKind::Derivative })
    }

    /// Row `r` with `dot(beta, r) = int_0^t psi(v) dv`.
    ///
    /// Element `k` is `(u_{k+4} - u_k) / 4 * sum_{i > k} M_i(t)` where `M` are the
    /// `q + 1` quartic B-splines on the padded knot vector.
    pub fn eval_integral(&self, t: f64) -> Result<BasisRow, SplineError> {
        self.check_domain(t)?;
        let q = self.q();
        let u = &self.knots;
        let mut padded = Vec::with_capacity(q + 6);
        padded.push(self.lower_pad);
        padded.extend_from_slice(u);
        padded.push(self.upper_pad);

        let mut quartic = vec![0.0; q + 1];
        let mut local = [0.0; 5];
        let span = find_span(&padded, 4, q + 1, t);
        basis_funs(&padded, span, 4, t, &mut local);
        for (r, v) in local.iter().enumerate() {
            quartic[span - 4 + r] = *v;
        }
        // Tail sums: tail[k] = sum_{i >= k} quartic[i].
        let mut tail = vec![0.0; q + 2];
        for i in (0..=q).rev() {
            tail[i] = tail[i + 1] + quartic[i];
        }
        let values = DVector::from_fn(q, |k, _| (u[k + 4] - u[k]) / 4.0 * tail[k + 1]);
        Ok(BasisRow { values, t, kind: RowKind::Integral })
    }
}

/// Places knots for a `q`-dimensional clamped cubic basis on `[0, end]`.
///
/// The quantile strategy puts interior knot `k` at the `k / (q - 3)` quantile
/// of `times` (definition in [`quantile_type6`]). Clumped times that drive two
/// knots together, or a knot onto a boundary, are rejected.
pub fn make_knots(
    times: &[f64],
    q: usize,
    strategy: KnotStrategy,
    end: f64,
) -> Result<KnotVector, SplineError> {
    if q < 5 {
        return Err(SplineError::InvalidOrder(q));
    }
    if times.is_empty() {
        return Err(SplineError::EmptyTimes);
    }
    if let Some(&t) = times.iter().find(|&&t| !(t >= 0.0 && t <= end)) {
        return Err(SplineError::OutOfDomain { t, end });
    }
    let n_interior = q - 4;
    let segments = (q - 3) as f64;
    let interior: Vec<f64> = match strategy {
        KnotStrategy::Equal => (1..=n_interior).map(|k| end * k as f64 / segments).collect(),
        KnotStrategy::Quantile => {
            let mut sorted = times.to_vec();
            sorted.sort_by(|a, b| a.total_cmp(b));
            (1..=n_interior)
                .map(|k| quantile_type6(&sorted, k as f64 / segments))
                .collect()
        }
    };
    KnotVector::from_interior(&interior, end)
}

/// Index `s` with `knots[s] <= t < knots[s + 1]` among the spans of a
/// `degree` basis with `n_basis` members; the right end maps to the last
/// non-empty span.
fn find_span(knots: &[f64], degree: usize, n_basis: usize, t: f64) -> usize {
    if t >= knots[n_basis] {
        let mut s = n_basis - 1;
        while knots[s] >= knots[s + 1] {
            s -= 1;
        }
        return s;
    }
    let idx = knots.partition_point(|&k| k <= t);
    idx.saturating_sub(1).clamp(degree, n_basis - 1)
}

/// Non-zero basis values `N_{span-degree}, ..., N_{span}` at `t`
/// (de Boor's triangular recursion). `out` must hold `degree + 1` entries.
fn basis_funs(knots: &[f64], span: usize, degree: usize, t: f64, out: &mut [f64]) {
    let mut left = [0.0; 6];
    let mut right = [0.0; 6];
    out[0] = 1.0;
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook recursive definition with half-open supports and 0/0 = 0.
    fn cox_de_boor(knots: &[f64], i: usize, degree: usize, t: f64, end: f64) -> f64 {
        if degree == 0 {
            let (a, b) = (knots[i], knots[i + 1]);
            let inside = if t == end { a < b && b == end } else { a <= t && t < b };
            return if inside { 1.0 } else { 0.0 };
        }
        let mut out = 0.0;
        let d1 = knots[i + degree] - knots[i];
        if d1 > 0.0 {
            out += (t - knots[i]) / d1 * cox_de_boor(knots, i, degree - 1, t, end);
        }
        let d2 = knots[i + degree + 1] - knots[i + 1];
        if d2 > 0.0 {
            out += (knots[i + degree + 1] - t) / d2 * cox_de_boor(knots, i + 1, degree - 1, t, end);
        }
        out
    }

    fn midpoint_basis() -> KnotVector {
        KnotVector::new(vec![0.0, 0.0, 0.0, 0.0, 5.0, 10.0, 10.0, 10.0, 10.0]).unwrap()
    }

    #[test]
    fn equal_knots_q5() {
        let times: Vec<f64> = (0..=10).map(f64::from).collect();
        let kv = make_knots(&times, 5, KnotStrategy::Equal, 10.0).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.0, 0.0, 5.0, 10.0, 10.0, 10.0, 10.0]);
    }

    #[test]
    fn quantile_knots_on_1_to_99() {
        let times: Vec<f64> = (1..=99).map(f64::from).collect();
        let kv = make_knots(&times, 7, KnotStrategy::Quantile, 100.0).unwrap();
        // Hand count: the 25th, 50th and 75th of 99 ordered values.
        assert_eq!(kv.interior(), &[25.0, 50.0, 75.0]);
    }

    #[test]
    fn clumped_zero_times_collide_with_boundary() {
        let mut times = vec![0.0; 20];
        times.extend((1..=80).map(|i| i as f64 * 0.5));
        // First interior quantile at 1/6 lands inside the block of zeros.
        let err = make_knots(&times, 9, KnotStrategy::Quantile, 40.0).unwrap_err();
        assert!(matches!(err, SplineError::DuplicateInteriorKnot { position: 1, value } if value == 0.0));
    }

    #[test]
    fn low_order_rejected() {
        let err = make_knots(&[1.0], 4, KnotStrategy::Equal, 10.0).unwrap_err();
        assert_eq!(err, SplineError::InvalidOrder(4));
    }

    #[test]
    fn out_of_domain_rejected() {
        let kv = midpoint_basis();
        assert!(matches!(kv.eval_value(-0.1), Err(SplineError::OutOfDomain { .. })));
        assert!(matches!(kv.eval_derivative(10.5), Err(SplineError::OutOfDomain { .. })));
        assert!(matches!(kv.eval_integral(f64::NAN), Err(SplineError::OutOfDomain { .. })));
    }

    #[test]
    fn clamped_boundaries() {
        let kv = midpoint_basis();
        let at0 = kv.eval_value(0.0).unwrap();
        assert_eq!(at0.values.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        let at_end = kv.eval_value(10.0).unwrap();
        assert_eq!(at_end.values.as_slice(), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        let integral0 = kv.eval_integral(0.0).unwrap();
        assert!(integral0.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn value_row_matches_recursive_definition() {
        let kv = midpoint_basis();
        for &t in &[2.5, 0.0, 4.999, 5.0, 7.25, 10.0] {
            let row = kv.eval_value(t).unwrap();
            for k in 0..kv.q() {
                let expected = cox_de_boor(kv.knots(), k, 3, t, kv.end());
                assert!((row.values[k] - expected).abs() < 1e-14, "t={t} k={k}");
            }
        }
        // Frozen from the recursive oracle: knots {0,0,0,0,5,10,10,10,10}, t = 2.5.
        let row = kv.eval_value(2.5).unwrap();
        let expected = [0.125, 0.59375, 0.25, 0.03125, 0.0];
        for (a, b) in row.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_of_constant_and_identity() {
        let kv = make_knots(&[1.0, 2.0, 3.0, 7.0, 8.0, 9.0], 8, KnotStrategy::Quantile, 10.0).unwrap();
        let u = kv.knots();
        let q = kv.q();
        let constant = vec![2.5; q];
        let greville: Vec<f64> = (0..q).map(|k| (u[k + 1] + u[k + 2] + u[k + 3]) / 3.0).collect();
        for i in 0..=50 {
            let t = 10.0 * i as f64 / 50.0;
            let d = kv.eval_derivative(t).unwrap();
            assert!(d.dot(&constant).abs() < 1e-12);
            assert!((d.dot(&greville) - 1.0).abs() < 1e-12, "t = {t}");
            // psi(t) = t as well
            assert!((kv.eval_value(t).unwrap().dot(&greville) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn integral_of_constant_is_linear() {
        let kv = make_knots(&[0.5, 1.5, 2.0, 6.0], 7, KnotStrategy::Quantile, 12.0).unwrap();
        let c = vec![-1.75; kv.q()];
        for i in 0..=40 {
            let t = 12.0 * i as f64 / 40.0;
            let r = kv.eval_integral(t).unwrap();
            assert!((r.dot(&c) + 1.75 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn integral_invariant_to_padding_knots() {
        let kv = make_knots(&[1.0, 2.0, 4.0, 8.0], 7, KnotStrategy::Quantile, 10.0).unwrap();
        let moved = kv.clone().with_padding(-7.3, 25.0).unwrap();
        for i in 0..=20 {
            let t = i as f64 * 0.5;
            let a = kv.eval_integral(t).unwrap();
            let b = moved.eval_integral(t).unwrap();
            for k in 0..kv.q() {
                assert!((a.values[k] - b.values[k]).abs() < 1e-12);
            }
        }
        assert!(kv.clone().with_padding(0.0, 11.0).is_err());
    }
}
