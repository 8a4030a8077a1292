//! Basis rows cached per subject so the sampler never re-evaluates the
//! spline recursion inside its inner loops.

use nalgebra::{DMatrix, DVector};

use super::quadrature::GaussLegendre;
use super::{interval_of, spd_inverse, LinkParams, ModelError, ModelStructure, SubjectData, MAX_EXPONENT};
use crate::gibbs::{ChainState, Dims};
use crate::spline::KnotVector;
use crate::stats::exp_in_place;

/// Value, derivative and integral rows at a subject's measurement times,
/// event time and quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDesign {
    /// `m_i x q` value rows at the measurement times.
    pub obs_rows: DMatrix<f64>,
    /// Value, derivative and integral rows at the event time.
    pub event_rows: [DVector<f64>; 3],
    /// Hazard interval containing the event time.
    pub event_interval: usize,
    /// `n x q` rows at the quadrature nodes, one matrix per link block.
    pub node_rows: [DMatrix<f64>; 3],
    pub node_weights: Vec<f64>,
    pub node_intervals: Vec<usize>,
}

impl SubjectDesign {
    pub fn build(
        subject: &SubjectData,
        basis: &KnotVector,
        jumps: &[f64],
        quad_order: usize,
    ) -> Result<Self, ModelError> {
        if quad_order < 2 {
            return Err(ModelError::InvalidQuadOrder(quad_order));
        }
        let q = basis.q();
        let mut obs_rows = DMatrix::zeros(subject.n_obs(), q);
        for (j, &t) in subject.obs_times.iter().enumerate() {
            obs_rows.row_mut(j).copy_from(&basis.eval_value(t)?.values.transpose());
        }
        let s = subject.event_time;
        let event_rows = rows_at(basis, s)?;

        let rule = GaussLegendre::new(quad_order);
        let mut nodes = Vec::new();
        let mut node_weights = Vec::new();
        let mut node_intervals = Vec::new();
        for j in 0..jumps.len() - 1 {
            let a = jumps[j];
            let b = jumps[j + 1].min(s);
            if b <= a {
                break;
            }
            for (u, w) in rule.mapped_split(a, b, basis.interior()) {
                nodes.push(u);
                node_weights.push(w);
                node_intervals.push(j);
            }
        }
        let mut node_rows = [
            DMatrix::zeros(nodes.len(), q),
            DMatrix::zeros(nodes.len(), q),
            DMatrix::zeros(nodes.len(), q),
        ];
        for (n, &u) in nodes.iter().enumerate() {
            for (block, row) in rows_at(basis, u)?.iter().enumerate() {
                node_rows[block].row_mut(n).copy_from(&row.transpose());
            }
        }
        Ok(SubjectDesign {
            obs_rows,
            event_rows,
            event_interval: interval_of(jumps, s),
            node_rows,
            node_weights,
            node_intervals,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_weights.len()
    }
}

fn rows_at(basis: &KnotVector, t: f64) -> Result<[DVector<f64>; 3], ModelError> {
    Ok([
        basis.eval_value(t)?.values,
        basis.eval_derivative(t)?.values,
        basis.eval_integral(t)?.values,
    ])
}

/// Data, resolved structure and cached designs for one fit.
#[derive(Debug, Clone)]
pub struct JointModel {
    pub structure: ModelStructure,
    pub subjects: Vec<SubjectData>,
    pub designs: Vec<SubjectDesign>,
}

impl JointModel {
    pub fn new(subjects: Vec<SubjectData>, structure: ModelStructure) -> Result<Self, ModelError> {
        let first = subjects.first().ok_or_else(|| {
            ModelError::DimensionMismatch("a model needs at least one subject".into())
        })?;
        let (l, p, pz) = (first.n_markers(), first.x.len(), first.z.len());
        for s in &subjects {
            s.validate(structure.basis.end())?;
            if s.n_markers() != l || s.x.len() != p || s.z.len() != pz {
                return Err(ModelError::DimensionMismatch(format!(
                    "subject {} has (L, p, p_z) = ({}, {}, {}), expected ({l}, {p}, {pz})",
                    s.id,
                    s.n_markers(),
                    s.x.len(),
                    s.z.len()
                )));
            }
        }
        let designs = subjects
            .iter()
            .map(|s| SubjectDesign::build(s, &structure.basis, &structure.jumps, structure.quad_order))
            .collect::<Result<_, _>>()?;
        Ok(JointModel { structure, subjects, designs })
    }

    pub fn dims(&self) -> Dims {
        let s = &self.subjects[0];
        Dims {
            n_subjects: self.subjects.len(),
            n_markers: s.n_markers(),
            q: self.structure.q(),
            p: s.x.len(),
            p_z: s.z.len(),
            n_intervals: self.structure.n_intervals(),
            kind: self.structure.kind,
        }
    }

    /// Observed events per hazard interval.
    pub fn event_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.structure.n_intervals()];
        for (s, d) in self.subjects.iter().zip(&self.designs) {
            if s.event {
                counts[d.event_interval] += 1;
            }
        }
        counts
    }

    /// Trajectory functionals at the quadrature nodes: for each link block an
    /// `n x L` matrix of `psi`, `psi'` or `int psi`. Inactive blocks are empty.
    pub fn node_features(&self, i: usize, beta: &DMatrix<f64>) -> [DMatrix<f64>; 3] {
        let d = &self.designs[i];
        let active = self.structure.kind.active_blocks();
        std::array::from_fn(|b| {
            if active[b] {
                let mut out = DMatrix::zeros(d.n_nodes(), beta.nrows());
                for l in 0..beta.nrows() {
                    out.column_mut(l).gemv(1.0, &d.node_rows[b], &beta.row(l).transpose(), 0.0);
                }
                out
            } else {
                DMatrix::zeros(0, 0)
            }
        })
    }

    /// Trajectory functionals at the event time, per link block.
    pub fn event_features(&self, i: usize, beta: &DMatrix<f64>) -> [DVector<f64>; 3] {
        let d = &self.designs[i];
        std::array::from_fn(|b| beta * &d.event_rows[b])
    }

    /// Link exponent `gamma' psi + gamma_s' psi' + gamma_h' int psi` at each node.
    pub fn node_exponents(
        &self,
        i: usize,
        beta: &DMatrix<f64>,
        link: &LinkParams,
    ) -> Result<Vec<f64>, ModelError> {
        let d = &self.designs[i];
        let active = self.structure.kind.active_blocks();
        let mut eta = DVector::zeros(d.n_nodes());
        for b in (0..3).filter(|&b| active[b]) {
            for l in 0..beta.nrows() {
                let g = link.block(b)[l];
                if g != 0.0 {
                    eta.gemv(g, &d.node_rows[b], &beta.row(l).transpose(), 1.0);
                }
            }
        }
        let eta: Vec<f64> = eta.data.into();
        if let Some(&bad) = eta.iter().find(|&&e| e > MAX_EXPONENT || e.is_nan()) {
            return Err(ModelError::ExponentOverflow { subject: self.subjects[i].id.clone(), value: bad });
        }
        Ok(eta)
    }

    /// Link exponent at the event time.
    pub fn event_exponent(&self, i: usize, beta: &DMatrix<f64>, link: &LinkParams) -> f64 {
        let features = self.event_features(i, beta);
        let active = self.structure.kind.active_blocks();
        (0..3).filter(|&b| active[b]).map(|b| features[b].dot(link.block(b))).sum()
    }

    /// `int exp(eta)` over each hazard interval, before the baseline rate
    /// and covariate factor are applied.
    pub fn exposures(
        &self,
        i: usize,
        beta: &DMatrix<f64>,
        link: &LinkParams,
    ) -> Result<Vec<f64>, ModelError> {
        let d = &self.designs[i];
        let mut out = vec![0.0; self.structure.n_intervals()];
        let mut e = self.node_exponents(i, beta, link)?;
        exp_in_place(&mut e);
        for ((e, &w), &j) in e.iter().zip(&d.node_weights).zip(&d.node_intervals) {
            out[j] += w * e;
        }
        Ok(out)
    }

    /// Longitudinal log-density given a precomputed `Sigma^{-1}` and
    /// `log |Sigma|`.
    pub fn longitudinal_loglik(
        &self,
        i: usize,
        beta: &DMatrix<f64>,
        precision: &DMatrix<f64>,
        logdet: f64,
    ) -> f64 {
        let l = beta.nrows() as f64;
        let resid = &self.subjects[i].y - &self.designs[i].obs_rows * beta.transpose();
        let quad = (&resid * precision).component_mul(&resid).sum();
        let m = resid.nrows() as f64;
        -0.5 * (m * (l * (2.0 * std::f64::consts::PI).ln() + logdet) + quad)
    }

    pub fn survival_logdensity(
        &self,
        i: usize,
        beta: &DMatrix<f64>,
        link: &LinkParams,
        lambda: &[f64],
    ) -> Result<f64, ModelError> {
        let s = &self.subjects[i];
        let zeta_term = s.z.dot(&link.zeta);
        let cumulative: f64 = self
            .exposures(i, beta, link)?
            .iter()
            .zip(lambda)
            .map(|(e, l)| e * l)
            .sum::<f64>()
            * zeta_term.exp();
        let mut out = -cumulative;
        if s.event {
            let j = self.designs[i].event_interval;
            out += lambda[j].ln() + self.event_exponent(i, beta, link) + zeta_term;
        }
        Ok(out)
    }

    /// Per-subject joint log-likelihood terms at `state`.
    pub fn loglik_terms(&self, state: &ChainState) -> Result<Vec<f64>, ModelError> {
        if state.beta.len() != self.subjects.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "{} subjects but {} coefficient blocks",
                self.subjects.len(),
                state.beta.len()
            )));
        }
        let (precision, logdet) = spd_inverse(&state.sigma, "Sigma")?;
        (0..self.subjects.len())
            .map(|i| {
                let beta = &state.beta[i];
                Ok(self.longitudinal_loglik(i, beta, &precision, logdet)
                    + self.survival_logdensity(i, beta, &state.link, &state.lambda)?)
            })
            .collect()
    }

    pub fn joint_loglik(&self, state: &ChainState) -> Result<f64, ModelError> {
        Ok(self.loglik_terms(state)?.iter().sum())
    }
}
