use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{LinkKind, LinkParams, ModelError};

/// Dimensions of a fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_subjects: usize,
    /// Number of biomarkers, `L`.
    pub n_markers: usize,
    /// Spline basis dimension.
    pub q: usize,
    /// Covariates in the spline-coefficient mean.
    pub p: usize,
    /// Covariates in the hazard.
    pub p_z: usize,
    pub n_intervals: usize,
    pub kind: LinkKind,
}

/// Every parameter of the joint model at one Gibbs iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    /// Per-subject spline coefficients, each `L x q`.
    pub beta: Vec<DMatrix<f64>>,
    /// `L x L` residual covariance.
    pub sigma: DMatrix<f64>,
    /// `L x q` population mean coefficients.
    pub b0: DMatrix<f64>,
    /// Per-marker `q x q` coefficient covariances.
    pub v0: Vec<DMatrix<f64>>,
    /// `L x p` covariate effects on the coefficient mean.
    pub alpha: DMatrix<f64>,
    pub link: LinkParams,
    /// Baseline hazard per interval.
    pub lambda: Vec<f64>,
}

impl ChainState {
    pub fn dims(&self) -> Dims {
        Dims {
            n_subjects: self.beta.len(),
            n_markers: self.sigma.nrows(),
            q: self.b0.ncols(),
            p: self.alpha.ncols(),
            p_z: self.link.zeta.len(),
            n_intervals: self.lambda.len(),
            kind: self.link.kind,
        }
    }

    /// All-zero coefficients, identity covariances and unit hazards.
    pub fn neutral(dims: Dims) -> Self {
        let Dims { n_subjects, n_markers, q, p, p_z, n_intervals, kind } = dims;
        ChainState {
            beta: vec![DMatrix::zeros(n_markers, q); n_subjects],
            sigma: DMatrix::identity(n_markers, n_markers),
            b0: DMatrix::zeros(n_markers, q),
            v0: vec![DMatrix::identity(q, q); n_markers],
            alpha: DMatrix::zeros(n_markers, p),
            link: LinkParams::zeros(kind, n_markers, p_z),
            lambda: vec![1.0; n_intervals],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.link.validate()?;
        if self.lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(ModelError::InvalidHazard("baseline rates must be positive".into()));
        }
        if self.sigma.clone().cholesky().is_none() {
            return Err(ModelError::NonPosDefCovariance("Sigma".into()));
        }
        for (l, v) in self.v0.iter().enumerate() {
            if v.clone().cholesky().is_none() {
                return Err(ModelError::NonPosDefCovariance(format!("V0[{}]", l + 1)));
            }
        }
        Ok(())
    }

    /// Coordinatewise mean of a non-empty set of states.
    pub fn mean_of(states: &[ChainState]) -> ChainState {
        assert!(!states.is_empty(), "mean of no states");
        // Deviations from the first draw keep the mean of identical draws exact.
        let first = states[0].values();
        let mut acc = vec![0.0; first.len()];
        for s in &states[1..] {
            for ((a, v), f) in acc.iter_mut().zip(s.values()).zip(&first) {
                *a += v - f;
            }
        }
        let g = states.len() as f64;
        let mean: Vec<f64> = first.iter().zip(&acc).map(|(f, a)| f + a / g).collect();
        ChainState::from_values(states[0].dims(), &mean)
    }

    /// Parameter values in the order of [`parameter_names`].
    pub fn values(&self) -> Vec<f64> {
        let d = self.dims();
        let mut out = Vec::with_capacity(parameter_count(d));
        for b in &self.beta {
            for l in 0..d.n_markers {
                out.extend(b.row(l).iter());
            }
        }
        for (block, active) in d.kind.active_blocks().into_iter().enumerate() {
            if active {
                out.extend(self.link.block(block).iter());
            }
        }
        out.extend(self.link.zeta.iter());
        out.extend(self.lambda.iter());
        for l in 0..d.n_markers {
            out.extend(self.b0.row(l).iter());
        }
        for r in 0..d.n_markers {
            out.extend(self.sigma.row(r).iter());
        }
        for v in &self.v0 {
            for r in 0..d.q {
                out.extend(v.row(r).iter());
            }
        }
        for l in 0..d.n_markers {
            out.extend(self.alpha.row(l).iter());
        }
        out
    }

    /// Inverse of [`ChainState::values`].
    pub fn from_values(dims: Dims, values: &[f64]) -> ChainState {
        assert_eq!(values.len(), parameter_count(dims), "parameter vector length");
        let Dims { n_subjects, n_markers, q, p, p_z, n_intervals, kind } = dims;
        let mut it = values.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
        let beta = (0..n_subjects)
            .map(|_| DMatrix::from_row_slice(n_markers, q, &take(n_markers * q)))
            .collect();
        let mut link = LinkParams::zeros(kind, n_markers, p_z);
        for (block, active) in kind.active_blocks().into_iter().enumerate() {
            if active {
                *link.block_mut(block) = DVector::from_vec(take(n_markers));
            }
        }
        link.zeta = DVector::from_vec(take(p_z));
        let lambda = take(n_intervals);
        let b0 = DMatrix::from_row_slice(n_markers, q, &take(n_markers * q));
        let sigma = DMatrix::from_row_slice(n_markers, n_markers, &take(n_markers * n_markers));
        let v0 = (0..n_markers).map(|_| DMatrix::from_row_slice(q, q, &take(q * q))).collect();
        let alpha = DMatrix::from_row_slice(n_markers, p, &take(n_markers * p));
        ChainState { beta, sigma, b0, v0, alpha, link, lambda }
    }
}

fn parameter_count(d: Dims) -> usize {
    let blocks = d.kind.active_blocks().iter().filter(|&&a| a).count();
    d.n_subjects * d.n_markers * d.q
        + blocks * d.n_markers
        + d.p_z
        + d.n_intervals
        + d.n_markers * d.q
        + d.n_markers * d.n_markers
        + d.n_markers * d.q * d.q
        + d.n_markers * d.p
}

/// Stable, one-based flattened parameter names: `beta.i.l.k`, `gamma.l`,
/// `gamma_s.l`, `gamma_h.l`, `zeta.p`, `lambda.j`, `b0.l.k`, `Sigma.r.c`,
/// `V0.l.r.c`, `alpha.l.p`. Link blocks masked out by the model kind are
/// omitted.
pub fn parameter_names(d: Dims) -> Vec<String> {
    let mut names = Vec::with_capacity(parameter_count(d));
    for i in 1..=d.n_subjects {
        for l in 1..=d.n_markers {
            for k in 1..=d.q {
                names.push(format!("beta.{i}.{l}.{k}"));
            }
        }
    }
    for (block, active) in d.kind.active_blocks().into_iter().enumerate() {
        if active {
            let prefix = ["gamma", "gamma_s", "gamma_h"][block];
            names.extend((1..=d.n_markers).map(|l| format!("{prefix}.{l}")));
        }
    }
    names.extend((1..=d.p_z).map(|p| format!("zeta.{p}")));
    names.extend((1..=d.n_intervals).map(|j| format!("lambda.{j}")));
    for l in 1..=d.n_markers {
        names.extend((1..=d.q).map(|k| format!("b0.{l}.{k}")));
    }
    for r in 1..=d.n_markers {
        names.extend((1..=d.n_markers).map(|c| format!("Sigma.{r}.{c}")));
    }
    for l in 1..=d.n_markers {
        for r in 1..=d.q {
            names.extend((1..=d.q).map(|c| format!("V0.{l}.{r}.{c}")));
        }
    }
    for l in 1..=d.n_markers {
        names.extend((1..=d.p).map(|p| format!("alpha.{l}.{p}")));
    }
    names
}
