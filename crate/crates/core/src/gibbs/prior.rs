use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Dims, GibbsError};

/// Prior hyperparameters, one entry per model block.
///
/// Wishart priors are on precisions. The posterior updates use the form
/// `Wishart((S^{-1} + sum r r')^{-1}, n + nu)`, which makes `S` the prior
/// scale of the precision: its prior mean is `nu S`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    /// Mean of `(gamma, gamma_s, gamma_h)`, length `3L`.
    pub g0: DVector<f64>,
    /// `3L x 3L` covariance of the link block.
    pub g1: DMatrix<f64>,
    pub zeta_mean: DVector<f64>,
    pub zeta_cov: DMatrix<f64>,
    /// Gamma shape per hazard interval.
    pub d0: Vec<f64>,
    /// Gamma rate per hazard interval.
    pub d1: Vec<f64>,
    /// `L x q` prior means of `b0`.
    pub a0: DMatrix<f64>,
    pub a1: Vec<DMatrix<f64>>,
    /// `L x p` prior means of `alpha`.
    pub c0: DMatrix<f64>,
    pub c1: Vec<DMatrix<f64>>,
    pub nu_sigma: f64,
    pub s_sigma: DMatrix<f64>,
    pub nu_v0: Vec<f64>,
    pub s_v0: Vec<DMatrix<f64>>,
}

/// Scalar prior settings expanded into a [`PriorConfig`]: every mean vector
/// is constant and every covariance a multiple of the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorScalars {
    pub link_mean: f64,
    pub link_var: f64,
    pub zeta_mean: f64,
    pub zeta_var: f64,
    pub hazard_shape: f64,
    pub hazard_rate: f64,
    pub b0_mean: f64,
    pub b0_var: f64,
    pub alpha_mean: f64,
    pub alpha_var: f64,
    /// Defaults to `L + 1`.
    pub nu_sigma: Option<f64>,
    pub s_sigma: f64,
    /// Defaults to `q + 1`.
    pub nu_v0: Option<f64>,
    pub s_v0: f64,
}

impl Default for PriorScalars {
    fn default() -> Self {
        PriorScalars {
            link_mean: 0.0,
            link_var: 100.0,
            zeta_mean: 0.0,
            zeta_var: 100.0,
            hazard_shape: 0.01,
            hazard_rate: 0.01,
            b0_mean: 0.0,
            b0_var: 100.0,
            alpha_mean: 0.0,
            alpha_var: 100.0,
            nu_sigma: None,
            s_sigma: 1.0,
            nu_v0: None,
            s_v0: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn from_scalars(d: Dims, s: &PriorScalars) -> Self {
        let Dims { n_markers: l, q, p, p_z, n_intervals, .. } = d;
        PriorConfig {
            g0: DVector::from_element(3 * l, s.link_mean),
            g1: DMatrix::identity(3 * l, 3 * l) * s.link_var,
            zeta_mean: DVector::from_element(p_z, s.zeta_mean),
            zeta_cov: DMatrix::identity(p_z, p_z) * s.zeta_var,
            d0: vec![s.hazard_shape; n_intervals],
            d1: vec![s.hazard_rate; n_intervals],
            a0: DMatrix::from_element(l, q, s.b0_mean),
            a1: vec![DMatrix::identity(q, q) * s.b0_var; l],
            c0: DMatrix::from_element(l, p, s.alpha_mean),
            c1: vec![DMatrix::identity(p, p) * s.alpha_var; l],
            nu_sigma: s.nu_sigma.unwrap_or(l as f64 + 1.0),
            s_sigma: DMatrix::identity(l, l) * s.s_sigma,
            nu_v0: vec![s.nu_v0.unwrap_or(q as f64 + 1.0); l],
            s_v0: vec![DMatrix::identity(q, q) * s.s_v0; l],
        }
    }

    pub fn default_for(d: Dims) -> Self {
        Self::from_scalars(d, &PriorScalars::default())
    }

    pub fn validate(&self, d: Dims) -> Result<(), GibbsError> {
        let Dims { n_markers: l, q, p, p_z, n_intervals, .. } = d;
        let bad = |m: String| Err(GibbsError::InvalidPrior(m));
        let spd = |m: &DMatrix<f64>| m.clone().cholesky().is_some();
        if self.g0.len() != 3 * l || self.g1.shape() != (3 * l, 3 * l) || !spd(&self.g1) {
            return bad(format!("link prior must be a {0}-vector with an SPD {0}x{0} covariance", 3 * l));
        }
        if self.zeta_mean.len() != p_z || self.zeta_cov.shape() != (p_z, p_z) || (p_z > 0 && !spd(&self.zeta_cov)) {
            return bad(format!("zeta prior must have dimension {p_z} with SPD covariance"));
        }
        if self.d0.len() != n_intervals || self.d1.len() != n_intervals {
            return bad(format!("hazard prior needs {n_intervals} shapes and rates"));
        }
        if self.d0.iter().chain(&self.d1).any(|&v| !(v > 0.0 && v.is_finite())) {
            return bad("hazard prior shapes and rates must be positive".into());
        }
        if self.a0.shape() != (l, q) || self.a1.len() != l || self.a1.iter().any(|m| m.shape() != (q, q) || !spd(m)) {
            return bad("b0 prior must give an L x q mean and SPD q x q covariances".into());
        }
        if self.c0.shape() != (l, p) || self.c1.len() != l || self.c1.iter().any(|m| m.shape() != (p, p) || (p > 0 && !spd(m))) {
            return bad("alpha prior must give an L x p mean and SPD p x p covariances".into());
        }
        if !(self.nu_sigma >= l as f64) || self.s_sigma.shape() != (l, l) || !spd(&self.s_sigma) {
            return bad(format!("Sigma prior needs nu >= {l} and an SPD scale"));
        }
        if self.nu_v0.len() != l || self.nu_v0.iter().any(|&nu| !(nu >= q as f64)) {
            return bad(format!("V0 prior needs nu >= {q}"));
        }
        if self.s_v0.len() != l || self.s_v0.iter().any(|m| m.shape() != (q, q) || !spd(m)) {
            return bad("V0 prior scales must be SPD q x q".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinkKind;

    #[test]
    fn defaults_are_valid_and_follow_dimensions() {
        let d = Dims { n_subjects: 4, n_markers: 2, q: 6, p: 1, p_z: 1, n_intervals: 3, kind: LinkKind::Full };
        let prior = PriorConfig::default_for(d);
        prior.validate(d).unwrap();
        assert_eq!(prior.nu_sigma, 3.0);
        assert_eq!(prior.nu_v0, vec![7.0, 7.0]);
        assert_eq!(prior.g1[(5, 5)], 100.0);
        let mut broken = prior.clone();
        broken.d1[1] = 0.0;
        assert!(broken.validate(d).is_err());
    }
}
