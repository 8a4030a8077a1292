//! Direct evaluation of the likelihood terms from the basis.
//!
//! These functions evaluate basis rows on demand and are the reference path;
//! the sampler uses the cached [`super::JointModel`] which must agree with
//! them.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::quadrature::GaussLegendre;
use super::{spd_inverse, HazardSpec, LinkParams, ModelError, ModelStructure, SubjectData, MAX_EXPONENT};
use crate::gibbs::ChainState;
use crate::spline::KnotVector;

/// Gaussian log-density of one subject's measurements, with normalizing
/// constants.
pub fn longitudinal_loglik(
    subject: &SubjectData,
    beta: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    basis: &KnotVector,
) -> Result<f64, ModelError> {
    let l = subject.n_markers();
    if beta.nrows() != l || beta.ncols() != basis.q() || sigma.nrows() != l {
        return Err(ModelError::DimensionMismatch(format!(
            "beta is {}x{}, Sigma is {}x{}, expected L = {l}, q = {}",
            beta.nrows(),
            beta.ncols(),
            sigma.nrows(),
            sigma.ncols(),
            basis.q()
        )));
    }
    let (precision, logdet) = spd_inverse(sigma, "Sigma")?;
    let norm = -0.5 * (l as f64 * (2.0 * PI).ln() + logdet);
    let mut total = 0.0;
    for (j, &t) in subject.obs_times.iter().enumerate() {
        let row = basis.eval_value(t)?;
        let psi = beta * &row.values;
        let resid = subject.y.row(j).transpose() - psi;
        total += norm - 0.5 * (resid.transpose() * &precision * &resid)[(0, 0)];
    }
    Ok(total)
}

/// `gamma' psi(t) + gamma_s' psi'(t) + gamma_h' int_0^t psi`, skipping the
/// blocks the link kind masks out.
fn trajectory_exponent(
    t: f64,
    beta: &DMatrix<f64>,
    link: &LinkParams,
    basis: &KnotVector,
) -> Result<f64, ModelError> {
    let mut eta = (link.gamma.transpose() * (beta * basis.eval_value(t)?.values))[(0, 0)];
    if link.kind.has_slope() {
        eta += (link.gamma_s.transpose() * (beta * basis.eval_derivative(t)?.values))[(0, 0)];
    }
    if link.kind.has_history() {
        eta += (link.gamma_h.transpose() * (beta * basis.eval_integral(t)?.values))[(0, 0)];
    }
    Ok(eta)
}

fn covariate_term(subject: &SubjectData, link: &LinkParams) -> Result<f64, ModelError> {
    if subject.z.len() != link.zeta.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "subject {} has {} hazard covariates, zeta has {}",
            subject.id,
            subject.z.len(),
            link.zeta.len()
        )));
    }
    Ok(subject.z.dot(&link.zeta))
}

/// Log hazard at `t`.
pub fn log_hazard(
    t: f64,
    subject: &SubjectData,
    beta: &DMatrix<f64>,
    link: &LinkParams,
    hazard: &HazardSpec,
    basis: &KnotVector,
) -> Result<f64, ModelError> {
    let base = hazard.lambda()[hazard.interval_of(t)].ln();
    Ok(base + trajectory_exponent(t, beta, link, basis)? + covariate_term(subject, link)?)
}

/// Cumulative hazard up to the subject's event or censoring time.
///
/// `e^{z'zeta} sum_j lambda_j int_{w_j ^ s}^{w_{j+1} ^ s} exp(eta(u)) du`, each
/// interval integrated with a `quad_order`-point Gauss-Legendre rule on each
/// knot span it overlaps (the integrand is only twice differentiable at
/// interior knots).
pub fn cumulative_hazard(
    subject: &SubjectData,
    beta: &DMatrix<f64>,
    link: &LinkParams,
    hazard: &HazardSpec,
    basis: &KnotVector,
    quad_order: usize,
) -> Result<f64, ModelError> {
    if quad_order < 2 {
        return Err(ModelError::InvalidQuadOrder(quad_order));
    }
    let rule = GaussLegendre::new(quad_order);
    let s = subject.event_time;
    let jumps = hazard.jumps();
    let mut total = 0.0;
    for (j, &rate) in hazard.lambda().iter().enumerate() {
        let a = jumps[j];
        let b = jumps[j + 1].min(s);
        if b <= a {
            break;
        }
        let mut integral = 0.0;
        for (u, w) in rule.mapped_split(a, b, basis.interior()) {
            let eta = trajectory_exponent(u, beta, link, basis)?;
            if eta > MAX_EXPONENT {
                return Err(ModelError::ExponentOverflow { subject: subject.id.clone(), value: eta });
            }
            integral += w * eta.exp();
        }
        total += rate * integral;
    }
    Ok(covariate_term(subject, link)?.exp() * total)
}

/// `nu log h(s) - H(s)`.
pub fn survival_logdensity(
    subject: &SubjectData,
    beta: &DMatrix<f64>,
    link: &LinkParams,
    hazard: &HazardSpec,
    basis: &KnotVector,
    quad_order: usize,
) -> Result<f64, ModelError> {
    let cumulative = cumulative_hazard(subject, beta, link, hazard, basis, quad_order)?;
    if subject.event {
        Ok(log_hazard(subject.event_time, subject, beta, link, hazard, basis)? - cumulative)
    } else {
        Ok(-cumulative)
    }
}

/// One subject's joint log-likelihood `log f(s_i, nu_i | Y_i) + log f(Y_i)`.
pub fn subject_loglik(
    subject: &SubjectData,
    beta: &DMatrix<f64>,
    state: &ChainState,
    structure: &ModelStructure,
) -> Result<f64, ModelError> {
    let hazard = HazardSpec::new(structure.jumps.clone(), state.lambda.clone())?;
    let long = longitudinal_loglik(subject, beta, &state.sigma, &structure.basis)?;
    let surv = survival_logdensity(
        subject,
        beta,
        &state.link,
        &hazard,
        &structure.basis,
        structure.quad_order,
    )?;
    Ok(long + surv)
}

/// Sum over subjects of the joint log-likelihood.
pub fn joint_loglik(
    subjects: &[SubjectData],
    state: &ChainState,
    structure: &ModelStructure,
) -> Result<f64, ModelError> {
    if subjects.len() != state.beta.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "{} subjects but {} coefficient blocks",
            subjects.len(),
            state.beta.len()
        )));
    }
    subjects
        .iter()
        .zip(&state.beta)
        .map(|(s, b)| subject_loglik(s, b, state, structure))
        .sum()
}
