//! Primitive samplers for the Gibbs cycle, all driven by a seedable
//! [`RandomStream`].
//!
//! Gamma distributions use the rate parametrization throughout: mean
//! `shape / rate`.

mod ars;
mod slice;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use thiserror::Error;

pub use ars::ars_sample;
pub use slice::{slice_sample, slice_step};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("log density is not concave near x = {x}")]
    NotLogConcave { x: f64 },
    #[error("bad initial points: {0}")]
    BadInitialization(String),
    #[error("log density is not finite at x = {x}")]
    NonFiniteDensity { x: f64 },
    #[error("slice width must be positive and finite, got {0}")]
    InvalidWidth(f64),
    #[error("{0} is not positive definite")]
    NonPosDefCovariance(String),
    #[error("Wishart degrees of freedom {dof} below dimension {dim}")]
    InvalidDof { dof: f64, dim: usize },
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),
    #[error("rejection sampler gave up after {0} proposals")]
    Exhausted(usize),
}

/// Deterministic random stream: a ChaCha8 generator keyed by a 64-bit seed
/// and a stream index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream `index` under the same seed, used for chains and
    /// per-subject simulation.
    pub fn substream(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        RandomStream { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn exponential(&mut self) -> f64 {
        -self.uniform().ln()
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Draw from `N(mean, covariance)` through the Cholesky factor.
pub fn mvn_draw(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    rng: &mut RandomStream,
) -> Result<DVector<f64>, SamplerError> {
    let chol = covariance
        .clone()
        .cholesky()
        .ok_or_else(|| SamplerError::NonPosDefCovariance("covariance".into()))?;
    let z = DVector::from_fn(mean.len(), |_, _| rng.normal());
    Ok(mean + chol.l() * z)
}

/// Draw from `N(P^{-1} h, P^{-1})` given the precision `P` and the linear
/// term `h`, the form conjugate updates arrive in.
pub fn mvn_draw_canonical(
    linear: &DVector<f64>,
    precision: &DMatrix<f64>,
    rng: &mut RandomStream,
) -> Result<DVector<f64>, SamplerError> {
    let chol = precision
        .clone()
        .cholesky()
        .ok_or_else(|| SamplerError::NonPosDefCovariance("precision".into()))?;
    let mean = chol.solve(linear);
    let z = DVector::from_fn(linear.len(), |_, _| rng.normal());
    let shift = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| SamplerError::NonPosDefCovariance("precision".into()))?;
    Ok(mean + shift)
}

/// Wishart draw by the Bartlett decomposition; the mean is `dof * scale`.
pub fn wishart_draw(
    scale: &DMatrix<f64>,
    dof: f64,
    rng: &mut RandomStream,
) -> Result<DMatrix<f64>, SamplerError> {
    let dim = scale.nrows();
    if !(dof >= dim as f64) || !dof.is_finite() {
        return Err(SamplerError::InvalidDof { dof, dim });
    }
    let l = scale
        .clone()
        .cholesky()
        .ok_or_else(|| SamplerError::NonPosDefCovariance("Wishart scale".into()))?
        .unpack();
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let chi2 = gamma_draw(0.5 * (dof - i as f64), 0.5, rng)?;
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = rng.normal();
        }
    }
    let la = l * a;
    let w = &la * la.transpose();
    // Symmetrize away rounding.
    Ok((&w + w.transpose()) * 0.5)
}

/// Gamma draw with the given shape and rate.
pub fn gamma_draw(shape: f64, rate: f64, rng: &mut RandomStream) -> Result<f64, SamplerError> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(SamplerError::InvalidParameter(format!("gamma(shape {shape}, rate {rate})")));
    }
    let dist = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| SamplerError::InvalidParameter(e.to_string()))?;
    Ok(dist.sample(rng))
}
