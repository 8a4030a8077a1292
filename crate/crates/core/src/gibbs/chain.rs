use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::updates::{
    update_alpha, update_b0, update_beta, update_lambda, update_links, update_sigma, update_v0,
    SamplerTuning,
};
use super::{parameter_names, ChainState, Dims, GibbsError, PriorConfig};
use crate::model::{interval_of, JointModel};
use crate::samplers::RandomStream;
use crate::stats::{mean, variance};

/// Chain length, thinning and seeding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Stream index; chains sharing a seed but not an index are independent.
    pub chain: u64,
}

impl McmcConfig {
    pub fn validate(&self) -> Result<(), GibbsError> {
        if self.thin == 0 {
            return Err(GibbsError::InvalidConfig("thin must be at least 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(GibbsError::InvalidConfig(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if (self.iterations - self.burn_in) % self.thin != 0 {
            return Err(GibbsError::InvalidConfig(format!(
                "iterations minus burn-in ({}) is not divisible by thin {}",
                self.iterations - self.burn_in,
                self.thin
            )));
        }
        Ok(())
    }

    /// Number of draws a run keeps.
    pub fn saved_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Run description stored alongside the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub chain: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub dims: Dims,
    /// Full clamped knot vector.
    pub knots: Vec<f64>,
    /// Hazard jump points without the final infinite one.
    pub jumps: Vec<f64>,
    pub quad_order: usize,
    pub tuning: SamplerTuning,
    /// Free-form configuration echo.
    pub config: BTreeMap<String, String>,
}

/// Thinned post-burn-in draws with per-subject log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub meta: SampleMeta,
    /// One flattened [`ChainState`] per saved draw, ordered as
    /// [`parameter_names`].
    pub draws: Vec<Vec<f64>>,
    /// `loglik[g][i]`: joint log-likelihood of subject `i` at draw `g`.
    pub loglik: Vec<Vec<f64>>,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        parameter_names(self.meta.dims)
    }

    pub fn state(&self, g: usize) -> ChainState {
        ChainState::from_values(self.meta.dims, &self.draws[g])
    }

    /// Draws of the parameter at flattened position `index`.
    pub fn column(&self, index: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[index]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.names().iter().position(|n| n == name).map(|i| self.column(i))
    }

    /// Coordinatewise posterior mean.
    pub fn mean_state(&self) -> Result<ChainState, GibbsError> {
        if self.is_empty() {
            return Err(GibbsError::EmptySamples);
        }
        let states: Vec<ChainState> = (0..self.len()).map(|g| self.state(g)).collect();
        Ok(ChainState::mean_of(&states))
    }
}

/// Least-squares spline fit per subject, shrunk toward the pooled fit with
/// ridge weight `kappa` so subjects with fewer than `q` measurements still
/// get a unique start.
pub fn least_squares_start(model: &JointModel, kappa: f64) -> Vec<DMatrix<f64>> {
    let q = model.structure.q();
    let l = model.dims().n_markers;
    let mut gram = DMatrix::identity(q, q) * 1e-8;
    let mut cross = DMatrix::zeros(q, l);
    for (s, d) in model.subjects.iter().zip(&model.designs) {
        gram += d.obs_rows.transpose() * &d.obs_rows;
        cross += d.obs_rows.transpose() * &s.y;
    }
    let pooled = gram.cholesky().map(|c| c.solve(&cross)).unwrap_or_else(|| DMatrix::zeros(q, l));
    model
        .subjects
        .iter()
        .zip(&model.designs)
        .map(|(s, d)| {
            let a = d.obs_rows.transpose() * &d.obs_rows + DMatrix::identity(q, q) * kappa;
            let rhs = d.obs_rows.transpose() * &s.y + &pooled * kappa;
            a.cholesky().map(|c| c.solve(&rhs).transpose()).unwrap_or_else(|| pooled.transpose())
        })
        .collect()
}

/// Starting state for one chain.
///
/// Spline coefficients start at ridge-stabilized least-squares fits and `b0`
/// at their average. `Sigma` and `V0` start at their prior means. `alpha`,
/// the link coefficients and `zeta` start at their prior means plus
/// `N(0, 0.1^2)` jitter drawn from the chain's own stream, which disperses
/// chains without putting exponents of the hazard out of range. Baseline
/// rates start at per-interval events over time at risk.
pub fn initial_state(
    model: &JointModel,
    prior: &PriorConfig,
    rng: &mut RandomStream,
) -> Result<ChainState, GibbsError> {
    let dims = model.dims();
    let mut state = ChainState::neutral(dims);
    state.beta = least_squares_start(model, 0.1);
    let n = dims.n_subjects as f64;
    state.b0 = state.beta.iter().fold(DMatrix::zeros(dims.n_markers, dims.q), |acc, b| acc + b) / n;
    state.sigma = (&prior.s_sigma * prior.nu_sigma)
        .try_inverse()
        .ok_or_else(|| GibbsError::InvalidPrior("Sigma prior scale is singular".into()))?;
    for l in 0..dims.n_markers {
        state.v0[l] = (&prior.s_v0[l] * prior.nu_v0[l])
            .try_inverse()
            .ok_or_else(|| GibbsError::InvalidPrior("V0 prior scale is singular".into()))?;
    }
    const JITTER: f64 = 0.1;
    state.alpha = DMatrix::from_fn(dims.n_markers, dims.p, |l, p| prior.c0[(l, p)] + JITTER * rng.normal());
    for (b, active) in dims.kind.active_blocks().into_iter().enumerate() {
        if active {
            for l in 0..dims.n_markers {
                state.link.block_mut(b)[l] = prior.g0[b * dims.n_markers + l] + JITTER * rng.normal();
            }
        }
    }
    state.link.zeta = DVector::from_fn(dims.p_z, |p, _| prior.zeta_mean[p] + JITTER * rng.normal());

    let jumps = &model.structure.jumps;
    let mut at_risk = vec![0.0; dims.n_intervals];
    for s in &model.subjects {
        for (j, r) in at_risk.iter_mut().enumerate() {
            *r += (jumps[j + 1].min(s.event_time) - jumps[j]).max(0.0);
        }
    }
    let mut events = vec![0.0; dims.n_intervals];
    for s in model.subjects.iter().filter(|s| s.event) {
        events[interval_of(jumps, s.event_time)] += 1.0;
    }
    state.lambda = (0..dims.n_intervals)
        .map(|j| (events[j] + prior.d0[j]) / (at_risk[j] + prior.d1[j]))
        .collect();
    state.validate()?;
    Ok(state)
}

/// One full Gibbs cycle in the fixed order beta, V0, Sigma, b0, links,
/// lambda, alpha.
pub fn gibbs_step(
    model: &JointModel,
    state: &mut ChainState,
    prior: &PriorConfig,
    tuning: &SamplerTuning,
    rng: &mut RandomStream,
) -> Result<(), (&'static str, GibbsError)> {
    update_beta(model, state, tuning, rng).map_err(|e| ("beta", e))?;
    update_v0(model, state, prior, rng).map_err(|e| ("V0", e))?;
    update_sigma(model, state, prior, rng).map_err(|e| ("Sigma", e))?;
    update_b0(model, state, prior, rng).map_err(|e| ("b0", e))?;
    update_links(model, state, prior, tuning, rng).map_err(|e| ("link", e))?;
    update_lambda(model, state, prior, rng).map_err(|e| ("lambda", e))?;
    update_alpha(model, state, prior, rng).map_err(|e| ("alpha", e))?;
    Ok(())
}

/// Runs one chain and keeps every `thin`-th post-burn-in draw.
pub fn run_chain(
    model: &JointModel,
    prior: &PriorConfig,
    tuning: &SamplerTuning,
    mcmc: &McmcConfig,
) -> Result<PosteriorSamples, GibbsError> {
    mcmc.validate()?;
    let dims = model.dims();
    prior.validate(dims)?;
    let mut rng = RandomStream::substream(mcmc.seed, mcmc.chain);
    let mut state = initial_state(model, prior, &mut rng)?;
    let mut draws = Vec::with_capacity(mcmc.saved_draws());
    let mut loglik = Vec::with_capacity(mcmc.saved_draws());
    for it in 1..=mcmc.iterations {
        gibbs_step(model, &mut state, prior, tuning, &mut rng).map_err(|(update, e)| {
            GibbsError::Iteration { iteration: it, update, source: Box::new(e) }
        })?;
        if it > mcmc.burn_in && (it - mcmc.burn_in) % mcmc.thin == 0 {
            let terms = model.loglik_terms(&state).map_err(|e| GibbsError::Iteration {
                iteration: it,
                update: "log-likelihood",
                source: Box::new(e.into()),
            })?;
            if terms.iter().any(|v| !v.is_finite()) {
                return Err(GibbsError::Iteration {
                    iteration: it,
                    update: "log-likelihood",
                    source: Box::new(GibbsError::NonFinite),
                });
            }
            draws.push(state.values());
            loglik.push(terms);
        }
    }
    let mut jumps = model.structure.jumps.clone();
    jumps.pop();
    Ok(PosteriorSamples {
        meta: SampleMeta {
            seed: mcmc.seed,
            chain: mcmc.chain,
            iterations: mcmc.iterations,
            burn_in: mcmc.burn_in,
            thin: mcmc.thin,
            dims,
            knots: model.structure.basis.knots().to_vec(),
            jumps,
            quad_order: model.structure.quad_order,
            tuning: *tuning,
            config: BTreeMap::new(),
        },
        draws,
        loglik,
    })
}

/// Split-chain potential scale reduction over equal-length chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64, GibbsError> {
    let n = chains.first().map_or(0, Vec::len);
    if chains.len() < 2 || n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(GibbsError::InsufficientChains);
    }
    let half = n / 2;
    let pieces: Vec<&[f64]> =
        chains.iter().flat_map(|c| [&c[..half], &c[n - half..]]).collect();
    let m = pieces.len() as f64;
    let len = half as f64;
    let means: Vec<f64> = pieces.iter().map(|p| mean(p)).collect();
    let w = pieces.iter().map(|p| variance(p)).sum::<f64>() / m;
    let b = len * variance(&means);
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (len - 1.0) / len * w + b / len;
    Ok((var_plus / w).sqrt())
}

/// Split-chain R-hat of the parameter at flattened position `index`.
pub fn rhat(chains: &[PosteriorSamples], index: usize) -> Result<f64, GibbsError> {
    let columns: Vec<Vec<f64>> = chains.iter().map(|c| c.column(index)).collect();
    split_rhat(&columns)
}
