//! Model comparison (DIC, CPO and LPML), time-dependent ROC curves and
//! posterior summaries.

mod roc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gibbs::{split_rhat, ChainState, GibbsError, PosteriorSamples};
use crate::model::{JointModel, ModelError};
use crate::stats::{log_mean_exp, quantile_type7};

pub use roc::{landmark_markers, roc_curve, RocResult};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("no posterior draws")]
    EmptySamples,
    #[error("no subjects at risk at landmark {landmark}")]
    NoSubjectsAtRisk { landmark: f64 },
    #[error("need both cases and controls by the horizon (KM survival at horizon is {survival})")]
    NoCasesOrControls { survival: f64 },
    #[error("credible level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<GibbsError> for DiagnosticsError {
    fn from(e: GibbsError) -> Self {
        match e {
            GibbsError::Model(m) => DiagnosticsError::Model(m),
            GibbsError::EmptySamples => DiagnosticsError::EmptySamples,
            other => DiagnosticsError::DimensionMismatch(other.to_string()),
        }
    }
}

/// Deviance-based fit statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicComponents {
    pub dic: f64,
    pub p_d: f64,
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
}

/// DIC components plus the cross-validated predictive ordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub dic: f64,
    pub p_d: f64,
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
    pub lpml: f64,
    pub cpo: Vec<f64>,
}

impl FitStats {
    pub fn new(d: DicComponents, lpml: f64, cpo: Vec<f64>) -> Self {
        FitStats {
            dic: d.dic,
            p_d: d.p_d,
            mean_deviance: d.mean_deviance,
            deviance_at_mean: d.deviance_at_mean,
            lpml,
            cpo,
        }
    }
}

/// Mean accumulated as deviations from the first value, so a constant
/// sequence averages to itself exactly.
fn stable_mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut it = values;
    let first = it.next()?;
    let (mut acc, mut n) = (0.0, 1.0);
    for v in it {
        acc += v - first;
        n += 1.0;
    }
    Some(first + acc / n)
}

fn deviance(terms: &[f64]) -> f64 {
    -2.0 * terms.iter().sum::<f64>()
}

/// `DIC = D(theta_bar) + 2 p_D` from per-draw total log-likelihoods and the
/// log-likelihood at the posterior mean.
pub fn dic_from_logliks(draw_logliks: &[f64], loglik_at_mean: f64) -> Result<DicComponents, DiagnosticsError> {
    let mean_deviance =
        stable_mean(draw_logliks.iter().map(|&l| -2.0 * l)).ok_or(DiagnosticsError::EmptySamples)?;
    let deviance_at_mean = -2.0 * loglik_at_mean;
    let p_d = mean_deviance - deviance_at_mean;
    Ok(DicComponents { dic: deviance_at_mean + 2.0 * p_d, p_d, mean_deviance, deviance_at_mean })
}

fn pooled_draws(chains: &[PosteriorSamples]) -> Result<impl Iterator<Item = (&Vec<f64>, &Vec<f64>)>, DiagnosticsError> {
    if chains.iter().all(PosteriorSamples::is_empty) {
        return Err(DiagnosticsError::EmptySamples);
    }
    Ok(chains.iter().flat_map(|c| c.draws.iter().zip(&c.loglik)))
}

/// DIC of the pooled draws of one or more chains. The posterior mean covers
/// every parameter, spline coefficients included.
pub fn dic(chains: &[PosteriorSamples], model: &JointModel) -> Result<DicComponents, DiagnosticsError> {
    let draws: Vec<(&Vec<f64>, &Vec<f64>)> = pooled_draws(chains)?.collect();
    let dims = chains[0].meta.dims;
    let states: Vec<ChainState> = draws.iter().map(|(v, _)| ChainState::from_values(dims, v)).collect();
    let mean_state = ChainState::mean_of(&states);
    let at_mean = model.loglik_terms(&mean_state)?;
    let mean_deviance = stable_mean(draws.iter().map(|(_, ll)| deviance(ll))).ok_or(DiagnosticsError::EmptySamples)?;
    let deviance_at_mean = deviance(&at_mean);
    let p_d = mean_deviance - deviance_at_mean;
    Ok(DicComponents { dic: deviance_at_mean + 2.0 * p_d, p_d, mean_deviance, deviance_at_mean })
}

/// `CPO_i` as the harmonic mean of per-draw subject likelihoods, computed in
/// log space, and `LPML = sum_i log CPO_i`.
///
/// `loglik[g][i]` is subject `i`'s log-likelihood at draw `g`.
pub fn lpml_from_logliks(loglik: &[Vec<f64>]) -> Result<(f64, Vec<f64>), DiagnosticsError> {
    let n = loglik.first().ok_or(DiagnosticsError::EmptySamples)?.len();
    if loglik.iter().any(|row| row.len() != n) {
        return Err(DiagnosticsError::DimensionMismatch("ragged log-likelihood table".into()));
    }
    let log_cpo: Vec<f64> = (0..n)
        .map(|i| {
            let neg: Vec<f64> = loglik.iter().map(|row| -row[i]).collect();
            -log_mean_exp(&neg)
        })
        .collect();
    Ok((log_cpo.iter().sum(), log_cpo.iter().map(|l| l.exp()).collect()))
}

pub fn lpml(chains: &[PosteriorSamples]) -> Result<(f64, Vec<f64>), DiagnosticsError> {
    let rows: Vec<Vec<f64>> = pooled_draws(chains)?.map(|(_, ll)| ll.clone()).collect();
    lpml_from_logliks(&rows)
}

pub fn fit_stats(chains: &[PosteriorSamples], model: &JointModel) -> Result<FitStats, DiagnosticsError> {
    let d = dic(chains, model)?;
    let (l, cpo) = lpml(chains)?;
    Ok(FitStats::new(d, l, cpo))
}

/// Posterior mean and equal-tailed credible interval of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    /// Split-chain R-hat, when several chains were pooled.
    pub rhat: Option<f64>,
}

/// Mean and equal-tailed interval of a single draw sequence, with type-7
/// empirical quantiles.
pub fn summarize_draws(draws: &[f64], level: f64) -> Result<(f64, f64, f64), DiagnosticsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(DiagnosticsError::InvalidLevel(level));
    }
    let mean = stable_mean(draws.iter().copied()).ok_or(DiagnosticsError::EmptySamples)?;
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let tail = 0.5 * (1.0 - level);
    Ok((mean, quantile_type7(&sorted, tail), quantile_type7(&sorted, 1.0 - tail)))
}

/// Summary of every named parameter over the pooled draws of the chains,
/// with split R-hat when at least two chains of four or more draws are given.
pub fn summarize(chains: &[PosteriorSamples], level: f64) -> Result<Vec<ParamSummary>, DiagnosticsError> {
    let first = chains.first().ok_or(DiagnosticsError::EmptySamples)?;
    if chains.iter().all(PosteriorSamples::is_empty) {
        return Err(DiagnosticsError::EmptySamples);
    }
    first
        .names()
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let per_chain: Vec<Vec<f64>> = chains.iter().map(|c| c.column(k)).collect();
            let pooled: Vec<f64> = per_chain.concat();
            let (mean, lower, upper) = summarize_draws(&pooled, level)?;
            Ok(ParamSummary { name, mean, lower, upper, rhat: split_rhat(&per_chain).ok() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::RandomStream;

    #[test]
    fn point_mass_gives_zero_pd() {
        let lls = vec![-123.456_789; 50];
        let d = dic_from_logliks(&lls, -123.456_789).unwrap();
        assert_eq!(d.p_d, 0.0);
        assert_eq!(d.dic, d.deviance_at_mean);
    }

    #[test]
    fn conjugate_normal_mean_has_one_effective_parameter() {
        // y_j ~ N(mu, 1), flat prior: mu | y ~ N(ybar, 1/n).
        let mut rng = RandomStream::new(41);
        let y: Vec<f64> = (0..30).map(|_| 2.0 + rng.normal()).collect();
        let n = y.len() as f64;
        let ybar = y.iter().sum::<f64>() / n;
        let ll = |mu: f64| {
            y.iter().map(|v| -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * (v - mu).powi(2)).sum::<f64>()
        };
        let draws: Vec<f64> = (0..10_000).map(|_| ybar + rng.normal() / n.sqrt()).collect();
        let mean_mu = draws.iter().sum::<f64>() / draws.len() as f64;
        let lls: Vec<f64> = draws.iter().map(|&m| ll(m)).collect();
        let d = dic_from_logliks(&lls, ll(mean_mu)).unwrap();
        assert!((d.p_d - 1.0).abs() < 0.1, "p_D = {}", d.p_d);
    }

    #[test]
    fn cpo_single_draw_and_constant_sequences() {
        let one = vec![vec![-1.5, -0.25]];
        let (l, cpo) = lpml_from_logliks(&one).unwrap();
        assert_eq!(cpo, vec![(-1.5f64).exp(), (-0.25f64).exp()]);
        assert_eq!(l, -1.75);
        let constant = vec![vec![-2.0, -3.0]; 7];
        let (_, cpo) = lpml_from_logliks(&constant).unwrap();
        assert_eq!(cpo, vec![(-2.0f64).exp(), (-3.0f64).exp()]);
    }

    #[test]
    fn cpo_lies_between_extreme_draws_and_ignores_order() {
        let rows = vec![vec![-1.0], vec![-4.0], vec![-2.0]];
        let (l1, cpo) = lpml_from_logliks(&rows).unwrap();
        assert!(cpo[0] <= (-1.0f64).exp() && cpo[0] >= (-4.0f64).exp());
        let reordered = vec![vec![-2.0], vec![-1.0], vec![-4.0]];
        let (l2, _) = lpml_from_logliks(&reordered).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        assert!(lpml_from_logliks(&[]).is_err());
    }

    #[test]
    fn summaries_collapse_on_constants_and_match_direct_quantiles() {
        let (m, lo, hi) = summarize_draws(&[0.3; 40], 0.95).unwrap();
        assert_eq!((m, lo, hi), (0.3, 0.3, 0.3));
        let draws: Vec<f64> = (0..101).map(f64::from).collect();
        let (_, lo, hi) = summarize_draws(&draws, 0.9).unwrap();
        // Type-7 positions 0.05 * 100 and 0.95 * 100 on 0..=100.
        assert!((lo - 5.0).abs() < 1e-12 && (hi - 95.0).abs() < 1e-12, "{lo} {hi}");
        assert!(summarize_draws(&draws, 1.0).is_err());
    }

    #[test]
    fn normal_draws_give_the_usual_interval() {
        let mut rng = RandomStream::new(42);
        let draws: Vec<f64> = (0..100_000).map(|_| rng.normal()).collect();
        let (_, lo, hi) = summarize_draws(&draws, 0.95).unwrap();
        assert!((lo + 1.96).abs() < 0.02 && (hi - 1.96).abs() < 0.02, "{lo} {hi}");
    }
}
