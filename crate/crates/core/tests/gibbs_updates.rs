mod common;

use bsjoint::gibbs::{
    alpha_conditional, b0_conditional, gibbs_step, hazard_exposures, initial_state, run_chain, split_rhat,
    update_alpha, update_b0, update_beta_coordinate, update_lambda, update_link_coordinate, update_sigma,
    update_v0, update_zeta_coordinate, ChainState, McmcConfig, PriorConfig, SamplerTuning,
};
use bsjoint::model::{JointModel, LinkKind};
use bsjoint::samplers::RandomStream;
use bsjoint::stats::{ks_test, mean, variance};
use common::{cohort, grid_cdf, mean_and_se, model, slope_truth, support};
use nalgebra::{DMatrix, DVector};

fn warmed_state(model: &JointModel, prior: &PriorConfig, seed: u64) -> ChainState {
    let mut rng = RandomStream::new(seed);
    let mut state = initial_state(model, prior, &mut rng).unwrap();
    for _ in 0..50 {
        gibbs_step(model, &mut state, prior, &SamplerTuning::default(), &mut rng).unwrap();
    }
    state
}

fn beta_prior_logdensity(model: &JointModel, state: &ChainState, i: usize, l: usize) -> f64 {
    let shift = model.subjects[i].x.dot(&state.alpha.row(l).transpose());
    let r = state.beta[i].row(l).transpose() - state.b0.row(l).transpose().add_scalar(shift);
    let v_inv = state.v0[l].clone().try_inverse().unwrap();
    -0.5 * (r.transpose() * v_inv * &r)[(0, 0)]
}

fn setup(n: usize, kind: LinkKind, seed: u64) -> (JointModel, PriorConfig, ChainState) {
    let truth = slope_truth(2.0, 1.0, 0.5, -0.1);
    let m = model(&cohort(&truth, n, seed), kind, 6);
    let prior = PriorConfig::default_for(m.dims());
    let state = warmed_state(&m, &prior, seed);
    (m, prior, state)
}

#[test]
fn beta_slice_chain_matches_grid_conditional() {
    let (m, _, state) = setup(12, LinkKind::Slope, 3);
    let (i, l, k) = (0, 0, 2);
    let logp = |v: f64| {
        let mut s = state.clone();
        s.beta[i][(l, k)] = v;
        m.joint_loglik(&s).unwrap() + beta_prior_logdensity(&m, &s, i, l)
    };
    let (lo, hi) = support(&logp, -30.0, 30.0, 45.0);
    let cdf = grid_cdf(logp, lo, hi, 20_001);

    let mut s = state.clone();
    let mut rng = RandomStream::new(11);
    let tuning = SamplerTuning::default();
    let mut draws = Vec::new();
    for it in 0..20_000 {
        update_beta_coordinate(&m, &mut s, (i, l, k), &tuning, &mut rng).unwrap();
        if it % 10 == 9 {
            draws.push(s.beta[i][(l, k)]);
        }
    }
    // Everything else stays frozen.
    let mut other = s.clone();
    other.beta[i][(l, k)] = state.beta[i][(l, k)];
    assert_eq!(other, state);
    let (_, p) = ks_test(&draws, cdf);
    assert!(p > 0.01, "KS p = {p}");
}

#[test]
fn beta_conjugate_limit_without_survival_terms() {
    let (m, _, mut state) = setup(12, LinkKind::Slope, 4);
    state.link.gamma.fill(0.0);
    state.link.gamma_s.fill(0.0);
    state.link.zeta.fill(0.0);
    state.lambda.iter_mut().for_each(|v| *v = 1e-12);
    let (i, l, k) = (1, 0, 3);

    // Gaussian conditional of one coordinate: likelihood rows plus the
    // conditional of the coefficient prior.
    let rows = &m.designs[i].obs_rows;
    let s2 = state.sigma[(0, 0)];
    let y = m.subjects[i].y.column(l);
    let beta = state.beta[i].row(l).transpose();
    let partial = rows * &beta - rows.column(k) * beta[k];
    let mut precision = rows.column(k).norm_squared() / s2;
    let mut linear = rows.column(k).dot(&(y - partial)) / s2;
    let p = state.v0[l].clone().try_inverse().unwrap();
    let prior_mean = state.b0.row(l).transpose();
    let mut others = 0.0;
    for c in (0..6).filter(|&c| c != k) {
        others += p[(k, c)] * (beta[c] - prior_mean[c]);
    }
    precision += p[(k, k)];
    linear += p[(k, k)] * prior_mean[k] - others;
    let (mu, var) = (linear / precision, 1.0 / precision);

    let mut rng = RandomStream::new(12);
    let tuning = SamplerTuning::default();
    let mut draws = Vec::with_capacity(40_000);
    for _ in 0..40_000 {
        update_beta_coordinate(&m, &mut state, (i, l, k), &tuning, &mut rng).unwrap();
        draws.push(state.beta[i][(l, k)]);
    }
    let (mean_hat, se) = mean_and_se(&draws, 50);
    assert!((mean_hat - mu).abs() < 3.0 * se, "mean {mean_hat} vs {mu} (se {se})");
    let sq: Vec<f64> = draws.iter().map(|d| (d - mu).powi(2)).collect();
    let (var_hat, se) = mean_and_se(&sq, 50);
    assert!((var_hat - var).abs() < 3.0 * se, "var {var_hat} vs {var} (se {se})");
}

fn link_grid_ks(block: usize) {
    let (m, prior, state) = setup(30, LinkKind::Slope, 5);
    let get = |s: &ChainState| if block == 0 { s.link.gamma[0] } else { s.link.gamma_s[0] };
    let logp = |v: f64| {
        let mut s = state.clone();
        if block == 0 {
            s.link.gamma[0] = v;
        } else {
            s.link.gamma_s[0] = v;
        }
        let idx = block;
        m.joint_loglik(&s).unwrap() - 0.5 * (v - prior.g0[idx]).powi(2) / prior.g1[(idx, idx)]
    };
    let (lo, hi) = support(&logp, -10.0, 10.0, 45.0);
    let cdf = grid_cdf(logp, lo, hi, 20_001);
    let mut s = state.clone();
    let mut rng = RandomStream::new(21 + block as u64);
    let draws: Vec<f64> = (0..10_000)
        .map(|_| {
            update_link_coordinate(&m, &mut s, &prior, (block, 0), &SamplerTuning::default(), &mut rng).unwrap();
            get(&s)
        })
        .collect();
    let (_, p) = ks_test(&draws, cdf);
    assert!(p > 0.01, "block {block}: KS p = {p}");
}

#[test]
fn gamma_ars_matches_grid_conditional() {
    link_grid_ks(0);
}

#[test]
fn gamma_s_ars_matches_grid_conditional() {
    link_grid_ks(1);
}

#[test]
fn zeta_ars_matches_grid_conditional() {
    let (m, prior, state) = setup(30, LinkKind::Slope, 6);
    let logp = |v: f64| {
        let mut s = state.clone();
        s.link.zeta[0] = v;
        m.joint_loglik(&s).unwrap() - 0.5 * (v - prior.zeta_mean[0]).powi(2) / prior.zeta_cov[(0, 0)]
    };
    let (lo, hi) = support(&logp, -3.0, 3.0, 45.0);
    let cdf = grid_cdf(logp, lo, hi, 20_001);
    let mut s = state.clone();
    let mut rng = RandomStream::new(31);
    let draws: Vec<f64> = (0..10_000)
        .map(|_| {
            update_zeta_coordinate(&m, &mut s, &prior, 0, &SamplerTuning::default(), &mut rng).unwrap();
            s.link.zeta[0]
        })
        .collect();
    let (_, p) = ks_test(&draws, cdf);
    assert!(p > 0.01, "KS p = {p}");
}

#[test]
fn links_recover_prior_without_events_or_hazard() {
    let truth = slope_truth(2.0, 1.0, 0.5, -0.1);
    let mut c = cohort(&truth, 10, 7);
    c.subjects.iter_mut().for_each(|s| s.event = false);
    let m = model(&c, LinkKind::Current, 6);
    let prior = PriorConfig::default_for(m.dims());
    let mut rng = RandomStream::new(8);
    let mut state = initial_state(&m, &prior, &mut rng).unwrap();
    // Flat trajectories: the hazard no longer depends on gamma.
    state.beta.iter_mut().for_each(|b| b.fill(0.0));
    state.lambda.iter_mut().for_each(|v| *v = 1e-12);
    let draws: Vec<f64> = (0..10_000)
        .map(|_| {
            update_link_coordinate(&m, &mut state, &prior, (0, 0), &SamplerTuning::default(), &mut rng).unwrap();
            state.link.gamma[0]
        })
        .collect();
    let sd = prior.g1[(0, 0)].sqrt();
    let se = sd / (draws.len() as f64).sqrt();
    assert!(mean(&draws).abs() < 3.0 * se, "mean {}", mean(&draws));
    let (_, p) = ks_test(&draws, |x| bsjoint::stats::normal_cdf(x / sd));
    assert!(p > 0.01, "KS p = {p}");
}

#[test]
fn masked_links_stay_exactly_zero() {
    let (m, prior, mut state) = setup(15, LinkKind::Current, 9);
    let mut rng = RandomStream::new(10);
    for _ in 0..100 {
        gibbs_step(&m, &mut state, &prior, &SamplerTuning::default(), &mut rng).unwrap();
        assert_eq!(state.link.gamma_s[0], 0.0);
        assert_eq!(state.link.gamma_h[0], 0.0);
    }
    assert!(update_link_coordinate(&m, &mut state, &prior, (1, 0), &SamplerTuning::default(), &mut rng).is_err());
}

#[test]
fn lambda_matches_exponential_model_identity() {
    let truth = slope_truth(2.0, 1.0, 0.5, -0.1);
    let c = cohort(&truth, 80, 12);
    let mut config = bsjoint::model::ModelConfig { kind: LinkKind::Current, ..Default::default() };
    config.events_per_interval = 10_000;
    config.knots = bsjoint::spline::KnotStrategy::Equal;
    let structure = bsjoint::model::ModelStructure::resolve(&c.subjects, &config, c.end).unwrap();
    let m = JointModel::new(c.subjects.clone(), structure).unwrap();
    assert_eq!(m.structure.n_intervals(), 1);
    let mut prior = PriorConfig::default_for(m.dims());
    prior.d0 = vec![1e-10];
    prior.d1 = vec![1e-10];
    let mut rng = RandomStream::new(13);
    let mut state = initial_state(&m, &prior, &mut rng).unwrap();
    state.link.gamma.fill(0.0);
    state.link.zeta.fill(0.0);

    let at_risk: f64 = m.subjects.iter().map(|s| s.event_time).sum();
    let exposure = hazard_exposures(&m, &state).unwrap();
    assert!((exposure[0] - at_risk).abs() < 1e-10 * at_risk);

    let events = m.subjects.iter().filter(|s| s.event).count() as f64;
    let draws: Vec<f64> = (0..20_000)
        .map(|_| {
            update_lambda(&m, &mut state, &prior, &mut rng).unwrap();
            state.lambda[0]
        })
        .collect();
    let target = events / at_risk;
    let se = (events.sqrt() / at_risk) / (draws.len() as f64).sqrt();
    assert!((mean(&draws) - target).abs() < 3.0 * se, "{} vs {target}", mean(&draws));
    let var = events / at_risk.powi(2);
    assert!((variance(&draws) - var).abs() < 0.05 * var);
}

#[test]
fn sigma_update_is_inverse_gamma_for_one_marker() {
    let (m, prior, mut state) = setup(15, LinkKind::Slope, 14);
    let mut rss = 0.0;
    let mut n_obs = 0.0;
    for (i, (s, d)) in m.subjects.iter().zip(&m.designs).enumerate() {
        let r = &s.y - &d.obs_rows * state.beta[i].transpose();
        rss += r.norm_squared();
        n_obs += s.n_obs() as f64;
    }
    let shape = 0.5 * (n_obs + prior.nu_sigma);
    let rate = 0.5 * (1.0 / prior.s_sigma[(0, 0)] + rss);
    let mut rng = RandomStream::new(15);
    let precisions: Vec<f64> = (0..20_000)
        .map(|_| {
            update_sigma(&m, &mut state, &prior, &mut rng).unwrap();
            1.0 / state.sigma[(0, 0)]
        })
        .collect();
    let sd = shape.sqrt() / rate;
    let se = sd / (precisions.len() as f64).sqrt();
    assert!((mean(&precisions) - shape / rate).abs() < 3.0 * se);
    assert!((variance(&precisions).sqrt() - sd).abs() < 0.03 * sd);
}

#[test]
fn v0_update_with_zero_residuals_has_wishart_mean() {
    let (m, prior, mut state) = setup(10, LinkKind::Slope, 16);
    for b in state.beta.iter_mut() {
        b.copy_from(&state.b0);
    }
    let df = m.subjects.len() as f64 + prior.nu_v0[0];
    let mut rng = RandomStream::new(17);
    let draws: Vec<DMatrix<f64>> = (0..5_000)
        .map(|_| {
            update_v0(&m, &mut state, &prior, &mut rng).unwrap();
            state.v0[0].clone().try_inverse().unwrap()
        })
        .collect();
    // Wishart(I, df): E = df I, Var of entry (r, c) = df (1 + [r == c]).
    for r in 0..6 {
        for c in 0..6 {
            let xs: Vec<f64> = draws.iter().map(|w| w[(r, c)]).collect();
            let expected = if r == c { df } else { 0.0 };
            let var = df * if r == c { 2.0 } else { 1.0 };
            let se = (var / xs.len() as f64).sqrt();
            assert!((mean(&xs) - expected).abs() < 3.5 * se, "({r}, {c}): {}", mean(&xs));
        }
    }
}

/// Normal-normal posterior of `theta` from `y_i ~ N(D_i theta, V)` and a
/// `N(m0, C)` prior, assembled over the stacked observation vector.
fn stacked_posterior(
    ys: &[DVector<f64>],
    designs: &[DMatrix<f64>],
    v: &DMatrix<f64>,
    m0: &DVector<f64>,
    c: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let q = v.nrows();
    let n = ys.len();
    let d = m0.len();
    let mut big_y = DVector::zeros(n * q);
    let mut big_d = DMatrix::zeros(n * q, d);
    let mut omega = DMatrix::zeros(n * q, n * q);
    for i in 0..n {
        big_y.rows_mut(i * q, q).copy_from(&ys[i]);
        big_d.view_mut((i * q, 0), (q, d)).copy_from(&designs[i]);
        omega.view_mut((i * q, i * q), (q, q)).copy_from(v);
    }
    let omega_inv = omega.try_inverse().unwrap();
    let c_inv = c.clone().try_inverse().unwrap();
    let precision = big_d.transpose() * &omega_inv * &big_d + &c_inv;
    let cov = precision.try_inverse().unwrap();
    let mean = &cov * (big_d.transpose() * &omega_inv * big_y + c_inv * m0);
    (mean, cov)
}

fn assert_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
    let scale = b.amax().max(1.0);
    assert!((a - b).amax() < tol * scale, "{a} vs {b}");
}

fn covariate_setup() -> (JointModel, PriorConfig, ChainState) {
    let truth = slope_truth(2.0, 1.0, 0.5, -0.1);
    let mut c = cohort(&truth, 25, 18);
    let mut rng = RandomStream::new(19);
    for s in c.subjects.iter_mut() {
        s.x = DVector::from_vec(vec![f64::from(u8::from(rng.uniform() < 0.5)), rng.normal()]);
    }
    let m = model(&c, LinkKind::Slope, 6);
    let mut prior = PriorConfig::default_for(m.dims());
    prior.c1[0] = DMatrix::from_row_slice(2, 2, &[4.0, 0.5, 0.5, 9.0]);
    prior.c0 = DMatrix::from_row_slice(1, 2, &[0.2, -0.1]);
    prior.a1[0] = DMatrix::from_fn(6, 6, |r, c| if r == c { 50.0 } else { 5.0 });
    let mut state = warmed_state(&m, &prior, 20);
    state.alpha = DMatrix::from_row_slice(1, 2, &[0.3, -0.4]);
    (m, prior, state)
}

#[test]
fn b0_conditional_matches_stacked_oracle() {
    let (m, prior, state) = covariate_setup();
    let ys: Vec<DVector<f64>> = (0..m.subjects.len())
        .map(|i| {
            let shift = m.subjects[i].x.dot(&state.alpha.row(0).transpose());
            state.beta[i].row(0).transpose().add_scalar(-shift)
        })
        .collect();
    let designs = vec![DMatrix::identity(6, 6); ys.len()];
    let (mean_o, cov_o) = stacked_posterior(&ys, &designs, &state.v0[0], &prior.a0.row(0).transpose(), &prior.a1[0]);
    let (mu, cov) = b0_conditional(&m, &state, &prior, 0).unwrap();
    assert!((&mu - &mean_o).amax() < 1e-10 * mean_o.amax().max(1.0));
    assert_close(&cov, &cov_o, 1e-10);

    let mut s = state.clone();
    let mut rng = RandomStream::new(22);
    let draws: Vec<f64> = (0..5_000)
        .map(|_| {
            update_b0(&m, &mut s, &prior, &mut rng).unwrap();
            s.b0[(0, 2)]
        })
        .collect();
    let se = (cov[(2, 2)] / draws.len() as f64).sqrt();
    assert!((mean(&draws) - mu[2]).abs() < 3.0 * se);
}

#[test]
fn alpha_conditional_matches_stacked_oracle() {
    let (m, prior, state) = covariate_setup();
    let ys: Vec<DVector<f64>> = (0..m.subjects.len())
        .map(|i| state.beta[i].row(0).transpose() - state.b0.row(0).transpose())
        .collect();
    let designs: Vec<DMatrix<f64>> = m
        .subjects
        .iter()
        .map(|s| DVector::from_element(6, 1.0) * s.x.transpose())
        .collect();
    let (mean_o, cov_o) = stacked_posterior(&ys, &designs, &state.v0[0], &prior.c0.row(0).transpose(), &prior.c1[0]);
    let (mu, cov) = alpha_conditional(&m, &state, &prior, 0).unwrap();
    assert!((mu - &mean_o).amax() < 1e-10 * mean_o.amax().max(1.0));
    assert_close(&cov, &cov_o, 1e-10);

    let mut s = state.clone();
    let mut rng = RandomStream::new(23);
    let draws: Vec<f64> = (0..5_000)
        .map(|_| {
            update_alpha(&m, &mut s, &prior, &mut rng).unwrap();
            s.alpha[(0, 1)]
        })
        .collect();
    let se = (cov[(1, 1)] / draws.len() as f64).sqrt();
    assert!((mean(&draws) - mean_o[1]).abs() < 3.0 * se);
}

#[test]
fn alpha_with_zero_covariates_is_a_prior_draw() {
    let (mut m, prior, state) = covariate_setup();
    for s in m.subjects.iter_mut() {
        s.x.fill(0.0);
    }
    let (mean, cov) = alpha_conditional(&m, &state, &prior, 0).unwrap();
    assert!((mean - prior.c0.row(0).transpose()).amax() < 1e-12);
    assert_close(&cov, &prior.c1[0], 1e-12);
}

#[test]
fn saved_draw_counts() {
    let full_length = McmcConfig { iterations: 100_000, burn_in: 10_000, thin: 10, seed: 1, chain: 0 };
    assert_eq!(full_length.saved_draws(), 9_000);
    let reduced = McmcConfig { iterations: 20_000, burn_in: 2_000, thin: 10, ..full_length };
    assert_eq!(reduced.saved_draws(), 1_800);
    assert!(McmcConfig { burn_in: 100_000, ..full_length }.validate().is_err());
    assert!(McmcConfig { thin: 0, ..full_length }.validate().is_err());
    assert!(McmcConfig { thin: 7, ..full_length }.validate().is_err());

    let (m, prior, _) = setup(8, LinkKind::Slope, 24);
    let small = McmcConfig { iterations: 230, burn_in: 30, thin: 10, seed: 2, chain: 0 };
    let samples = run_chain(&m, &prior, &SamplerTuning::default(), &small).unwrap();
    assert_eq!(samples.len(), 20);
    assert_eq!(samples.loglik.len(), 20);
    assert!(samples.loglik.iter().all(|l| l.len() == 8));
}

#[test]
fn chains_are_deterministic_per_seed_and_index() {
    let (m, prior, _) = setup(8, LinkKind::Slope, 25);
    let cfg = McmcConfig { iterations: 120, burn_in: 20, thin: 5, seed: 9, chain: 0 };
    let tuning = SamplerTuning::default();
    let a = run_chain(&m, &prior, &tuning, &cfg).unwrap();
    let b = run_chain(&m, &prior, &tuning, &cfg).unwrap();
    assert_eq!(a, b);
    let c = run_chain(&m, &prior, &tuning, &McmcConfig { chain: 1, ..cfg }).unwrap();
    assert_ne!(a.draws, c.draws);
}

#[test]
fn rhat_reference_cases() {
    let mut rng = RandomStream::new(26);
    let flat = vec![3.0; 100];
    assert_eq!(split_rhat(&[flat.clone(), flat]).unwrap(), 1.0);

    let stream: Vec<f64> = (0..5_000).map(|_| rng.normal()).collect();
    let same = split_rhat(&[stream.clone(), stream.clone()]).unwrap();
    assert!((same - 1.0).abs() < 1e-3, "{same}");

    let shifted: Vec<f64> = (0..5_000).map(|_| 10.0 + rng.normal()).collect();
    assert!(split_rhat(&[stream.clone(), shifted]).unwrap() > 1.1);

    let other: Vec<f64> = (0..5_000).map(|_| rng.normal()).collect();
    assert!(split_rhat(&[stream, other]).unwrap() < 1.01);
    assert!(split_rhat(&[vec![1.0; 10]]).is_err());
}

#[test]
fn two_seeds_give_overlapping_link_intervals() {
    let (m, prior, _) = setup(60, LinkKind::Slope, 27);
    let tuning = SamplerTuning::default();
    let runs: Vec<_> = [1u64, 2]
        .iter()
        .map(|&seed| {
            let cfg = McmcConfig { iterations: 2_000, burn_in: 500, thin: 5, seed, chain: 0 };
            run_chain(&m, &prior, &tuning, &cfg).unwrap()
        })
        .collect();
    for name in ["gamma.1", "gamma_s.1", "zeta.1"] {
        let ci: Vec<(f64, f64, f64)> = runs
            .iter()
            .map(|r| bsjoint::diagnostics::summarize_draws(&r.column_by_name(name).unwrap(), 0.95).unwrap())
            .collect();
        assert!(ci[0].1 <= ci[1].2 && ci[1].1 <= ci[0].2, "{name}: {ci:?}");
    }
}
