//! Full-conditional updates, one function per block.
//!
//! Univariate updates work on the displacement `delta` from the current
//! value, so every conditional is written as `lin * delta - quad * delta^2 / 2`
//! plus the hazard terms `-sum_n a_n (exp(delta c_n) - 1)`, where `a_n` is the
//! current contribution of quadrature node `n` to the cumulative hazard.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ChainState, GibbsError, PriorConfig};
use crate::model::{spd_inverse, JointModel};
use crate::stats::exp_in_place;
use crate::samplers::{
    ars_sample, gamma_draw, mvn_draw_canonical, slice_step, wishart_draw, RandomStream, SamplerError,
};

/// Slice widths and stepping-out budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerTuning {
    /// Slice width for spline coefficients.
    pub beta_width: f64,
    /// Fallback spread of the ARS starting points for link parameters when
    /// the conditional's curvature is unusable.
    pub link_width: f64,
    pub max_steps: usize,
}

impl Default for SamplerTuning {
    fn default() -> Self {
        SamplerTuning { beta_width: 0.5, link_width: 1.0, max_steps: 50 }
    }
}

fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>, GibbsError> {
    Ok(spd_inverse(m, what)?.0)
}

/// `exp(z' zeta) lambda_j w_n exp(eta_n)` for every node of subject `i`.
fn node_multipliers(model: &JointModel, state: &ChainState, i: usize) -> Result<Vec<f64>, GibbsError> {
    let d = &model.designs[i];
    let zfac = model.subjects[i].z.dot(&state.link.zeta).exp();
    let mut a = model.node_exponents(i, &state.beta[i], &state.link)?;
    exp_in_place(&mut a);
    for ((a, w), &j) in a.iter_mut().zip(&d.node_weights).zip(&d.node_intervals) {
        *a *= zfac * state.lambda[j] * w;
    }
    Ok(a)
}

/// Mean of `beta_il` under its prior: `b0_l + (x_i' alpha_l) 1_q`.
fn beta_prior_mean(model: &JointModel, state: &ChainState, i: usize, l: usize) -> DVector<f64> {
    let shift = model.subjects[i].x.dot(&state.alpha.row(l).transpose());
    state.b0.row(l).transpose().add_scalar(shift)
}

/// `sum_n a_n (exp(delta c_n) - 1)` with its first two derivatives;
/// `scratch` is working space.
fn hazard_terms(a: &[f64], c: &[f64], delta: f64, scratch: &mut Vec<f64>) -> (f64, f64, f64) {
    scratch.clear();
    scratch.extend(c.iter().map(|&cn| delta * cn));
    exp_in_place(scratch);
    let (mut h0, mut h1, mut h2) = (0.0, 0.0, 0.0);
    for ((&an, &cn), &e) in a.iter().zip(c).zip(scratch.iter()) {
        let ae = an * e;
        h0 += ae - an;
        h1 += ae * cn;
        h2 += ae * cn * cn;
    }
    (h0, h1, h2)
}

/// Slice-sweeps the listed `(marker, coefficient)` coordinates of subject `i`.
fn sweep_subject(
    model: &JointModel,
    state: &mut ChainState,
    i: usize,
    coords: &[(usize, usize)],
    precision: &DMatrix<f64>,
    v0_inv: &[DMatrix<f64>],
    tuning: &SamplerTuning,
    rng: &mut RandomStream,
) -> Result<(), GibbsError> {
    let subject = &model.subjects[i];
    let design = &model.designs[i];
    let active = model.structure.kind.active_blocks();
    let mut a = node_multipliers(model, state, i)?;
    let mut resid = &subject.y - &design.obs_rows * state.beta[i].transpose();
    let nu = if subject.event { 1.0 } else { 0.0 };

    let q = model.structure.q();
    let mut current_marker = usize::MAX;
    let mut cmat = DMatrix::zeros(design.n_nodes(), q);
    let mut ev = DVector::zeros(q);
    let mut mu = DVector::zeros(0);
    let n_nodes = design.n_nodes();
    let mut a_active = Vec::with_capacity(n_nodes);
    let mut c_active = Vec::with_capacity(n_nodes);
    let mut scratch = Vec::with_capacity(n_nodes);
    let mut active_nodes = Vec::with_capacity(n_nodes);
    for &(l, k) in coords {
        if l != current_marker {
            current_marker = l;
            cmat.fill(0.0);
            ev.fill(0.0);
            for b in (0..3).filter(|&b| active[b]) {
                let g = state.link.block(b)[l];
                cmat.zip_apply(&design.node_rows[b], |c, r| *c += g * r);
                ev.axpy(g * nu, &design.event_rows[b], 1.0);
            }
            mu = beta_prior_mean(model, state, i, l);
        }
        let bk = design.obs_rows.column(k);
        let lin_long = bk.dot(&(&resid * precision.column(l)));
        let quad_long = precision[(l, l)] * bk.norm_squared();
        let dev = state.beta[i].row(l).transpose() - &mu;
        let q_row = v0_inv[l].row(k);
        let lin = lin_long - q_row.dot(&dev.transpose()) + ev[k];
        let quad = quad_long + v0_inv[l][(k, k)];

        active_nodes.clear();
        a_active.clear();
        c_active.clear();
        for (n, &cn) in cmat.column(k).iter().enumerate() {
            if cn != 0.0 {
                active_nodes.push(n);
                a_active.push(a[n]);
                c_active.push(cn);
            }
        }
        let a_sum: f64 = a_active.iter().sum();
        let logd = |delta: f64| {
            scratch.clear();
            scratch.extend(c_active.iter().map(|&cn| delta * cn));
            exp_in_place(&mut scratch);
            let hz: f64 = a_active.iter().zip(&scratch).map(|(an, e)| an * e).sum();
            lin * delta - 0.5 * quad * delta * delta - (hz - a_sum)
        };
        // The displacement form makes the log density 0 at the current value.
        let delta = slice_step(logd, 0.0, 0.0, tuning.beta_width, tuning.max_steps, rng)?;
        if delta != 0.0 {
            state.beta[i][(l, k)] += delta;
            let mut rcol = resid.column_mut(l);
            rcol.axpy(-delta, &bk, 1.0);
            scratch.clear();
            scratch.extend(c_active.iter().map(|&cn| delta * cn));
            exp_in_place(&mut scratch);
            for (&n, &e) in active_nodes.iter().zip(&scratch) {
                a[n] *= e;
            }
        }
    }
    Ok(())
}

/// Coordinatewise slice update of every spline coefficient, sweeping
/// subjects, markers and coefficients in order.
pub fn update_beta(
    model: &JointModel,
    state: &mut ChainState,
    tuning: &SamplerTuning,
    rng: &mut RandomStream,
) -> Result<(), GibbsError> {
    let (precision, _) = spd_inverse(&state.sigma, "Sigma")?;
    let v0_inv = state.v0.iter().map(|v| inverse(v, "V0")).collect::<Result<Vec<_>, _>>()?;
    let dims = model.dims();
    let coords: Vec<(usize, usize)> =
        (0..dims.n_markers).flat_map(|l| (0..dims.q).map(move |k| (l, k))).collect();
    for i in 0..dims.n_subjects {
        sweep_subject(model, state, i, &coords, &precision, &v0_inv, tuning, rng)?;
    }
    Ok(())
}

/// Slice update of the single coefficient `beta[i][(l, k)]`.
pub fn update_beta_coordinate(
    model: &JointModel,
    state: &mut ChainState,
    (i, l, k): (usize, usize, usize),
    tuning: &SamplerTuning,
    rng: &mut RandomStream,
) -> Result<(), GibbsError> {
    let (precision, _) = spd_inverse(&state.sigma, "Sigma")?;
    let v0_inv = state.v0.iter().map(|v| inverse(v, "V0")).collect::<Result<Vec<_>, _>>()?;
    sweep_subject(model, state, i, &[(l, k)], &precision, &v0_inv, tuning, rng)
}

fn beta_residual(model: &JointModel, state: &ChainState, i: usize, l: usize) -> DVector<f64> {
    state.beta[i].row(l).transpose() - beta_prior_mean(model, state, i, l)
}

/// Draws each `V0_l` from its inverse-Wishart conditional.
pub fn update_v0(
    model: &JointModel,
    state: &mut ChainState,
    prior: &PriorConfig,
    rng: &mut RandomStream,
) -> Result<(), GibbsError> {
    let dims = model.dims();
    for l in 0..dims.n_markers {
        let mut s = inverse(&prior.s_v0[l], "V0 prior scale")?;
        for i in 0..dims.n_subjects {
            let r = beta_residual(model, state, i, l);
            s += &r * r.transpose();
        }
        let scale = inverse(&s, "V0 posterior scale")?;
        let w = wishart_draw(&scale, dims.n_subjects as f64 + prior.nu_v0[l], rng)?;
        state.v0[l] = inverse(&w, "V0 precision draw")?;
    }
    Ok(())
}

/// Draws `Sigma` from its inverse-Wishart conditional.
pub fn update_sigma(
    model: &JointModel,
    state: &mut ChainState,
    prior: &PriorConfig,
    rng: &mut RandomStream,
) -> Result<(), GibbsError> {
    let mut s = inverse(&prior.s_sigma, "Sigma prior scale")?;
    let mut n_obs = 0;
    for (i, (subject, design)) in model.subjects.iter().zip(&model.designs).enumerate() {
        let resid = &subject.y - &design.obs_rows * state.beta[i].transpose();
        s += resid.transpose() * &resid;
        n_obs += subject.n_obs();
    }
    let scale = inverse(&s, "Sigma posterior scale")?;
    let w = wishart_draw(&scale, n_obs as f64 + prior.nu_sigma, rng)?;
    state.sigma = inverse(&w, "Sigma precision draw")?;
    Ok(())
}

/// Mean and covariance of the conjugate normal conditional of `b0_l`.
pub fn b0_conditional(
    model: &JointModel,
    state: &ChainState,
    prior: &PriorConfig,
    l: usize,
) -> Result<(DVector<f64>, DMatrix<f64>), GibbsError> {
    let v_inv = inverse(&state.v0[l], "V0")?;
    let a1_inv = inverse(&prior.a1[l], "b0 prior covariance")?;
    let n = model.subjects.len();
    let mut sum = DVector::zeros(model.structure.q());
    for i in 0..n {
        let shift = model.subjects[i].x.dot(&state.alpha.row(l).transpose());
        sum += state.beta[i].row(l).transpose().add_scalar(-shift);
    }
    let precision = &v_inv * n as f64 + &a1_inv;
    let cov = inverse(&precision, "b0 posterior precision")?;
    let mean = &cov * (&v_inv * sum + &a1_inv * prior.a0.row(l).transpose());
    Ok((mean, cov))
}

pub fn update_b0(
    model: &JointModel,
    state: &mut ChainState,
    prior: &PriorConfig,
    rng: &mut RandomStream,
) -> Result<(), GibbsError> {
    for l in 0..state.b0.nrows() {
        let (mean, cov) = b0_conditional(model, state, prior, l)?;
        let precision = inverse(&cov, "b0 posterior covariance")?;
        let draw = mvn_draw_canonical(&(&precision * &mean), &precision, rng)?;
        state.b0.row_mut(l).copy_from(&draw.transpose());
    }
    Ok(())
}

/// Mean and covariance of the conjugate normal conditional of `alpha_l`.
///
/// The prior `beta_il ~ N(b0_l + (x_i' alpha_l) 1_q, V0_l)` makes
/// `beta_il - b0_l` a linear regression on the design `1_q x_i'`.
pub fn alpha_conditional(
    model: &JointModel,
    state: &ChainState,
    prior: &PriorConfig,
    l: usize,
) -> Result<(DVector<f64>, DMatrix<f64>), GibbsError> {
    let p = state.alpha.ncols();
    let v_inv = inverse(&state.v0[l], "V0")?;
    let c1_inv = inverse(&prior.c1[l], "alpha prior covariance")?;
    let ones = DVector::from_element(model.structure.q(), 1.0);
    let v_ones = &v_inv * &ones;
    let total = ones.dot(&v_ones);
    let mut precision = c1_inv.clone();
    let mut linear = &c1_inv * prior.c0.row(l).transpose();
    for (i, subject) in model.subjects.iter().enumerate() {
        let x = &subject.x;
        precision += x * x.transpose() * total;
        let r = state.beta[i].row(l).transpose() - state.b0.row(l).transpose();
        linear += x * v_ones.dot(&r);
    }
    debug_assert_eq!(precision.nrows(), p);
    let cov = inverse(&precision, "alpha posterior precision")?;
    Ok((&cov * linear, cov))
}

pub fn update_alpha(
    model: &JointModel,
    state: &mut ChainState,
    prior: &PriorConfig,
    rng: &mut RandomStream,
) -> Result<(), GibbsError> {
    if state.alpha.ncols() == 0 {
        return Ok(());
    }
    for l in 0..state.alpha.nrows() {
        let (mean, cov) = alpha_conditional(model, state, prior, l)?;
        let precision = inverse(&cov, "alpha posterior covariance")?;
        let draw = mvn_draw_canonical(&(&precision * &mean), &precision, rng)?;
        state.alpha.row_mut(l).copy_from(&draw.transpose());
    }
    Ok(())
}

/// ARS draw of `delta` from a strictly concave log density given with its
/// first two derivatives. The starting points straddle a Newton estimate
/// of the mode by two curvature standard deviations.
fn draw_concave<F>(mut f: F, fallback: f64, rng: &mut RandomStream) -> Result<f64, SamplerError>
where
    F: FnMut(f64) -> (f64, f64, f64),
{
    let mut m = 0.0;
    let (mut hm, mut gm, mut h2m) = f(m);
    for _ in 0..50 {
        if !(h2m < 0.0) || !gm.is_finite() {
            break;
        }
        let mut step = -gm / h2m;
        // Points two curvature SDs either side of anything within half an SD
        // of the mode still bracket it.
        if step.abs() * (-h2m).sqrt() < 0.5 {
            break;
        }
        // Damped Newton: halve until the log density does not drop.
        let mut moved = false;
        for _ in 0..30 {
            let (h_new, g_new, h2_new) = f(m + step);
            if h_new.is_finite() && h_new >= hm {
                m += step;
                (hm, gm, h2m) = (h_new, g_new, h2_new);
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let s = if h2m < 0.0 && h2m.is_finite() { (-h2m).sqrt().recip() } else { fallback };
    // Narrower than the spacing of floats around the mode: a point mass at
    // working precision, and the starting points would coincide.
    if m - 2.0 * s == m || m + 2.0 * s == m {
        return Ok(m);
    }
    let mut spread = 2.0;
    let mut last = None;
    for _ in 0..8 {
        let init = [m - spread * s, m, m + spread * s];
        match ars_sample(
            |x| {
                if x == m {
                    return (hm, gm);
                }
                let (h, g, _) = f(x);
                (h, g)
            },
            f64::NEG_INFINITY,
            f64::INFINITY,
            &init,
            rng,
        ) {
            Err(e @ SamplerError::BadInitialization(_)) => {
                last = Some(e);
                spread *= 2.0;
            }
            other => return other,
        }
    }
    Err(last.unwrap_or_else(|| SamplerError::BadInitialization("no attempt made".into())))
}

/// Node-level hazard contributions and link features pooled over subjects.
struct LinkWorkspace {
    /// Current contribution of each node to its subject's cumulative hazard.
    a: Vec<f64>,
    /// Owning subject of each node.
    owner: Vec<usize>,
    /// `features[b][l][n]`: trajectory functional `b` of marker `l` at node `n`.
    features: Vec<Vec<Vec<f64>>>,
    /// `event_sums[b][l]`: sum over subjects with events of the functional at
    /// the event time.
    event_sums: Vec<Vec<f64>>,
}

impl LinkWorkspace {
    fn build(model: &JointModel, state: &ChainState) -> Result<Self, GibbsError> {
        let l_count = state.sigma.nrows();
        let active = model.structure.kind.active_blocks();
        let mut ws = LinkWorkspace {
            a: Vec::new(),
            owner: Vec::new(),
            features: vec![vec![Vec::new(); l_count]; 3],
            event_sums: vec![vec![0.0; l_count]; 3],
        };
        for i in 0..model.subjects.len() {
            let beta = &state.beta[i];
            let a = node_multipliers(model, state, i)?;
            ws.owner.extend(std::iter::repeat_n(i, a.len()));
            ws.a.extend(a);
            let features = model.node_features(i, beta);
            let event = model.event_features(i, beta);
            for b in (0..3).filter(|&b| active[b]) {
                for l in 0..l_count {
                    ws.features[b][l].extend(features[b].column(l).iter());
                    if model.subjects[i].event {
                        ws.event_sums[b][l] += event[b][l];
                    }
                }
            }
        }
        Ok(ws)
    }

    /// Per-subject cumulative hazards.
    fn cumulative(&self, n_subjects: usize) -> Vec<f64> {
        let mut h = vec![0.0; n_subjects];
        for (&a, &i) in self.a.iter().zip(&self.owner) {
            h[i] += a;
        }
        h
    }
}

fn link_vector(state: &ChainState) -> DVector<f64> {
    let l = state.sigma.nrows();
    DVector::from_fn(3 * l, |r, _| state.link.block(r / l)[r % l])
}

fn update_link_in(
    ws: &mut LinkWorkspace,
    state: &mut ChainState,
    link_precision: &DMatrix<f64>,
    prior: &PriorConfig,
    (b, l): (usize, usize),
    tuning: &SamplerTuning,
    rng: &mut RandomStream,
) -> Result<(), GibbsError> {
    let n_markers = state.sigma.nrows();
    let idx = b * n_markers + l;
    let theta = link_vector(state);
    let prior_lin = (link_precision * (&theta - &prior.g0))[idx];
    let pii = link_precision[(idx, idx)];
    let lin = ws.event_sums[b][l] - prior_lin;
    let feats = &ws.features[b][l];
    let mut a_act = Vec::with_capacity(feats.len());
    let mut c_act = Vec::with_capacity(feats.len());
    for (&a, &c) in ws.a.iter().zip(feats) {
        if c != 0.0 {
            a_act.push(a);
            c_act.push(c);
        }
    }
    let mut scratch = Vec::with_capacity(c_act.len());
    let f = |delta: f64| {
        let (h0, h1, h2) = hazard_terms(&a_act, &c_act, delta, &mut scratch);
        (lin * delta - 0.5 * pii * delta * delta - h0, lin - pii * delta - h1, -pii - h2)
    };
    let delta = draw_concave(f, tuning.link_width, rng)?;
    state.link.block_mut(b)[l] += delta;
    let mut factor: Vec<f64> = feats.iter().map(|&c| delta * c).collect();
    exp_in_place(&mut factor);
    for (a, f) in ws.a.iter_mut().zip(&factor) {
        *a *= f;
    }
    Ok(())
}

fn update_zeta_in(
    model: &JointModel,
    ws: &mut LinkWorkspace,
    state: &mut ChainState,
    zeta_precision: &DMatrix<f64>,
    prior: &PriorConfig,
    p: usize,
    tuning: &SamplerTuning,
    rng: &mut RandomStream,
) -> Result<(), GibbsError> {
    let cumulative = ws.cumulative(model.subjects.len());
    let z: Vec<f64> = model.subjects.iter().map(|s| s.z[p]).collect();
    let event_sum: f64 = model.subjects.iter().filter(|s| s.event).map(|s| s.z[p]).sum();
    let prior_lin = (zeta_precision * (&state.link.zeta - &prior.zeta_mean))[p];
    let pii = zeta_precision[(p, p)];
    let lin = event_sum - prior_lin;
    let mut scratch = Vec::with_capacity(z.len());
    let f = |delta: f64| {
        let (h0, h1, h2) = hazard_terms(&cumulative, &z, delta, &mut scratch);
        (lin * delta - 0.5 * pii * delta * delta - h0, lin - pii * delta - h1, -pii - h2)
    };
    let delta = draw_concave(f, tuning.link_width, rng)?;
    state.link.zeta[p] += delta;
    let factor: Vec<f64> = z.iter().map(|&zi| (delta * zi).exp()).collect();
    for (a, &i) in ws.a.iter_mut().zip(&ws.owner) {
        *a *= factor[i];
    }
    Ok(())
}

/// ARS update of every active link coefficient, then of each `zeta`
/// coordinate. Coefficients masked by the model kind are left untouched.
pub fn update_links(
    model: &JointModel,
    state: &mut ChainState,
    prior: &PriorConfig,
    tuning: &SamplerTuning,
    rng: &mut RandomStream,
) -> Result<(), GibbsError> {
    let mut ws = LinkWorkspace::build(model, state)?;
    let link_precision = inverse(&prior.g1, "link prior covariance")?;
    let active = model.structure.kind.active_blocks();
    for b in (0..3).filter(|&b| active[b]) {
        for l in 0..state.sigma.nrows() {
            update_link_in(&mut ws, state, &link_precision, prior, (b, l), tuning, rng)?;
        }
    }
    if !state.link.zeta.is_empty() {
        let zeta_precision = inverse(&prior.zeta_cov, "zeta prior covariance")?;
        for p in 0..state.link.zeta.len() {
            update_zeta_in(model, &mut ws, state, &zeta_precision, prior, p, tuning, rng)?;
        }
    }
    Ok(())
}

/// ARS update of the single link coefficient in block `b` (0 current,
/// 1 slope, 2 history) for marker `l`.
pub fn update_link_coordinate(
    model: &JointModel,
    state: &mut ChainState,
    prior: &PriorConfig,
    (b, l): (usize, usize),
    tuning: &SamplerTuning,
    rng: &mut RandomStream,
) -> Result<(), GibbsError> {
    if !model.structure.kind.active_blocks()[b] {
        return Err(GibbsError::InvalidConfig(format!(
            "link block {b} is masked for kind {}",
            model.structure.kind
        )));
    }
    let mut ws = LinkWorkspace::build(model, state)?;
    let link_precision = inverse(&prior.g1, "link prior covariance")?;
    update_link_in(&mut ws, state, &link_precision, prior, (b, l), tuning, rng)
}

/// ARS update of `zeta[p]`.
pub fn update_zeta_coordinate(
    model: &JointModel,
    state: &mut ChainState,
    prior: &PriorConfig,
    p: usize,
    tuning: &SamplerTuning,
    rng: &mut RandomStream,
) -> Result<(), GibbsError> {
    let mut ws = LinkWorkspace::build(model, state)?;
    let zeta_precision = inverse(&prior.zeta_cov, "zeta prior covariance")?;
    update_zeta_in(model, &mut ws, state, &zeta_precision, prior, p, tuning, rng)
}

/// Per-interval `sum_i exp(z_i' zeta) H_ij` evaluated with `lambda_j = 1`.
pub fn hazard_exposures(model: &JointModel, state: &ChainState) -> Result<Vec<f64>, GibbsError> {
    let mut out = vec![0.0; model.structure.n_intervals()];
    for (i, subject) in model.subjects.iter().enumerate() {
        let zfac = subject.z.dot(&state.link.zeta).exp();
        for (o, e) in out.iter_mut().zip(model.exposures(i, &state.beta[i], &state.link)?) {
            *o += zfac * e;
        }
    }
    Ok(out)
}

/// Independent gamma draws (rate parametrization) for each baseline rate.
pub fn update_lambda(
    model: &JointModel,
    state: &mut ChainState,
    prior: &PriorConfig,
    rng: &mut RandomStream,
) -> Result<(), GibbsError> {
    let exposure = hazard_exposures(model, state)?;
    for (j, n_j) in model.event_counts().into_iter().enumerate() {
        state.lambda[j] = gamma_draw(prior.d0[j] + n_j as f64, prior.d1[j] + exposure[j], rng)?;
    }
    Ok(())
}
