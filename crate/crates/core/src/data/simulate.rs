use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Cohort, DataError};
use crate::model::{cumulative_hazard, HazardSpec, LinkKind, LinkParams, SubjectData};
use crate::samplers::RandomStream;
use crate::spline::KnotVector;

/// Distribution of one baseline covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum CovariateSpec {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

impl CovariateSpec {
    fn draw(&self, rng: &mut RandomStream) -> f64 {
        match *self {
            CovariateSpec::Normal { mean, sd } => mean + sd * rng.normal(),
            CovariateSpec::Bernoulli { p } => f64::from(u8::from(rng.uniform() < p)),
        }
    }
}

/// Generating parameters of a synthetic cohort. Matrices are stored as
/// row lists so the truth file stays readable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub kind: LinkKind,
    /// Full clamped knot vector; its last knot is the follow-up horizon.
    pub knots: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma_s: Vec<f64>,
    pub gamma_h: Vec<f64>,
    pub zeta: Vec<f64>,
    /// Hazard jump points starting at 0, without the final infinite one.
    pub jumps: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `L` rows of `q` population mean coefficients.
    pub b0: Vec<Vec<f64>>,
    /// One `q x q` coefficient covariance per marker.
    pub v0: Vec<Vec<Vec<f64>>>,
    /// `L` rows of `p` covariate effects.
    pub alpha: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub x: Vec<CovariateSpec>,
    pub z: Vec<CovariateSpec>,
}

fn matrix(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c])
}

impl SimulationTruth {
    pub fn basis(&self) -> Result<KnotVector, DataError> {
        Ok(KnotVector::new(self.knots.clone()).map_err(crate::model::ModelError::from)?)
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    pub fn n_markers(&self) -> usize {
        self.b0.len()
    }

    pub fn link(&self) -> LinkParams {
        LinkParams {
            kind: self.kind,
            gamma: DVector::from_vec(self.gamma.clone()),
            gamma_s: DVector::from_vec(self.gamma_s.clone()),
            gamma_h: DVector::from_vec(self.gamma_h.clone()),
            zeta: DVector::from_vec(self.zeta.clone()),
        }
    }

    pub fn hazard(&self) -> Result<HazardSpec, DataError> {
        let mut jumps = self.jumps.clone();
        jumps.push(f64::INFINITY);
        Ok(HazardSpec::new(jumps, self.lambda.clone())?)
    }

    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        let l = self.n_markers();
        matrix(&self.sigma, l)
    }

    pub fn b0_matrix(&self) -> DMatrix<f64> {
        let q = self.b0.first().map_or(0, Vec::len);
        matrix(&self.b0, q)
    }

    pub fn alpha_matrix(&self) -> DMatrix<f64> {
        matrix(&self.alpha, self.x.len())
    }

    pub fn v0_matrices(&self) -> Vec<DMatrix<f64>> {
        self.v0.iter().map(|v| matrix(v, v.len())).collect()
    }
}

/// Cohort size, measurement schedule and censoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_subjects: usize,
    /// Intended measurement times.
    pub schedule: Vec<f64>,
    /// Administrative censoring time, at most the follow-up horizon.
    pub censor_time: f64,
    /// Half-width of uniform jitter around each scheduled time; 0 disables it.
    pub jitter: f64,
    pub seed: u64,
}

/// Inverts the cumulative hazard at `target` by bisection to 1e-8.
fn invert_cumulative<F>(mut cumulative: F, target: f64, upper: f64) -> Result<Option<f64>, DataError>
where
    F: FnMut(f64) -> Result<f64, DataError>,
{
    if cumulative(upper)? < target {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, upper);
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if cumulative(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(hi))
}

/// Draws a synthetic cohort and the latent spline coefficients behind it.
///
/// Subject `i` uses its own substream of the seed, so the cohort is a pure
/// function of the truth and configuration. Event times come from
/// `Lambda(s) = E`, `E ~ Exp(1)`; subjects without an event by
/// `censor_time` are censored there. Measurements after the event are
/// dropped; if jitter removes every measurement, one is taken at time 0.
pub fn simulate_cohort(
    truth: &SimulationTruth,
    config: &SimulationConfig,
) -> Result<(Cohort, Vec<DMatrix<f64>>), DataError> {
    let basis = truth.basis()?;
    let end = truth.end();
    let hazard = truth.hazard()?;
    let link = truth.link();
    link.validate()?;
    let sigma = truth.sigma_matrix();
    let sigma_chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| crate::model::ModelError::NonPosDefCovariance("Sigma".into()))?
        .unpack();
    let v0_chol = truth
        .v0_matrices()
        .into_iter()
        .map(|v| {
            v.cholesky()
                .map(|c| c.unpack())
                .ok_or_else(|| crate::model::ModelError::NonPosDefCovariance("V0".into()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let b0 = truth.b0_matrix();
    let alpha = truth.alpha_matrix();
    let (l_count, q) = b0.shape();
    if q != basis.q() {
        return Err(crate::model::ModelError::DimensionMismatch(format!(
            "b0 has {q} coefficients but the basis has {}",
            basis.q()
        ))
        .into());
    }
    let censor = config.censor_time.min(end);

    let mut subjects = Vec::with_capacity(config.n_subjects);
    let mut betas = Vec::with_capacity(config.n_subjects);
    for i in 0..config.n_subjects {
        let mut rng = RandomStream::substream(config.seed, i as u64 + 1);
        let id = format!("S{:04}", i + 1);
        let x = DVector::from_iterator(truth.x.len(), truth.x.iter().map(|c| c.draw(&mut rng)));
        let z = DVector::from_iterator(truth.z.len(), truth.z.iter().map(|c| c.draw(&mut rng)));
        let mut beta = DMatrix::zeros(l_count, q);
        for l in 0..l_count {
            let shift = if x.is_empty() { 0.0 } else { x.dot(&alpha.row(l).transpose()) };
            let e = DVector::from_fn(q, |_, _| rng.normal());
            let draw = b0.row(l).transpose().add_scalar(shift) + &v0_chol[l] * e;
            beta.row_mut(l).copy_from(&draw.transpose());
        }

        let target = rng.exponential();
        let mut probe = SubjectData {
            id: id.clone(),
            obs_times: vec![0.0],
            y: DMatrix::zeros(1, l_count),
            x: x.clone(),
            z: z.clone(),
            event_time: censor,
            event: false,
        };
        let outcome = invert_cumulative(
            |t| {
                probe.event_time = t;
                Ok(cumulative_hazard(&probe, &beta, &link, &hazard, &basis, 10)?)
            },
            target,
            censor,
        )?;
        let (event_time, event) = match outcome {
            Some(s) => (s, true),
            None => (censor, false),
        };
        if !(event_time > 0.0) {
            return Err(DataError::InversionFailure { subject: id, message: "event time is not positive".into() });
        }

        let mut times: Vec<f64> = config
            .schedule
            .iter()
            .map(|&t| {
                let j = if config.jitter > 0.0 { config.jitter * (2.0 * rng.uniform() - 1.0) } else { 0.0 };
                (t + j).clamp(0.0, end)
            })
            .filter(|&t| t <= event_time)
            .collect();
        times.sort_by(|a, b| a.total_cmp(b));
        if times.is_empty() {
            times.push(0.0);
        }
        let mut y = DMatrix::zeros(times.len(), l_count);
        for (j, &t) in times.iter().enumerate() {
            let psi = &beta * basis.eval_value(t).map_err(crate::model::ModelError::from)?.values;
            let noise = &sigma_chol * DVector::from_fn(l_count, |_, _| rng.normal());
            y.row_mut(j).copy_from(&(psi + noise).transpose());
        }
        subjects.push(SubjectData { id, obs_times: times, y, x, z, event_time, event });
        betas.push(beta);
    }
    let cohort = Cohort {
        subjects,
        end,
        marker_names: (1..=l_count).map(|l| format!("marker_{l}")).collect(),
        x_names: (1..=truth.x.len()).map(|p| format!("x_{p}")).collect(),
        z_names: (1..=truth.z.len()).map(|p| format!("z_{p}")).collect(),
    };
    cohort.validate()?;
    Ok((cohort, betas))
}
