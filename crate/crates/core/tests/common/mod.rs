//! Synthetic cohorts shared by the integration tests.
#![allow(dead_code)]

use bsjoint::data::{simulate_cohort, Cohort, CovariateSpec, SimulationConfig, SimulationTruth};
use bsjoint::model::{JointModel, LinkKind, ModelConfig, ModelStructure};
use bsjoint::spline::KnotStrategy;

/// Single-marker truth on `[0, end]` with equally spaced knots and `q = 6`.
///
/// Subject coefficients vary by a random level and a random linear trend
/// (expressed through the Greville abscissae), so trajectories differ in
/// both value and slope.
pub fn slope_truth(end: f64, gamma: f64, gamma_s: f64, zeta: f64) -> SimulationTruth {
    let q = 6;
    let knots = vec![0.0, 0.0, 0.0, 0.0, end / 3.0, 2.0 * end / 3.0, end, end, end, end];
    let g: Vec<f64> = (0..q).map(|k| (knots[k + 1] + knots[k + 2] + knots[k + 3]) / 3.0).collect();
    let (level, trend, jitter) = (0.5, 1.5, 0.05);
    let v: Vec<f64> = g.iter().map(|x| x - end / 2.0).collect();
    let v0: Vec<Vec<f64>> = (0..q)
        .map(|r| {
            (0..q)
                .map(|c| level * level + trend * trend * v[r] * v[c] + if r == c { jitter * jitter } else { 0.0 })
                .collect()
        })
        .collect();
    SimulationTruth {
        kind: if gamma_s == 0.0 { LinkKind::Current } else { LinkKind::Slope },
        knots,
        gamma: vec![gamma],
        gamma_s: vec![gamma_s],
        gamma_h: vec![0.0],
        zeta: vec![zeta],
        jumps: vec![0.0],
        lambda: vec![0.3],
        b0: vec![g.iter().map(|x| 0.3 * x).collect()],
        v0: vec![v0],
        alpha: vec![vec![]],
        sigma: vec![vec![0.09]],
        x: vec![],
        z: vec![CovariateSpec::Normal { mean: 0.0, sd: 8.0 }],
    }
}

/// Cohort of `n` subjects measured every `end / 20`, censored at `end`.
pub fn cohort(truth: &SimulationTruth, n: usize, seed: u64) -> Cohort {
    let end = truth.end();
    let sim = SimulationConfig {
        n_subjects: n,
        schedule: (0..=20).map(|k| k as f64 * end / 20.0).collect(),
        censor_time: end,
        jitter: 0.0,
        seed,
    };
    simulate_cohort(truth, &sim).unwrap().0
}

/// Model of `kind` with equally spaced knots, fitted on `[0, cohort.end]`.
pub fn model(cohort: &Cohort, kind: LinkKind, q: usize) -> JointModel {
    let config = ModelConfig { kind, q, knots: KnotStrategy::Equal, ..ModelConfig::default() };
    let structure = ModelStructure::resolve(&cohort.subjects, &config, cohort.end).unwrap();
    JointModel::new(cohort.subjects.clone(), structure).unwrap()
}

/// Piecewise-linear CDF of a density known up to a constant, tabulated on
/// `points` grid nodes over `[lo, hi]`.
pub fn grid_cdf(logp: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> impl Fn(f64) -> f64 {
    let h = (hi - lo) / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|k| lo + k as f64 * h).collect();
    let lp: Vec<f64> = xs.iter().map(|&x| logp(x)).collect();
    let top = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = lp.iter().map(|v| (v - top).exp()).collect();
    let mut cum = vec![0.0; points];
    for k in 1..points {
        cum[k] = cum[k - 1] + 0.5 * h * (dens[k] + dens[k - 1]);
    }
    let total = cum[points - 1];
    assert!(dens[0] < 1e-12 && dens[points - 1] < 1e-12, "grid does not cover the density");
    move |x: f64| {
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let k = (((x - lo) / h) as usize).min(points - 2);
        // Exact integral of the linear interpolant within the cell.
        let t = x - xs[k];
        let slope = (dens[k + 1] - dens[k]) / h;
        (cum[k] + dens[k] * t + 0.5 * slope * t * t) / total
    }
}

/// Interval `[lo, hi]` where `logp` is within `drop` of its maximum over a
/// coarse scan of `[a, b]`, widened by one scan step on each side.
pub fn support(logp: &impl Fn(f64) -> f64, a: f64, b: f64, drop: f64) -> (f64, f64) {
    let n = 4001;
    let h = (b - a) / (n - 1) as f64;
    let vals: Vec<f64> = (0..n).map(|k| logp(a + k as f64 * h)).collect();
    let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let first = vals.iter().position(|&v| v > top - drop).unwrap();
    let last = vals.iter().rposition(|&v| v > top - drop).unwrap();
    assert!(first > 0 && last < n - 1, "scan range too narrow");
    (a + (first - 1) as f64 * h, a + (last + 1) as f64 * h)
}

/// Mean and its Monte Carlo standard error by batch means.
pub fn mean_and_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let size = n / batches;
    let m = xs.iter().sum::<f64>() / n as f64;
    let bm: Vec<f64> = (0..batches).map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let var = bm.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (m, (var / batches as f64).sqrt())
}
