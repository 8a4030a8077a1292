//! Adaptive rejection sampling with a tangent upper hull and chord squeeze.

use super::{RandomStream, SamplerError};
use crate::stats::log_sum_exp;

const MAX_PROPOSALS: usize = 10_000;

/// Tolerance on slope increases attributed to rounding rather than a
/// convex target.
fn slope_tol(g: f64) -> f64 {
    1e-9 * (1.0 + g.abs())
}

#[derive(Debug)]
struct Envelope {
    x: Vec<f64>,
    h: Vec<f64>,
    g: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl Envelope {
    fn check_concave(&self) -> Result<(), SamplerError> {
        for i in 1..self.x.len() {
            if self.g[i] > self.g[i - 1] + slope_tol(self.g[i]) {
                return Err(SamplerError::NotLogConcave { x: self.x[i] });
            }
        }
        Ok(())
    }

    fn check_bracket(&self) -> Result<(), SamplerError> {
        let k = self.x.len();
        if self.lower == f64::NEG_INFINITY && self.g[0] <= 0.0 {
            return Err(SamplerError::BadInitialization(format!(
                "slope {} at the lowest point {} is not positive",
                self.g[0], self.x[0]
            )));
        }
        if self.upper == f64::INFINITY && self.g[k - 1] >= 0.0 {
            return Err(SamplerError::BadInitialization(format!(
                "slope {} at the highest point {} is not negative",
                self.g[k - 1],
                self.x[k - 1]
            )));
        }
        Ok(())
    }

    fn tangent(&self, i: usize, x: f64) -> f64 {
        self.h[i] + self.g[i] * (x - self.x[i])
    }

    /// Segment boundaries `z_0 = lower, ..., z_k = upper`.
    fn breakpoints(&self) -> Vec<f64> {
        let k = self.x.len();
        let mut z = Vec::with_capacity(k + 1);
        z.push(self.lower);
        for i in 0..k - 1 {
            let (x0, x1) = (self.x[i], self.x[i + 1]);
            let dg = self.g[i] - self.g[i + 1];
            let zi = if dg.abs() <= slope_tol(self.g[i]) {
                0.5 * (x0 + x1)
            } else {
                (self.h[i + 1] - self.h[i] - x1 * self.g[i + 1] + x0 * self.g[i]) / dg
            };
            z.push(zi.clamp(x0, x1));
        }
        z.push(self.upper);
        z
    }

    fn log_mass(&self, i: usize, a: f64, b: f64) -> f64 {
        let g = self.g[i];
        let w = b - a;
        if g > 0.0 {
            self.tangent(i, b) + (-(-g * w).exp_m1()).ln() - g.ln()
        } else if g < 0.0 {
            self.tangent(i, a) + (-(g * w).exp_m1()).ln() - (-g).ln()
        } else {
            self.h[i] + w.ln()
        }
    }

    fn squeeze(&self, x: f64) -> f64 {
        let k = self.x.len();
        if x < self.x[0] || x > self.x[k - 1] {
            return f64::NEG_INFINITY;
        }
        let j = self.x.partition_point(|&v| v <= x).clamp(1, k - 1);
        let (x0, x1) = (self.x[j - 1], self.x[j]);
        ((x1 - x) * self.h[j - 1] + (x - x0) * self.h[j]) / (x1 - x0)
    }

    fn insert(&mut self, x: f64, h: f64, g: f64) -> Result<(), SamplerError> {
        let j = self.x.partition_point(|&v| v < x);
        if self.x.get(j) == Some(&x) {
            return Ok(());
        }
        if j > 0 && g > self.g[j - 1] + slope_tol(g) {
            return Err(SamplerError::NotLogConcave { x });
        }
        if j < self.x.len() && self.g[j] > g + slope_tol(g) {
            return Err(SamplerError::NotLogConcave { x });
        }
        self.x.insert(j, x);
        self.h.insert(j, h);
        self.g.insert(j, g);
        Ok(())
    }
}

/// One exact draw from the log-concave density whose log and derivative
/// `logdensity(x) = (log f(x), d/dx log f(x))` are given up to a constant.
///
/// `init` needs at least two distinct points inside `(lower, upper)`; on an
/// unbounded side they must bracket the mode.
pub fn ars_sample<F>(
    mut logdensity: F,
    lower: f64,
    upper: f64,
    init: &[f64],
    rng: &mut RandomStream,
) -> Result<f64, SamplerError>
where
    F: FnMut(f64) -> (f64, f64),
{
    let mut xs: Vec<f64> = init.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    if xs.len() < 2 {
        return Err(SamplerError::BadInitialization("need two distinct initial points".into()));
    }
    if xs.iter().any(|&x| !(x > lower && x < upper)) {
        return Err(SamplerError::BadInitialization(format!(
            "initial points must lie inside ({lower}, {upper})"
        )));
    }
    let mut env = Envelope { x: Vec::new(), h: Vec::new(), g: Vec::new(), lower, upper };
    for &x in &xs {
        let (h, g) = logdensity(x);
        if !h.is_finite() || !g.is_finite() {
            return Err(SamplerError::NonFiniteDensity { x });
        }
        env.x.push(x);
        env.h.push(h);
        env.g.push(g);
    }
    env.check_concave()?;
    env.check_bracket()?;

    for _ in 0..MAX_PROPOSALS {
        let z = env.breakpoints();
        let k = env.x.len();
        let masses: Vec<f64> = (0..k).map(|i| env.log_mass(i, z[i], z[i + 1])).collect();
        let total = log_sum_exp(&masses);
        if !total.is_finite() {
            return Err(SamplerError::BadInitialization("envelope has no finite mass".into()));
        }
        // Pick a segment, then invert its exponential CDF.
        let mut u = rng.uniform();
        let mut i = 0;
        loop {
            let p = (masses[i] - total).exp();
            if u <= p || i == k - 1 {
                break;
            }
            u -= p;
            i += 1;
        }
        let (a, b) = (z[i], z[i + 1]);
        let g = env.g[i];
        let v = rng.uniform();
        let x = if g > 0.0 {
            b + (v + (1.0 - v) * (-g * (b - a)).exp()).ln() / g
        } else if g < 0.0 {
            a + (1.0 - v + v * (g * (b - a)).exp()).ln() / g
        } else {
            a + v * (b - a)
        };
        let x = x.clamp(a, b);
        if !x.is_finite() {
            continue;
        }
        let upper_hull = env.tangent(i, x);
        let log_w = rng.uniform().ln();
        if log_w <= env.squeeze(x) - upper_hull {
            return Ok(x);
        }
        let (h, gx) = logdensity(x);
        if h.is_nan() || gx.is_nan() {
            return Err(SamplerError::NonFiniteDensity { x });
        }
        if h > upper_hull + 1e-8 * (1.0 + h.abs()) {
            return Err(SamplerError::NotLogConcave { x });
        }
        if log_w <= h - upper_hull {
            return Ok(x);
        }
        if h.is_finite() && gx.is_finite() {
            env.insert(x, h, gx)?;
        }
    }
    Err(SamplerError::Exhausted(MAX_PROPOSALS))
}
