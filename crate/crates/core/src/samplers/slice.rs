//! Univariate slice sampling with stepping out and shrinkage.

use super::{RandomStream, SamplerError};

/// Shrinkage proposals before the sampler gives up and keeps `current`.
const MAX_SHRINK: usize = 500;

/// One slice-sampling update from `current`.
///
/// The initial interval of size `width` is stepped out at most `max_steps`
/// times in total. Non-finite log densities away from `current` are treated
/// as outside the support.
pub fn slice_sample<F>(
    mut logdensity: F,
    current: f64,
    width: f64,
    max_steps: usize,
    rng: &mut RandomStream,
) -> Result<f64, SamplerError>
where
    F: FnMut(f64) -> f64,
{
    let f0 = logdensity(current);
    slice_step(logdensity, current, f0, width, max_steps, rng)
}

/// [`slice_sample`] for a caller that already knows `logdensity(current)`.
pub fn slice_step<F>(
    mut logdensity: F,
    current: f64,
    f0: f64,
    width: f64,
    max_steps: usize,
    rng: &mut RandomStream,
) -> Result<f64, SamplerError>
where
    F: FnMut(f64) -> f64,
{
    if !(width > 0.0 && width.is_finite()) {
        return Err(SamplerError::InvalidWidth(width));
    }
    if !f0.is_finite() {
        return Err(SamplerError::NonFiniteDensity { x: current });
    }
    let level = f0 - rng.exponential();
    let mut eval = |x: f64| {
        let v = logdensity(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };

    let mut left = current - width * rng.uniform();
    let mut right = left + width;
    let mut j = (max_steps as f64 * rng.uniform()).floor() as usize;
    let mut k = max_steps.saturating_sub(1).saturating_sub(j);
    while j > 0 && eval(left) > level {
        left -= width;
        j -= 1;
    }
    while k > 0 && eval(right) > level {
        right += width;
        k -= 1;
    }

    for _ in 0..MAX_SHRINK {
        let x = left + rng.uniform() * (right - left);
        if eval(x) > level {
            return Ok(x);
        }
        if x < current {
            left = x;
        } else {
            right = x;
        }
    }
    Ok(current)
}
