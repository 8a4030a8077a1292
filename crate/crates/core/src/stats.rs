//! Small numerical helpers shared across the crate: empirical quantiles,
//! log-space reductions and a one-sample Kolmogorov-Smirnov test.

/// Empirical quantile with linear interpolation between order statistics at
/// plotting position `p * (n + 1)` (Hyndman-Fan definition 6).
///
/// This is the definition used for knot and jump-point placement. Positions
/// outside `[1, n]` clamp to the extreme order statistics. `sorted` must be
/// sorted ascending and non-empty.
pub fn quantile_type6(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = p * (n as f64 + 1.0);
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}

/// Empirical quantile at position `p * (n - 1)` on zero-based order
/// statistics (Hyndman-Fan definition 7). Used for credible intervals.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = p.clamp(0.0, 1.0) * (n as f64 - 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log(mean(exp(values)))`; exact for a constant sequence.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + (values.iter().map(|v| (v - max).exp()).sum::<f64>() / values.len() as f64).ln()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function, Chebyshev fit with fractional error below
/// 1.2e-7 everywhere.
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
///
/// Returns `(D, p)` where the p-value uses the asymptotic Kolmogorov
/// distribution with Stephens' small-sample correction.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    (d, kolmogorov_pvalue(d, sorted.len()))
}

/// Upper-tail probability of the KS statistic `d` for sample size `n`.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// In-place `exp` over a slice, written without branches or library calls
/// so the loop vectorizes. Agrees with `f64::exp` to a few ulp on
/// `[-708, 709]`; inputs are clamped to that range.
pub fn exp_in_place(xs: &mut [f64]) {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // 1.5 * 2^52: adding it rounds to an integer held in the low mantissa bits.
    const SHIFTER: f64 = 6_755_399_441_055_744.0;
    for x in xs.iter_mut() {
        let v = x.clamp(-708.0, 709.0);
        let shifted = v * LOG2E + SHIFTER;
        let n = shifted - SHIFTER;
        let r = (v - n * LN2_HI) - n * LN2_LO;
        // Taylor series of exp on |r| <= ln(2)/2, truncated after r^12.
        let mut p = 1.0 / 479_001_600.0;
        p = p * r + 1.0 / 39_916_800.0;
        p = p * r + 1.0 / 3_628_800.0;
        p = p * r + 1.0 / 362_880.0;
        p = p * r + 1.0 / 40_320.0;
        p = p * r + 1.0 / 5_040.0;
        p = p * r + 1.0 / 720.0;
        p = p * r + 1.0 / 120.0;
        p = p * r + 1.0 / 24.0;
        p = p * r + 1.0 / 6.0;
        p = p * r + 0.5;
        p = p * r + 1.0;
        p = p * r + 1.0;
        let scale = f64::from_bits(shifted.to_bits().wrapping_add(1023) << 52);
        *x = p * scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_exp_matches_std() {
        let xs: Vec<f64> = (0..200_001).map(|k| -708.0 + 1417.0 * k as f64 / 200_000.0).collect();
        let mut ys = xs.clone();
        exp_in_place(&mut ys);
        for (x, y) in xs.iter().zip(&ys) {
            let e = x.exp();
            assert!(((y - e) / e).abs() < 1e-15, "exp({x}): {y} vs {e}");
        }
        let mut small = vec![0.0, 1e-300, -1e-17, 0.5, -0.5];
        exp_in_place(&mut small);
        assert_eq!(small[0], 1.0);
        assert_eq!(small[1], 1.0);
    }

    #[test]
    fn type6_hits_integer_positions_exactly() {
        let xs: Vec<f64> = (1..=99).map(f64::from).collect();
        assert_eq!(quantile_type6(&xs, 0.25), 25.0);
        assert_eq!(quantile_type6(&xs, 0.5), 50.0);
        assert_eq!(quantile_type6(&xs, 0.75), 75.0);
        assert_eq!(quantile_type6(&xs, 0.001), 1.0);
        assert_eq!(quantile_type6(&xs, 0.999), 99.0);
    }

    #[test]
    fn type7_matches_direct_order_statistics() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        assert_eq!(quantile_type7(&xs, 0.0), 1.0);
        assert_eq!(quantile_type7(&xs, 1.0), 16.0);
        assert_eq!(quantile_type7(&xs, 0.5), 4.0);
        // h = 0.1 * 4 = 0.4 -> 1 + 0.4 * (2 - 1)
        assert!((quantile_type7(&xs, 0.1) - 1.4).abs() < 1e-15);
    }

    #[test]
    fn log_mean_exp_is_stable() {
        let v = [-1000.0, -1000.0];
        assert!((log_mean_exp(&v) + 1000.0).abs() < 1e-12);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 2e-7);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 2e-7);
        assert!((normal_cdf(-1.0) - 0.158_655_253_931_457).abs() < 2e-7);
    }

    #[test]
    fn ks_detects_gross_mismatch() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let (_, p_ok) = ks_test(&xs, |x| x.clamp(0.0, 1.0));
        assert!(p_ok > 0.99);
        let (_, p_bad) = ks_test(&xs, |x| (x * x).clamp(0.0, 1.0));
        assert!(p_bad < 1e-6);
    }
}
