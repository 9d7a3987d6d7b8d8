/// Largest population variance `k` values in `[0, 1]` can have:
/// `floor(k/2) * ceil(k/2) / k^2` (0.25 for two values).
pub fn max_variance(k: usize) -> f64 {
    if k < 2 {
        return 0.0;
    }
    let lo = (k / 2) as f64;
    let hi = k.div_ceil(2) as f64;
    lo * hi / (k * k) as f64
}

fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Variance of proportions divided by its maximum, so the result lies in
/// `[0, 1]`. Fewer than two values give 0.
pub fn scaled_variance(rates: &[f64]) -> f64 {
    if rates.len() < 2 {
        return 0.0;
    }
    (population_variance(rates) / max_variance(rates.len())).clamp(0.0, 1.0)
}

/// Difference-style disparity: `|a - b|` for two groups, scaled variance for more.
pub(crate) fn disparity(rates: &[f64]) -> f64 {
    match rates {
        [a, b] => (a - b).abs(),
        _ => scaled_variance(rates),
    }
}
