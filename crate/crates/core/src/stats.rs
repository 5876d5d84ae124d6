//! Summary statistics used by the Monte-Carlo checks and the sweep reports.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Standard error of the mean assuming independent draws.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Standard error of the mean from non-overlapping batch means; robust to
/// residual autocorrelation in a Markov chain.
pub fn batch_means_std_error(xs: &[f64], batches: usize) -> f64 {
    let b = batches.max(2).min(xs.len().max(2));
    let size = xs.len() / b;
    if size == 0 {
        return std_error(xs);
    }
    let means: Vec<f64> = xs.chunks_exact(size).take(b).map(mean).collect();
    (variance(&means) / means.len() as f64).sqrt()
}

/// Effective sample size implied by batch means (capped at the sample count).
pub fn effective_sample_size(xs: &[f64], batches: usize) -> f64 {
    let n = xs.len() as f64;
    let iid = variance(xs) / n;
    let bm = batch_means_std_error(xs, batches).powi(2);
    if bm <= 0.0 || iid <= 0.0 {
        return n;
    }
    (n * iid / bm).min(n)
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Wilson score interval at 95% for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt()) / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
