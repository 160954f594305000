//! Small statistics helpers for Monte Carlo assertions.

/// Asymptotic Kolmogorov critical constant c(α) = sqrt(−ln(α/2)/2).
pub fn ks_constant(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// One-sample KS statistic sup |F_n − F|. Sorts `sample` in place.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in sample.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Critical value for the one-sample KS test at level α.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    ks_constant(alpha) / (n as f64).sqrt()
}

/// Two-sample KS statistic. Sorts both inputs in place.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Critical value for the two-sample KS test at level α.
pub fn ks_two_sample_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ks_constant(alpha) * ((n + m) / (n * m)).sqrt()
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Sample covariance and the standard error of the covariance estimate
/// (from the variance of the centred products).
pub fn covariance_with_se(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mx, _) = mean_var(xs);
    let (my, _) = mean_var(ys);
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let (cov, var) = mean_var(&prods);
    (cov, (var / n).sqrt())
}
