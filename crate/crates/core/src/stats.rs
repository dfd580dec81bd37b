//! Small statistics toolbox: Wilson intervals, KS distance, least squares.

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pearson correlation of two equally long samples.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Half-width of the 95% Wilson score interval for `events` out of `trials`.
pub fn wilson_halfwidth(events: u64, trials: u64) -> f64 {
    if trials == 0 {
        return f64::NAN;
    }
    let n = trials as f64;
    let p = events as f64 / n;
    let z2 = Z95 * Z95;
    Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

/// Center of the 95% Wilson score interval.
pub fn wilson_center(events: u64, trials: u64) -> f64 {
    let n = trials as f64;
    let p = events as f64 / n;
    let z2 = Z95 * Z95;
    (p + z2 / (2.0 * n)) / (1.0 + z2 / n)
}

/// Binomial standard error of the empirical proportion.
pub fn proportion_stderr(events: u64, trials: u64) -> f64 {
    let n = trials as f64;
    let p = events as f64 / n;
    (p * (1.0 - p) / n).sqrt()
}

/// One-sample Kolmogorov-Smirnov distance. Sorts `samples` in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value `sqrt(-ln(alpha/2) / 2) / sqrt(n)`.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope (NaN for fewer than three points).
    pub slope_stderr: f64,
}

/// Ordinary least squares `y = intercept + slope * x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_stderr = if xs.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    LineFit {
        slope,
        intercept,
        r_squared,
        slope_stderr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 - 2.0 * x).collect();
        let fit = linear_fit(&xs, &ys);
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wilson_limits() {
        // p = 0 still has a positive half-width
        assert!(wilson_halfwidth(0, 100) > 0.0);
        let hw = wilson_halfwidth(500, 1000);
        // close to the Wald value for a large centred sample
        assert!((hw - Z95 * (0.25f64 / 1000.0).sqrt()).abs() < 1e-4);
        assert!((wilson_center(500, 1000) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ks_of_uniform_grid() {
        let mut xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_statistic(&mut xs, |x| x);
        assert!((d - 0.005).abs() < 1e-12);
        assert!((ks_critical(0.01, 100_000) - 0.005147).abs() < 1e-5);
    }
}
