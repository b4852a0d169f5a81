//! Small statistical helpers: normal CDF, least-squares slopes, k-statistics.

use serde::{Deserialize, Serialize};
use libm::erfc;

/// `Φ(x / σ)` for a centered normal with variance `sigma_sq`.
pub fn normal_cdf(x: f64, sigma_sq: f64) -> f64 {
    0.5 * erfc(-x / (2.0 * sigma_sq).sqrt())
}

/// Unweighted least-squares slope and intercept of `ys` on `xs`.
pub fn ls_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    ls_fit(&lx, &ly).map(|(s, _)| s)
}

/// Unbiased sample cumulants `k1..k4` (Fisher's k-statistics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KStats {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

pub fn k_statistics(xs: &[f64]) -> KStats {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    KStats {
        k1: mean,
        k2: n / (n - 1.0) * m2,
        k3: n * n / ((n - 1.0) * (n - 2.0)) * m3,
        k4: n * n * ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2) / ((n - 1.0) * (n - 2.0) * (n - 3.0)),
    }
}

/// k-statistics of the full sample with standard errors from batch means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KStatsWithErrors {
    pub value: KStats,
    pub stderr: KStats,
    pub batches: usize,
}

pub fn k_statistics_batched(xs: &[f64], batches: usize) -> KStatsWithErrors {
    let value = k_statistics(xs);
    let size = xs.len() / batches;
    let per: Vec<KStats> = (0..batches)
        .map(|b| k_statistics(&xs[b * size..(b + 1) * size]))
        .collect();
    let se = |f: fn(&KStats) -> f64| {
        let vals: Vec<f64> = per.iter().map(f).collect();
        let m = vals.iter().sum::<f64>() / batches as f64;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
        (var / batches as f64).sqrt()
    };
    KStatsWithErrors {
        value,
        stderr: KStats {
            k1: se(|k| k.k1),
            k2: se(|k| k.k2),
            k3: se(|k| k.k3),
            k4: se(|k| k.k4),
        },
        batches,
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
