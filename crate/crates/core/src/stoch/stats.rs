//! Confidence bounds for Monte Carlo estimates.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

/// A point estimate with a confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// One-sided Clopper-Pearson upper bound: the `p` with
/// `P[Bin(n, p) <= k] = alpha`.
pub fn clopper_pearson_upper(k: u64, n: u64, alpha: f64) -> f64 {
    if n == 0 || k >= n {
        return 1.0;
    }
    // P[Bin(n,p) <= k] = 1 - I_p(k+1, n-k), decreasing in p.
    let tail = |p: f64| 1.0 - beta_reg((k + 1) as f64, (n - k) as f64, p);
    bisect(|p| tail(p) > alpha, k as f64 / n as f64, 1.0)
}

/// One-sided Clopper-Pearson lower bound: the `p` with
/// `P[Bin(n, p) >= k] = alpha`.
pub fn clopper_pearson_lower(k: u64, n: u64, alpha: f64) -> f64 {
    if k == 0 || n == 0 {
        return 0.0;
    }
    // P[Bin(n,p) >= k] = I_p(k, n-k+1), increasing in p.
    let tail = |p: f64| beta_reg(k as f64, (n - k + 1) as f64, p);
    bisect(|p| tail(p) < alpha, 0.0, k as f64 / n as f64)
}

/// Returns the boundary between the region where `below` holds (left) and
/// where it fails (right), to about 1e-15 absolute.
fn bisect(below: impl Fn(f64) -> bool, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Two-sided Clopper-Pearson interval at confidence `1 - alpha`.
pub fn clopper_pearson(k: u64, n: u64, alpha: f64) -> Estimate {
    Estimate {
        value: if n == 0 { 0.0 } else { k as f64 / n as f64 },
        lower: clopper_pearson_lower(k, n, alpha / 2.0),
        upper: clopper_pearson_upper(k, n, alpha / 2.0),
    }
}

/// Sample mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Empirical-Bernstein interval (Maurer and Pontil) for the mean of
/// variables supported on an interval of width `range`; each side holds
/// with probability `1 - delta/2`.
pub fn empirical_bernstein(xs: &[f64], range: f64, delta: f64) -> Estimate {
    let (mean, var) = mean_var(xs);
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return Estimate { value: mean, lower: f64::NEG_INFINITY, upper: f64::INFINITY };
    }
    let log_term = (4.0 / delta).ln();
    let half = (2.0 * var * log_term / n).sqrt() + 7.0 * range * log_term / (3.0 * (n - 1.0));
    Estimate { value: mean, lower: mean - half, upper: mean + half }
}
