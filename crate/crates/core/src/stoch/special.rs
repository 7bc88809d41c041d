//! Special functions used throughout the bounds: Gaussian tail and its
//! inverse, binary entropy, log-binomials and log-domain summation.

use libm::{erfc, lgamma as ln_gamma};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Gaussian tail `Q(x) = P[N(0,1) > x]`.
pub fn q_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse Gaussian tail. A closed-form seed from `erfc_inv` is refined by
/// Newton steps on `Q(x) - p`; `Q` is monotone so the steps never overshoot
/// by more than a rounding error near the root.
pub fn q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::OutOfRange(format!("q_inv requires 0 < p < 1, got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut x = std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..8 {
        let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density == 0.0 {
            break;
        }
        let step = (q_tail(x) - p) / density;
        x += step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

/// Binary entropy in nats; `h(0) = h(1) = 0`.
pub fn binary_entropy_nats(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange(format!("binary entropy needs p in [0,1], got {p}")));
    }
    Ok(xlogx_neg(p) + xlogx_neg(1.0 - p))
}

fn xlogx_neg(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.ln()
    }
}

/// `log C(n, k)` via log-gamma. Returns `-inf` for `k > n`.
pub fn log_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    let (n, k) = (n as f64, k as f64);
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// `log(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log Σ e^{x_i}` with a max shift and pairwise accumulation of the
/// shifted terms.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let shifted: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    max + pairwise_sum(&shifted).ln()
}

/// Pairwise (cascade) summation; error grows like `O(log n)` ulps.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Cumulative `log P[Bin(n, 1/2) <= t]` for `t = 0..=n`.
pub fn log_binomial_half_cdf(n: u64) -> Vec<f64> {
    let ln2 = std::f64::consts::LN_2;
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = f64::NEG_INFINITY;
    for k in 0..=n {
        acc = log_add_exp(acc, log_binomial(n, k) - n as f64 * ln2);
        out.push(acc.min(0.0));
    }
    out
}

/// Binomial pmf `P[Bin(n, p) = k]` for all `k`, computed in the log domain.
pub fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            let lp = log_binomial(n, k) + xlogp(k as f64, p) + xlogp((n - k) as f64, 1.0 - p);
            lp.exp()
        })
        .collect()
}

fn xlogp(count: f64, p: f64) -> f64 {
    if count == 0.0 {
        0.0
    } else if p <= 0.0 {
        f64::NEG_INFINITY
    } else {
        count * p.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_tail_reference_values() {
        // mpmath, 30 digits
        assert!((q_tail(0.0) - 0.5).abs() < 1e-16);
        assert!((q_tail(1.0) - 0.158655253931457051414767454368).abs() < 1e-15);
        assert!((q_tail(3.0) - 0.00134989803163009452665181476).abs() < 1e-17);
        assert!((q_tail(-2.0) - 0.977249868051820792799709029).abs() < 1e-15);
        let rel = (q_tail(8.0) - 6.22096057427178413283e-16).abs() / 6.22096057427178413283e-16;
        assert!(rel < 1e-12);
    }

    #[test]
    fn q_inv_round_trips() {
        assert_eq!(q_inv(0.5).unwrap(), 0.0);
        for &p in &[1e-9, 1e-6, 2e-3, 0.01, 0.1, 0.3, 0.49, 0.51, 0.9, 0.999] {
            let x = q_inv(p).unwrap();
            assert!((q_tail(x) - p).abs() < 1e-12, "p={p}");
        }
        assert!(q_inv(0.0).is_err());
        assert!(q_inv(1.0).is_err());
    }

    #[test]
    fn entropy_endpoints() {
        assert_eq!(binary_entropy_nats(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy_nats(1.0).unwrap(), 0.0);
        assert!((binary_entropy_nats(0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(binary_entropy_nats(1.5).is_err());
    }

    #[test]
    fn log_binomial_edges() {
        assert_eq!(log_binomial(10, 0), 0.0);
        assert_eq!(log_binomial(10, 10), 0.0);
        assert!((log_binomial(4, 2) - 6f64.ln()).abs() < 1e-13);
        assert_eq!(log_binomial(3, 4), f64::NEG_INFINITY);
    }

    #[test]
    fn binomial_half_cdf_ends_at_one() {
        let c = log_binomial_half_cdf(200);
        assert!(c[200].abs() < 1e-12);
        assert!((c[0] + 200.0 * std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + std::f64::consts::LN_2)).abs() < 1e-12);
        assert!((log_add_exp(0.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
