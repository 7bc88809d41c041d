//! Exact probability mass functions on a shifted one-dimensional lattice,
//! stored as log-probabilities so long convolution chains never underflow.

use serde::{Deserialize, Serialize};

use super::special::{log_sum_exp, pairwise_sum};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};

/// Default cap on the number of lattice points a power may occupy.
pub const DEFAULT_SUPPORT_LIMIT: usize = 1 << 22;

/// Entries with log-probability below this are dropped after each
/// convolution. Their total mass is tracked in `pruned_mass`.
const PRUNE_LOG: f64 = -800.0;

/// A pmf whose atom `i` sits at `origin + (offset + i) * step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntPmf {
    pub origin: f64,
    pub offset: i64,
    pub step: f64,
    pub log_probs: Vec<f64>,
    /// Upper bound on probability mass discarded by pruning.
    pub pruned_mass: f64,
}

impl IntPmf {
    pub fn point_mass(value: f64) -> Self {
        Self { origin: value, offset: 0, step: 1.0, log_probs: vec![0.0], pruned_mass: 0.0 }
    }

    /// Builds a pmf from linear-domain probabilities.
    pub fn from_probs(origin: f64, offset: i64, step: f64, probs: &[f64]) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidDistribution(format!("lattice step must be positive, got {step}")));
        }
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidDistribution("pmf entries must be finite and nonnegative".into()));
        }
        let total = pairwise_sum(probs);
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidDistribution(format!("pmf sums to {total}")));
        }
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        let mut pmf = Self { origin, offset, step, log_probs, pruned_mass: 0.0 };
        pmf.trim();
        Ok(pmf)
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn value(&self, i: usize) -> f64 {
        self.origin + (self.offset + i as i64) as f64 * self.step
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        log_sum_exp(&self.log_probs).exp()
    }

    pub fn mean(&self) -> f64 {
        let terms: Vec<f64> =
            (0..self.len()).map(|i| self.log_probs[i].exp() * self.value(i)).collect();
        pairwise_sum(&terms)
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let terms: Vec<f64> = (0..self.len())
            .map(|i| {
                let d = self.value(i) - mu;
                self.log_probs[i].exp() * d * d
            })
            .collect();
        pairwise_sum(&terms)
    }

    /// `P[S <= s]`, with a relative snap of `1e-9` lattice steps so values
    /// that land on an atom up to rounding count as included.
    pub fn cdf(&self, s: f64) -> f64 {
        let k = ((s - self.origin) / self.step + 1e-9).floor() as i64 - self.offset;
        if k < 0 {
            return 0.0;
        }
        let upto = (k as usize + 1).min(self.len());
        log_sum_exp(&self.log_probs[..upto]).exp().min(1.0)
    }

    /// Cumulative log-probabilities, `out[i] = log P[S <= value(i)]`.
    pub fn log_cdf(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut acc = f64::NEG_INFINITY;
        for &l in &self.log_probs {
            acc = super::special::log_add_exp(acc, l);
            out.push(acc.min(0.0));
        }
        out
    }

    /// Sum of two independent variables on the same lattice step.
    pub fn convolve(&self, other: &Self, exec: Execution) -> Result<Self> {
        self.convolve_limited(other, exec, DEFAULT_SUPPORT_LIMIT)
    }

    fn convolve_limited(&self, other: &Self, exec: Execution, limit: usize) -> Result<Self> {
        if (self.step - other.step).abs() > 1e-12 * self.step.max(other.step) {
            return Err(Error::DimensionMismatch(format!(
                "lattice steps differ: {} vs {}",
                self.step, other.step
            )));
        }
        let size = self.len() + other.len() - 1;
        if size > limit {
            return Err(Error::SupportOverflow { size, limit });
        }
        let (a, b) = (&self.log_probs, &other.log_probs);
        // Each output index is computed independently with a fixed
        // summation order, so the result does not depend on `exec`.
        let log_probs = map_indexed(exec, size as u64, |k| {
            let k = k as usize;
            let lo = k.saturating_sub(b.len() - 1);
            let hi = k.min(a.len() - 1);
            let terms: Vec<f64> = (lo..=hi).map(|i| a[i] + b[k - i]).collect();
            log_sum_exp(&terms)
        });
        let mut out = Self {
            origin: self.origin + other.origin,
            offset: self.offset + other.offset,
            step: self.step,
            log_probs,
            pruned_mass: self.pruned_mass + other.pruned_mass,
        };
        out.trim();
        Ok(out)
    }

    /// `n`-fold self-convolution by binary powering.
    pub fn power(&self, n: u64, exec: Execution) -> Result<Self> {
        self.power_limited(n, exec, DEFAULT_SUPPORT_LIMIT)
    }

    pub fn power_limited(&self, n: u64, exec: Execution, limit: usize) -> Result<Self> {
        let worst = (self.len() as u128 - 1) * n as u128 + 1;
        if worst > limit as u128 && self.pruned_estimate_exceeds(n, limit) {
            return Err(Error::SupportOverflow { size: worst.min(usize::MAX as u128) as usize, limit });
        }
        let mut result = Self::point_mass(0.0);
        result.step = self.step;
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                result = result.convolve_limited(&base, exec, limit)?;
            }
            e >>= 1;
            if e > 0 {
                base = base.convolve_limited(&base, exec, limit)?;
            }
        }
        Ok(result)
    }

    // Pruning keeps supports near `O(sqrt(n))` wide for most laws, so only
    // refuse up front when even the spread of a Gaussian of matching
    // variance cannot fit.
    fn pruned_estimate_exceeds(&self, n: u64, limit: usize) -> bool {
        let sd = (self.variance() * n as f64).sqrt() / self.step;
        80.0 * sd + self.len() as f64 > limit as f64
    }

    /// Drops negligible tails at both ends and tracks the discarded mass.
    fn trim(&mut self) {
        let keep = |l: &f64| *l > PRUNE_LOG;
        let first = self.log_probs.iter().position(keep).unwrap_or(0);
        let last = self.log_probs.iter().rposition(keep).unwrap_or(0);
        let dropped: Vec<f64> = self.log_probs[..first]
            .iter()
            .chain(&self.log_probs[last + 1..])
            .copied()
            .collect();
        if !dropped.is_empty() {
            self.pruned_mass += log_sum_exp(&dropped).exp();
        }
        self.log_probs = self.log_probs[first..=last].to_vec();
        self.offset += first as i64;
    }

    /// Total-variation distance between two pmfs on the same lattice.
    pub fn tv_distance(&self, other: &Self) -> f64 {
        let lo = self.offset.min(other.offset);
        let hi = (self.offset + self.len() as i64).max(other.offset + other.len() as i64);
        let at = |p: &Self, k: i64| -> f64 {
            let i = k - p.offset;
            if i < 0 || i >= p.len() as i64 {
                0.0
            } else {
                p.log_probs[i as usize].exp()
            }
        };
        let diffs: Vec<f64> = (lo..hi).map(|k| (at(self, k) - at(other, k)).abs()).collect();
        0.5 * pairwise_sum(&diffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin() -> IntPmf {
        IntPmf::from_probs(0.0, 0, 1.0, &[0.5, 0.5]).unwrap()
    }

    #[test]
    fn fair_coin_squared() {
        let p = coin().power(2, Execution::Sequential).unwrap();
        let probs = p.probs();
        assert_eq!(p.offset, 0);
        for (got, want) in probs.iter().zip([0.25, 0.5, 0.25]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn point_mass_power() {
        let p = IntPmf::point_mass(0.7).power(5, Execution::Sequential).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p.value(0) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(IntPmf::from_probs(0.0, 0, 1.0, &[0.5, 0.4]).is_err());
        assert!(IntPmf::from_probs(0.0, 0, 0.0, &[1.0]).is_err());
        assert!(IntPmf::from_probs(0.0, 0, 1.0, &[1.5, -0.5]).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let wide = IntPmf::from_probs(0.0, 0, 1.0, &[0.25; 4]).unwrap();
        let err = wide.power_limited(1000, Execution::Sequential, 64).unwrap_err();
        assert!(matches!(err, Error::SupportOverflow { .. }));
    }

    #[test]
    fn cdf_counts_atoms() {
        let p = coin().power(3, Execution::Sequential).unwrap();
        assert!((p.cdf(-0.5) - 0.0).abs() < 1e-15);
        assert!((p.cdf(0.0) - 0.125).abs() < 1e-15);
        assert!((p.cdf(1.0) - 0.5).abs() < 1e-15);
        assert!((p.cdf(10.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn modes_are_bit_identical() {
        let base = IntPmf::from_probs(0.3, -1, 0.5, &[0.2, 0.5, 0.3]).unwrap();
        let a = base.power(300, Execution::Sequential).unwrap();
        let b = base.power(300, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
