//! Drift-switching random walk whose increments push it back toward zero,
//! and an empirical check of its exponential two-sided tail bound.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::rng::{domain, RngStream};
use super::stats::clopper_pearson_upper;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};

/// Zero-mean noise added to the drift of each increment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Noise {
    /// `sigma * Z` with `Z` standard normal conditioned on `|Z| <= trunc`.
    TruncatedGaussian { sigma: f64, trunc: f64 },
    /// `+delta` or `-delta` with equal probability.
    Rademacher { delta: f64 },
}

impl Noise {
    /// Largest `beta` for which `P[N >= v] <= exp(-beta v^2)` and the mirror
    /// inequality hold for all `v >= 0`, or `None` if this family cannot
    /// certify one.
    ///
    /// For a Gaussian truncated at `T` standard deviations the conditional
    /// tail is at most `Q(t) / (1 - 2Q(T))`, and the Chernoff bound
    /// `Q(t) <= exp(-t^2/2) / 2` gives `exp(-t^2/2)` once `Q(T) <= 1/4`.
    pub fn certified_beta(&self) -> Option<f64> {
        match *self {
            Noise::TruncatedGaussian { sigma, trunc } => {
                if sigma > 0.0 && super::special::q_tail(trunc) <= 0.25 {
                    Some(1.0 / (2.0 * sigma * sigma))
                } else {
                    None
                }
            }
            // Hoeffding for a variable bounded in [-delta, delta].
            Noise::Rademacher { delta } => (delta > 0.0).then(|| 1.0 / (2.0 * delta * delta)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Noise::TruncatedGaussian { sigma, trunc } => loop {
                let z: f64 = StandardNormal.sample(rng);
                if z.abs() <= trunc {
                    return sigma * z;
                }
            },
            Noise::Rademacher { delta } => {
                if rng.random::<bool>() {
                    delta
                } else {
                    -delta
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizationSpec {
    pub mu1: f64,
    pub mu2: f64,
    pub beta: f64,
    pub c: f64,
    pub noise1: Noise,
    pub noise2: Noise,
}

impl StabilizationSpec {
    /// Builds a spec whose `beta` is the one certified by the noise laws.
    pub fn new(mu1: f64, mu2: f64, c: f64, noise1: Noise, noise2: Noise) -> Result<Self> {
        let b1 = noise1.certified_beta();
        let b2 = noise2.certified_beta();
        let beta = match (b1, b2) {
            (Some(a), Some(b)) => a.min(b),
            _ => return Err(Error::SpecViolation("noise law has no certified subgaussian parameter".into())),
        };
        let spec = Self { mu1, mu2, beta, c, noise1, noise2 };
        spec.validate()?;
        Ok(spec)
    }

    /// The drift margin required for the tail bound to apply.
    pub fn required_margin(&self) -> f64 {
        (std::f64::consts::PI / self.beta).sqrt() * (self.c * self.c / 4.0).exp()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu1 > 0.0 && self.mu2 < 0.0) {
            return Err(Error::SpecViolation(format!(
                "need mu1 > 0 > mu2, got mu1 = {}, mu2 = {}",
                self.mu1, self.mu2
            )));
        }
        if !(self.beta > 0.0) || !(self.c >= 1.0) {
            return Err(Error::SpecViolation("need beta > 0 and c >= 1".into()));
        }
        for noise in [self.noise1, self.noise2] {
            match noise.certified_beta() {
                Some(b) if b >= self.beta => {}
                _ => {
                    return Err(Error::SpecViolation(format!(
                        "beta = {} is not certified by noise {noise:?}",
                        self.beta
                    )))
                }
            }
        }
        let margin = self.mu1.min(-self.mu2);
        if margin < self.required_margin() {
            return Err(Error::SpecViolation(format!(
                "drift margin {margin} below required {}",
                self.required_margin()
            )));
        }
        Ok(())
    }

    /// The tail bound `2 exp(-c sqrt(beta) (v - mu1 + mu2))`, capped at 1.
    pub fn tail_bound(&self, v: f64) -> f64 {
        (2.0 * (-self.c * self.beta.sqrt() * (v - self.mu1 + self.mu2)).exp()).min(1.0)
    }

    fn increment<R: Rng + ?Sized>(&self, first: bool, rng: &mut R) -> f64 {
        if first {
            self.mu1 + self.noise1.sample(rng)
        } else {
            self.mu2 + self.noise2.sample(rng)
        }
    }

    /// One path of length `ell`; returns `Y_ell`.
    pub fn run_path<R: Rng + ?Sized>(&self, ell: u64, rng: &mut R) -> f64 {
        if ell == 0 {
            return 0.0;
        }
        let mut y = self.increment(false, rng);
        for _ in 1..ell {
            y += self.increment(y < 0.0, rng);
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub v: f64,
    pub hits: u64,
    pub empirical: f64,
    pub upper_ci: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub ell: u64,
    pub trials: u64,
    pub alpha: f64,
    pub points: Vec<TailPoint>,
}

impl TailReport {
    pub fn violations(&self) -> Vec<&TailPoint> {
        self.points.iter().filter(|p| p.upper_ci > p.bound).collect()
    }
}

/// Evenly spaced `v` values from 0 up to where the bound drops to twice the
/// smallest probability `trials` samples can resolve at level `alpha`.
/// Beyond that point even zero hits cannot separate the two sides.
pub fn default_v_grid(spec: &StabilizationSpec, trials: u64, alpha: f64, points: usize) -> Vec<f64> {
    let floor = clopper_pearson_upper(0, trials, alpha);
    let v_max = spec.mu1 - spec.mu2 + (1.0 / floor).ln() / (spec.c * spec.beta.sqrt());
    (0..points).map(|i| v_max * i as f64 / (points - 1).max(1) as f64).collect()
}

/// Simulates `trials` paths of length `ell` and compares the empirical tail
/// `P[|Y_ell| >= v]` (with a one-sided Clopper-Pearson bound at `alpha`)
/// against the analytic tail bound on `v_grid`.
pub fn simulate_stabilization(
    spec: &StabilizationSpec,
    ell: u64,
    trials: u64,
    seed: u64,
    v_grid: &[f64],
    alpha: f64,
    exec: Execution,
) -> Result<TailReport> {
    spec.validate()?;
    let ends = map_indexed(exec, trials, |t| {
        let mut rng = RngStream::for_trial(seed, domain::STABILIZATION, t).rng();
        spec.run_path(ell, &mut rng).abs()
    });
    let points = v_grid
        .iter()
        .map(|&v| {
            let hits = ends.iter().filter(|&&y| y >= v).count() as u64;
            TailPoint {
                v,
                hits,
                empirical: hits as f64 / trials as f64,
                upper_ci: clopper_pearson_upper(hits, trials, alpha),
                bound: spec.tail_bound(v),
            }
        })
        .collect();
    Ok(TailReport { ell, trials, alpha, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(sigma: f64, trunc: f64) -> Noise {
        Noise::TruncatedGaussian { sigma, trunc }
    }

    #[test]
    fn refuses_small_margin() {
        let err = StabilizationSpec::new(1.0, -1.0, 1.0, gauss(1.0, 2.0), gauss(1.0, 2.0)).unwrap_err();
        assert!(matches!(err, Error::SpecViolation(_)));
    }

    #[test]
    fn refuses_uncertified_truncation() {
        assert!(gauss(1.0, 0.5).certified_beta().is_none());
        assert!(gauss(1.0, 0.7).certified_beta().is_some());
    }

    #[test]
    fn rademacher_path_stays_bounded() {
        let noise = Noise::Rademacher { delta: 0.5 };
        let spec = StabilizationSpec::new(2.0, -2.0, 1.0, noise, noise).unwrap();
        let mut rng = RngStream::new(1, 0).rng();
        for _ in 0..200 {
            let y = spec.run_path(50, &mut rng);
            assert!(y.abs() <= 2.0 + 0.5 + 1e-12);
        }
    }

    #[test]
    fn first_step_uses_second_law() {
        let spec = StabilizationSpec::new(4.0, -3.5, 1.0, gauss(1.0, 2.0), gauss(1.0, 2.0)).unwrap();
        let n = 20_000;
        let mut rng = RngStream::new(5, 0).rng();
        let mean = (0..n).map(|_| spec.run_path(1, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean + 3.5).abs() < 5.0 / (n as f64).sqrt());
    }

    #[test]
    fn small_run_respects_bound() {
        let spec = StabilizationSpec::new(3.3, -3.3, 1.0, gauss(1.0, 2.0), gauss(1.0, 2.0)).unwrap();
        let grid = default_v_grid(&spec, 2000, 1e-3, 16);
        let report = simulate_stabilization(&spec, 200, 2000, 3, &grid, 1e-3, Execution::Parallel).unwrap();
        assert!(report.violations().is_empty());
    }
}
