//! Random-coding union bound with minimum-distance decoding and balancing
//! feedback on the parallel-BSC pair.
//!
//! At every use the encoder sends the better sub-channel (crossover `q1`) to
//! the decoder that currently has more errors, and the worse one (`q2`) to
//! the other; on ties a fair coin decides. The error counts `(Z_1, Z_2)`
//! then form a Markov chain, solved here by dynamic programming over
//! `(Z_1 - Z_2, Z_1)`.

use serde::{Deserialize, Serialize};

use crate::antisym::make_parallel_bsc;
use crate::channel::BroadcastPair;
use crate::error::{Error, Result};
use crate::stoch::special::{binomial_pmf, log_binomial_half_cdf};

/// Folded mass above this aborts the DP.
pub const MAX_TRUNCATION_MASS: f64 = 1e-12;
/// Entries below this are dropped from the active window (mass tracked).
const NEGLIGIBLE: f64 = 1e-300;

/// Default half-width of the difference axis.
pub fn default_band(n: u64, q1: f64, q2: f64) -> usize {
    8 * ((q1.max(q2) * n as f64).sqrt().ceil() as usize).max(1)
}

fn check_crossovers(q1: f64, q2: f64) -> Result<()> {
    for q in [q1, q2] {
        if !(0.0..=0.5).contains(&q) {
            return Err(Error::OutOfRange(format!("crossover {q} not in [0, 1/2]")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledPmf {
    pub n: u64,
    /// `z1[t] = P[Z_1 = t]`.
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    /// `diff[d + n] = P[Z_1 - Z_2 = d]`.
    pub diff: Vec<f64>,
    pub band: usize,
    pub truncation_mass: f64,
}

impl CoupledPmf {
    pub fn mean_z1(&self) -> f64 {
        self.z1.iter().enumerate().map(|(t, p)| t as f64 * p).sum()
    }

    pub fn mean_z2(&self) -> f64 {
        self.z2.iter().enumerate().map(|(t, p)| t as f64 * p).sum()
    }

    /// `P[|Z_1 - Z_2| >= v]`.
    pub fn diff_tail(&self, v: u64) -> f64 {
        let n = self.n as i64;
        self.diff
            .iter()
            .enumerate()
            .filter(|(i, _)| (*i as i64 - n).unsigned_abs() >= v)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Exact distribution of the coupled error counts after `n` uses. With
/// `band = Some(d)` states with `|Z_1 - Z_2| > d` are dropped and their mass
/// reported; `None` keeps every state.
pub fn coupled_pmf(n: u64, q1: f64, q2: f64, band: Option<usize>) -> Result<CoupledPmf> {
    check_crossovers(q1, q2)?;
    let nu = n as usize;
    let band = band.unwrap_or(nu).min(nu);
    let width = 2 * band + 1;
    // rows[d + band][z1]
    let mut rows = vec![vec![0.0f64; nu + 1]; width];
    let mut windows = vec![(1usize, 0usize); width]; // (lo, hi) inclusive, empty when lo > hi
    rows[band][0] = 1.0;
    windows[band] = (0, 0);
    let mut next = rows.clone();
    let mut next_windows = windows.clone();
    let mut truncated = 0.0f64;
    let mut dropped = 0.0f64;

    // Branches (weight, P[decoder-1 error], P[decoder-2 error]); the tie
    // state splits over the fair coin.
    let laws = |d: i64| -> [(f64, f64, f64); 2] {
        if d > 0 {
            [(1.0, q1, q2), (0.0, 0.0, 0.0)]
        } else if d < 0 {
            [(1.0, q2, q1), (0.0, 0.0, 0.0)]
        } else {
            [(0.5, q1, q2), (0.5, q2, q1)]
        }
    };

    for _step in 0..n {
        for r in next.iter_mut() {
            r.iter_mut().for_each(|v| *v = 0.0);
        }
        next_windows.iter_mut().for_each(|w| *w = (usize::MAX, 0));
        for di in 0..width {
            let (lo, hi) = windows[di];
            if lo > hi {
                continue;
            }
            let d = di as i64 - band as i64;
            for (weight, a, b) in laws(d) {
                if weight == 0.0 {
                    continue;
                }
                let moves = [
                    ((1.0 - a) * (1.0 - b), 0i64, 0usize),
                    (a * (1.0 - b), 1, 1),
                    ((1.0 - a) * b, -1, 0),
                    (a * b, 0, 1),
                ];
                for (pm, dd, dz) in moves {
                    let pm = pm * weight;
                    if pm == 0.0 {
                        continue;
                    }
                    let target = d + dd;
                    if target.unsigned_abs() as usize > band {
                        truncated += pm * rows[di][lo..=hi].iter().sum::<f64>();
                        continue;
                    }
                    let ti = (target + band as i64) as usize;
                    let src = &rows[di][lo..=hi];
                    let dst = &mut next[ti][lo + dz..=hi + dz];
                    for (o, s) in dst.iter_mut().zip(src) {
                        *o += pm * s;
                    }
                    let w = &mut next_windows[ti];
                    w.0 = w.0.min(lo + dz);
                    w.1 = w.1.max(hi + dz);
                }
            }
        }
        // shrink windows past negligible entries
        for di in 0..width {
            let (mut lo, mut hi) = next_windows[di];
            if lo == usize::MAX {
                next_windows[di] = (1, 0);
                continue;
            }
            while lo <= hi && next[di][lo] < NEGLIGIBLE {
                dropped += next[di][lo];
                next[di][lo] = 0.0;
                lo += 1;
            }
            while hi >= lo && hi > 0 && next[di][hi] < NEGLIGIBLE {
                dropped += next[di][hi];
                next[di][hi] = 0.0;
                hi -= 1;
            }
            next_windows[di] = if lo <= hi { (lo, hi) } else { (1, 0) };
        }
        std::mem::swap(&mut rows, &mut next);
        std::mem::swap(&mut windows, &mut next_windows);
        if truncated > MAX_TRUNCATION_MASS {
            return Err(Error::TruncationMassExceeded { mass: truncated });
        }
    }

    let mut z1 = vec![0.0; nu + 1];
    let mut z2 = vec![0.0; nu + 1];
    let mut diff = vec![0.0; 2 * nu + 1];
    for di in 0..width {
        let d = di as i64 - band as i64;
        let (lo, hi) = windows[di];
        if lo > hi {
            continue;
        }
        for t in lo..=hi {
            let m = rows[di][t];
            z1[t] += m;
            let t2 = t as i64 - d;
            if (0..=n as i64).contains(&t2) {
                z2[t2 as usize] += m;
            }
            diff[(d + n as i64) as usize] += m;
        }
    }
    Ok(CoupledPmf { n, z1, z2, diff, band, truncation_mass: truncated + dropped })
}

/// `log(M - 1)` for `log M >= 0` in nats; `-inf` when `M = 1`.
fn log_m_minus_one(log_m: f64) -> f64 {
    if log_m <= 0.0 {
        f64::NEG_INFINITY
    } else if log_m > 40.0 {
        log_m + (-(-log_m).exp()).ln_1p()
    } else {
        (log_m.exp_m1()).ln()
    }
}

/// `sum_t P(t) min{1, (M-1) P[Bin(n, 1/2) <= t]}` for a pmf on `0..=n`.
pub fn rcu_sum(pmf: &[f64], log_m: f64, log_half_cdf: &[f64]) -> f64 {
    let lm1 = log_m_minus_one(log_m);
    if lm1 == f64::NEG_INFINITY {
        return 0.0;
    }
    let mut acc = 0.0;
    for (t, p) in pmf.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        let inner = (lm1 + log_half_cdf[t]).min(0.0).exp();
        acc += p * inner;
    }
    acc.clamp(0.0, 1.0)
}

/// Error bound for `M = e^{log_m}` codewords, from a precomputed pmf.
pub fn rcu_epsilon_from(pmf: &CoupledPmf, log_m: f64) -> f64 {
    rcu_sum(&pmf.z1, log_m, &log_binomial_half_cdf(pmf.n))
}

/// The RCU error bound at blocklength `n` with `M = e^{log_m}` messages.
pub fn rcu_epsilon(n: u64, log_m: f64, q1: f64, q2: f64) -> Result<f64> {
    let pmf = coupled_pmf(n, q1, q2, Some(default_band(n, q1, q2)))?;
    Ok(rcu_epsilon_from(&pmf, log_m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcuMax {
    pub n: u64,
    pub log_m: f64,
    /// Exact message count when it fits in 64 bits.
    pub m_integer: Option<u64>,
    pub epsilon_achieved: f64,
    pub truncation_mass: f64,
    /// The search hit its upper limit: every `M` up to it is feasible.
    pub saturated: bool,
}

/// Largest `M` whose bound is at most `epsilon`, from a precomputed pmf.
pub fn rcu_max_log_m_from(pmf: &CoupledPmf, epsilon: f64) -> Result<RcuMax> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::OutOfRange(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    let n = pmf.n;
    let cdf = log_binomial_half_cdf(n);
    let eps_at = |lm: f64| rcu_sum(&pmf.z1, lm, &cdf);
    let ln2 = std::f64::consts::LN_2;
    let upper = n as f64 * ln2 + 50.0;
    if eps_at(upper) <= epsilon {
        return Ok(RcuMax {
            n,
            log_m: upper,
            m_integer: None,
            epsilon_achieved: eps_at(upper),
            truncation_mass: pmf.truncation_mass,
            saturated: true,
        });
    }
    if eps_at(2f64.ln()) > epsilon {
        return Ok(RcuMax { n, log_m: 0.0, m_integer: Some(1), epsilon_achieved: 0.0, truncation_mass: pmf.truncation_mass, saturated: false });
    }
    let (mut lo, mut hi) = (2f64.ln(), upper);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eps_at(mid) <= epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Small codebooks: search the integer M exactly.
    let mut m_integer = None;
    if hi < 43.0 {
        let (mut a, mut b) = (lo.exp().floor() as u64, hi.exp().ceil() as u64 + 1);
        a = a.max(2);
        while eps_at((a as f64).ln()) > epsilon && a > 2 {
            a -= 1;
        }
        while eps_at((b as f64).ln()) <= epsilon {
            b += 1;
        }
        while b - a > 1 {
            let mid = a + (b - a) / 2;
            if eps_at((mid as f64).ln()) <= epsilon {
                a = mid;
            } else {
                b = mid;
            }
        }
        m_integer = Some(a);
        lo = (a as f64).ln();
    }
    Ok(RcuMax { n, log_m: lo, m_integer, epsilon_achieved: eps_at(lo), truncation_mass: pmf.truncation_mass, saturated: false })
}

pub fn rcu_max_log_m(n: u64, epsilon: f64, q1: f64, q2: f64) -> Result<RcuMax> {
    let pmf = coupled_pmf(n, q1, q2, Some(default_band(n, q1, q2)))?;
    rcu_max_log_m_from(&pmf, epsilon)
}

/// Min-distance RCU bound for a BSC(`q`) with `n` uses, no feedback.
pub fn rcu_bsc(n: u64, log_m: f64, q: f64) -> f64 {
    let pmf = binomial_pmf(n, q);
    rcu_sum(&pmf, log_m, &log_binomial_half_cdf(n))
}

/// Detects the parallel-BSC family and returns `(q1, q2)`.
pub fn detect_parallel_bsc(pair: &BroadcastPair) -> Result<(f64, f64)> {
    if pair.num_inputs() != 4 || pair.num_outputs() != 2 {
        return Err(Error::WrongChannelFamily);
    }
    let q1 = pair.w1.get(0, 1);
    let q2 = pair.w1.get(2, 1);
    let canonical = make_parallel_bsc(q1, q2)?;
    let close = |a: &BroadcastPair, b: &BroadcastPair| {
        (0..4).all(|x| (0..2).all(|y| (a.w1.get(x, y) - b.w1.get(x, y)).abs() < 1e-12 && (a.w2.get(x, y) - b.w2.get(x, y)).abs() < 1e-12))
    };
    if !close(pair, &canonical) {
        return Err(Error::WrongChannelFamily);
    }
    Ok((q1, q2))
}

/// Upper bound on the best no-feedback error probability for `m_tilde`
/// messages over `n_b` uses of the parallel-BSC pair: with uniform inputs
/// each decoder sees a BSC with crossover `(q1 + q2)/2`, and a union over
/// the two decoders doubles the single-decoder RCU bound.
pub fn epsilon_star_parallel_bsc(n_b: u64, log_m_tilde: f64, q1: f64, q2: f64) -> Result<f64> {
    check_crossovers(q1, q2)?;
    Ok((2.0 * rcu_bsc(n_b, log_m_tilde, 0.5 * (q1 + q2))).min(1.0))
}

/// Same as [`epsilon_star_parallel_bsc`] for a pair that must be in the
/// parallel-BSC family.
pub fn epsilon_star_for_pair(pair: &BroadcastPair, n_b: u64, log_m_tilde: f64) -> Result<f64> {
    let (q1, q2) = detect_parallel_bsc(pair)?;
    epsilon_star_parallel_bsc(n_b, log_m_tilde, q1, q2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_steps_point_mass() {
        let p = coupled_pmf(0, 0.05, 0.1, None).unwrap();
        assert_eq!(p.z1, vec![1.0]);
    }

    #[test]
    fn one_step_closed_form() {
        let (q1, q2) = (0.05, 0.1);
        let p = coupled_pmf(1, q1, q2, None).unwrap();
        assert!((p.z1[1] - 0.5 * (q1 + q2)).abs() < 1e-15);
    }

    #[test]
    fn balance_of_marginals() {
        let p = coupled_pmf(300, 0.05, 0.1, None).unwrap();
        assert!((p.mean_z1() - p.mean_z2()).abs() < 1e-12);
        for (a, b) in p.z1.iter().zip(&p.z2) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p.z1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn band_matches_exact() {
        let exact = coupled_pmf(400, 0.05, 0.1, None).unwrap();
        let banded = coupled_pmf(400, 0.05, 0.1, Some(default_band(400, 0.05, 0.1))).unwrap();
        let tv: f64 = exact.z1.iter().zip(&banded.z1).map(|(a, b)| (a - b).abs()).sum();
        assert!(tv < 1e-12);
        assert!(banded.truncation_mass <= MAX_TRUNCATION_MASS);
    }

    #[test]
    fn narrow_band_refuses() {
        let err = coupled_pmf(400, 0.25, 0.25, Some(2)).unwrap_err();
        assert!(matches!(err, Error::TruncationMassExceeded { .. }));
    }

    #[test]
    fn epsilon_edges() {
        assert_eq!(rcu_epsilon(50, 0.0, 0.05, 0.1).unwrap(), 0.0);
        assert!((rcu_epsilon(50, 200.0, 0.05, 0.1).unwrap() - 1.0).abs() < 1e-12);
        let a = rcu_epsilon(100, 20.0, 0.05, 0.1).unwrap();
        let b = rcu_epsilon(100, 21.0, 0.05, 0.1).unwrap();
        assert!(a <= b);
    }

    #[test]
    fn max_m_contract() {
        let pmf = coupled_pmf(60, 0.05, 0.1, None).unwrap();
        let r = rcu_max_log_m_from(&pmf, 1e-2).unwrap();
        let m = r.m_integer.unwrap();
        assert!(rcu_epsilon_from(&pmf, (m as f64).ln()) <= 1e-2);
        assert!(rcu_epsilon_from(&pmf, ((m + 1) as f64).ln()) > 1e-2);
    }

    #[test]
    fn saturation_at_unit_epsilon() {
        let r = rcu_max_log_m(40, 1.0, 0.05, 0.1).unwrap();
        assert!(r.saturated);
    }

    #[test]
    fn epsilon_star_edges() {
        assert_eq!(epsilon_star_parallel_bsc(60, 0.0, 0.05, 0.1).unwrap(), 0.0);
        assert_eq!(epsilon_star_parallel_bsc(0, 2f64.ln(), 0.05, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn family_detection() {
        let pair = make_parallel_bsc(0.05, 0.1).unwrap();
        assert_eq!(detect_parallel_bsc(&pair).unwrap(), (0.05, 0.1));
        let z = crate::antisym::make_antisym_z(0.3).unwrap();
        assert_eq!(detect_parallel_bsc(&z), Err(Error::WrongChannelFamily));
    }
}
