//! Fixed-length converse bounds and the normal approximation.
//!
//! The exact converse applies when the law of
//! `eta i_1(x; Y_1) + (1 - eta) i_2(x; Y_2)` (reference measure `P*`, outputs
//! conditionally independent) does not depend on the input `x`. The sum over
//! `n` uses is then encoder-independent and its CDF `F_n` is computed by
//! exact lattice convolution. The bound is
//! `log M <= inf{s : F_n(s) / 2 > eps + e^{-lambda}} + lambda`.

use serde::{Deserialize, Serialize};

use crate::channel::{output_dist, BroadcastPair, ChannelAnalysis, Dmc};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::stoch::pmf::IntPmf;
use crate::stoch::special::q_inv;

/// Two atoms closer than this (in nats) are the same atom.
pub const SNAP_TOL: f64 = 1e-9;
/// Masses closer than this are equal when comparing per-input laws.
pub const MASS_TOL: f64 = 1e-10;
/// Bins used when atoms do not fit a common lattice.
pub const QUANTIZATION_BINS: usize = 1 << 16;

/// A bound that may be vacuous (no finite value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum BoundValue {
    Finite(f64),
    Vacuous,
}

impl BoundValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            BoundValue::Finite(v) => Some(v),
            BoundValue::Vacuous => None,
        }
    }

    /// `+inf` for vacuous bounds.
    pub fn or_infinity(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "kebab-case")]
pub enum LambdaRule {
    Fixed(f64),
    LogN,
    /// Tightest bound over `lambda = log(n) 2^j`, `j = -3..=3`.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverseQuery {
    pub n: u64,
    pub epsilon: f64,
    pub lambda_rule: LambdaRule,
}

impl ConverseQuery {
    pub fn new(n: u64, epsilon: f64, lambda_rule: LambdaRule) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::OutOfRange(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
        }
        if let LambdaRule::Fixed(l) = lambda_rule {
            if !(l > 0.0) {
                return Err(Error::OutOfRange(format!("lambda must be positive, got {l}")));
            }
        }
        Ok(Self { n, epsilon, lambda_rule })
    }
}

/// Input-invariant single-letter law of the weighted density, stored as two
/// independent lattice components whose sum has that law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementLaw {
    pub components: [IntPmf; 2],
    /// Merged atoms `(value, probability)`, sorted by value.
    pub atoms: Vec<(f64, f64)>,
    /// Set when values were rounded up onto a quantization grid.
    pub approximate: bool,
}

impl IncrementLaw {
    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms.iter().map(|(v, p)| p * (v - m) * (v - m)).sum()
    }

    /// Distribution of the `n`-fold sum.
    pub fn sum_law(&self, n: u64, exec: Execution) -> Result<SumLaw> {
        let a = self.components[0].power(n, exec)?;
        let b = self.components[1].power(n, exec)?;
        let b_log_cdf = b.log_cdf();
        Ok(SumLaw { a, b, b_log_cdf })
    }
}

/// `S_n = A_n + B_n` with independent lattice parts.
#[derive(Debug, Clone)]
pub struct SumLaw {
    pub a: IntPmf,
    pub b: IntPmf,
    b_log_cdf: Vec<f64>,
}

impl SumLaw {
    fn b_cdf(&self, s: f64) -> f64 {
        let k = ((s - self.b.origin) / self.b.step + 1e-9).floor() as i64 - self.b.offset;
        if k < 0 {
            0.0
        } else if k as usize >= self.b.len() {
            1.0
        } else {
            self.b_log_cdf[k as usize].exp()
        }
    }

    /// `P[S_n <= s]`.
    pub fn cdf(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for (i, lp) in self.a.log_probs.iter().enumerate() {
            let fb = self.b_cdf(s - self.a.value(i));
            if fb > 0.0 {
                acc += (lp + fb.ln()).exp();
            }
        }
        acc.min(1.0)
    }

    pub fn mean(&self) -> f64 {
        self.a.mean() + self.b.mean()
    }

    pub fn variance(&self) -> f64 {
        self.a.variance() + self.b.variance()
    }

    pub fn support(&self) -> (f64, f64) {
        (self.a.value(0) + self.b.value(0), self.a.value(self.a.len() - 1) + self.b.value(self.b.len() - 1))
    }

    /// Smallest `s` (to within `1e-10` relative) with `P[S_n <= s] > level`.
    /// The returned point always satisfies the inequality.
    pub fn quantile_above(&self, level: f64) -> f64 {
        let (mut lo, mut hi) = self.support();
        let width = (hi - lo).max(1.0);
        lo -= 1e-6 * width;
        if self.cdf(lo) > level {
            return lo;
        }
        for _ in 0..200 {
            if hi - lo <= 1e-12 * width.max(hi.abs()) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) > level {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// Atoms of `scale * i(x; Y)` for one input, merged within `SNAP_TOL`.
fn scaled_density_atoms(w: &Dmc, q: &[f64], x: usize, scale: f64) -> Result<Vec<(f64, f64)>> {
    let mut atoms = Vec::new();
    for y in 0..w.num_outputs() {
        let p = w.get(x, y);
        if p == 0.0 {
            continue;
        }
        if q[y] <= 0.0 {
            return Err(Error::DivergentDensity { x, y });
        }
        atoms.push((scale * (p.ln() - q[y].ln()), p));
    }
    Ok(merge_atoms(atoms))
}

fn merge_atoms(mut atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (v, p) in atoms {
        match out.last_mut() {
            Some(last) if (v - last.0).abs() <= SNAP_TOL => last.1 += p,
            _ => out.push((v, p)),
        }
    }
    out
}

fn convolve_atoms(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &(va, pa) in a {
        for &(vb, pb) in b {
            out.push((va + vb, pa * pb));
        }
    }
    merge_atoms(out)
}

fn same_law(a: &[(f64, f64)], b: &[(f64, f64)]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| (x.0 - y.0).abs() <= SNAP_TOL && (x.1 - y.1).abs() <= MASS_TOL)
}

/// Places atoms on a lattice `origin + k step`, if one with at most
/// `max_points` points fits every atom to within `SNAP_TOL`.
fn snap_to_lattice(atoms: &[(f64, f64)], max_points: usize) -> Option<IntPmf> {
    let origin = atoms[0].0;
    if atoms.len() == 1 {
        return IntPmf::from_probs(origin, 0, 1.0, &[1.0]).ok().map(|mut p| {
            p.log_probs = vec![atoms[0].1.ln()];
            p
        });
    }
    let min_gap = atoms.windows(2).map(|w| w[1].0 - w[0].0).fold(f64::INFINITY, f64::min);
    for div in 1..=64u32 {
        let step = min_gap / div as f64;
        let ks: Vec<f64> = atoms.iter().map(|(v, _)| (v - origin) / step).collect();
        if ks.iter().zip(atoms).all(|(k, (v, _))| (origin + k.round() * step - v).abs() <= SNAP_TOL) {
            let len = ks.last()?.round() as usize + 1;
            if len > max_points {
                return None;
            }
            let mut probs = vec![0.0; len];
            for (k, (_, p)) in ks.iter().zip(atoms) {
                probs[k.round() as usize] += p;
            }
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            return IntPmf::from_probs(origin, 0, step, &probs).ok();
        }
    }
    None
}

/// Rounds every atom up to the next point of a `bins`-point grid over the
/// atom range. Rounding up makes the variable stochastically larger, so the
/// resulting converse can only get weaker (still valid).
fn quantize_up(atoms: &[(f64, f64)], bins: usize) -> Result<IntPmf> {
    let lo = atoms[0].0;
    let hi = atoms.last().map(|a| a.0).unwrap_or(lo);
    let step = if hi > lo { (hi - lo) / (bins - 1) as f64 } else { 1.0 };
    let mut probs = vec![0.0; bins];
    for (v, p) in atoms {
        let k = (((v - lo) / step) - 1e-12).ceil().max(0.0) as usize;
        probs[k.min(bins - 1)] += p;
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    IntPmf::from_probs(lo, 0, step, &probs)
}

/// The input-invariant law of the weighted single-letter density, or
/// `NotInvariant` if per-input laws differ.
pub fn increment_law(analysis: &ChannelAnalysis, pair: &BroadcastPair) -> Result<IncrementLaw> {
    let eta = analysis.eta;
    let p = &analysis.p_star.p;
    let q1 = output_dist(p, &pair.w1);
    let q2 = output_dist(p, &pair.w2);
    let mut reference: Option<(Vec<(f64, f64)>, Vec<(f64, f64)>, Vec<(f64, f64)>)> = None;
    for x in 0..pair.num_inputs() {
        let a = scaled_density_atoms(&pair.w1, &q1, x, eta)?;
        let b = scaled_density_atoms(&pair.w2, &q2, x, 1.0 - eta)?;
        let merged = convolve_atoms(&a, &b);
        match &reference {
            None => reference = Some((a, b, merged)),
            Some((_, _, m)) if !same_law(m, &merged) => return Err(Error::NotInvariant),
            _ => {}
        }
    }
    let (a, b, atoms) = reference.ok_or(Error::NotInvariant)?;
    let limit = 4096;
    if let (Some(ca), Some(cb)) = (snap_to_lattice(&a, limit), snap_to_lattice(&b, limit)) {
        return Ok(IncrementLaw { components: [ca, cb], atoms, approximate: false });
    }
    if let Some(c) = snap_to_lattice(&atoms, limit) {
        let zero = IntPmf::from_probs(0.0, 0, c.step, &[1.0])?;
        return Ok(IncrementLaw { components: [c, zero], atoms, approximate: false });
    }
    let c = quantize_up(&atoms, QUANTIZATION_BINS)?;
    let zero = IntPmf::from_probs(0.0, 0, c.step, &[1.0])?;
    Ok(IncrementLaw { components: [c, zero], atoms, approximate: true })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConverseResult {
    pub log_m: BoundValue,
    pub lambda_used: f64,
    pub approximate: bool,
}

fn lambda_candidates(n: u64, rule: LambdaRule) -> Vec<f64> {
    let log_n = (n as f64).ln();
    match rule {
        LambdaRule::Fixed(l) => vec![l],
        LambdaRule::LogN => vec![log_n],
        LambdaRule::Grid => (-3..=3).map(|j| log_n * 2f64.powi(j)).collect(),
    }
}

/// Converse bound from a precomputed sum law.
pub fn converse_from_sum_law(law: &SumLaw, epsilon: f64, lambda: f64) -> BoundValue {
    let level = 2.0 * (epsilon + (-lambda).exp());
    if !(lambda > 0.0) || level >= 1.0 {
        return BoundValue::Vacuous;
    }
    BoundValue::Finite(law.quantile_above(level) + lambda)
}

/// Exact converse on `log M` for increment-invariant channels.
pub fn converse_log_m(
    pair: &BroadcastPair,
    analysis: &ChannelAnalysis,
    query: &ConverseQuery,
    exec: Execution,
) -> Result<ConverseResult> {
    let law = increment_law(analysis, pair)?;
    converse_with_law(&law, query, exec)
}

pub fn converse_with_law(law: &IncrementLaw, query: &ConverseQuery, exec: Execution) -> Result<ConverseResult> {
    let sum = law.sum_law(query.n, exec)?;
    let mut best = ConverseResult { log_m: BoundValue::Vacuous, lambda_used: f64::NAN, approximate: law.approximate };
    for lambda in lambda_candidates(query.n, query.lambda_rule) {
        let v = converse_from_sum_law(&sum, query.epsilon, lambda);
        if v.or_infinity() < best.log_m.or_infinity() || best.lambda_used.is_nan() {
            best.log_m = v;
            best.lambda_used = lambda;
        }
    }
    Ok(best)
}

/// `K = max_x Var[eta i_1 + (1 - eta) i_2 | X = x]`.
pub fn chebyshev_k(analysis: &ChannelAnalysis) -> f64 {
    analysis.per_input_variance.iter().copied().fold(0.0, f64::max)
}

/// `n C + sqrt(K n / (1 - 2(eps + 1/n))) + log n`; vacuous once
/// `eps + 1/n >= 1/2`.
pub fn converse_chebyshev(analysis: &ChannelAnalysis, n: u64, epsilon: f64) -> BoundValue {
    let nf = n as f64;
    let denom = 1.0 - 2.0 * (epsilon + 1.0 / nf);
    if !(denom > 0.0) {
        return BoundValue::Vacuous;
    }
    let k = chebyshev_k(analysis);
    BoundValue::Finite(nf * analysis.capacity_c + (k * nf / denom).sqrt() + nf.ln())
}

/// `n C - sqrt(n V) Q^{-1}(2 eps)`.
pub fn normal_approx_feedback(analysis: &ChannelAnalysis, n: u64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::OutOfRange(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    let nf = n as f64;
    Ok(nf * analysis.capacity_c - (nf * analysis.v_weighted).sqrt() * q_inv(2.0 * epsilon)?)
}
