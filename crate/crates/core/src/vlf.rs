//! Variable-length feedback codes: the Fano-type converse and a Monte Carlo
//! instantiation of the two-phase achievability bound.
//!
//! Phase one sends `L` blocks of `m` i.i.d. symbols whose law is one of two
//! balancing distributions, chosen after every block in favour of the
//! decoder with the smaller accumulated density. Phase two sends i.i.d.
//! `P*` symbols; decoder `k` stops at the first `n >= L m` with
//! `S_{k,n} >= gamma`, or at `tau_max`. The block-type sequence costs
//! `n_b` extra uses with error `eps*`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{BroadcastPair, ChannelAnalysis, DirectionVector, InputDist};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::flf_sim::{balancing_direction, icbrt, kappa_for, multinomial, DensityTable, DirectionRule, EpsStar};
use crate::stoch::rng::{domain, RngStream};
use crate::stoch::special::binary_entropy_nats;
use crate::stoch::stats::{clopper_pearson, empirical_bernstein, Estimate};

/// Confidence level of every interval reported here.
pub const CI_ALPHA: f64 = 0.01;
/// Upper limit for the `kappa` search.
pub const MAX_KAPPA: u64 = 64;

/// `(ell C + h(eps)) / (1 - eps)`: no VLF code with average length `ell`
/// and error `eps` carries more nats.
pub fn vlf_converse_log_m(ell: f64, epsilon: f64, capacity_c: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::OutOfRange(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(ell >= 0.0) || !(capacity_c >= 0.0) {
        return Err(Error::OutOfRange("length and capacity must be nonnegative".into()));
    }
    Ok((ell * capacity_c + binary_entropy_nats(epsilon)?) / (1.0 - epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VlfOptions {
    /// Requested `grad I_1(v0)`; the shift is capped (see `shift_cap`).
    pub rho: f64,
    pub direction: DirectionRule,
    /// Largest allowed `|v0| ell_bar^{-1/3}` entry as a fraction of
    /// `min_x P*(x)`.
    pub shift_cap: f64,
    /// Balancing on (the scheme) or off (every block uses `P*`).
    pub balancing: bool,
    /// Fixes `kappa`; `None` starts at the smallest integer above
    /// `log 2 / C` and raises it until `eps* <= eps_star_target`.
    pub kappa: Option<u64>,
    /// Target for the `kappa` search; `None` means `1 / ell_bar`.
    pub eps_star_target: Option<f64>,
    pub eps_star: EpsStar,
}

impl Default for VlfOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            direction: DirectionRule::OutputNeutral,
            shift_cap: 0.5,
            balancing: true,
            kappa: None,
            eps_star_target: None,
            eps_star: EpsStar::ParallelBsc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlfParams {
    pub ell_bar: u64,
    #[serde(rename = "L")]
    pub big_l: u64,
    pub m: u64,
    pub kappa_min: u64,
    pub kappa: u64,
    pub n_b: u64,
    pub tau_max: u64,
    pub gamma: f64,
    /// Stop-at-zero probability; set by [`vlf_achievable_point`].
    pub q: f64,
    /// `log M` with `M = floor(exp(gamma - log ell_bar))`.
    pub log_m: f64,
    /// Balancing laws `P*  -/+ v0 ell_bar^{-1/3}` (decoder 1 favoured first).
    pub types: [Vec<f64>; 2],
    pub v0: DirectionVector,
    /// `grad I_1(v0)` after the cap.
    pub rho_effective: f64,
    pub p_star: Vec<f64>,
    pub eta: f64,
    pub capacity_c: f64,
    pub balancing: bool,
    pub epsilon_star: f64,
    pub eps_star_source: EpsStar,
}

impl VlfParams {
    pub fn first_phase(&self) -> u64 {
        self.big_l * self.m
    }

    pub fn validate(&self, pair: &BroadcastPair) -> Result<()> {
        if self.big_l < 1 || self.m < 1 {
            return Err(Error::BlocklengthTooSmall("need L, m >= 1".into()));
        }
        if self.tau_max <= self.first_phase() {
            return Err(Error::OutOfRange(format!("tau_max = {} must exceed L m = {}", self.tau_max, self.first_phase())));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::OutOfRange(format!("q = {} is not a probability", self.q)));
        }
        for t in self.types.iter().chain(std::iter::once(&self.p_star)) {
            InputDist::new(t.clone())?;
            if t.len() != pair.num_inputs() {
                return Err(Error::DimensionMismatch("law length differs from input alphabet".into()));
            }
        }
        Ok(())
    }
}

/// `log floor(e^a)`, `None` when the floor is zero.
fn log_floor_exp(a: f64) -> Option<f64> {
    if a < 0.0 {
        return None;
    }
    if a > 36.0 {
        return Some(a);
    }
    Some(a.exp().floor().ln())
}

pub fn default_vlf_params(ell_bar: u64, analysis: &ChannelAnalysis, pair: &BroadcastPair) -> Result<VlfParams> {
    default_vlf_params_with(ell_bar, analysis, pair, &VlfOptions::default())
}

pub fn default_vlf_params_with(ell_bar: u64, analysis: &ChannelAnalysis, pair: &BroadcastPair, opts: &VlfOptions) -> Result<VlfParams> {
    let c = analysis.capacity_c;
    if !(c > 0.0) {
        return Err(Error::OutOfRange("capacity must be positive".into()));
    }
    let lb = ell_bar as f64;
    let slack = lb.sqrt() * lb.ln();
    let minus = lb - slack;
    let big_l = if minus >= 1.0 { icbrt(minus.floor() as u64) } else { 0 };
    if big_l < 2 {
        return Err(Error::BlocklengthTooSmall(format!("ell_bar = {ell_bar} leaves fewer than two first-phase blocks")));
    }
    let m = (minus / big_l as f64).floor() as u64;
    let tau_max = (lb + slack).floor() as u64;
    let gamma = c * lb - 2.0 * lb.cbrt() * lb.ln();
    let log_m = log_floor_exp(gamma - lb.ln())
        .filter(|v| *v > 0.0)
        .ok_or_else(|| Error::BlocklengthTooSmall(format!("ell_bar = {ell_bar} gives fewer than two messages")))?;

    let p_star = analysis.p_star.p.clone();
    let min_p = p_star.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_p > 0.0) {
        return Err(Error::OutOfRange("balancing needs P*(x) > 0 for every input".into()));
    }
    let delta = lb.cbrt().recip();
    let mut v0 = balancing_direction(pair, &analysis.p_star, opts.rho, opts.direction)?;
    let sup = v0.v.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cap = opts.shift_cap * min_p;
    if sup * delta > cap {
        v0 = v0.scaled(cap / (sup * delta));
    }
    let rho_effective = crate::channel::directional_derivative(&pair.w1, &analysis.p_star, &v0)?;
    let shift = |sign: f64| -> Vec<f64> {
        let mut t: Vec<f64> = p_star.iter().zip(&v0.v).map(|(p, v)| (p + sign * v * delta).max(0.0)).collect();
        let s: f64 = t.iter().sum();
        t.iter_mut().for_each(|v| *v /= s);
        t
    };
    let types = [shift(1.0), shift(-1.0)];

    let kappa_min = kappa_for(2.0, c);
    let log_m_tilde = big_l as f64 * 2f64.ln();
    let (kappa, epsilon_star) = match opts.kappa {
        Some(k) => (k, opts.eps_star.resolve(pair, k * big_l, log_m_tilde)?),
        None => {
            let target = opts.eps_star_target.unwrap_or(1.0 / lb);
            let mut k = kappa_min;
            loop {
                let e = opts.eps_star.resolve(pair, k * big_l, log_m_tilde)?;
                if e <= target || k >= MAX_KAPPA || matches!(opts.eps_star, EpsStar::Supplied(_)) {
                    break (k, e);
                }
                k += 1;
            }
        }
    };
    let params = VlfParams {
        ell_bar,
        big_l,
        m,
        kappa_min,
        kappa,
        n_b: kappa * big_l,
        tau_max,
        gamma,
        q: 0.0,
        log_m,
        types,
        v0,
        rho_effective,
        p_star,
        eta: analysis.eta,
        capacity_c: c,
        balancing: opts.balancing,
        epsilon_star,
        eps_star_source: opts.eps_star,
    };
    params.validate(pair)?;
    Ok(params)
}

/// What to simulate besides the true-codeword stopping times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VlfMode {
    /// Error via `(M - 1) e^{-gamma}` and the `tau_max` hitting
    /// probability. Serialized as `remark5`, the CLI's name for it.
    #[default]
    #[serde(rename = "remark5")]
    Analytic,
    /// Also runs an independent competing codeword and estimates
    /// `P[tau_k >= bar tau_k]` directly.
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VlfTrial {
    pub tau: [u64; 2],
    /// `S_{1,Lm} - S_{2,Lm}`.
    pub phase_one_gap: f64,
    /// `tau_k >= bar tau_k`, coupled mode only.
    pub competitor_wins: [bool; 2],
}

fn sample_input<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = p
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = f64::INFINITY;
    }
    out
}

struct Prepared {
    /// Block laws by index: two balancing laws, then `P*`.
    laws: [Vec<f64>; 3],
    cdfs: [Vec<f64>; 3],
    tables: [DensityTable; 3],
}

fn prepare(params: &VlfParams, pair: &BroadcastPair) -> Prepared {
    let laws = [params.types[0].clone(), params.types[1].clone(), params.p_star.clone()];
    Prepared {
        cdfs: [cumulative(&laws[0]), cumulative(&laws[1]), cumulative(&laws[2])],
        tables: [DensityTable::new(pair, &laws[0]), DensityTable::new(pair, &laws[1]), DensityTable::new(pair, &laws[2])],
        laws,
    }
}

fn run_trial(params: &VlfParams, pair: &BroadcastPair, prep: &Prepared, mode: VlfMode, rng: &mut ChaCha8Rng) -> VlfTrial {
    let mut s = [0.0f64; 2];
    let mut sb = [0.0f64; 2];
    let nx = pair.num_inputs();
    let mut comp = vec![0u64; nx];
    let mut ny = vec![0u64; pair.num_outputs()];
    for ell in 0..params.big_l {
        let b = if !params.balancing {
            2
        } else if ell == 0 {
            1
        } else {
            usize::from(s[0] >= s[1])
        };
        match mode {
            VlfMode::Analytic => {
                multinomial(&prep.laws[b], params.m, rng, &mut comp);
                for (x, &cx) in comp.iter().enumerate() {
                    if cx == 0 {
                        continue;
                    }
                    for (k, acc) in s.iter_mut().enumerate() {
                        multinomial(pair.component(k).row(x), cx, rng, &mut ny);
                        for (y, &c) in ny.iter().enumerate() {
                            if c > 0 {
                                *acc += c as f64 * prep.tables[b].t[k][x][y];
                            }
                        }
                    }
                }
            }
            VlfMode::Coupled => {
                for _ in 0..params.m {
                    let x = sample_input(&prep.cdfs[b], rng);
                    let xb = sample_input(&prep.cdfs[b], rng);
                    for k in 0..2 {
                        let y = pair.component(k).sample(x, rng);
                        s[k] += prep.tables[b].t[k][x][y];
                        sb[k] += prep.tables[b].t[k][xb][y];
                    }
                }
            }
        }
    }
    let lm = params.first_phase();
    let phase_one_gap = s[0] - s[1];
    let gamma = params.gamma;
    let mut tau = [None::<u64>; 2];
    let mut taub = [None::<u64>; 2];
    for k in 0..2 {
        if s[k] >= gamma {
            tau[k] = Some(lm);
        }
        if mode == VlfMode::Coupled && sb[k] >= gamma {
            taub[k] = Some(lm);
        }
    }
    let coupled = mode == VlfMode::Coupled;
    let mut n = lm;
    let star = &prep.tables[2];
    while n < params.tau_max {
        let undecided = tau.iter().any(Option::is_none) || (coupled && (0..2).any(|k| taub[k].is_none() && tau[k].is_none()));
        if !undecided {
            break;
        }
        n += 1;
        let x = sample_input(&prep.cdfs[2], rng);
        let xb = if coupled { sample_input(&prep.cdfs[2], rng) } else { 0 };
        for k in 0..2 {
            let y = pair.component(k).sample(x, rng);
            s[k] += star.t[k][x][y];
            if tau[k].is_none() && s[k] >= gamma {
                tau[k] = Some(n);
            }
            if coupled {
                sb[k] += star.t[k][xb][y];
                if taub[k].is_none() && sb[k] >= gamma {
                    taub[k] = Some(n);
                }
            }
        }
    }
    let cap = |t: Option<u64>| t.unwrap_or(params.tau_max).min(params.tau_max);
    let tau = [cap(tau[0]), cap(tau[1])];
    let competitor_wins = if coupled { [tau[0] >= cap(taub[0]), tau[1] >= cap(taub[1])] } else { [false; 2] };
    VlfTrial { tau, phase_one_gap, competitor_wins }
}

/// Runs `trials` independent realizations; trial `i` uses stream `i`.
pub fn simulate_vlf_trials(
    params: &VlfParams,
    pair: &BroadcastPair,
    trials: u64,
    seed: u64,
    mode: VlfMode,
    exec: Execution,
) -> Result<Vec<VlfTrial>> {
    params.validate(pair)?;
    let prep = prepare(params, pair);
    let dom = if mode == VlfMode::Coupled { domain::VLF_COUPLED } else { domain::VLF };
    Ok(map_indexed(exec, trials, |i| run_trial(params, pair, &prep, mode, &mut RngStream::for_trial(seed, dom, i).rng())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingStats {
    pub trials: u64,
    pub ci_alpha: f64,
    pub first_phase: u64,
    pub tau_max: u64,
    /// Empirical-Bernstein interval (values lie in `[L m, tau_max]`).
    pub e_max_tau: Estimate,
    pub e_min_tau: Estimate,
    /// `E[max tau - min tau]`.
    pub e_spread: Estimate,
    /// Clopper-Pearson intervals for `P[tau_k = tau_max]`.
    pub p_tau_max: [Estimate; 2],
    /// Empirical 99th percentile of `|S_{1,Lm} - S_{2,Lm}|`.
    pub phase_one_gap_q99: f64,
    /// Coupled mode: Clopper-Pearson intervals for `P[tau_k >= bar tau_k]`.
    pub p_competitor: Option<[Estimate; 2]>,
}

pub fn stopping_stats(params: &VlfParams, runs: &[VlfTrial], mode: VlfMode) -> StoppingStats {
    let t = runs.len() as u64;
    let range = (params.tau_max - params.first_phase()) as f64;
    let maxes: Vec<f64> = runs.iter().map(|r| r.tau[0].max(r.tau[1]) as f64).collect();
    let mins: Vec<f64> = runs.iter().map(|r| r.tau[0].min(r.tau[1]) as f64).collect();
    let spread: Vec<f64> = maxes.iter().zip(&mins).map(|(a, b)| a - b).collect();
    let clamp = |e: Estimate| Estimate {
        value: e.value,
        lower: e.lower.max(params.first_phase() as f64),
        upper: e.upper.min(params.tau_max as f64),
    };
    let hit = |k: usize| runs.iter().filter(|r| r.tau[k] == params.tau_max).count() as u64;
    let mut gaps: Vec<f64> = runs.iter().map(|r| r.phase_one_gap.abs()).collect();
    gaps.sort_by(f64::total_cmp);
    let q99 = if gaps.is_empty() { 0.0 } else { gaps[((gaps.len() as f64 * 0.99).ceil() as usize).clamp(1, gaps.len()) - 1] };
    let p_competitor = (mode == VlfMode::Coupled).then(|| {
        let wins = |k: usize| runs.iter().filter(|r| r.competitor_wins[k]).count() as u64;
        [clopper_pearson(wins(0), t, CI_ALPHA), clopper_pearson(wins(1), t, CI_ALPHA)]
    });
    let sp = empirical_bernstein(&spread, range, CI_ALPHA);
    StoppingStats {
        trials: t,
        ci_alpha: CI_ALPHA,
        first_phase: params.first_phase(),
        tau_max: params.tau_max,
        e_max_tau: clamp(empirical_bernstein(&maxes, range, CI_ALPHA)),
        e_min_tau: clamp(empirical_bernstein(&mins, range, CI_ALPHA)),
        e_spread: Estimate { value: sp.value, lower: sp.lower.max(0.0), upper: sp.upper.min(range) },
        p_tau_max: [clopper_pearson(hit(0), t, CI_ALPHA), clopper_pearson(hit(1), t, CI_ALPHA)],
        phase_one_gap_q99: q99,
        p_competitor,
    }
}

pub fn simulate_vlf(params: &VlfParams, pair: &BroadcastPair, trials: u64, seed: u64, mode: VlfMode, exec: Execution) -> Result<StoppingStats> {
    let runs = simulate_vlf_trials(params, pair, trials, seed, mode, exec)?;
    Ok(stopping_stats(params, &runs, mode))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlfPoint {
    pub ell_achieved: f64,
    pub log_m: f64,
    pub eps_certified: f64,
    pub q: f64,
    pub mode: VlfMode,
    pub epsilon_star: f64,
    /// Error floor before mixing with the stop-at-zero event.
    pub floor: f64,
    /// Converse at `(ell_achieved, eps_certified)`.
    pub converse_log_m: f64,
}

/// Error floor `a` such that the certified error is `q + (1 - q) a`.
pub fn error_floor(params: &VlfParams, stats: &StoppingStats, mode: VlfMode) -> Result<f64> {
    let eps_star = params.epsilon_star;
    match mode {
        VlfMode::Analytic => {
            // (M - 1) e^{-gamma} <= e^{log M - gamma}
            let spurious = (params.log_m - params.gamma).exp();
            let hit = stats.p_tau_max[0].upper.max(stats.p_tau_max[1].upper);
            Ok(eps_star + spurious + hit)
        }
        VlfMode::Coupled => {
            let p = stats
                .p_competitor
                .ok_or_else(|| Error::OutOfRange("coupled certification needs coupled-mode statistics".into()))?;
            let upper = p[0].upper.max(p[1].upper);
            Ok(eps_star + (params.log_m + upper.ln()).exp().min(1.0))
        }
    }
}

/// Point for a fixed mixture weight `q`.
pub fn vlf_point_with_q(params: &VlfParams, stats: &StoppingStats, mode: VlfMode, q: f64) -> Result<VlfPoint> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::OutOfRange(format!("q = {q} is not a probability")));
    }
    let floor = error_floor(params, stats, mode)?;
    let ell = (1.0 - q) * (stats.e_max_tau.upper + params.n_b as f64);
    let eps = (q + (1.0 - q) * floor).min(1.0);
    let converse = if eps > 0.0 && eps < 1.0 { vlf_converse_log_m(ell, eps, params.capacity_c)? } else { f64::INFINITY };
    Ok(VlfPoint { ell_achieved: ell, log_m: params.log_m, eps_certified: eps, q, mode, epsilon_star: params.epsilon_star, floor, converse_log_m: converse })
}

/// Largest `q` with `q + (1 - q) a <= epsilon`, and the resulting point.
pub fn vlf_achievable_point(params: &VlfParams, stats: &StoppingStats, epsilon: f64, mode: VlfMode) -> Result<VlfPoint> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::OutOfRange(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let floor = error_floor(params, stats, mode)?;
    if floor > epsilon {
        return Err(Error::InfeasibleEpsilon { target: epsilon, floor });
    }
    let q = ((epsilon - floor) / (1.0 - floor)).clamp(0.0, 1.0);
    vlf_point_with_q(params, stats, mode, q)
}

/// Normalized distance to the zero-dispersion limit,
/// `1 - log M (1 - eps) / (ell C)`.
pub fn normalized_gap(point: &VlfPoint, epsilon: f64, capacity_c: f64) -> f64 {
    1.0 - point.log_m * (1.0 - epsilon) / (point.ell_achieved * capacity_c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::antisym::make_parallel_bsc;
    use crate::channel::solve_caid;

    fn fig() -> (BroadcastPair, ChannelAnalysis) {
        let pair = make_parallel_bsc(0.05, 0.1).unwrap();
        let a = solve_caid(&pair, 1e-10).unwrap();
        (pair, a)
    }

    #[test]
    fn converse_examples() {
        let v = vlf_converse_log_m(1000.0, 1e-3, 0.43118).unwrap();
        let expect = (431.18 + binary_entropy_nats(1e-3).unwrap()) / 0.999;
        assert!((v - expect).abs() < 1e-9);
        assert!((v - 431.62).abs() < 0.01);
        let zero = vlf_converse_log_m(0.0, 0.2, 0.5).unwrap();
        assert!((zero - binary_entropy_nats(0.2).unwrap() / 0.8).abs() < 1e-12);
        assert!(vlf_converse_log_m(10.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn parameters_at_ten_thousand() {
        let (pair, a) = fig();
        let p = default_vlf_params(10_000, &a, &pair).unwrap();
        assert_eq!(p.kappa_min, 2);
        let lb = 10_000f64;
        let expect = a.capacity_c * lb - 2.0 * lb.cbrt() * lb.ln();
        assert!((p.gamma - expect).abs() < 1e-9);
        assert!((2.0 * lb.cbrt() * lb.ln() - 396.8).abs() < 0.1);
        let minus = lb - lb.sqrt() * lb.ln();
        assert_eq!(p.big_l, (minus.cbrt()).floor() as u64);
        assert_eq!(p.m, (minus / p.big_l as f64).floor() as u64);
        assert_eq!(p.tau_max, (lb + lb.sqrt() * lb.ln()).floor() as u64);
        assert!(p.kappa >= p.kappa_min && p.epsilon_star <= 1e-4);
        assert!((p.log_m - (p.gamma - lb.ln())).abs() < 1e-9);
    }

    #[test]
    fn too_small_rejected() {
        let (pair, a) = fig();
        assert!(matches!(default_vlf_params(10, &a, &pair), Err(Error::BlocklengthTooSmall(_))));
    }

    #[test]
    fn threshold_extremes() {
        let (pair, a) = fig();
        let mut p = default_vlf_params(1000, &a, &pair).unwrap();
        p.gamma = f64::NEG_INFINITY;
        let runs = simulate_vlf_trials(&p, &pair, 200, 1, VlfMode::Analytic, Execution::Sequential).unwrap();
        assert!(runs.iter().all(|r| r.tau == [p.first_phase(); 2]));
        p.gamma = f64::INFINITY;
        let runs = simulate_vlf_trials(&p, &pair, 50, 1, VlfMode::Coupled, Execution::Sequential).unwrap();
        assert!(runs.iter().all(|r| r.tau == [p.tau_max; 2]));
        let st = stopping_stats(&p, &runs, VlfMode::Coupled);
        assert_eq!(st.p_tau_max[0].value, 1.0);
    }

    #[test]
    fn mixture_weight_one() {
        let (pair, a) = fig();
        let p = default_vlf_params(1000, &a, &pair).unwrap();
        let st = simulate_vlf(&p, &pair, 500, 3, VlfMode::Analytic, Execution::Parallel).unwrap();
        let pt = vlf_point_with_q(&p, &st, VlfMode::Analytic, 1.0).unwrap();
        assert_eq!(pt.ell_achieved, 0.0);
        assert_eq!(pt.eps_certified, 1.0);
    }

    #[test]
    fn reproducible_and_sandwiched() {
        let (pair, a) = fig();
        let p = default_vlf_params(1000, &a, &pair).unwrap();
        let s1 = simulate_vlf(&p, &pair, 2000, 11, VlfMode::Analytic, Execution::Parallel).unwrap();
        let s2 = simulate_vlf(&p, &pair, 2000, 11, VlfMode::Analytic, Execution::Sequential).unwrap();
        assert_eq!(s1, s2);
        let pt = vlf_achievable_point(&p, &s1, 0.05, VlfMode::Analytic).unwrap();
        assert!(pt.eps_certified <= 0.05 + 1e-12);
        assert!(pt.log_m <= pt.converse_log_m);
        assert!(matches!(vlf_achievable_point(&p, &s1, 1e-9, VlfMode::Analytic), Err(Error::InfeasibleEpsilon { .. })));
    }

    #[test]
    fn coupled_needs_coupled_stats() {
        let (pair, a) = fig();
        let p = default_vlf_params(1000, &a, &pair).unwrap();
        let st = simulate_vlf(&p, &pair, 100, 3, VlfMode::Analytic, Execution::Sequential).unwrap();
        assert!(error_floor(&p, &st, VlfMode::Coupled).is_err());
    }
}
