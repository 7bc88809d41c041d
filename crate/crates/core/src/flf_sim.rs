//! Monte Carlo evaluation of the fixed-length feedback achievability bound
//! with the balancing scheme.
//!
//! A codeword is `L` blocks of `m` symbols plus `n_b = kappa L` uses that
//! carry the block-type sequence `B^L` with a no-feedback code. Blocks
//! `1..L-1` use one of two constant-composition types that slightly favour
//! decoder 1 or decoder 2, picked so the decoder that is behind catches up.
//! The last block uses the capacity-achieving type if the weighted density
//! clears `gamma1`, and otherwise one of the two single-decoder optimal
//! types at random. The certified size is
//!
//! `log M >= sup{g : max_k P[i_k <= g] < eps - tau - e^{-zeta}}
//!           + log(tau/2) - S L |X| log(1+m) - L log S - zeta`
//!
//! at blocklength `L (m + kappa)` and error `eps + eps*(n_b, S^L)`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::channel::{
    directional_derivative, output_dist, single_capacity, BroadcastPair, ChannelAnalysis, DirectionVector, Dmc, InputDist, PROBE_TOL,
};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::rcu::{detect_parallel_bsc, epsilon_star_parallel_bsc};
use crate::stoch::rng::{domain, RngStream};
use crate::stoch::special::q_inv;
use crate::stoch::stats::{clopper_pearson_upper, mean_var};

/// Number of block types.
pub const NUM_TYPES: usize = 5;
/// Default magnitude of `grad I_1` along the balancing direction, nats.
pub const DEFAULT_RHO: f64 = 1.0;
/// Points on the threshold grid.
pub const QUANTILE_GRID: usize = 512;
/// One-sided confidence level of the quantile estimate.
pub const QUANTILE_ALPHA: f64 = 1e-3;
/// Smallest trial budget accepted by [`estimate_quantile_and_bound`].
pub const MIN_TRIALS: u64 = 10_000;
const CAPACITY_TOL: f64 = 1e-10;

/// Overrides for [`default_params_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlfOptions {
    pub rho: f64,
    /// Uses per transmitted type symbol; `None` picks the smallest integer
    /// above `log 5 / C`.
    pub kappa: Option<u64>,
    /// `tau`; `None` means `1/sqrt(n)`.
    pub tau: Option<f64>,
    pub direction: DirectionRule,
}

impl Default for FlfOptions {
    fn default() -> Self {
        Self { rho: DEFAULT_RHO, kappa: None, tau: None, direction: DirectionRule::Canonical }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlfSchemeParams {
    pub n: u64,
    #[serde(rename = "L")]
    pub big_l: u64,
    pub m: u64,
    #[serde(rename = "S")]
    pub s: u64,
    pub kappa: u64,
    pub n_b: u64,
    /// Symbol counts of each type; every row sums to `m`.
    pub types: Vec<Vec<u64>>,
    pub rho: f64,
    pub v0: DirectionVector,
    pub gamma: f64,
    pub gamma1: f64,
    /// Reported only; the scheme never branches on it.
    pub gamma2: f64,
    pub zeta: f64,
    pub tau_slack: f64,
    pub eta: f64,
    pub capacity_c: f64,
}

impl FlfSchemeParams {
    /// Blocklength actually used: `L m + n_b`.
    pub fn n_total(&self) -> u64 {
        self.big_l * self.m + self.n_b
    }

    /// Type `b` (0-based) as a distribution.
    pub fn type_dist(&self, b: usize) -> Vec<f64> {
        self.types[b].iter().map(|&c| c as f64 / self.m as f64).collect()
    }

    pub fn validate(&self, pair: &BroadcastPair) -> Result<()> {
        if self.big_l < 2 || self.m < 1 {
            return Err(Error::BlocklengthTooSmall(format!("need L >= 2 and m >= 1, got L = {}, m = {}", self.big_l, self.m)));
        }
        if self.types.len() != NUM_TYPES || self.s != NUM_TYPES as u64 {
            return Err(Error::OutOfRange(format!("expected {NUM_TYPES} types")));
        }
        for t in &self.types {
            if t.len() != pair.num_inputs() {
                return Err(Error::DimensionMismatch("type length differs from input alphabet".into()));
            }
            if t.iter().sum::<u64>() != self.m {
                return Err(Error::InvalidDistribution("type counts must sum to m".into()));
            }
        }
        if !(self.tau_slack > 0.0) || !(self.zeta > 0.0) {
            return Err(Error::OutOfRange("tau and zeta must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::OutOfRange(format!("eta = {} outside [0, 1]", self.eta)));
        }
        Ok(())
    }
}

/// `floor(n^(1/3))` without floating-point edge errors.
pub(crate) fn icbrt(n: u64) -> u64 {
    let mut r = (n as f64).cbrt().round() as u64;
    while r > 0 && r.saturating_mul(r).saturating_mul(r) > n {
        r -= 1;
    }
    while (r + 1).saturating_mul(r + 1).saturating_mul(r + 1) <= n {
        r += 1;
    }
    r
}

/// Nearest point of the lattice `{c/m : c integer, sum c = m}` in Euclidean
/// distance (largest-remainder rounding; ties go to the lower index).
pub fn round_type(p: &[f64], m: u64) -> Vec<u64> {
    let scaled: Vec<f64> = p.iter().map(|v| v.max(0.0) * m as f64).collect();
    let mut counts: Vec<u64> = scaled.iter().map(|v| v.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| (scaled[b] - scaled[b].floor()).total_cmp(&(scaled[a] - scaled[a].floor())).then(a.cmp(&b)));
    let mut left = m.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    // floors can only undershoot, but guard against sums above m from rounding
    let mut over = counts.iter().sum::<u64>().saturating_sub(m);
    for &i in order.iter().rev() {
        while over > 0 && counts[i] > 0 {
            counts[i] -= 1;
            over -= 1;
        }
    }
    counts
}

/// How the balancing direction `v0` is picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionRule {
    /// First `e_x - e_last` with `grad I_1 > 0`.
    #[default]
    Canonical,
    /// The part of `grad I_1` that leaves both output laws unchanged, so
    /// moving along it changes each mutual information linearly. Falls back
    /// to [`DirectionRule::Canonical`] when that part vanishes.
    OutputNeutral,
}

/// Balancing direction scaled so `grad I_1(v0) = rho`.
pub fn balancing_direction(pair: &BroadcastPair, p_star: &InputDist, rho: f64, rule: DirectionRule) -> Result<DirectionVector> {
    let n = pair.num_inputs();
    if rule == DirectionRule::OutputNeutral {
        if let Some(v) = output_neutral_gradient(pair, p_star)? {
            let g = directional_derivative(&pair.w1, p_star, &v)?;
            if g > PROBE_TOL {
                return Ok(v.scaled(rho / g));
            }
        }
    }
    for x in 0..n.saturating_sub(1) {
        let v = DirectionVector::canonical(n, x);
        let g = directional_derivative(&pair.w1, p_star, &v)?;
        if g > PROBE_TOL {
            return Ok(v.scaled(rho / g));
        }
    }
    Err(Error::DegenerateDerivatives)
}

/// Projects `(D_1(x))_x` onto the space orthogonal to the all-ones vector
/// and to every column `W_k(y|.)`.
fn output_neutral_gradient(pair: &BroadcastPair, p_star: &InputDist) -> Result<Option<DirectionVector>> {
    let n = pair.num_inputs();
    let d = crate::channel::divergences(&pair.w1, &output_dist(&p_star.p, &pair.w1));
    if d.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut rows = vec![vec![1.0; n]];
    for k in 0..2 {
        let w = pair.component(k);
        for y in 0..w.num_outputs() {
            rows.push((0..n).map(|x| w.get(x, y)).collect());
        }
    }
    for mut r in rows {
        for b in &basis {
            let dot: f64 = r.iter().zip(b).map(|(a, c)| a * c).sum();
            r.iter_mut().zip(b).for_each(|(a, c)| *a -= dot * c);
        }
        let norm = r.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-9 {
            basis.push(r.into_iter().map(|a| a / norm).collect());
        }
    }
    let mut g = d;
    for b in &basis {
        let dot: f64 = g.iter().zip(b).map(|(a, c)| a * c).sum();
        g.iter_mut().zip(b).for_each(|(a, c)| *a -= dot * c);
    }
    if g.iter().map(|a| a * a).sum::<f64>().sqrt() <= 1e-9 {
        return Ok(None);
    }
    // exact zero sum for the direction type
    let mean = g.iter().sum::<f64>() / n as f64;
    g.iter_mut().for_each(|a| *a -= mean);
    Ok(Some(DirectionVector::new(g)?))
}

/// Smallest integer strictly larger than `log(s) / c`.
pub(crate) fn kappa_for(s: f64, c: f64) -> u64 {
    (s.ln() / c).floor() as u64 + 1
}

pub fn default_params(n: u64, epsilon: f64, analysis: &ChannelAnalysis, pair: &BroadcastPair) -> Result<FlfSchemeParams> {
    default_params_with(n, epsilon, analysis, pair, &FlfOptions::default())
}

pub fn default_params_with(n: u64, epsilon: f64, analysis: &ChannelAnalysis, pair: &BroadcastPair, opts: &FlfOptions) -> Result<FlfSchemeParams> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::OutOfRange(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    if !(opts.rho > 0.0) {
        return Err(Error::OutOfRange("rho must be positive".into()));
    }
    let c = analysis.capacity_c;
    if !(c > 0.0) {
        return Err(Error::OutOfRange("capacity must be positive".into()));
    }
    let big_l = icbrt(n);
    let kappa = opts.kappa.unwrap_or_else(|| kappa_for(NUM_TYPES as f64, c));
    if big_l < 2 {
        return Err(Error::BlocklengthTooSmall(format!("n = {n} gives fewer than two blocks")));
    }
    let m = (n / big_l).saturating_sub(kappa);
    if m < 1 {
        return Err(Error::BlocklengthTooSmall(format!("n = {n} leaves no room for data after {kappa} uses per block")));
    }
    let p_star = &analysis.p_star;
    let v0 = balancing_direction(pair, p_star, opts.rho, opts.direction)?;
    let delta = (n as f64).cbrt().recip();
    let mut types = Vec::with_capacity(NUM_TYPES);
    for sign in [1.0, -1.0] {
        let bar: Vec<f64> = p_star.p.iter().zip(&v0.v).map(|(p, v)| p + sign * v * delta).collect();
        if bar.iter().any(|&v| v < 0.0) {
            return Err(Error::BlocklengthTooSmall(format!(
                "P* +/- v0 n^(-1/3) leaves the simplex at n = {n} (rho = {})",
                opts.rho
            )));
        }
        types.push(round_type(&bar, m));
    }
    types.push(round_type(&p_star.p, m));
    for k in 0..2 {
        let (_, pk) = single_capacity(pair.component(k), CAPACITY_TOL)?;
        types.push(round_type(&pk.p, m));
    }
    let lf = big_l as f64;
    let mf = m as f64;
    let nf = n as f64;
    let gamma = lf * mf * c - ((lf - 1.0) * mf * analysis.v_weighted).sqrt() * q_inv(2.0 * epsilon)?;
    let gamma1 = gamma - mf * c + nf.cbrt() * nf.ln();
    let gamma2 = (lf - 1.0) * mf * c - nf.sqrt() * nf.ln();
    let params = FlfSchemeParams {
        n,
        big_l,
        m,
        s: NUM_TYPES as u64,
        kappa,
        n_b: kappa * big_l,
        types,
        rho: opts.rho,
        v0,
        gamma,
        gamma1,
        gamma2,
        zeta: nf.cbrt(),
        tau_slack: opts.tau.unwrap_or(1.0 / nf.sqrt()),
        eta: analysis.eta,
        capacity_c: c,
    };
    params.validate(pair)?;
    Ok(params)
}

/// How block outputs are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Shuffle the composition and draw every output symbol.
    Explicit,
    /// Draw output counts per input symbol from multinomials. Block sums
    /// do not depend on symbol order, so this has the same law.
    #[default]
    Counts,
}

/// Density tables `log W_k(y|x) - log P W_k(y)` for one reference law.
#[derive(Debug, Clone)]
pub(crate) struct DensityTable {
    pub t: [Vec<Vec<f64>>; 2],
}

impl DensityTable {
    pub fn new(pair: &BroadcastPair, p: &[f64]) -> Self {
        let table = |w: &Dmc| {
            let q = output_dist(p, w);
            (0..w.num_inputs())
                .map(|x| {
                    (0..w.num_outputs())
                        .map(|y| {
                            let wy = w.get(x, y);
                            // never sampled when wy == 0; the value only matters for x in the support
                            if wy == 0.0 || q[y] == 0.0 {
                                0.0
                            } else {
                                wy.ln() - q[y].ln()
                            }
                        })
                        .collect()
                })
                .collect()
        };
        Self { t: [table(&pair.w1), table(&pair.w2)] }
    }
}

/// Multinomial output counts of `count` uses of row `row`.
pub(crate) fn multinomial<R: Rng + ?Sized>(row: &[f64], count: u64, rng: &mut R, out: &mut [u64]) {
    let mut left = count;
    let mut mass = 1.0;
    let last = row.len() - 1;
    for (y, &p) in row.iter().enumerate() {
        if left == 0 || y == last {
            out[y] = left;
            left = 0;
            continue;
        }
        let frac = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = if frac >= 1.0 {
            left
        } else if frac <= 0.0 {
            0
        } else {
            Binomial::new(left, frac).expect("valid binomial").sample(rng)
        };
        out[y] = k;
        left -= k;
        mass -= p;
    }
}

/// Block density sums: `[(i_1, i_2) against the block's own type, (i_1, i_2) against P*]`.
pub(crate) fn sample_block<R: Rng + ?Sized>(
    pair: &BroadcastPair,
    counts: &[u64],
    own: &DensityTable,
    star: &DensityTable,
    sampler: Sampler,
    rng: &mut R,
    scratch: &mut Vec<usize>,
) -> [[f64; 2]; 2] {
    let mut acc = [[0.0; 2]; 2];
    match sampler {
        Sampler::Counts => {
            let mut ny = vec![0u64; pair.num_outputs()];
            for (x, &c) in counts.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                for k in 0..2 {
                    multinomial(pair.component(k).row(x), c, rng, &mut ny);
                    for (y, &cnt) in ny.iter().enumerate() {
                        if cnt > 0 {
                            acc[0][k] += cnt as f64 * own.t[k][x][y];
                            acc[1][k] += cnt as f64 * star.t[k][x][y];
                        }
                    }
                }
            }
        }
        Sampler::Explicit => {
            scratch.clear();
            for (x, &c) in counts.iter().enumerate() {
                scratch.extend(std::iter::repeat_n(x, c as usize));
            }
            scratch.shuffle(rng);
            for &x in scratch.iter() {
                for k in 0..2 {
                    let y = pair.component(k).sample(x, rng);
                    acc[0][k] += own.t[k][x][y];
                    acc[1][k] += star.t[k][x][y];
                }
            }
        }
    }
    acc
}

/// One realization of the scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTranscript {
    /// Block types, 1-based.
    pub b_sequence: Vec<u8>,
    /// Per-block density increments at each decoder.
    pub density1: Vec<f64>,
    pub density2: Vec<f64>,
    pub final_densities: (f64, f64),
    /// `i_1 - i_2` after `L - 1` blocks.
    pub gap: f64,
    /// `eta i_1 + (1 - eta) i_2` after `L - 1` blocks with `P*` as the
    /// reference law in every block.
    pub weighted_star: f64,
}

/// The per-trial numbers the estimators need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub final1: f64,
    pub final2: f64,
    pub gap: f64,
    pub weighted_star: f64,
    pub last_type: u8,
}

struct Prepared {
    own: Vec<DensityTable>,
    star: DensityTable,
}

fn prepare(params: &FlfSchemeParams, pair: &BroadcastPair, p_star: &[f64]) -> Prepared {
    Prepared {
        own: (0..NUM_TYPES).map(|b| DensityTable::new(pair, &params.type_dist(b))).collect(),
        star: DensityTable::new(pair, p_star),
    }
}

fn run_trial(
    params: &FlfSchemeParams,
    pair: &BroadcastPair,
    prep: &Prepared,
    sampler: Sampler,
    rng: &mut ChaCha8Rng,
    mut record: Option<&mut TrialTranscript>,
) -> TrialSummary {
    let eta = params.eta;
    let blocks = params.big_l as usize;
    let mut i = [0.0f64; 2];
    let mut star = [0.0f64; 2];
    let mut scratch = Vec::new();
    let (mut gap, mut weighted_star, mut last_type) = (0.0, 0.0, 0u8);
    for ell in 0..blocks {
        let b = if ell == 0 {
            1
        } else if ell + 1 < blocks {
            usize::from(i[0] >= i[1])
        } else {
            gap = i[0] - i[1];
            weighted_star = eta * star[0] + (1.0 - eta) * star[1];
            let b = if eta * i[0] + (1.0 - eta) * i[1] >= params.gamma1 { 2 } else { 3 + rng.random_range(0..2usize) };
            last_type = b as u8 + 1;
            b
        };
        let acc = sample_block(pair, &params.types[b], &prep.own[b], &prep.star, sampler, rng, &mut scratch);
        if let Some(t) = record.as_deref_mut() {
            t.b_sequence.push(b as u8 + 1);
            t.density1.push(acc[0][0]);
            t.density2.push(acc[0][1]);
        }
        for k in 0..2 {
            i[k] += acc[0][k];
            star[k] += acc[1][k];
        }
    }
    if let Some(t) = record {
        t.final_densities = (i[0], i[1]);
        t.gap = gap;
        t.weighted_star = weighted_star;
    }
    TrialSummary { final1: i[0], final2: i[1], gap, weighted_star, last_type }
}

fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    RngStream::for_trial(seed, domain::FLF, index).rng()
}

/// Runs trial `index` of the master seed and returns its full transcript.
pub fn simulate_trial(params: &FlfSchemeParams, pair: &BroadcastPair, p_star: &InputDist, seed: u64, index: u64, sampler: Sampler) -> Result<TrialTranscript> {
    params.validate(pair)?;
    let prep = prepare(params, pair, &p_star.p);
    let mut t = TrialTranscript {
        b_sequence: Vec::with_capacity(params.big_l as usize),
        density1: Vec::new(),
        density2: Vec::new(),
        final_densities: (0.0, 0.0),
        gap: 0.0,
        weighted_star: 0.0,
    };
    run_trial(params, pair, &prep, sampler, &mut trial_rng(seed, index), Some(&mut t));
    Ok(t)
}

/// Runs `trials` independent trials; trial `i` uses stream `i` of `seed`.
pub fn simulate_trials(
    params: &FlfSchemeParams,
    pair: &BroadcastPair,
    p_star: &InputDist,
    trials: u64,
    seed: u64,
    sampler: Sampler,
    exec: Execution,
) -> Result<Vec<TrialSummary>> {
    params.validate(pair)?;
    let prep = prepare(params, pair, &p_star.p);
    Ok(map_indexed(exec, trials, |i| run_trial(params, pair, &prep, sampler, &mut trial_rng(seed, i), None)))
}

/// Where `eps*(n_b, S^L)` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "source", content = "value")]
pub enum EpsStar {
    /// Union of two min-distance RCU bounds; parallel-BSC pairs only.
    ParallelBsc,
    /// A value supplied by the caller.
    Supplied(f64),
}

impl EpsStar {
    pub fn resolve(self, pair: &BroadcastPair, n_b: u64, log_m_tilde: f64) -> Result<f64> {
        match self {
            EpsStar::ParallelBsc => {
                let (q1, q2) = detect_parallel_bsc(pair)?;
                epsilon_star_parallel_bsc(n_b, log_m_tilde, q1, q2)
            }
            EpsStar::Supplied(v) if (0.0..=1.0).contains(&v) => Ok(v),
            EpsStar::Supplied(v) => Err(Error::OutOfRange(format!("eps* = {v} is not a probability"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub log_tau_half: f64,
    pub composition: f64,
    pub index: f64,
    pub zeta: f64,
    pub total: f64,
}

pub fn penalties(params: &FlfSchemeParams, num_inputs: usize) -> Penalties {
    let log_tau_half = (params.tau_slack / 2.0).ln();
    let composition = -((params.s * params.big_l * num_inputs as u64) as f64) * ((params.m + 1) as f64).ln();
    let index = -(params.big_l as f64) * (params.s as f64).ln();
    let zeta = -params.zeta;
    Penalties { log_tau_half, composition, index, zeta, total: log_tau_half + composition + index + zeta }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlfPoint {
    pub n_total: u64,
    pub log_m: f64,
    pub eps_certified: f64,
    pub epsilon: f64,
    pub epsilon_star: f64,
    pub eps_star_source: EpsStar,
    /// Largest grid threshold meeting the target.
    pub gamma_hat: f64,
    /// `max_k` empirical `P[i_k <= gamma_hat]` and its upper confidence bound.
    pub quantile_empirical: f64,
    pub quantile_upper: f64,
    /// `eps - tau - e^{-zeta}`.
    pub target: f64,
    pub alpha: f64,
    pub trials: u64,
    pub grid: (f64, f64, usize),
    pub penalties: Penalties,
}

/// Scheme diagnostics over a batch of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlfStats {
    pub trials: u64,
    pub gap_mean: f64,
    pub gap_sd: f64,
    /// Empirical 99th percentile of `|i_1 - i_2|` after `L - 1` blocks.
    pub gap_abs_q99: f64,
    pub weighted_star_mean: f64,
    pub weighted_star_se: f64,
    /// `(L - 1) m C`.
    pub weighted_star_expected: f64,
    /// Last-block type counts for types 3, 4, 5.
    pub last_type_counts: [u64; 3],
}

pub fn summarize(params: &FlfSchemeParams, trials: &[TrialSummary]) -> FlfStats {
    let gaps: Vec<f64> = trials.iter().map(|t| t.gap).collect();
    let stars: Vec<f64> = trials.iter().map(|t| t.weighted_star).collect();
    let (gap_mean, gap_var) = mean_var(&gaps);
    let (star_mean, star_var) = mean_var(&stars);
    let mut abs: Vec<f64> = gaps.iter().map(|g| g.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let q99 = if abs.is_empty() { 0.0 } else { abs[((abs.len() as f64 * 0.99).ceil() as usize).clamp(1, abs.len()) - 1] };
    let mut counts = [0u64; 3];
    for t in trials {
        if (3..=5).contains(&t.last_type) {
            counts[(t.last_type - 3) as usize] += 1;
        }
    }
    FlfStats {
        trials: trials.len() as u64,
        gap_mean,
        gap_sd: gap_var.sqrt(),
        gap_abs_q99: q99,
        weighted_star_mean: star_mean,
        weighted_star_se: (star_var / trials.len().max(1) as f64).sqrt(),
        weighted_star_expected: (params.big_l - 1) as f64 * params.m as f64 * params.capacity_c,
        last_type_counts: counts,
    }
}

/// Turns trial summaries into a certified point.
pub fn point_from_summaries(
    params: &FlfSchemeParams,
    pair: &BroadcastPair,
    trials: &[TrialSummary],
    epsilon: f64,
    eps_star: EpsStar,
) -> Result<FlfPoint> {
    let target = epsilon - params.tau_slack - (-params.zeta).exp();
    if !(target > 0.0) {
        return Err(Error::NoFeasibleGamma(format!("eps - tau - e^(-zeta) = {target:e} is not positive")));
    }
    if trials.is_empty() {
        return Err(Error::NoFeasibleGamma("no trials".into()));
    }
    let mut d: [Vec<f64>; 2] = [trials.iter().map(|t| t.final1).collect(), trials.iter().map(|t| t.final2).collect()];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in d.iter_mut() {
        let (mean, var) = mean_var(v);
        lo = lo.min(mean - 6.0 * var.sqrt());
        hi = hi.max(mean + 6.0 * var.sqrt());
        v.sort_by(f64::total_cmp);
    }
    let total = trials.len() as u64;
    let mut best: Option<(f64, f64, f64)> = None;
    for j in 0..QUANTILE_GRID {
        let g = if QUANTILE_GRID == 1 || hi == lo { lo } else { lo + (hi - lo) * j as f64 / (QUANTILE_GRID - 1) as f64 };
        let hits = d.iter().map(|v| v.partition_point(|&x| x <= g) as u64).max().unwrap_or(0);
        let upper = clopper_pearson_upper(hits, total, QUANTILE_ALPHA);
        if upper < target {
            best = Some((g, hits as f64 / total as f64, upper));
        } else {
            break;
        }
    }
    let (gamma_hat, emp, upper) = best.ok_or_else(|| {
        Error::NoFeasibleGamma(format!("no grid threshold has an upper confidence bound below {target:e} with {total} trials"))
    })?;
    let pen = penalties(params, pair.num_inputs());
    let eps_star_value = eps_star.resolve(pair, params.n_b, params.big_l as f64 * (params.s as f64).ln())?;
    Ok(FlfPoint {
        n_total: params.n_total(),
        log_m: gamma_hat + pen.total,
        eps_certified: epsilon + eps_star_value,
        epsilon,
        epsilon_star: eps_star_value,
        eps_star_source: eps_star,
        gamma_hat,
        quantile_empirical: emp,
        quantile_upper: upper,
        target,
        alpha: QUANTILE_ALPHA,
        trials: total,
        grid: (lo, hi, QUANTILE_GRID),
        penalties: pen,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlfRun {
    pub point: FlfPoint,
    pub stats: FlfStats,
}

/// Simulates `trials` runs and returns the certified point plus diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn estimate_quantile_and_bound(
    params: &FlfSchemeParams,
    pair: &BroadcastPair,
    p_star: &InputDist,
    trials: u64,
    epsilon: f64,
    eps_star: EpsStar,
    seed: u64,
    exec: Execution,
) -> Result<FlfRun> {
    if trials < MIN_TRIALS {
        return Err(Error::OutOfRange(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    let target = epsilon - params.tau_slack - (-params.zeta).exp();
    if !(target > 0.0) {
        return Err(Error::NoFeasibleGamma(format!("eps - tau - e^(-zeta) = {target:e} is not positive")));
    }
    let runs = simulate_trials(params, pair, p_star, trials, seed, Sampler::Counts, exec)?;
    let point = point_from_summaries(params, pair, &runs, epsilon, eps_star)?;
    Ok(FlfRun { point, stats: summarize(params, &runs) })
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

    /// Small blocklengths need a gentle shift to stay inside the simplex.
    fn small(n: u64, eps: f64, pair: &BroadcastPair, a: &ChannelAnalysis) -> FlfSchemeParams {
        default_params_with(n, eps, a, pair, &FlfOptions { rho: 0.1, ..Default::default() }).unwrap()
    }

    fn identity_pair() -> BroadcastPair {
        let w: Vec<Vec<f64>> = (0..4).map(|x| (0..4).map(|y| if x == y { 1.0 } else { 0.0 }).collect()).collect();
        BroadcastPair::new(Dmc::new(w.clone()).unwrap(), Dmc::new(w).unwrap()).unwrap()
    }

    fn uniform_params(m: u64, big_l: u64) -> FlfSchemeParams {
        FlfSchemeParams {
            n: big_l * (m + 1),
            big_l,
            m,
            s: 5,
            kappa: 1,
            n_b: big_l,
            types: vec![vec![m / 4; 4]; NUM_TYPES],
            rho: 1.0,
            v0: DirectionVector::canonical(4, 0),
            gamma: 0.0,
            gamma1: 0.0,
            gamma2: 0.0,
            zeta: 1.0,
            tau_slack: 0.01,
            eta: 0.5,
            capacity_c: 4f64.ln(),
        }
    }

    #[test]
    fn integer_cube_root() {
        for (n, r) in [(0, 0), (1, 1), (7, 1), (8, 2), (26, 2), (27, 3), (999_999, 99), (1_000_000, 100), (1_000_001, 100)] {
            assert_eq!(icbrt(n), r, "n = {n}");
        }
    }

    #[test]
    fn rounding_sums_to_m() {
        assert_eq!(round_type(&[0.25; 4], 8), vec![2, 2, 2, 2]);
        assert_eq!(round_type(&[1.0 / 3.0; 3], 4), vec![2, 1, 1]);
        let c = round_type(&[0.26, 0.24, 0.3, 0.2], 9996);
        assert_eq!(c.iter().sum::<u64>(), 9996);
        for (ci, p) in c.iter().zip([0.26, 0.24, 0.3, 0.2]) {
            assert!((*ci as f64 - p * 9996.0).abs() < 1.0);
        }
    }

    #[test]
    fn defaults_at_one_million() {
        let (pair, a) = fig();
        let p = default_params(1_000_000, 1e-3, &a, &pair).unwrap();
        assert_eq!((p.big_l, p.kappa, p.m, p.n_b), (100, 4, 9996, 400));
        assert_eq!(p.n_total(), 1_000_000);
        assert!((p.zeta - 100.0).abs() < 1e-9);
        let g = directional_derivative(&pair.w1, &a.p_star, &p.v0).unwrap();
        assert!((g - p.rho).abs() < 1e-10);
        for t in &p.types {
            assert_eq!(t.iter().sum::<u64>(), p.m);
        }
    }

    #[test]
    fn output_neutral_direction_is_scaled() {
        let (pair, a) = fig();
        let v = balancing_direction(&pair, &a.p_star, 0.7, DirectionRule::OutputNeutral).unwrap();
        assert!((directional_derivative(&pair.w1, &a.p_star, &v).unwrap() - 0.7).abs() < 1e-10);
        assert!(v.v.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn penalty_arithmetic() {
        let (pair, a) = fig();
        let p = default_params_with(1_000_000, 1e-2, &a, &pair, &FlfOptions { tau: Some(1e-3), ..Default::default() }).unwrap();
        let pen = penalties(&p, 4);
        assert!((pen.log_tau_half - (5e-4f64).ln()).abs() < 1e-12);
        assert!((pen.composition + 2000.0 * 9997f64.ln()).abs() < 1e-9);
        assert!((pen.index + 100.0 * 5f64.ln()).abs() < 1e-9);
        assert!((pen.zeta + 100.0).abs() < 1e-9);
        assert!((pen.total - (pen.log_tau_half + pen.composition + pen.index + pen.zeta)).abs() < 1e-9);
    }

    #[test]
    fn small_blocklengths_rejected() {
        let (pair, a) = fig();
        assert!(matches!(default_params(7, 1e-3, &a, &pair), Err(Error::BlocklengthTooSmall(_))));
        assert!(matches!(default_params(8, 1e-3, &a, &pair), Err(Error::BlocklengthTooSmall(_))));
        assert!(matches!(default_params(1000, 0.6, &a, &pair), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn deterministic_channel_transcript() {
        let pair = identity_pair();
        let p = uniform_params(40, 5);
        let t = simulate_trial(&p, &pair, &InputDist::uniform(4), 3, 0, Sampler::Explicit).unwrap();
        let expect = (5 * 40) as f64 * 4f64.ln();
        assert!((t.final_densities.0 - expect).abs() < 1e-9);
        assert!((t.final_densities.1 - expect).abs() < 1e-9);
        assert_eq!(t.b_sequence.len(), 5);
        assert_eq!(t.b_sequence[0], 2);
        // equal densities favour decoder 2 after block 1
        assert!(t.b_sequence[1..4].iter().all(|&b| b == 2));
        assert_eq!(t.b_sequence[4], 3);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let (pair, a) = fig();
        let p = small(8000, 0.1, &pair, &a);
        let x = simulate_trial(&p, &pair, &a.p_star, 42, 7, Sampler::Counts).unwrap();
        let y = simulate_trial(&p, &pair, &a.p_star, 42, 7, Sampler::Counts).unwrap();
        assert_eq!(x, y);
        let s = simulate_trials(&p, &pair, &a.p_star, 50, 42, Sampler::Counts, Execution::Sequential).unwrap();
        let t = simulate_trials(&p, &pair, &a.p_star, 50, 42, Sampler::Counts, Execution::Parallel).unwrap();
        assert_eq!(s, t);
        assert_eq!(s[7].final1, x.final_densities.0);
    }

    #[test]
    fn infeasible_target() {
        let (pair, a) = fig();
        let p = small(1000, 0.05, &pair, &a);
        // tau = 1/sqrt(1000) > 0.03 and e^(-10) is tiny
        let runs = simulate_trials(&p, &pair, &a.p_star, 20, 1, Sampler::Counts, Execution::Sequential).unwrap();
        assert!(matches!(point_from_summaries(&p, &pair, &runs, 0.02, EpsStar::Supplied(0.0)), Err(Error::NoFeasibleGamma(_))));
        assert!(matches!(
            estimate_quantile_and_bound(&p, &pair, &a.p_star, 10, 0.2, EpsStar::Supplied(0.0), 1, Execution::Sequential),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn samplers_agree_in_distribution() {
        let (pair, a) = fig();
        let p = small(1000, 0.1, &pair, &a);
        let n = 4000;
        let c = simulate_trials(&p, &pair, &a.p_star, n, 5, Sampler::Counts, Execution::Parallel).unwrap();
        let e = simulate_trials(&p, &pair, &a.p_star, n, 6, Sampler::Explicit, Execution::Parallel).unwrap();
        for pick in [|t: &TrialSummary| t.final1, |t: &TrialSummary| t.final2] {
            let (mc, vc) = mean_var(&c.iter().map(pick).collect::<Vec<_>>());
            let (me, ve) = mean_var(&e.iter().map(pick).collect::<Vec<_>>());
            let se = ((vc + ve) / n as f64).sqrt();
            assert!((mc - me).abs() < 4.0 * se, "means {mc} vs {me}");
            assert!((vc / ve - 1.0).abs() < 0.15, "variances {vc} vs {ve}");
        }
    }

    #[test]
    fn last_block_coin_is_fair() {
        let (pair, a) = fig();
        let p = small(8000, 0.1, &pair, &a);
        let runs = simulate_trials(&p, &pair, &a.p_star, 4000, 9, Sampler::Counts, Execution::Parallel).unwrap();
        let st = summarize(&p, &runs);
        let coin = st.last_type_counts[1] + st.last_type_counts[2];
        assert!(coin > 1000);
        let frac = st.last_type_counts[1] as f64 / coin as f64;
        let se = (0.25 / coin as f64).sqrt();
        assert!((frac - 0.5).abs() < 3.0 * se, "split {frac}");
    }

    #[test]
    fn certified_point_fields() {
        let (pair, a) = fig();
        let p = default_params_with(8000, 0.1, &a, &pair, &FlfOptions { kappa: Some(12), rho: 0.1, ..Default::default() }).unwrap();
        let run = estimate_quantile_and_bound(&p, &pair, &a.p_star, 10_000, 0.1, EpsStar::ParallelBsc, 2, Execution::Parallel).unwrap();
        let pt = &run.point;
        assert!(pt.quantile_upper < pt.target);
        assert!((pt.log_m - (pt.gamma_hat + pt.penalties.total)).abs() < 1e-9);
        assert!((pt.eps_certified - (0.1 + pt.epsilon_star)).abs() < 1e-15);
        assert_eq!(pt.n_total, p.n_total());
        assert!(pt.n_total <= 8000);
        // the P*-referenced drift matches (L - 1) m C
        let st = &run.stats;
        assert!((st.weighted_star_mean - st.weighted_star_expected).abs() < 5.0 * st.weighted_star_se);
    }
}
