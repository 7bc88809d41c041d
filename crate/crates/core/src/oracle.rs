//! Slow, independent reference computations used to validate the fast
//! evaluators. Nothing here shares code paths with the optimized routines
//! beyond the channel types and the mutual-information formula.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{mi_brute, BroadcastPair};
use crate::exec::{map_indexed, Execution};
use crate::stoch::rng::{domain, RngStream};
use crate::stoch::special::log_binomial_half_cdf;

/// Maximin value on three inputs by direct search. `min(I_1, I_2)` is concave
/// in `p`, so `g(a) = max_b min(I_1, I_2)(a, b, 1 - a - b)` is concave in `a`
/// and each inner maximization is a concave line search. The outer variable
/// is scanned on a grid of step `resolution`, then both levels are refined by
/// golden-section search. `refine_iters` bounds the golden-section steps.
/// Returns `(value, p)`.
pub fn grid_maximin3(pair: &BroadcastPair, resolution: f64, refine_iters: u32) -> (f64, [f64; 3]) {
    assert_eq!(pair.num_inputs(), 3, "grid oracle is for three inputs");
    let f = |a: f64, b: f64| -> f64 {
        let p = [a, b, (1.0 - a - b).max(0.0)];
        mi_brute(&p, &pair.w1).min(mi_brute(&p, &pair.w2))
    };
    let inner = |a: f64| -> (f64, f64) {
        let hi = (1.0 - a).max(0.0);
        // coarse scan guards against flat stretches, then golden section
        let steps = ((hi / resolution).ceil() as usize).max(1);
        let (mut bb, mut bv) = (0.0, f64::NEG_INFINITY);
        for j in 0..=steps {
            let b = hi * j as f64 / steps as f64;
            let v = f(a, b);
            if v > bv {
                (bb, bv) = (b, v);
            }
        }
        let h = hi / steps as f64;
        let (b, v) = golden(|b| f(a, b), (bb - h).max(0.0), (bb + h).min(hi), refine_iters);
        if v > bv { (b, v) } else { (bb, bv) }
    };
    let steps = (1.0 / resolution).round() as usize;
    let (mut ba, mut bv) = (0.0, f64::NEG_INFINITY);
    for i in 0..=steps {
        let a = i as f64 / steps as f64;
        let (_, v) = inner(a);
        if v > bv {
            (ba, bv) = (a, v);
        }
    }
    let h = 1.0 / steps as f64;
    let (a, _) = golden(|a| inner(a).1, (ba - h).max(0.0), (ba + h).min(1.0), refine_iters);
    let a = if inner(a).1 >= bv { a } else { ba };
    let (b, v) = inner(a);
    (v, [a, b, (1.0 - a - b).max(0.0)])
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: u32) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            (x1, f1) = (x2, f2);
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            (x2, f2) = (x1, f1);
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 { (x1, f1) } else { (x2, f2) }
}

/// Chunk size for the Monte Carlo oracles: each chunk owns one RNG stream.
const CHUNK: u64 = 1 << 14;

fn chunked<T, F>(trials: u64, seed: u64, domain: u16, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync + Send,
{
    let chunks = trials.div_ceil(CHUNK);
    map_indexed(exec, chunks, |c| {
        let mut rng = RngStream::for_trial(seed, domain, c).rng();
        let count = CHUNK.min(trials - c * CHUNK);
        f(&mut rng, count)
    })
}

/// Direct simulation of the balancing construction on a parallel-BSC pair:
/// uniform binary symbols `xb`, channel input `xb + 2b` where `b` routes the
/// cleaner sub-channel to the decoder with the larger Hamming distance (fair
/// coin on ties), outputs drawn from the pair's own matrices. Returns
/// histograms of the two final distances.
pub fn coupled_counts_mc(pair: &BroadcastPair, n: u64, trials: u64, seed: u64, exec: Execution) -> [Vec<u64>; 2] {
    let nu = n as usize;
    let parts = chunked(trials, seed, domain::COUPLED_MC, exec, |rng, count| {
        let mut h = [vec![0u64; nu + 1], vec![0u64; nu + 1]];
        for _ in 0..count {
            let (d1, d2) = run_construction(pair, n, rng, |_| {});
            h[0][d1] += 1;
            h[1][d2] += 1;
        }
        h
    });
    let mut out = [vec![0u64; nu + 1], vec![0u64; nu + 1]];
    for h in parts {
        for k in 0..2 {
            for (o, v) in out[k].iter_mut().zip(&h[k]) {
                *o += v;
            }
        }
    }
    out
}

/// One pass of the construction; `visit` sees each `(xb, y1)` pair.
fn run_construction<R: Rng>(pair: &BroadcastPair, n: u64, rng: &mut R, mut visit: impl FnMut((usize, usize))) -> (usize, usize) {
    let (mut d1, mut d2) = (0usize, 0usize);
    for _ in 0..n {
        let xb: usize = rng.random_range(0..2);
        let b = match d1.cmp(&d2) {
            std::cmp::Ordering::Greater => 0,
            std::cmp::Ordering::Less => 1,
            std::cmp::Ordering::Equal => rng.random_range(0..2),
        };
        let x = xb + 2 * b;
        let y1 = pair.w1.sample(x, rng);
        let y2 = pair.w2.sample(x, rng);
        d1 += (y1 != xb) as usize;
        d2 += (y2 != xb) as usize;
        visit((xb, y1));
    }
    (d1, d2)
}

/// Monte Carlo of the RCU expression: the distance `t` of the sent word is
/// simulated through the construction and `min{1, (M-1) P[Bin(n,1/2) <= t]}`
/// is averaged. Returns `(mean, standard error)`.
pub fn rcu_epsilon_mc(pair: &BroadcastPair, n: u64, log_m: f64, trials: u64, seed: u64, exec: Execution) -> (f64, f64) {
    let cdf = log_binomial_half_cdf(n);
    let lm1 = if log_m > 40.0 { log_m } else { log_m.exp_m1().ln() };
    let parts = chunked(trials, seed, domain::RCU_CODEBOOK, exec, |rng, count| {
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..count {
            let (t, _) = run_construction(pair, n, rng, |_| {});
            let v = (lm1 + cdf[t]).min(0.0).exp();
            s += v;
            s2 += v * v;
        }
        (s, s2)
    });
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let t = trials as f64;
    let mean = s / t;
    let var = (s2 / t - mean * mean).max(0.0);
    (mean, (var / t).sqrt())
}

/// Literal random-codebook simulation with `m` codewords of length `n <= 64`
/// (bit-packed) and minimum-distance decoding at decoder 1; ties count as
/// errors. Returns the number of errors.
pub fn codebook_errors_mc(pair: &BroadcastPair, n: u64, m: u64, trials: u64, seed: u64, exec: Execution) -> u64 {
    assert!(n <= 64 && m >= 2, "bit-packed oracle needs n <= 64");
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    chunked(trials, seed ^ 0x5eed, domain::RCU_CODEBOOK, exec, |rng, count| {
        let mut errors = 0u64;
        for _ in 0..count {
            let (mut sent, mut recv, mut i) = (0u64, 0u64, 0u32);
            run_construction(pair, n, rng, |(xb, y1)| {
                sent |= (xb as u64) << i;
                recv |= (y1 as u64) << i;
                i += 1;
            });
            let d0 = (sent ^ recv).count_ones();
            let lost = (1..m).any(|_| ((rng.random::<u64>() & mask) ^ recv).count_ones() <= d0);
            errors += lost as u64;
        }
        errors
    })
    .into_iter()
    .sum()
}

/// Literal no-feedback code on the parallel-BSC pair: `m` random codewords
/// over the four inputs, each decoder decoding by minimum distance on the
/// low bit. Counts trials where either decoder fails (ties are failures).
pub fn no_feedback_errors_mc(pair: &BroadcastPair, n: u64, m: u64, trials: u64, seed: u64, exec: Execution) -> u64 {
    assert!(n <= 64 && m >= 2);
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    chunked(trials, seed, domain::EPS_STAR_MC, exec, |rng, count| {
        let mut errors = 0u64;
        for _ in 0..count {
            let bits = rng.random::<u64>() & mask;
            let high = rng.random::<u64>() & mask;
            let (mut r1, mut r2) = (0u64, 0u64);
            for i in 0..n {
                let x = ((bits >> i) & 1) as usize + 2 * ((high >> i) & 1) as usize;
                r1 |= (pair.w1.sample(x, rng) as u64) << i;
                r2 |= (pair.w2.sample(x, rng) as u64) << i;
            }
            let (d1, d2) = ((bits ^ r1).count_ones(), (bits ^ r2).count_ones());
            let mut lost = false;
            for _ in 1..m {
                let c = rng.random::<u64>() & mask;
                if (c ^ r1).count_ones() <= d1 || (c ^ r2).count_ones() <= d2 {
                    lost = true;
                }
            }
            errors += lost as u64;
        }
        errors
    })
    .into_iter()
    .sum()
}

/// `P[a_1 + ... + a_n <= s]` by enumerating all `atoms.len()^n` paths.
pub fn enumerate_sum_cdf(atoms: &[(f64, f64)], n: u32, s: f64) -> f64 {
    let k = atoms.len();
    let mut total = 0.0;
    for idx in 0..k.pow(n) {
        let (mut v, mut p, mut r) = (0.0, 1.0, idx);
        for _ in 0..n {
            let (a, pa) = atoms[r % k];
            v += a;
            p *= pa;
            r /= k;
        }
        if v <= s + 1e-9 {
            total += p;
        }
    }
    total
}
