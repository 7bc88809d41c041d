//! Maximin input distribution `P* = argmax_P min_k I(P, W_k)`.
//!
//! The problem is solved through its minimax dual
//! `C = min_lambda max_P [lambda I_1(P) + (1 - lambda) I_2(P)]`. For a fixed
//! weight the inner problem is a weighted Blahut-Arimoto iteration; the
//! outer weight is bisected on the sign of `I_1 - I_2`. The two bracketing
//! inner solutions are mixed to equalize `I_1` and `I_2`, then Newton's
//! method on the stationarity system polishes the result. Termination is
//! certified by the duality gap
//! `max_x sum_k lambda_k D(W_k(.|x) || P W_k) - min_k I_k(P)`,
//! which upper-bounds the distance to the true maximin value.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    compute_eta, divergences, mi_raw, output_dist, weighted_variance_at, BroadcastPair, DirectionVector, Dmc,
    InputDist,
};
use crate::error::{Error, Result};
use crate::stoch::rng::{domain, RngStream};

const BA_TOL: f64 = 1e-14;
const BA_MAX_ITER: u64 = 20_000;
const BISECTION_STEPS: u32 = 64;
const UNIQUENESS_PROBES: u32 = 32;

/// Default tolerance for the per-input weighted-variance equality test.
pub const DEFAULT_CONDITION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub p_star_has_zero: bool,
    pub v1_zero: bool,
    pub v2_zero: bool,
    pub c1_equals_c: bool,
    pub c2_equals_c: bool,
    pub degenerate_derivatives: bool,
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub lambda_star: f64,
    pub duality_gap: f64,
    pub bisection_steps: u32,
    pub inner_iterations: u64,
    pub polished: bool,
    pub uniqueness_probes: u32,
    /// Every probe strictly decreased `min_k I_k`; suggestive, not a proof.
    pub apparently_unique: bool,
    pub min_probe_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelAnalysis {
    pub p_star: InputDist,
    pub capacity_c: f64,
    pub c1: f64,
    pub c2: f64,
    pub v1: f64,
    pub v2: f64,
    pub eta: f64,
    pub v_weighted: f64,
    pub variance_condition_holds: bool,
    pub condition_tolerance: f64,
    pub i1: f64,
    pub i2: f64,
    /// `eta^2 Var[i_1|x] + (1-eta)^2 Var[i_2|x]` per input.
    pub per_input_variance: Vec<f64>,
    pub assumptions: AssumptionReport,
    pub diagnostics: SolverDiagnostics,
}

/// Weighted divergences `sum_k lambda_k D_k(x)` plus the component
/// mutual informations at `p`.
struct Eval {
    weighted: Vec<f64>,
    d: [Vec<f64>; 2],
    i: [f64; 2],
}

fn evaluate(comps: &[&Dmc], lam: f64, p: &[f64]) -> Eval {
    let d0 = divergences(comps[0], &output_dist(p, comps[0]));
    let d1 = if comps.len() > 1 { divergences(comps[1], &output_dist(p, comps[1])) } else { d0.clone() };
    let mix = |a: f64, b: f64| {
        if lam == 1.0 {
            a
        } else if lam == 0.0 {
            b
        } else {
            lam * a + (1.0 - lam) * b
        }
    };
    let weighted = d0.iter().zip(&d1).map(|(&a, &b)| mix(a, b)).collect();
    let info = |d: &[f64]| -> f64 {
        p.iter().zip(d).filter(|(&px, _)| px > 0.0).map(|(px, dx)| px * dx).sum::<f64>().max(0.0)
    };
    let i = [info(&d0), info(&d1)];
    Eval { weighted, d: [d0, d1], i }
}

fn max_finite(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Weighted Blahut-Arimoto: `P(x) <- P(x) exp(sum_k lambda_k D_k(x))`,
/// normalized. Returns the iterate and the number of steps.
fn blahut_arimoto(comps: &[&Dmc], lam: f64, p0: &[f64]) -> (Vec<f64>, u64) {
    let mut p = p0.to_vec();
    for it in 0..BA_MAX_ITER {
        let e = evaluate(comps, lam, &p);
        let top = max_finite(&e.weighted);
        let obj: f64 = p.iter().zip(&e.weighted).filter(|(&px, _)| px > 0.0).map(|(px, d)| px * d).sum();
        if top - obj < BA_TOL {
            return (p, it);
        }
        let mut total = 0.0;
        for (px, d) in p.iter_mut().zip(&e.weighted) {
            if *px > 0.0 {
                *px *= (d - top).exp();
            }
            total += *px;
        }
        p.iter_mut().for_each(|px| *px /= total);
    }
    (p, BA_MAX_ITER)
}

fn duality_gap(comps: &[&Dmc], lam: f64, p: &[f64]) -> f64 {
    let e = evaluate(comps, lam, p);
    let low = if comps.len() > 1 { e.i[0].min(e.i[1]) } else { e.i[0] };
    max_finite(&e.weighted) - low
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-13 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Newton's method on the stationarity system restricted to `support`:
/// `sum_k lambda_k D_k(x) = C` on the support, `sum P = 1`, and (with two
/// components) `I_1 = I_2`. Returns `(P, lambda)` on convergence.
fn newton_polish(comps: &[&Dmc], lam0: f64, p0: &[f64], support: &[usize]) -> Option<(Vec<f64>, f64)> {
    let two = comps.len() > 1;
    let s = support.len();
    let dim = s + 1 + usize::from(two);
    let mut p = vec![0.0; p0.len()];
    let mass: f64 = support.iter().map(|&x| p0[x]).sum();
    if mass <= 0.0 {
        return None;
    }
    for &x in support {
        p[x] = (p0[x] / mass).max(1e-12);
    }
    let mut lam = lam0;
    let mut c = {
        let e = evaluate(comps, lam, &p);
        support.iter().map(|&x| p[x] * e.weighted[x]).sum::<f64>()
    };

    let residual = |p: &[f64], lam: f64, c: f64| -> Option<Vec<f64>> {
        let e = evaluate(comps, lam, p);
        let mut r: Vec<f64> = support.iter().map(|&x| e.weighted[x] - c).collect();
        r.push(support.iter().map(|&x| p[x]).sum::<f64>() - 1.0);
        if two {
            r.push(e.i[0] - e.i[1]);
        }
        r.iter().all(|v| v.is_finite()).then_some(r)
    };
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut r = residual(&p, lam, c)?;
    for _ in 0..60 {
        if norm(&r) < 1e-15 {
            break;
        }
        let e = evaluate(comps, lam, &p);
        let qs: Vec<Vec<f64>> = comps.iter().map(|w| output_dist(&p, w)).collect();
        let weights: Vec<f64> = if two { vec![lam, 1.0 - lam] } else { vec![1.0] };
        let mut jac = vec![vec![0.0; dim]; dim];
        for (i, &x) in support.iter().enumerate() {
            for (j, &xp) in support.iter().enumerate() {
                let mut g = 0.0;
                for (k, w) in comps.iter().enumerate() {
                    let cross: f64 = (0..w.num_outputs())
                        .filter(|&y| qs[k][y] > 0.0)
                        .map(|y| w.get(x, y) * w.get(xp, y) / qs[k][y])
                        .sum();
                    g -= weights[k] * cross;
                }
                jac[i][j] = g;
            }
            if two {
                jac[i][s] = e.d[0][x] - e.d[1][x];
                jac[i][s + 1] = -1.0;
            } else {
                jac[i][s] = -1.0;
            }
            jac[s][i] = 1.0;
            if two {
                jac[s + 1][i] = e.d[0][x] - e.d[1][x];
            }
        }
        let step = solve_linear(jac, r.iter().map(|v| -v).collect())?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut pn = p.clone();
            for (i, &x) in support.iter().enumerate() {
                pn[x] = p[x] + t * step[i];
            }
            let (ln, cn) = if two { (lam + t * step[s], c + t * step[s + 1]) } else { (lam, c + t * step[s]) };
            if support.iter().all(|&x| pn[x] > 0.0) && (0.0..=1.0).contains(&ln) {
                if let Some(rn) = residual(&pn, ln, cn) {
                    if norm(&rn) < norm(&r) {
                        p = pn;
                        lam = ln;
                        c = cn;
                        r = rn;
                        accepted = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm(&r) > 1e-11 {
        return None;
    }
    // exact normalization after convergence
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Some((p, lam))
}

struct Solution {
    p: Vec<f64>,
    lam: f64,
    gap: f64,
    bisection_steps: u32,
    inner_iterations: u64,
    polished: bool,
}

/// Runs Newton from `p` on a few candidate supports and keeps the result
/// with the smallest duality gap, provided it improves on the input.
fn polish(comps: &[&Dmc], lam: f64, p: Vec<f64>) -> (Vec<f64>, f64, f64, bool) {
    let base_gap = duality_gap(comps, lam, &p);
    let e = evaluate(comps, lam, &p);
    let top = max_finite(&e.weighted);
    let mut candidates: Vec<Vec<usize>> = vec![
        (0..p.len()).filter(|&x| p[x] > 1e-6).collect(),
        (0..p.len()).filter(|&x| e.weighted[x] >= top - 1e-6).collect(),
        (0..p.len()).filter(|&x| p[x] > 1e-10).collect(),
        (0..p.len()).collect(),
    ];
    candidates.dedup();
    let mut best = (p, lam, base_gap, false);
    for support in candidates {
        if support.is_empty() {
            continue;
        }
        if let Some((pn, ln)) = newton_polish(comps, lam, &best.0, &support) {
            let g = duality_gap(comps, ln, &pn);
            if g.is_finite() && g < best.2 {
                best = (pn, ln, g, true);
            }
        }
    }
    best
}

fn solve_components(comps: &[&Dmc]) -> Solution {
    let n = comps[0].num_inputs();
    let uniform = vec![1.0 / n as f64; n];
    let mut inner = 0;

    let endpoint = |lam: f64, inner: &mut u64| {
        let (p, it) = blahut_arimoto(comps, lam, &uniform);
        *inner += it;
        p
    };

    if comps.len() == 1 {
        let p = endpoint(1.0, &mut inner);
        let (p, lam, gap, polished) = polish(comps, 1.0, p);
        return Solution { p, lam, gap, bisection_steps: 0, inner_iterations: inner, polished };
    }

    // The minimum sits at an endpoint when one channel is the bottleneck.
    let p_hi = endpoint(1.0, &mut inner);
    let e_hi = evaluate(comps, 1.0, &p_hi);
    if e_hi.i[0] <= e_hi.i[1] + 1e-13 {
        let (p, lam, gap, polished) = polish(&comps[..1], 1.0, p_hi);
        let gap = gap.max(duality_gap(comps, lam, &p));
        return Solution { p, lam, gap, bisection_steps: 0, inner_iterations: inner, polished };
    }
    let p_lo = endpoint(0.0, &mut inner);
    let e_lo = evaluate(comps, 0.0, &p_lo);
    if e_lo.i[1] <= e_lo.i[0] + 1e-13 {
        let (p, _, gap, polished) = polish(&comps[1..], 1.0, p_lo);
        let gap = gap.max(duality_gap(comps, 0.0, &p));
        return Solution { p, lam: 0.0, gap, bisection_steps: 0, inner_iterations: inner, polished };
    }

    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (mut p_lo, mut p_hi) = (p_lo, p_hi);
    let mut warm = uniform.clone();
    let mut steps = 0;
    while steps < BISECTION_STEPS && hi - lo > 1e-15 {
        steps += 1;
        let mid = 0.5 * (lo + hi);
        let (p, it) = blahut_arimoto(comps, mid, &warm);
        inner += it;
        let e = evaluate(comps, mid, &p);
        warm = p.clone();
        if e.i[0] > e.i[1] {
            hi = mid;
            p_hi = p;
        } else {
            lo = mid;
            p_lo = p;
        }
    }
    let lam = 0.5 * (lo + hi);

    // Mix the bracketing maximizers so that I_1 = I_2.
    let mix = |theta: f64| -> Vec<f64> { p_lo.iter().zip(&p_hi).map(|(a, b)| theta * a + (1.0 - theta) * b).collect() };
    let (mut t_lo, mut t_hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let t = 0.5 * (t_lo + t_hi);
        let e = evaluate(comps, lam, &mix(t));
        if e.i[0] > e.i[1] {
            t_lo = t;
        } else {
            t_hi = t;
        }
    }
    let p = mix(0.5 * (t_lo + t_hi));
    let (p, lam, gap, polished) = polish(comps, lam, p);
    Solution { p, lam, gap, bisection_steps: steps, inner_iterations: inner, polished }
}

/// Capacity and capacity-achieving input of a single channel.
pub fn single_capacity(w: &Dmc, tol: f64) -> Result<(f64, InputDist)> {
    let sol = solve_components(&[w]);
    if !(sol.gap <= tol) {
        return Err(Error::NonConvergence { iterations: sol.inner_iterations as usize, gap: sol.gap });
    }
    Ok((mi_raw(&sol.p, w), InputDist { p: sol.p }))
}

/// Solves for `P*`, `C`, the component capacities and dispersions, `eta`
/// and the per-input variance condition. Violated modelling assumptions
/// are reported in `assumptions`, not raised.
pub fn solve_caid(pair: &BroadcastPair, tol: f64) -> Result<ChannelAnalysis> {
    let comps = [&pair.w1, &pair.w2];
    let sol = solve_components(&comps);
    if !(sol.gap <= tol) {
        return Err(Error::NonConvergence { iterations: sol.inner_iterations as usize, gap: sol.gap });
    }
    let p_star = InputDist { p: sol.p };
    let i1 = mi_raw(&p_star.p, &pair.w1);
    let i2 = mi_raw(&p_star.p, &pair.w2);
    let capacity_c = i1.min(i2);
    let (c1, _) = single_capacity(&pair.w1, tol)?;
    let (c2, _) = single_capacity(&pair.w2, tol)?;
    let v1 = super::cond_info_variance(&p_star, &pair.w1)?;
    let v2 = super::cond_info_variance(&p_star, &pair.w2)?;

    let mut violations = Vec::new();
    let p_star_has_zero = p_star.p.iter().any(|&v| v < 1e-9);
    if p_star_has_zero {
        violations.push("P* has a zero entry".to_string());
    }
    let v1_zero = v1 < 1e-12;
    let v2_zero = v2 < 1e-12;
    if v1_zero || v2_zero {
        violations.push("a component has zero conditional information variance".to_string());
    }
    let c1_equals_c = c1 - capacity_c < tol.max(1e-9);
    let c2_equals_c = c2 - capacity_c < tol.max(1e-9);
    if c1_equals_c || c2_equals_c {
        violations.push("a component capacity equals the common-message capacity".to_string());
    }
    let (eta, degenerate_derivatives) = match compute_eta(pair, &p_star) {
        Ok(eta) if eta > 0.0 && eta < 1.0 => (eta, false),
        _ => (sol.lam, true),
    };
    if degenerate_derivatives {
        violations.push("directional derivatives are degenerate; eta taken from the dual weight".to_string());
    }

    let v_weighted = eta * eta * v1 + (1.0 - eta) * (1.0 - eta) * v2;
    let per_input_variance: Vec<f64> = (0..pair.num_inputs())
        .map(|x| weighted_variance_at(pair, &p_star, eta, x).unwrap_or(f64::NAN))
        .collect();
    let condition_tolerance = DEFAULT_CONDITION_TOL;
    let variance_condition_holds = per_input_variance.iter().all(|v| (v - v_weighted).abs() <= condition_tolerance);

    let (apparently_unique, min_probe_drop) = probe_uniqueness(pair, &p_star.p, capacity_c);

    Ok(ChannelAnalysis {
        p_star,
        capacity_c,
        c1,
        c2,
        v1,
        v2,
        eta,
        v_weighted,
        variance_condition_holds,
        condition_tolerance,
        i1,
        i2,
        per_input_variance,
        assumptions: AssumptionReport {
            p_star_has_zero,
            v1_zero,
            v2_zero,
            c1_equals_c,
            c2_equals_c,
            degenerate_derivatives,
            violations,
        },
        diagnostics: SolverDiagnostics {
            lambda_star: sol.lam,
            duality_gap: sol.gap,
            bisection_steps: sol.bisection_steps,
            inner_iterations: sol.inner_iterations,
            polished: sol.polished,
            uniqueness_probes: UNIQUENESS_PROBES,
            apparently_unique,
            min_probe_drop,
        },
    })
}

/// Moves a small step from `p` along seeded random feasible directions and
/// checks that `min_k I_k` drops every time.
fn probe_uniqueness(pair: &BroadcastPair, p: &[f64], c: f64) -> (bool, f64) {
    let mut rng = RngStream::for_trial(1, domain::PROBES, 1).rng();
    let mut min_drop = f64::INFINITY;
    for _ in 0..UNIQUENESS_PROBES {
        let v = DirectionVector::random(p.len(), &mut rng);
        // stay inside the simplex
        let mut limit = f64::INFINITY;
        for (px, vx) in p.iter().zip(&v.v) {
            if *vx < 0.0 {
                limit = limit.min(px / -vx);
            }
        }
        let scale = 1e-3f64.min(0.5 * limit) * (0.5 + rng.random::<f64>());
        if !(scale > 0.0) {
            continue;
        }
        let q: Vec<f64> = p.iter().zip(&v.v).map(|(a, b)| (a + scale * b).max(0.0)).collect();
        let val = mi_raw(&q, &pair.w1).min(mi_raw(&q, &pair.w2));
        min_drop = min_drop.min(c - val);
    }
    (min_drop > 0.0, min_drop)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bsc(q: f64) -> Dmc {
        Dmc::bsc(q).unwrap()
    }

    #[test]
    fn single_bsc_capacity() {
        let (c, p) = single_capacity(&bsc(0.11), 1e-12).unwrap();
        let h = crate::stoch::binary_entropy_nats(0.11).unwrap();
        assert!((c - (std::f64::consts::LN_2 - h)).abs() < 1e-12);
        assert!((p.p[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn identical_components() {
        let pair = BroadcastPair::new(bsc(0.1), bsc(0.1)).unwrap();
        let a = solve_caid(&pair, 1e-9).unwrap();
        assert!((a.p_star.p[0] - 0.5).abs() < 1e-9);
        assert!(a.assumptions.c1_equals_c && a.assumptions.c2_equals_c);
        assert!(!a.assumptions.ok());
    }

    #[test]
    fn z_channel_capacity() {
        // Z channel with crossover 1/2: capacity log(1 + 2^{-2}) bits... in nats log(5/4)
        let z = Dmc::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let (c, p) = single_capacity(&z, 1e-12).unwrap();
        assert!((c - (1.25f64).ln()).abs() < 1e-12);
        assert!((p.p[1] - 0.4).abs() < 1e-8);
    }

    #[test]
    fn bottleneck_channel_at_endpoint() {
        // W2 is much better everywhere, so C = C_1.
        let pair = BroadcastPair::new(bsc(0.2), bsc(0.01)).unwrap();
        let a = solve_caid(&pair, 1e-9).unwrap();
        assert!((a.capacity_c - a.c1).abs() < 1e-9);
        assert!(a.assumptions.c1_equals_c);
    }

    #[test]
    fn linear_solver() {
        let x = solve_linear(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve_linear(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![1.0, 1.0]).is_none());
    }
}
