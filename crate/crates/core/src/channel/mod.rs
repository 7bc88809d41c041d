//! Discrete memoryless channels, broadcast pairs and their single-letter
//! information quantities. All logarithms are natural.

mod io;
mod solver;

pub use io::{channel_digest, ChannelFile};
pub use solver::{single_capacity, solve_caid, AssumptionReport, ChannelAnalysis, SolverDiagnostics};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stoch::rng::{domain, RngStream};

/// Tolerance for row sums and probability-vector sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A row-stochastic transition matrix, `w[x][y] = W(y|x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dmc {
    num_inputs: usize,
    num_outputs: usize,
    w: Vec<Vec<f64>>,
}

impl Dmc {
    pub fn new(w: Vec<Vec<f64>>) -> Result<Self> {
        let num_inputs = w.len();
        if num_inputs == 0 {
            return Err(Error::InvalidDistribution("channel has no inputs".into()));
        }
        let num_outputs = w[0].len();
        if num_outputs == 0 {
            return Err(Error::InvalidDistribution("channel has no outputs".into()));
        }
        for (x, row) in w.iter().enumerate() {
            if row.len() != num_outputs {
                return Err(Error::DimensionMismatch(format!(
                    "row {x} has {} entries, expected {num_outputs}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidDistribution(format!("row {x} has an entry outside [0,1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidDistribution(format!("row {x} sums to {s}")));
            }
        }
        Ok(Self { num_inputs, num_outputs, w })
    }

    pub fn bsc(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::OutOfRange(format!("crossover {q} not in [0,1]")));
        }
        Self::new(vec![vec![1.0 - q, q], vec![q, 1.0 - q]])
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.w[x]
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.w[x][y]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.w
    }

    /// Draws an output for input `x` by inversion.
    pub fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (y, &p) in self.w[x].iter().enumerate() {
            acc += p;
            if u < acc {
                return y;
            }
        }
        // rounding: fall back to the last output with positive mass
        self.w[x].iter().rposition(|&p| p > 0.0).unwrap_or(self.num_outputs - 1)
    }
}

/// Two channels sharing an input alphabet and an output alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastPair {
    pub w1: Dmc,
    pub w2: Dmc,
}

impl BroadcastPair {
    pub fn new(w1: Dmc, w2: Dmc) -> Result<Self> {
        if w1.num_inputs != w2.num_inputs || w1.num_outputs != w2.num_outputs {
            return Err(Error::DimensionMismatch(format!(
                "components are {}x{} and {}x{}",
                w1.num_inputs, w1.num_outputs, w2.num_inputs, w2.num_outputs
            )));
        }
        Ok(Self { w1, w2 })
    }

    pub fn num_inputs(&self) -> usize {
        self.w1.num_inputs
    }

    pub fn num_outputs(&self) -> usize {
        self.w1.num_outputs
    }

    /// Component `k` in {0, 1}.
    pub fn component(&self, k: usize) -> &Dmc {
        if k == 0 {
            &self.w1
        } else {
            &self.w2
        }
    }
}

/// A probability vector over the input alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDist {
    pub p: Vec<f64>,
}

impl InputDist {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        check_prob_vector(&p)?;
        Ok(Self { p })
    }

    pub fn uniform(n: usize) -> Self {
        Self { p: vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

fn check_prob_vector(p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidDistribution("entries must be finite and nonnegative".into()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidDistribution(format!("input distribution sums to {s}")));
    }
    Ok(())
}

/// A perturbation direction on the simplex (entries sum to zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionVector {
    pub v: Vec<f64>,
}

impl DirectionVector {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        let s: f64 = v.iter().sum();
        if s.abs() > STOCHASTIC_TOL {
            return Err(Error::ZeroSumViolation(s));
        }
        Ok(Self { v })
    }

    /// `e_x - e_last`.
    pub fn canonical(len: usize, x: usize) -> Self {
        let mut v = vec![0.0; len];
        v[x] = 1.0;
        v[len - 1] -= 1.0;
        Self { v }
    }

    /// Standard normal entries projected onto the zero-sum hyperplane.
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        let mean = v.iter().sum::<f64>() / len as f64;
        v.iter_mut().for_each(|e| *e -= mean);
        // exact zero sum: push the rounding residue into the largest entry
        let resid: f64 = v.iter().sum();
        let big = (0..len).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
        v[big] -= resid;
        Self { v }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { v: self.v.iter().map(|e| e * s).collect() }
    }
}

fn check_dims(p: &[f64], w: &Dmc) -> Result<()> {
    if p.len() != w.num_inputs {
        return Err(Error::DimensionMismatch(format!(
            "distribution has {} entries, channel has {} inputs",
            p.len(),
            w.num_inputs
        )));
    }
    Ok(())
}

/// Output law `PW(y) = sum_x P(x) W(y|x)`.
pub fn output_dist(p: &[f64], w: &Dmc) -> Vec<f64> {
    let mut q = vec![0.0; w.num_outputs];
    for (x, row) in w.w.iter().enumerate() {
        if p[x] == 0.0 {
            continue;
        }
        for (y, &wy) in row.iter().enumerate() {
            q[y] += p[x] * wy;
        }
    }
    q
}

/// `log W(y|x) - log q(y)` with `-inf` when `W(y|x) = 0`.
fn density_against(w: &Dmc, q: &[f64], x: usize, y: usize) -> Result<f64> {
    let wy = w.w[x][y];
    if wy == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if q[y] <= 0.0 {
        return Err(Error::DivergentDensity { x, y });
    }
    Ok(wy.ln() - q[y].ln())
}

/// Single-letter information density `log W(y|x) / PW(y)`.
pub fn info_density(p: &InputDist, w: &Dmc, x: usize, y: usize) -> Result<f64> {
    check_dims(&p.p, w)?;
    if x >= w.num_inputs || y >= w.num_outputs {
        return Err(Error::OutOfRange(format!("symbol pair ({x}, {y}) outside the alphabet")));
    }
    density_against(w, &output_dist(&p.p, w), x, y)
}

/// Mean and variance of the density given `X = x`, with reference law `q`.
/// Outputs with `W(y|x) = 0` carry no mass and are skipped.
pub fn density_moments(w: &Dmc, q: &[f64], x: usize) -> Result<(f64, f64)> {
    let mut terms = Vec::with_capacity(w.num_outputs);
    for y in 0..w.num_outputs {
        let wy = w.w[x][y];
        if wy > 0.0 {
            terms.push((wy, density_against(w, q, x, y)?));
        }
    }
    let mean: f64 = terms.iter().map(|(p, d)| p * d).sum();
    let var: f64 = terms.iter().map(|(p, d)| p * (d - mean) * (d - mean)).sum();
    Ok((mean, var))
}

/// `D(W(.|x) || q)` for every input, `+inf` where `q` misses the row's support.
pub fn divergences(w: &Dmc, q: &[f64]) -> Vec<f64> {
    (0..w.num_inputs)
        .map(|x| {
            let mut d = 0.0;
            for y in 0..w.num_outputs {
                let wy = w.w[x][y];
                if wy == 0.0 {
                    continue;
                }
                if q[y] <= 0.0 {
                    return f64::INFINITY;
                }
                d += wy * (wy.ln() - q[y].ln());
            }
            d
        })
        .collect()
}

pub fn mutual_information(p: &InputDist, w: &Dmc) -> Result<f64> {
    check_dims(&p.p, w)?;
    Ok(mi_raw(&p.p, w))
}

pub(crate) fn mi_raw(p: &[f64], w: &Dmc) -> f64 {
    let q = output_dist(p, w);
    let d = divergences(w, &q);
    p.iter().zip(&d).filter(|(&px, _)| px > 0.0).map(|(px, dx)| px * dx).sum::<f64>().max(0.0)
}

/// `I(P, W)` summed directly over `(x, y)` pairs; the reference form used
/// by the oracles.
pub fn mi_brute(p: &[f64], w: &Dmc) -> f64 {
    let q = output_dist(p, w);
    let mut acc = 0.0;
    for x in 0..w.num_inputs {
        for y in 0..w.num_outputs {
            let joint = p[x] * w.w[x][y];
            if joint > 0.0 {
                acc += joint * (w.w[x][y] / q[y]).ln();
            }
        }
    }
    acc
}

/// `sum_x P(x) Var[i(x;Y) | X = x]`.
pub fn cond_info_variance(p: &InputDist, w: &Dmc) -> Result<f64> {
    check_dims(&p.p, w)?;
    let q = output_dist(&p.p, w);
    let mut v = 0.0;
    for x in 0..w.num_inputs {
        if p.p[x] > 0.0 {
            v += p.p[x] * density_moments(w, &q, x)?.1;
        }
    }
    Ok(v)
}

/// `sum_x v(x) D(W(.|x) || P*W)`: the derivative of `I(P*, W)` along `v`.
pub fn directional_derivative(w: &Dmc, p_star: &InputDist, v: &DirectionVector) -> Result<f64> {
    check_dims(&p_star.p, w)?;
    if v.v.len() != w.num_inputs {
        return Err(Error::DimensionMismatch("direction length differs from input alphabet".into()));
    }
    let s: f64 = v.v.iter().sum();
    if s.abs() > STOCHASTIC_TOL {
        return Err(Error::ZeroSumViolation(s));
    }
    let d = divergences(w, &output_dist(&p_star.p, w));
    let mut acc = 0.0;
    for (vx, dx) in v.v.iter().zip(&d) {
        if *vx != 0.0 {
            acc += vx * dx;
        }
    }
    Ok(acc)
}

/// Threshold on `|grad I_1(v)|` below which a probe direction is skipped.
pub const PROBE_TOL: f64 = 1e-9;
const RANDOM_PROBES: u64 = 64;

/// `eta` from a single direction, or `None` if the direction is degenerate.
pub fn eta_along(pair: &BroadcastPair, p_star: &InputDist, v: &DirectionVector) -> Result<Option<f64>> {
    let g1 = directional_derivative(&pair.w1, p_star, v)?;
    let g2 = directional_derivative(&pair.w2, p_star, v)?;
    if g1.abs() <= PROBE_TOL || (g2 - g1).abs() <= PROBE_TOL {
        return Ok(None);
    }
    Ok(Some(g2 / (g2 - g1)))
}

/// The weight `eta` with `eta grad I_1(v) + (1 - eta) grad I_2(v) = 0`.
///
/// Probes the canonical directions `e_x - e_last` in order, then seeded
/// random directions, and uses the first with `|grad I_1(v)| > 1e-9`.
pub fn compute_eta(pair: &BroadcastPair, p_star: &InputDist) -> Result<f64> {
    let n = pair.num_inputs();
    check_dims(&p_star.p, &pair.w1)?;
    for x in 0..n.saturating_sub(1) {
        if let Some(eta) = eta_along(pair, p_star, &DirectionVector::canonical(n, x))? {
            return Ok(eta);
        }
    }
    let mut rng = RngStream::for_trial(0, domain::PROBES, 0).rng();
    for _ in 0..RANDOM_PROBES {
        if let Some(eta) = eta_along(pair, p_star, &DirectionVector::random(n, &mut rng))? {
            return Ok(eta);
        }
    }
    Err(Error::DegenerateDerivatives)
}

/// Conditional variance of `eta i_1 + (1 - eta) i_2` given `X = x`, with
/// `Y_1` and `Y_2` independent given the input.
pub fn weighted_variance_at(pair: &BroadcastPair, p: &InputDist, eta: f64, x: usize) -> Result<f64> {
    let q1 = output_dist(&p.p, &pair.w1);
    let q2 = output_dist(&p.p, &pair.w2);
    let v1 = density_moments(&pair.w1, &q1, x)?.1;
    let v2 = density_moments(&pair.w2, &q2, x)?.1;
    Ok(eta * eta * v1 + (1.0 - eta) * (1.0 - eta) * v2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform2() -> InputDist {
        InputDist::uniform(2)
    }

    #[test]
    fn validation() {
        assert!(Dmc::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(Dmc::new(vec![vec![0.5, 0.5], vec![1.0]]).is_err());
        assert!(Dmc::new(vec![vec![1.2, -0.2]]).is_err());
        assert!(InputDist::new(vec![0.3, 0.3]).is_err());
        assert!(matches!(DirectionVector::new(vec![1.0, 0.5]), Err(Error::ZeroSumViolation(_))));
        let w3 = Dmc::new(vec![vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(BroadcastPair::new(Dmc::bsc(0.1).unwrap(), w3).is_err());
    }

    #[test]
    fn density_examples() {
        let ln2 = std::f64::consts::LN_2;
        let bsc0 = Dmc::bsc(0.0).unwrap();
        assert!((info_density(&uniform2(), &bsc0, 0, 0).unwrap() - ln2).abs() < 1e-15);
        assert_eq!(info_density(&uniform2(), &bsc0, 0, 1).unwrap(), f64::NEG_INFINITY);
        let bsc = Dmc::bsc(0.05).unwrap();
        assert!((info_density(&uniform2(), &bsc, 0, 1).unwrap() - 0.1f64.ln()).abs() < 1e-14);
        let useless = Dmc::bsc(0.5).unwrap();
        assert!(info_density(&uniform2(), &useless, 1, 0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn divergent_density() {
        let w = Dmc::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = InputDist::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(info_density(&p, &w, 1, 1), Err(Error::DivergentDensity { x: 1, y: 1 }));
    }

    #[test]
    fn mi_and_variance_closed_forms() {
        let ln2 = std::f64::consts::LN_2;
        assert!(mutual_information(&uniform2(), &Dmc::bsc(0.5).unwrap()).unwrap().abs() < 1e-15);
        assert!((mutual_information(&uniform2(), &Dmc::bsc(0.0).unwrap()).unwrap() - ln2).abs() < 1e-15);
        assert!(cond_info_variance(&uniform2(), &Dmc::bsc(0.5).unwrap()).unwrap().abs() < 1e-15);
        assert!(cond_info_variance(&uniform2(), &Dmc::bsc(0.0).unwrap()).unwrap().abs() < 1e-15);
        let v = cond_info_variance(&uniform2(), &Dmc::bsc(0.05).unwrap()).unwrap();
        let want = 0.05 * 0.95 * (0.95f64 / 0.05).ln().powi(2);
        assert!((v - want).abs() < 1e-13);
    }

    #[test]
    fn zero_direction() {
        let p = uniform2();
        let d = DirectionVector::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(directional_derivative(&Dmc::bsc(0.2).unwrap(), &p, &d).unwrap(), 0.0);
    }

    #[test]
    fn random_direction_sums_to_zero() {
        let mut rng = RngStream::new(1, 1).rng();
        for n in 2..8 {
            let d = DirectionVector::random(n, &mut rng);
            assert!(d.v.iter().sum::<f64>().abs() <= STOCHASTIC_TOL);
        }
    }

    #[test]
    fn sampling_follows_row() {
        let w = Dmc::new(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let mut rng = RngStream::new(3, 0).rng();
        let mut counts = [0u32; 3];
        for _ in 0..30_000 {
            counts[w.sample(0, &mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip([0.2, 0.3, 0.5]) {
            let se = (p * (1.0 - p) / 30_000f64).sqrt();
            assert!((*c as f64 / 30_000.0 - p).abs() < 5.0 * se);
        }
    }
}
