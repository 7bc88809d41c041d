//! Antisymmetric broadcast pairs: channels whose two components trade
//! places under the half-swap input permutation
//! `pi = [h+1, ..., 2h, 1, ..., h]` (0-based: `x -> (x + h) mod 2h`), with
//! each half built from weakly symmetric sub-blocks on a partition of the
//! output alphabet.

use serde::{Deserialize, Serialize};

use crate::channel::{weighted_variance_at, BroadcastPair, ChannelAnalysis, Dmc};
use crate::error::{Error, Result};

const MATCH_TOL: f64 = 1e-12;
/// Largest output alphabet searched exhaustively for a block partition.
pub const MAX_PARTITION_OUTPUTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntisymDecomposition {
    pub half: usize,
    pub output_partition: Vec<Vec<usize>>,
    /// `p_matrix[k][i]`: weight of block `i` in half `k` of `W_1`.
    pub p_matrix: [Vec<f64>; 2],
    /// `sub_blocks[k][i]`: the `half x |block i|` weakly symmetric matrix.
    pub sub_blocks: [Vec<Vec<Vec<f64>>>; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotAntisymmetric {
    pub reason: String,
}

impl AntisymDecomposition {
    pub fn r(&self) -> usize {
        self.output_partition.len()
    }

    /// Rebuilds `(W_1, W_2)` from the decomposition.
    pub fn reassemble(&self) -> Result<BroadcastPair> {
        let outputs: usize = self.output_partition.iter().map(Vec::len).sum();
        let half_rows = |k: usize| -> Vec<Vec<f64>> {
            (0..self.half)
                .map(|j| {
                    let mut row = vec![0.0; outputs];
                    for (i, block) in self.output_partition.iter().enumerate() {
                        for (c, &y) in block.iter().enumerate() {
                            row[y] = self.p_matrix[k][i] * self.sub_blocks[k][i][j][c];
                        }
                    }
                    row
                })
                .collect()
        };
        let (top, bottom) = (half_rows(0), half_rows(1));
        let w1 = [top.clone(), bottom.clone()].concat();
        let w2 = [bottom, top].concat();
        BroadcastPair::new(Dmc::new(w1)?, Dmc::new(w2)?)
    }
}

/// Rows are permutations of each other and column sums agree.
fn weakly_symmetric(m: &[Vec<f64>]) -> bool {
    let mut sorted: Vec<Vec<f64>> = m
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.sort_by(f64::total_cmp);
            r
        })
        .collect();
    let first = sorted.remove(0);
    if sorted.iter().any(|r| r.iter().zip(&first).any(|(a, b)| (a - b).abs() > MATCH_TOL)) {
        return false;
    }
    let cols = m[0].len();
    let sums: Vec<f64> = (0..cols).map(|c| m.iter().map(|r| r[c]).sum()).collect();
    sums.iter().all(|s| (s - sums[0]).abs() <= MATCH_TOL * m.len() as f64)
}

/// All set partitions of `0..n`, ordered by number of blocks.
fn partitions_by_size(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    fn rec(i: usize, max: usize, labels: &mut Vec<usize>, out: &mut Vec<Vec<Vec<usize>>>) {
        let n = labels.len();
        if i == n {
            let blocks = labels.iter().max().map_or(0, |m| m + 1);
            let mut parts = vec![Vec::new(); blocks];
            for (y, &l) in labels.iter().enumerate() {
                parts[l].push(y);
            }
            out.push(parts);
            return;
        }
        for l in 0..=max {
            labels[i] = l;
            rec(i + 1, max.max(l + 1), labels, out);
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    rec(1, 1, &mut labels, &mut out);
    out.sort_by_key(Vec::len);
    out
}

/// Splits one half of `W_1` along `partition`, or `None` if some block is
/// not a scaled weakly symmetric matrix.
fn split_half(rows: &[Vec<f64>], partition: &[Vec<usize>]) -> Option<(Vec<f64>, Vec<Vec<Vec<f64>>>)> {
    let mut weights = Vec::new();
    let mut blocks = Vec::new();
    for block in partition {
        let sub: Vec<Vec<f64>> = rows.iter().map(|r| block.iter().map(|&y| r[y]).collect()).collect();
        let sums: Vec<f64> = sub.iter().map(|r| r.iter().sum()).collect();
        if sums.iter().any(|s| (s - sums[0]).abs() > MATCH_TOL) {
            return None;
        }
        let p = sums[0];
        let normalized = if p > MATCH_TOL {
            sub.iter().map(|r| r.iter().map(|v| v / p).collect()).collect()
        } else {
            vec![vec![1.0 / block.len() as f64; block.len()]; rows.len()]
        };
        if !weakly_symmetric(&normalized) {
            return None;
        }
        weights.push(p);
        blocks.push(normalized);
    }
    Some((weights, blocks))
}

pub fn check_antisymmetric(pair: &BroadcastPair) -> std::result::Result<AntisymDecomposition, NotAntisymmetric> {
    let fail = |reason: String| Err(NotAntisymmetric { reason });
    let n = pair.num_inputs();
    if n % 2 != 0 {
        return fail(format!("input alphabet size {n} is odd"));
    }
    let half = n / 2;
    for x in 0..n {
        let px = (x + half) % n;
        for y in 0..pair.num_outputs() {
            if (pair.w2.get(px, y) - pair.w1.get(x, y)).abs() > MATCH_TOL {
                return fail(format!("W2(y|pi(x)) != W1(y|x) at x = {x}, y = {y}"));
            }
        }
    }
    if pair.num_outputs() > MAX_PARTITION_OUTPUTS {
        return fail(format!(
            "output alphabet of {} exceeds the exhaustive partition search limit {MAX_PARTITION_OUTPUTS}",
            pair.num_outputs()
        ));
    }
    let rows = pair.w1.rows();
    let (top, bottom) = rows.split_at(half);
    for partition in partitions_by_size(pair.num_outputs()) {
        if let (Some((p1, b1)), Some((p2, b2))) = (split_half(top, &partition), split_half(bottom, &partition)) {
            return Ok(AntisymDecomposition {
                half,
                output_partition: partition,
                p_matrix: [p1, p2],
                sub_blocks: [b1, b2],
            });
        }
    }
    fail("no output partition yields weakly symmetric sub-blocks".into())
}

fn check_prob(name: &str, q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::OutOfRange(format!("{name} = {q} not in [0,1]")));
    }
    Ok(())
}

/// Four inputs, two outputs: inputs 0 and 1 see BSC(q1) at decoder 1,
/// inputs 2 and 3 see BSC(q2); decoder 2 sees the half-swapped matrix.
pub fn make_parallel_bsc(q1: f64, q2: f64) -> Result<BroadcastPair> {
    check_prob("q1", q1)?;
    check_prob("q2", q2)?;
    let w1 = vec![vec![1.0 - q1, q1], vec![q1, 1.0 - q1], vec![1.0 - q2, q2], vec![q2, 1.0 - q2]];
    let w2 = vec![w1[2].clone(), w1[3].clone(), w1[0].clone(), w1[1].clone()];
    BroadcastPair::new(Dmc::new(w1)?, Dmc::new(w2)?)
}

/// Two Z-channels facing opposite ways: `W_1 = [[1-q, q], [0, 1]]` and
/// `W_2 = [[0, 1], [1-q, q]]`.
pub fn make_antisym_z(q: f64) -> Result<BroadcastPair> {
    check_prob("q", q)?;
    let w1 = vec![vec![1.0 - q, q], vec![0.0, 1.0]];
    let w2 = vec![vec![0.0, 1.0], vec![1.0 - q, q]];
    BroadcastPair::new(Dmc::new(w1)?, Dmc::new(w2)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertCheck {
    pub name: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub decomposition: AntisymDecomposition,
    pub checks: Vec<CertCheck>,
}

impl CertificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CertCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Verifies the closed-form consequences of antisymmetry on a solved
/// analysis: `eta = 1/2`, `V_1 = V_2`, `Var[i_1 + i_2 | x] = 2 V_1` for every
/// input, uniform `P*`, and `V = V_1 / 2`. Non-antisymmetric pairs are refused.
pub fn certify_antisymmetric(pair: &BroadcastPair, analysis: &ChannelAnalysis) -> Result<CertificationReport> {
    let decomposition =
        check_antisymmetric(pair).map_err(|e| Error::CertificationRefused(e.reason))?;
    let mut checks = Vec::new();
    let mut push = |name: &str, deviation: f64, tolerance: f64| {
        checks.push(CertCheck { name: name.into(), deviation, tolerance, passed: deviation < tolerance });
    };
    push("eta_half", (analysis.eta - 0.5).abs(), 1e-8);
    push("equal_dispersions", (analysis.v1 - analysis.v2).abs(), 1e-10);
    let mut worst = 0.0f64;
    for x in 0..pair.num_inputs() {
        // eta = 1/2 weights give Var[i1 + i2 | x] / 4
        let v = 4.0 * weighted_variance_at(pair, &analysis.p_star, 0.5, x)?;
        worst = worst.max((v - 2.0 * analysis.v1).abs());
    }
    push("per_input_sum_variance", worst, 1e-9);
    let n = pair.num_inputs() as f64;
    let uniform_dev = analysis.p_star.p.iter().fold(0.0f64, |m, p| m.max((p - 1.0 / n).abs()));
    push("uniform_caid", uniform_dev, 1e-6);
    push("dispersion_halving", (analysis.v_weighted - analysis.v1 / 2.0).abs(), 1e-9);
    Ok(CertificationReport { decomposition, checks })
}
