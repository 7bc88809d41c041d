//! Fast evaluators against slow independent references.

use fbx_core::antisym::make_parallel_bsc;
use fbx_core::channel::{solve_caid, BroadcastPair, Dmc};
use fbx_core::converse::{increment_law, ConverseQuery, LambdaRule};
use fbx_core::oracle::{
    codebook_errors_mc, coupled_counts_mc, enumerate_sum_cdf, grid_maximin3, no_feedback_errors_mc, rcu_epsilon_mc,
};
use fbx_core::rcu::{coupled_pmf, epsilon_star_parallel_bsc, rcu_epsilon};
use fbx_core::stoch::special::binary_entropy_nats;
use fbx_core::Execution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};

const Q1: f64 = 0.05;
const Q2: f64 = 0.10;

fn random_pair(rng: &mut ChaCha8Rng) -> BroadcastPair {
    let dir = Dirichlet::new([1.0; 3]).unwrap();
    let mut dmc = || Dmc::new((0..3).map(|_| dir.sample(rng).to_vec()).collect()).unwrap();
    let w1 = dmc();
    let w2 = dmc();
    BroadcastPair::new(w1, w2).unwrap()
}

#[test]
fn solver_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..5 {
        let pair = random_pair(&mut rng);
        let a = solve_caid(&pair, 1e-10).unwrap();
        let (grid, _) = grid_maximin3(&pair, 1e-3, 60);
        assert!(a.capacity_c >= grid - 1e-9, "solver {} below grid {grid}", a.capacity_c);
        assert!(a.capacity_c - grid < 1e-5, "solver {} vs grid {grid}", a.capacity_c);
    }
}

#[test]
fn capacity_closed_form() {
    let pair = make_parallel_bsc(Q1, Q2).unwrap();
    let a = solve_caid(&pair, 1e-10).unwrap();
    let c = std::f64::consts::LN_2 - 0.5 * (binary_entropy_nats(Q1).unwrap() + binary_entropy_nats(Q2).unwrap());
    assert!((a.capacity_c - c).abs() < 1e-9);
    assert!(a.p_star.p.iter().all(|p| (p - 0.25).abs() < 1e-6));
}

#[test]
fn converse_cdf_matches_path_enumeration() {
    let pair = make_parallel_bsc(Q1, Q2).unwrap();
    let a = solve_caid(&pair, 1e-10).unwrap();
    let law = increment_law(&a, &pair).unwrap();
    for n in [2u32, 3] {
        let sum = law.sum_law(n as u64, Execution::Sequential).unwrap();
        let (lo, hi) = sum.support();
        for j in 0..=20 {
            let s = lo + (hi - lo) * j as f64 / 20.0;
            let exact = enumerate_sum_cdf(&law.atoms, n, s);
            assert!((sum.cdf(s) - exact).abs() < 1e-12, "n = {n}, s = {s}: {} vs {exact}", sum.cdf(s));
        }
    }
    assert!(ConverseQuery::new(3, 0.1, LambdaRule::LogN).is_ok());
}

#[test]
fn coupled_pmf_matches_construction() {
    let pair = make_parallel_bsc(Q1, Q2).unwrap();
    let n = 20;
    let trials = 1_000_000;
    let pmf = coupled_pmf(n, Q1, Q2, None).unwrap();
    let h = coupled_counts_mc(&pair, n, trials, 5, Execution::Parallel);
    for (k, exact) in [&pmf.z1, &pmf.z2].into_iter().enumerate() {
        for (t, &p) in exact.iter().enumerate() {
            let emp = h[k][t] as f64 / trials as f64;
            let se = (p * (1.0 - p) / trials as f64).sqrt().max(1.0 / trials as f64);
            assert!((emp - p).abs() <= 4.0 * se, "decoder {k}, t = {t}: {emp} vs {p}");
        }
    }
}

#[test]
fn rcu_matches_simulated_distance() {
    let pair = make_parallel_bsc(Q1, Q2).unwrap();
    let (n, log_m) = (200, 100.0 * std::f64::consts::LN_2);
    let exact = rcu_epsilon(n, log_m, Q1, Q2).unwrap();
    let (mc, se) = rcu_epsilon_mc(&pair, n, log_m, 200_000, 8, Execution::Parallel);
    assert!((mc - exact).abs() <= 4.0 * se.max(1e-12), "{mc} +/- {se} vs {exact}");
}

#[test]
fn literal_codebook_respects_rcu() {
    let pair = make_parallel_bsc(Q1, Q2).unwrap();
    let (n, m, trials) = (40u64, 1u64 << 10, 20_000u64);
    let errors = codebook_errors_mc(&pair, n, m, trials, 3, Execution::Parallel);
    let rate = errors as f64 / trials as f64;
    let bound = rcu_epsilon(n, (m as f64).ln(), Q1, Q2).unwrap();
    let se = (bound * (1.0 - bound) / trials as f64).sqrt();
    assert!(rate <= bound + 4.0 * se, "codebook {rate} vs rcu {bound}");
    // not absurdly loose either
    assert!(rate >= 0.2 * bound, "codebook {rate} vs rcu {bound}");
}

#[test]
fn block_type_code_respects_eps_star() {
    let pair = make_parallel_bsc(Q1, Q2).unwrap();
    let (n, m, trials) = (32u64, 32u64, 20_000u64);
    let errors = no_feedback_errors_mc(&pair, n, m, trials, 4, Execution::Parallel);
    let rate = errors as f64 / trials as f64;
    let bound = epsilon_star_parallel_bsc(n, (m as f64).ln(), Q1, Q2).unwrap();
    let se = (bound * (1.0 - bound) / trials as f64).sqrt();
    assert!(rate <= bound + 4.0 * se, "simulated {rate} vs eps* {bound}");
}
