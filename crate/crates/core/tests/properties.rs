//! Randomized invariants.

use fbx_core::antisym::{check_antisymmetric, make_parallel_bsc};
use fbx_core::channel::DirectionVector;
use fbx_core::curve::{parse_csv_points, parse_grid, BoundCurve, CurveKind, CurvePoint, Metadata};
use fbx_core::flf_sim::round_type;
use fbx_core::rcu::{coupled_pmf, rcu_epsilon};
use fbx_core::vlf::vlf_converse_log_m;
use proptest::prelude::*;
use rand::SeedableRng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rounded_types_sum_to_m(w in prop::collection::vec(0.0f64..1.0, 2..6), m in 1u64..5000) {
        let s: f64 = w.iter().sum();
        prop_assume!(s > 1e-6);
        let p: Vec<f64> = w.iter().map(|v| v / s).collect();
        let c = round_type(&p, m);
        prop_assert_eq!(c.iter().sum::<u64>(), m);
        for (ci, pi) in c.iter().zip(&p) {
            prop_assert!((*ci as f64 - pi * m as f64).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn random_directions_sum_to_zero(len in 2usize..8, seed in any::<u64>()) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v = DirectionVector::random(len, &mut rng);
        prop_assert!(DirectionVector::new(v.v.clone()).is_ok());
    }

    #[test]
    fn parallel_bsc_is_antisymmetric(q1 in 0.001f64..0.49, q2 in 0.001f64..0.49) {
        prop_assume!((q1 - q2).abs() > 1e-3);
        let pair = make_parallel_bsc(q1, q2).unwrap();
        prop_assert!(check_antisymmetric(&pair).is_ok());
    }

    #[test]
    fn rcu_monotone_in_message_count(n in 20u64..200, a in 1.0f64..60.0, d in 0.1f64..10.0) {
        let lo = rcu_epsilon(n, a, 0.05, 0.1).unwrap();
        let hi = rcu_epsilon(n, a + d, 0.05, 0.1).unwrap();
        prop_assert!(hi >= lo - 1e-15);
    }

    #[test]
    fn coupled_pmf_is_normalized(n in 1u64..120, q1 in 0.0f64..0.5, q2 in 0.0f64..0.5) {
        let p = coupled_pmf(n, q1, q2, None).unwrap();
        prop_assert!((p.z1.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!((p.diff.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn vlf_converse_increases(ell in 0.0f64..1e5, e in 0.001f64..0.5, c in 0.01f64..2.0) {
        let a = vlf_converse_log_m(ell, e, c).unwrap();
        let b = vlf_converse_log_m(ell + 1.0, e, c).unwrap();
        prop_assert!(b > a);
    }

    #[test]
    fn curve_csv_round_trip(mut pts in prop::collection::vec((1u64..100_000, -1e6f64..1e6), 0..20)) {
        pts.sort_by_key(|p| p.0);
        let points = pts.iter().map(|&(n, l)| CurvePoint { n: n as f64, log_m_nats: l, kind: CurveKind::Converse }).collect();
        let c = BoundCurve::new(points, "d".into(), 3, 0.01, Metadata::new()).unwrap();
        prop_assert_eq!(parse_csv_points(&c.to_csv(false).unwrap()).unwrap(), c.points.clone());
        prop_assert_eq!(BoundCurve::from_json(&c.to_json().unwrap()).unwrap(), c);
    }

    #[test]
    fn grid_spec_parses(a in 1u64..1000, len in 0u64..50, step in 1u64..100) {
        let g = parse_grid(&format!("{a}:{}:{step}", a + len)).unwrap();
        prop_assert_eq!(g.first().copied(), Some(a));
        prop_assert!(g.windows(2).all(|w| w[1] - w[0] == step));
        prop_assert!(*g.last().unwrap() <= a + len);
    }
}
