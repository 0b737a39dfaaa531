use motionloc::motiongraph::{
    build_dense_adjacency, build_graph, build_positional_edges, build_semantic_edges, GraphConfig, GraphMode, Projections,
};
use motionloc::numcore::Tensor2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn features(seed: u64, t: usize, d: usize) -> Tensor2 {
    Tensor2::randn(t, d, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn symmetric(edges: &std::collections::BTreeSet<(usize, usize)>) -> bool {
    edges.iter().all(|&(i, j)| edges.contains(&(j, i)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sparse_graph_invariants(
        seed in any::<u64>(),
        t in 2usize..40,
        d in 1usize..8,
        theta in 0.02f64..0.5,
        gamma in -0.5f64..0.9,
    ) {
        let x = features(seed, t, d);
        let proj = Projections::identity(d);
        let cfg = GraphConfig { theta_pos: theta, gamma, row_normalize: false, ..GraphConfig::default() };
        let g = build_graph(&x, &proj, &cfg).unwrap();

        // Disjoint and symmetric edge sets.
        prop_assert!(g.pos_edges.is_disjoint(&g.smt_edges));
        prop_assert!(symmetric(&g.pos_edges) && symmetric(&g.smt_edges));
        for i in 0..t {
            for j in 0..t {
                prop_assert_eq!(g.adjacency.get(i, j), g.adjacency.get(j, i));
            }
        }

        // Positional degree bound: |i-j| < θT admits at most 2⌈θT⌉-1 partners.
        let width = (theta * t as f64).ceil() as usize;
        for i in 0..t {
            let deg = g.pos_edges.iter().filter(|e| e.0 == i).count();
            prop_assert!(deg <= 2 * width - 1 || (deg == 1 && width == 0), "node {} degree {} width {}", i, deg, width);
        }
        // Non-edges carry no weight.
        for i in 0..t {
            for j in 0..t {
                if !g.pos_edges.contains(&(i, j)) && !g.smt_edges.contains(&(i, j)) {
                    prop_assert_eq!(g.adjacency.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn thresholds_are_monotone(seed in any::<u64>(), t in 2usize..40, d in 1usize..8, a in 0.02f64..0.5, b in 0.02f64..0.5, ga in -0.5f64..0.9, gb in -0.5f64..0.9) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = build_positional_edges(t, &GraphConfig { theta_pos: lo, ..GraphConfig::default() });
        let large = build_positional_edges(t, &GraphConfig { theta_pos: hi, ..GraphConfig::default() });
        prop_assert!(small.is_subset(&large));

        let x = features(seed, t, d);
        let proj = Projections::identity(d);
        let (glo, ghi) = if ga <= gb { (ga, gb) } else { (gb, ga) };
        let loose = build_semantic_edges(&x, &proj, &GraphConfig { gamma: glo, ..GraphConfig::default() }).unwrap();
        let strict = build_semantic_edges(&x, &proj, &GraphConfig { gamma: ghi, ..GraphConfig::default() }).unwrap();
        prop_assert!(strict.is_subset(&loose));
    }

    #[test]
    fn positive_scaling_changes_nothing(seed in any::<u64>(), t in 2usize..30, d in 1usize..8, alpha in 0.01f64..100.0) {
        let x = features(seed, t, d);
        let proj = Projections::perturbed_identity(d, 0.01, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let cfg = GraphConfig::default();
        let g1 = build_graph(&x, &proj, &cfg).unwrap();
        let g2 = build_graph(&x.map(|v| v * alpha), &proj, &cfg).unwrap();
        prop_assert_eq!(&g1.pos_edges, &g2.pos_edges);
        prop_assert_eq!(&g1.smt_edges, &g2.smt_edges);
        let diff = g1.adjacency.zip_map(&g2.adjacency, |a, b| a - b).max_abs();
        prop_assert!(diff < 1e-9, "{}", diff);
    }

    #[test]
    fn dense_rows_sum_to_one(seed in any::<u64>(), t in 1usize..40, d in 1usize..8) {
        let x = features(seed, t, d);
        let proj = Projections::perturbed_identity(d, 0.01, &mut ChaCha8Rng::seed_from_u64(seed));
        let adj = build_dense_adjacency(&x, &proj).unwrap();
        for r in 0..t {
            let s: f64 = adj.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9, "row {} sums to {}", r, s);
        }
        let g = build_graph(&x, &proj, &GraphConfig { mode: GraphMode::Dense, ..GraphConfig::default() }).unwrap();
        prop_assert_eq!(g.adjacency, adj);
    }

    #[test]
    fn row_normalized_rows_have_unit_mass(seed in any::<u64>(), t in 1usize..30, d in 1usize..8) {
        let x = features(seed, t, d);
        let g = build_graph(&x, &Projections::identity(d), &GraphConfig::default()).unwrap();
        for r in 0..t {
            let mass: f64 = g.adjacency.row(r).iter().map(|v| v.abs()).sum();
            prop_assert!(mass == 0.0 || (mass - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn mlp_mode_is_identity_without_edges() {
    let x = features(3, 10, 4);
    let g = build_graph(&x, &Projections::identity(4), &GraphConfig { mode: GraphMode::Mlp, ..GraphConfig::default() }).unwrap();
    assert_eq!(g.adjacency, Tensor2::identity(10));
    assert_eq!(g.edge_count(), 0);
}
