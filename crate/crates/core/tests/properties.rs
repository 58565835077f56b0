use limo::evaluation::{
    centralized_cost_closed_form, centralized_lower_bound, deadbeat_cost_closed_form, deadbeat_cost_matrix,
    simulate_cost, simulate_trajectory, SimOptions,
};
use limo::graphs::DirectedGraph;
use limo::linalg::{max_abs, min_sym_eigenvalue};
use limo::plant::{is_nilpotent_deg2, normalize, sample_plant, validate, worst_case_family, EnsembleSpec, Plant};
use limo::ratio::{per_plant_ratio, ratio_bound, scalar_quadratic_bound};
use limo::riccati::{augment, riccati_step, solve_plant, value_lower_bound};
use limo::synthesis::{centralized_with_solution, deadbeat, theta, Strategy};
use limo::verify::{random_graph, random_no_sink_graph};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graph_from(n: usize, seed: u64) -> DirectedGraph {
    random_graph(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

prop_compose! {
    fn any_graph()(n in 1usize..=5, seed in any::<u64>()) -> DirectedGraph {
        graph_from(n, seed)
    }
}

prop_compose! {
    fn graph_and_plant(eps_b: f64)(n in 1usize..=4, seed in any::<u64>()) -> (DirectedGraph, Plant) {
        let g = graph_from(n, seed);
        let p = sample_plant(&EnsembleSpec::new(g.clone(), eps_b, seed, 1), 0);
        (g, p)
    }
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 64, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn sinks_and_partition(g in any_graph()) {
        let sinks = g.sinks();
        let part = g.sink_partition();
        let mut seen = part.permutation.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..g.n()).collect::<Vec<_>>());
        prop_assert_eq!(part.sink_count, sinks.len());
        prop_assert!(part.s12().iter().all(|&v| v == 0));
        let tail: Vec<usize> = part.permutation[g.n() - sinks.len()..].to_vec();
        prop_assert_eq!(tail, sinks.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn supergraph_order(n in 1usize..=4, s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let a = graph_from(n, s1);
        prop_assert!(a.is_supergraph(&a).unwrap());
        // Build a chain c ⊆ b ⊆ a by dropping edges.
        let b = a.edges().into_iter().enumerate().filter(|(k, _)| (s2 >> (k % 64)) & 1 == 1)
            .fold(DirectedGraph::empty(n), |g, (_, (f, t))| g.with_edge(f, t));
        let c = b.edges().into_iter().enumerate().filter(|(k, _)| (s3 >> (k % 64)) & 1 == 1)
            .fold(DirectedGraph::empty(n), |g, (_, (f, t))| g.with_edge(f, t));
        prop_assert!(a.is_supergraph(&b).unwrap() && b.is_supergraph(&c).unwrap());
        prop_assert!(a.is_supergraph(&c).unwrap());
        let other = graph_from(n, s2);
        let (ab, bc) = (a.is_supergraph(&other).unwrap(), other.is_supergraph(&c).unwrap());
        if ab && bc {
            prop_assert!(a.is_supergraph(&c).unwrap());
        }
    }

    #[test]
    fn complete_design_graph_never_triggers(g in any_graph()) {
        prop_assert_eq!(g.design_condition_applies(&DirectedGraph::complete(g.n())).unwrap(), None);
    }

    #[test]
    fn no_cross_edges_means_all_isolated_sinks(n in 1usize..=6, loops in any::<u8>()) {
        let g = (0..n).filter(|v| loops >> v & 1 == 1).fold(DirectedGraph::empty(n), |g, v| g.with_edge(v, v));
        let all: Vec<usize> = (0..n).collect();
        prop_assert_eq!(g.sinks().into_iter().collect::<Vec<_>>(), all.clone());
        prop_assert_eq!(g.isolated_nodes().into_iter().collect::<Vec<_>>(), all);
    }

    #[test]
    fn normalize_composes(
        (_, p) in graph_and_plant(1.0),
        w in proptest::collection::vec(0.1f64..10.0, 16),
    ) {
        let n = p.n();
        let (q1, r1, q2, r2) = (&w[0..n], &w[4..4 + n], &w[8..8 + n], &w[12..12 + n]);
        let twice = normalize(&normalize(&p, q1, r1).unwrap(), q2, r2).unwrap();
        let q: Vec<f64> = q1.iter().zip(q2).map(|(a, b)| a * b).collect();
        let r: Vec<f64> = r1.iter().zip(r2).map(|(a, b)| a * b).collect();
        let once = normalize(&p, &q, &r).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs()));
        prop_assert!(twice.a.iter().zip(once.a.iter()).all(|(&x, &y)| close(x, y)));
        prop_assert!(twice.b_diag.iter().zip(once.b_diag.iter()).all(|(&x, &y)| close(x, y)));
        prop_assert!(twice.x0.iter().zip(once.x0.iter()).all(|(&x, &y)| close(x, y)));
        prop_assert!(twice.w0.iter().zip(once.w0.iter()).all(|(&x, &y)| close(x, y)));
    }

    #[test]
    fn sampled_plants_are_valid_and_reproducible((g, p) in graph_and_plant(0.5), seed in any::<u64>()) {
        prop_assert!(validate(&p, &g, 0.5).unwrap().is_empty());
        let spec = EnsembleSpec::new(g, 0.5, seed, 3);
        prop_assert_eq!(sample_plant(&spec, 2), sample_plant(&spec, 2));
    }

    #[test]
    fn family_is_nilpotent_and_valid(
        n in 2usize..=5, i in 0usize..5, j in 0usize..5,
        r in prop_oneof![-1e4f64..-1e-3, 1e-3f64..1e4], eps in 0.1f64..5.0,
    ) {
        prop_assume!(i < n && j < n && i != j);
        let p = worst_case_family(i, j, r, eps, n).unwrap();
        prop_assert!(is_nilpotent_deg2(&p.a));
        let g = DirectedGraph::self_loops(n).with_edge(i, j);
        prop_assert!(validate(&p, &g, eps).unwrap().is_empty());
    }

    #[test]
    fn value_iteration_is_monotone((_, p) in graph_and_plant(1.0)) {
        let sys = augment(&p);
        let mut x = DMatrix::identity(2 * p.n(), 2 * p.n());
        for _ in 0..20 {
            let next = riccati_step(&sys, &x).unwrap();
            prop_assert!(min_sym_eigenvalue(&(&next - &x)) >= -1e-10 * (1.0 + max_abs(&next)));
            x = next;
        }
    }

    #[test]
    fn riccati_identities((_, p) in graph_and_plant(1.0)) {
        let sol = solve_plant(&p).unwrap();
        let n = p.n();
        let scale = 1.0 + max_abs(&sol.x);
        let gap = &sol.x - value_lower_bound(&p);
        prop_assert!(min_sym_eigenvalue(&gap) >= -1e-8 * scale);

        let b = p.b();
        let x22_inv = sol.x22().try_inverse().unwrap();
        let sub = &b * sol.x11() * &b - &b * sol.x12() * &x22_inv * sol.x12().transpose() * &b;
        prop_assert!(max_abs(&(sol.x22() - DMatrix::identity(n, n) - sub)) <= 1e-8 * scale);

        let g2 = -&x22_inv * sol.x12().transpose() * &b - p.d();
        prop_assert!(max_abs(&(&sol.g2 - g2)) <= 1e-8 * (1.0 + max_abs(&sol.g2)));
    }

    #[test]
    fn deadbeat_settles((_, p) in graph_and_plant(1.0)) {
        let t = simulate_trajectory(&p, &deadbeat(&p), 10).unwrap();
        let scale = 1.0 + p.x0.norm() + p.w0.norm();
        for k in 2..10 {
            prop_assert!(t.x[k].amax() <= 1e-9 * scale);
            prop_assert!(t.input_plus_disturbance[k].amax() <= 1e-9 * scale);
        }
    }

    #[test]
    fn off_diagonal_cancellation((g, p) in graph_and_plant(1.0)) {
        let n = p.n();
        let sinks = g.sinks();
        let d = deadbeat(&p);
        let t = theta(&p, &g).unwrap();
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let a = p.a[(i, j)];
                prop_assert!(p.b_diag[i].mul_add(d.d_k[(i, j)], a).abs() <= f64::EPSILON * a.abs());
                if !sinks.contains(&i) {
                    prop_assert_eq!(t.d_k[(i, j)].to_bits(), d.d_k[(i, j)].to_bits());
                }
            }
        }
    }

    #[test]
    fn theta_is_deadbeat_without_sinks(n in 2usize..=5, seed in any::<u64>()) {
        let g = random_no_sink_graph(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let p = sample_plant(&EnsembleSpec::new(g.clone(), 1.0, seed, 1), 0);
        prop_assert_eq!(theta(&p, &g).unwrap(), deadbeat(&p));
    }

    #[test]
    fn controllers_are_state_separated((g, p) in graph_and_plant(1.0)) {
        let (c, sol) = centralized_with_solution(&p).unwrap();
        prop_assert!(c.is_state_separated());
        prop_assert!(deadbeat(&p).is_state_separated());
        prop_assert!(theta(&p, &g).unwrap().is_state_separated());
        prop_assert_eq!(c.d_k, &sol.g2 * p.b_inv());
    }

    #[test]
    fn deadbeat_closed_form_matches_simulation((_, p) in graph_and_plant(1.0)) {
        let sim = simulate_cost(&p, &deadbeat(&p), &SimOptions::default()).unwrap().total;
        let closed = deadbeat_cost_closed_form(&p);
        prop_assert!((sim - closed).abs() <= 1e-9 * (1.0 + sim));
        let q = deadbeat_cost_matrix(&p);
        prop_assert!(min_sym_eigenvalue(&q) >= -1e-10 * (1.0 + max_abs(&q)));
    }

    #[test]
    fn lower_bound_below_optimum((_, p) in graph_and_plant(1.0)) {
        let opt = centralized_cost_closed_form(&p, &solve_plant(&p).unwrap());
        prop_assert!(centralized_lower_bound(&p) <= opt + 1e-8);
    }

    #[test]
    fn cost_is_homogeneous((_, p) in graph_and_plant(1.0), s in 0.2f64..5.0) {
        let k = deadbeat(&p);
        let opts = SimOptions::default();
        let base = simulate_cost(&p, &k, &opts).unwrap().total;
        let scaled = simulate_cost(&p.with_initial(&p.x0 * s, &p.w0 * s), &k, &opts).unwrap().total;
        prop_assert!((scaled - s * s * base).abs() <= 1e-10 * scaled.max(1e-300));
    }

    #[test]
    fn deadbeat_within_bound_of_centralized((g, p) in graph_and_plant(1.0)) {
        let r = per_plant_ratio(&p, Strategy::Deadbeat, &g).unwrap();
        prop_assert!(r <= ratio_bound(1.0).unwrap() + 1e-6);
    }

    #[test]
    fn centralized_self_ratio_is_one((g, p) in graph_and_plant(1.0)) {
        prop_assert!((per_plant_ratio(&p, Strategy::Centralized, &g).unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn quadratic_bound_is_a_minimum(
        a in -10.0f64..10.0, b in -10.0f64..10.0,
        xs in proptest::collection::vec(-20.0f64..20.0, 1000),
    ) {
        let m = scalar_quadratic_bound(a, b);
        for x in xs {
            prop_assert!(m <= x * x + (a + b * x).powi(2) + 1e-12);
        }
        let x_star = -a * b / (1.0 + b * b);
        prop_assert!((x_star * x_star + (a + b * x_star).powi(2) - m).abs() <= 1e-12 * (1.0 + m));
    }
}
