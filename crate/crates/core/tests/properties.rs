use std::path::PathBuf;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bandit_nav::energy::{
    lognormal_prior, rectified_mean, BeliefState, GaussianBelief, LogGaussianBelief, ModelKind, MIN_WEIGHT,
};
use bandit_nav::environment::{gaussian_prior, pair_edges, ScenarioKind};
use bandit_nav::graph::{path_weight, shortest_path, Edge, EdgeAttributes, RoadGraph};
use bandit_nav::netio::{load_network, save_network};
use bandit_nav::policies::{bayesucb_weights, eps_greedy_select, greedy_weights, EpsSchedule, PolicyKind};
use bandit_nav::simulator::{run_single, Experiment};
use bandit_nav::synthgen::{generate, SynthSpec};

fn random_graph(n: usize, pairs: &[(usize, usize)]) -> RoadGraph {
    let edges = pairs
        .iter()
        .filter(|(a, b)| a % n != b % n)
        .map(|&(a, b)| Edge {
            from: a % n,
            to: b % n,
            attrs: EdgeAttributes { length_m: 1.0, ..Default::default() },
        })
        .collect();
    RoadGraph::new(n, edges).unwrap()
}

fn toy_graph() -> RoadGraph {
    load_network(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/toy_grid.csv")).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gaussian_update_is_order_free(
        mu0 in -500.0..-1.0f64,
        var0 in 0.01..500.0f64,
        nv in 0.01..100.0f64,
        obs in prop::collection::vec(-600.0..0.0f64, 1..20),
    ) {
        let prior = GaussianBelief::new(mu0, var0, nv).unwrap();
        let forward = obs.iter().fold(prior, |b, &r| b.updated(r).unwrap());
        let backward = obs.iter().rev().fold(prior, |b, &r| b.updated(r).unwrap());
        prop_assert!((forward.mu - backward.mu).abs() <= 1e-9 * forward.mu.abs().max(1.0));
        prop_assert!((forward.var - backward.var).abs() <= 1e-9 * forward.var);
        prop_assert!(forward.var <= var0);
    }

    #[test]
    fn rectified_mean_bounds(theta in -50.0..50.0f64, sigma in 0.0..20.0f64) {
        let m = rectified_mean(theta, sigma);
        prop_assert!(m >= 0.0);
        prop_assert!(m >= (-theta).max(0.0) - 1e-12);
        prop_assert!(m <= (-theta).max(0.0) + sigma * 0.3989422804014327 + 1e-12);
    }

    #[test]
    fn lognormal_prior_keeps_moments(mu0 in -1e4..-1e-2f64, rel in 0.01..2.0f64) {
        let var0 = (rel * mu0).powi(2);
        let (log_mu, log_var) = lognormal_prior(mu0, var0).unwrap();
        let mean = (log_mu + log_var / 2.0).exp();
        let var = log_var.exp_m1() * (2.0 * log_mu + log_var).exp();
        prop_assert!((mean + mu0).abs() <= 1e-10 * mu0.abs());
        prop_assert!((var - var0).abs() <= 1e-10 * var0);
    }

    #[test]
    fn lognormal_update_shrinks_variance(mu0 in -1e3..-1.0f64, obs in prop::collection::vec(0.0..2e3f64, 1..10)) {
        let mut b = LogGaussianBelief::from_gaussian(&GaussianBelief::from_energy(-mu0, 0.25, 0.1).unwrap()).unwrap();
        for &x in &obs {
            let next = b.updated(x).unwrap();
            prop_assert!(next.log_var < b.log_var);
            prop_assert!(next.log_mu.is_finite());
            b = next;
        }
    }

    #[test]
    fn dijkstra_never_beaten_by_other_paths(
        n in 2usize..9,
        pairs in prop::collection::vec((0usize..9, 0usize..9), 1..40),
        seed in any::<u64>(),
    ) {
        let g = random_graph(n, &pairs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..g.edge_count()).map(|_| rng.random_range(0.1..10.0)).collect();
        if let Ok(p) = shortest_path(&g, &w, 0, n - 1) {
            prop_assert_eq!(p.source(), 0);
            prop_assert_eq!(p.target(), n - 1);
            prop_assert!(p.is_simple());
            let best = path_weight(&p, &w).unwrap();
            // no single edge relaxation improves on the tree distances
            let again = shortest_path(&g, &w, 0, n - 1).unwrap();
            prop_assert_eq!(&again, &p);
            for (e, edge) in g.edges().iter().enumerate() {
                if edge.to == n - 1 {
                    if let Ok(head) = shortest_path(&g, &w, 0, edge.from) {
                        prop_assert!(best <= path_weight(&head, &w).unwrap() + w[e] + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn eps_greedy_paths_connect(seed in any::<u64>(), eps in 0.0..=1.0f64, t in 1usize..500) {
        let g = toy_graph();
        let exp = Experiment::new(&g, 0, 29, ModelKind::RectifiedGaussian).unwrap();
        let inst = exp.instance(ScenarioKind::KnownPrior, seed % 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = eps_greedy_select(&g, &inst.prior, t, EpsSchedule::Constant(eps), 0, 29, &mut rng).unwrap();
        prop_assert_eq!(p.source(), 0);
        prop_assert_eq!(p.target(), 29);
        let mut probe = ChaCha8Rng::seed_from_u64(seed);
        if probe.random::<f64>() < eps {
            let sampled = probe.random_range(0..g.edge_count());
            prop_assert!(p.contains_edge(sampled));
        }
    }

    #[test]
    fn bayesucb_optimism_grows_with_t(
        mu in prop::collection::vec(-100.0..-1.0f64, 1..6),
        var in 0.01..50.0f64,
        t in 1usize..10_000,
    ) {
        let k = mu.len();
        let b = gaussian_prior(&mu, &vec![var; k], &vec![1.0; k]).unwrap();
        let now = bayesucb_weights(&b, t).unwrap();
        let later = bayesucb_weights(&b, t + 1).unwrap();
        let greedy = greedy_weights(&b).unwrap();
        for e in 0..k {
            prop_assert!(later[e] <= now[e] + 1e-12);
            prop_assert!(now[e] <= greedy[e] + 1e-12);
            prop_assert!(now[e] >= MIN_WEIGHT);
        }
    }

    #[test]
    fn synthetic_instances_are_well_formed(n in 2usize..25, extra in 0usize..300, seed in any::<u64>()) {
        let max = n * (n - 1) / 2;
        let o = (n - 1 + extra).min(max);
        let (g, truth, prior) = generate(SynthSpec { n, o, seed }).unwrap();
        prop_assert_eq!(g.edge_count(), o);
        for h in 0..n - 1 {
            prop_assert!(g.edges().iter().any(|e| e.from == h && e.to == h + 1));
        }
        let mut seen = std::collections::HashSet::new();
        for (e, edge) in g.edges().iter().enumerate() {
            prop_assert!(edge.from < edge.to);
            prop_assert!(seen.insert((edge.from, edge.to)));
            let k = (edge.to - edge.from) as f64;
            // the span's chain segment costs 10k, strictly less than any shortcut over it
            if k > 1.0 {
                prop_assert!(-truth.theta_star()[e] > 10.0 * k);
            }
            // prior cost of an edge equals the prior cost of the chain segment it spans
            prop_assert_eq!(-prior.mean_reward(e), 11.0 * k);
        }
        let best = truth.optimal_path(&g, 0, n - 1).unwrap();
        prop_assert_eq!(best.len(), n - 1);
    }

    #[test]
    fn pairing_is_a_matching(count in 0usize..60, seed in any::<u64>()) {
        let p = pair_edges(count, &mut ChaCha8Rng::seed_from_u64(seed));
        let pairs = p.pairs();
        prop_assert_eq!(pairs.len(), count / 2);
        prop_assert_eq!(p.unpaired().len(), count % 2);
        for (a, b) in pairs {
            prop_assert_eq!(p.partner(a), Some(b));
            prop_assert_eq!(p.partner(b), Some(a));
        }
    }

    #[test]
    fn network_round_trip(
        n in 2usize..8,
        pairs in prop::collection::vec((0usize..8, 0usize..8), 1..20),
        lengths in prop::collection::vec(1.0..5000.0f64, 20),
        inclines in prop::collection::vec(-0.05..0.05f64, 20),
        speeds in prop::collection::vec(prop::option::of(1.0..40.0f64), 20),
    ) {
        let base = random_graph(n, &pairs);
        prop_assume!(base.edge_count() > 0);
        let edges: Vec<Edge> = base
            .edges()
            .iter()
            .enumerate()
            .map(|(i, e)| Edge {
                from: e.from,
                to: e.to,
                attrs: EdgeAttributes {
                    length_m: lengths[i],
                    incline_rad: inclines[i],
                    speed_limit_mps: speeds[i],
                    mean_speed_mps: speeds[(i + 1) % 20],
                    speed_var: speeds[i].map(|s| s / 10.0),
                    coords: if i % 2 == 0 { Some([48.0 + lengths[i] / 1e4, 11.0, 48.1, 11.0 + inclines[i]]) } else { None },
                },
            })
            .collect();
        let g = RoadGraph::new(n, edges).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.csv");
        save_network(&g, &path).unwrap();
        let back = load_network(&path).unwrap();
        prop_assert_eq!(back.edge_count(), g.edge_count());
        // vertices without edges are not written, so compare through labels
        for (a, b) in g.edges().iter().zip(back.edges()) {
            prop_assert_eq!(g.label(a.from), back.label(b.from));
            prop_assert_eq!(g.label(a.to), back.label(b.to));
            prop_assert_eq!(&a.attrs, &b.attrs);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn regret_is_nonnegative_and_cumulative_monotone(seed in 0u64..1000, policy in 0usize..4) {
        let g = toy_graph();
        let exp = Experiment::new(&g, 0, 29, ModelKind::RectifiedGaussian).unwrap();
        let inst = exp.instance(ScenarioKind::KnownPrior, seed).unwrap();
        let kind = [PolicyKind::Thompson, PolicyKind::BayesUcb, PolicyKind::Greedy, PolicyKind::EpsGreedy(EpsSchedule::InverseT)][policy];
        let trace = run_single(&g, &inst, kind, 150, seed).unwrap();
        let mut last = 0.0;
        for r in &trace.records {
            prop_assert!(r.instant_regret >= -1e-9);
            prop_assert!(r.cumulative_regret >= last - 1e-9);
            last = r.cumulative_regret;
        }
        prop_assert_eq!(&run_single(&g, &inst, kind, 150, seed).unwrap(), &trace);
    }

    #[test]
    fn sharp_beliefs_collapse_to_greedy(seed in any::<u64>()) {
        let g = toy_graph();
        let exp = Experiment::new(&g, 0, 29, ModelKind::RectifiedGaussian).unwrap();
        let inst = exp.instance(ScenarioKind::KnownPrior, seed % 5).unwrap();
        let sharp: Vec<GaussianBelief> = (0..g.edge_count())
            .map(|e| GaussianBelief::new(inst.prior.mean_reward(e), 1e-300, 1e-6).unwrap())
            .collect();
        let b = BeliefState::gaussian(sharp);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let greedy = bandit_nav::policies::select_path(PolicyKind::Greedy, &g, &b, 1, 0, 29, &mut rng).unwrap();
        for kind in [PolicyKind::Thompson, PolicyKind::BayesUcb] {
            let p = bandit_nav::policies::select_path(kind, &g, &b, 3, 0, 29, &mut rng).unwrap();
            prop_assert_eq!(&p, &greedy);
        }
    }
}
