//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use bandit_nav::energy::{lognormal_likelihood_params, rectified_mean, GaussianBelief, ModelKind};
use bandit_nav::environment::{Instance, ScenarioKind};
use bandit_nav::graph::{path_weight, shortest_path, Edge, EdgeAttributes, RoadGraph};
use bandit_nav::netio::load_network;
use bandit_nav::policies::batched::batched_ts_run;
use bandit_nav::policies::qpmd::run_qpmd;
use bandit_nav::policies::{EpsSchedule, PolicyKind};
use bandit_nav::simulator::{run_fleet, run_single, Experiment, RegretTrace};
use bandit_nav::synthgen::{generate, SynthSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn toy_graph() -> RoadGraph {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/toy_grid.csv");
    load_network(&path).expect("bundled toy network loads")
}

fn toy_experiment(graph: &RoadGraph) -> Experiment<'_> {
    Experiment::new(graph, 0, graph.vertex_count() - 1, ModelKind::RectifiedGaussian).unwrap()
}

fn ranked_policies() -> Vec<PolicyKind> {
    vec![
        PolicyKind::Thompson,
        PolicyKind::BayesUcb,
        PolicyKind::Greedy,
        PolicyKind::EpsGreedy(EpsSchedule::Constant(0.1)),
        PolicyKind::EpsGreedy(EpsSchedule::Constant(0.5)),
    ]
}

fn synthetic_instance(n: usize, o: usize, seed: u64) -> (RoadGraph, Instance) {
    let (g, truth, prior) = generate(SynthSpec { n, o, seed }).unwrap();
    let inst = Instance::new(ScenarioKind::Synthetic, truth, prior, 0, n - 1).unwrap();
    (g, inst)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn posterior_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mu0 = rng.random_range(-200.0..-0.5);
        let var0 = rng.random_range(0.01..200.0);
        let nv = rng.random_range(0.01..80.0);
        let n = rng.random_range(1..60);
        let obs: Vec<f64> = (0..n).map(|_| mu0 + 5.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut b = GaussianBelief::new(mu0, var0, nv).unwrap();
        for &r in &obs {
            b = b.updated(r).unwrap();
        }
        let var = 1.0 / (1.0 / var0 + n as f64 / nv);
        let mu = var * (mu0 / var0 + obs.iter().sum::<f64>() / nv);
        worst = worst.max(((b.mu - mu) / mu).abs()).max(((b.var - var) / var).abs());
    }
    outcome(worst <= 1e-9, format!("1000 cases, worst relative error {worst:.2e} (tol 1e-9)"))
}

fn rectified_oracle() -> Outcome {
    const DRAWS: usize = 10_000_000;
    let cells: Vec<(f64, f64)> = [-4.0, -1.0, 0.0, 0.5, 1.5]
        .iter()
        .flat_map(|&theta| [0.5, 1.0, 3.0].map(|s| (theta, s)))
        .collect();
    let results: Vec<(f64, f64, f64, f64)> = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(theta, sigma))| {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + i as u64);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..DRAWS {
                let x: f64 = -theta + sigma * rng.sample::<f64, _>(StandardNormal);
                let y = x.max(0.0);
                s += y;
                s2 += y * y;
            }
            let m = s / DRAWS as f64;
            let se = ((s2 / DRAWS as f64 - m * m) / (DRAWS as f64 - 1.0)).sqrt();
            (theta, sigma, (rectified_mean(theta, sigma) - m).abs(), se)
        })
        .collect();
    let worst = results.iter().map(|&(_, _, d, se)| d / se).fold(0.0, f64::max);
    let bad: Vec<String> = results
        .iter()
        .filter(|r| r.2 > 3.0 * r.3)
        .map(|r| format!("(θ={}, σ={})", r.0, r.1))
        .collect();
    outcome(
        bad.is_empty(),
        format!("15 cells x 1e7 draws, worst |error|/SE = {worst:.2} (tol 3){}", if bad.is_empty() { String::new() } else { format!(", off: {}", bad.join(" ")) }),
    )
}

fn lognormal_moments() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let theta = -rng.random_range(0.01..5000.0);
        let noise_var = rng.random_range(1e-4..1e4);
        let psi = -rng.random_range(0.1..5000.0);
        let (loc, s2) = lognormal_likelihood_params(theta, noise_var, psi).unwrap();
        let m = (loc + s2 / 2.0).exp();
        let v = s2.exp_m1() * (2.0 * loc + s2).exp();
        let want_v = noise_var * theta * theta / (psi * psi);
        worst = worst.max(((m + theta) / theta).abs()).max(((v - want_v) / want_v).abs());
    }
    outcome(worst <= 1e-10, format!("1000 triples, worst relative error {worst:.2e} (tol 1e-10)"))
}

/// Cost of the cheapest simple path by exhaustive depth-first search.
fn brute_force(g: &RoadGraph, w: &[f64], s: usize, t: usize) -> Option<f64> {
    fn dfs(g: &RoadGraph, w: &[f64], v: usize, t: usize, seen: &mut Vec<bool>, cost: f64, best: &mut Option<f64>) {
        if v == t {
            *best = Some(best.map_or(cost, |b: f64| b.min(cost)));
            return;
        }
        for e in g.edges().iter().enumerate().filter(|(_, e)| e.from == v) {
            let (id, edge) = e;
            if !seen[edge.to] {
                seen[edge.to] = true;
                dfs(g, w, edge.to, t, seen, cost + w[id], best);
                seen[edge.to] = false;
            }
        }
    }
    let mut seen = vec![false; g.vertex_count()];
    seen[s] = true;
    let mut best = None;
    dfs(g, w, s, t, &mut seen, 0.0, &mut best);
    best
}

fn shortest_path_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    let mut unreachable = 0;
    for i in 0..500 {
        let n = rng.random_range(2..=10);
        let m = rng.random_range(1..=n * (n - 1));
        let mut edges = Vec::new();
        for _ in 0..m {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                edges.push(Edge { from: a, to: b, attrs: EdgeAttributes { length_m: 1.0, ..Default::default() } });
            }
        }
        let g = RoadGraph::new(n, edges).unwrap();
        let w: Vec<f64> = (0..g.edge_count())
            .map(|_| if i % 2 == 0 { rng.random_range(1..=20) as f64 } else { rng.random_range(0.01..10.0) })
            .collect();
        let (s, t) = (0, n - 1);
        match (shortest_path(&g, &w, s, t), brute_force(&g, &w, s, t)) {
            (Ok(p), Some(best)) => {
                if path_weight(&p, &w).unwrap() != best {
                    mismatches += 1;
                }
            }
            (Err(_), None) => unreachable += 1,
            _ => mismatches += 1,
        }
    }
    outcome(mismatches == 0, format!("500 graphs ({unreachable} without a path), {mismatches} mismatches"))
}

fn trajectory_equivalences() -> Outcome {
    let g = toy_graph();
    let exp = toy_experiment(&g);
    let horizon = 200;
    let failures: Vec<String> = (0..20u64)
        .into_par_iter()
        .flat_map_iter(|seed| {
            let inst = exp.instance(ScenarioKind::KnownPrior, seed).unwrap();
            let mut bad = Vec::new();
            for base in ranked_policies() {
                let plain = run_single(&g, &inst, base, horizon, seed).unwrap();
                let queued = run_qpmd(&g, &inst, base, horizon, 1, seed).unwrap();
                if plain.actions(0) != queued.actions(0) {
                    bad.push(format!("qpmd-{base} seed {seed}"));
                }
                if base == PolicyKind::Thompson {
                    let batched = batched_ts_run(&g, &inst, horizon, 1, seed).unwrap();
                    if plain.actions(0) != batched.trace.actions(0) {
                        bad.push(format!("batched seed {seed}"));
                    }
                }
                let fleet = run_fleet(&g, &inst, base, horizon, 1, seed).unwrap();
                if plain.actions(0) != fleet.actions(0) {
                    bad.push(format!("fleet-{base} seed {seed}"));
                }
            }
            bad
        })
        .collect();
    outcome(
        failures.is_empty(),
        format!("QPM-D(delay 1), batched TS(K=1), fleet(K=1) vs online loop, T=200, 20 seeds; {} divergences {:?}", failures.len(), failures),
    )
}

fn synthetic_final_regrets(n: usize, o: usize, policy: PolicyKind, seeds: u64, horizon: usize) -> Vec<RegretTrace> {
    (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let (g, inst) = synthetic_instance(n, o, seed);
            run_single(&g, &inst, policy, horizon, seed).unwrap()
        })
        .collect()
}

fn finals(traces: &[RegretTrace]) -> Vec<f64> {
    traces.iter().map(RegretTrace::final_regret).collect()
}

fn scaling() -> Outcome {
    let sizes = [200usize, 250, 300, 350, 400];
    let means: Vec<f64> = sizes
        .iter()
        .map(|&o| mean(&finals(&synthetic_final_regrets(30, o, PolicyKind::Thompson, 10, 2000))))
        .collect();
    let xs: Vec<f64> = sizes.iter().map(|&o| o as f64).collect();
    let (mx, my) = (mean(&xs), mean(&means));
    let slope = xs.iter().zip(&means).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let ratio = means[4] / means[0];
    outcome(
        slope > 0.0 && ratio <= 2.2,
        format!(
            "TS mean final regret at |E|=200..400: {:?}; slope {slope:.3}, ratio {ratio:.2} (need > 0 and <= 2.2)",
            means.iter().map(|m| format!("{m:.1}")).collect::<Vec<_>>()
        ),
    )
}

/// Runs every ranked policy on `seeds` instances and returns per-policy traces.
fn ranking_runs(make: &(dyn Fn(u64) -> (RoadGraph, Instance) + Sync), seeds: u64, horizon: usize) -> Vec<(PolicyKind, Vec<RegretTrace>)> {
    ranked_policies()
        .into_iter()
        .map(|p| {
            let traces = (0..seeds)
                .into_par_iter()
                .map(|seed| {
                    let (g, inst) = make(seed);
                    run_single(&g, &inst, p, horizon, seed).unwrap()
                })
                .collect();
            (p, traces)
        })
        .collect()
}

fn ranking_line(runs: &[(PolicyKind, Vec<RegretTrace>)]) -> (bool, String) {
    let means: Vec<(PolicyKind, f64)> = runs.iter().map(|(p, t)| (*p, mean(&finals(t)))).collect();
    let ts = means[0].1;
    let pass = means[1..].iter().all(|&(_, m)| ts < m);
    let text = means.iter().map(|(p, m)| format!("{p}={m:.1}")).collect::<Vec<_>>().join(", ");
    (pass, text)
}

fn saturation_line(traces: &[RegretTrace]) -> (bool, String) {
    let horizon = traces[0].records.len();
    let tenth = horizon / 10;
    let (mut first, mut last) = (0.0, 0.0);
    for tr in traces {
        let r = tr.instant_regrets(0);
        first += r[..tenth].iter().sum::<f64>();
        last += r[horizon - tenth..].iter().sum::<f64>();
    }
    (last < 0.2 * first, format!("last/first decile regret = {:.3} (need < 0.2)", last / first))
}

fn toy_known_prior(seed: u64) -> (RoadGraph, Instance) {
    let g = toy_graph();
    let inst = toy_experiment(&g).instance(ScenarioKind::KnownPrior, seed).unwrap();
    (g, inst)
}

fn fleet_benefit() -> Outcome {
    let g = toy_graph();
    let exp = toy_experiment(&g);
    let per_k: Vec<f64> = [1usize, 2, 5]
        .iter()
        .map(|&k| {
            let finals: Vec<f64> = (0..20u64)
                .into_par_iter()
                .map(|seed| {
                    let inst = exp.instance(ScenarioKind::KnownPrior, seed).unwrap();
                    run_fleet(&g, &inst, PolicyKind::Thompson, 100, k, seed).unwrap().final_regret()
                })
                .collect();
            mean(&finals)
        })
        .collect();
    outcome(
        per_k[1] <= 0.8 * per_k[0] && per_k[2] <= per_k[1],
        format!(
            "mean per-agent regret at T=100: K=1 {:.1}, K=2 {:.1} ({:.2}x, need <= 0.8), K=5 {:.1} (need <= K=2)",
            per_k[0],
            per_k[1],
            per_k[1] / per_k[0],
            per_k[2]
        ),
    )
}

fn correlation_robustness() -> Outcome {
    let g = toy_graph();
    let exp = toy_experiment(&g);
    let run = |scenario| {
        let finals: Vec<f64> = (0..10u64)
            .into_par_iter()
            .map(|seed| {
                let inst = exp.instance(scenario, seed).unwrap();
                run_single(&g, &inst, PolicyKind::Thompson, 2000, seed).unwrap().final_regret()
            })
            .collect();
        mean(&finals)
    };
    let independent = run(ScenarioKind::KnownPrior);
    let correlated = run(ScenarioKind::Correlated);
    let ratio = correlated / independent;
    outcome(
        (0.5..=1.5).contains(&ratio),
        format!("TS mean final regret: independent {independent:.1}, correlated {correlated:.1}, ratio {ratio:.2} (need 0.5..1.5)"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let took: Duration = start.elapsed();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {} [{:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, took.as_secs_f64());
    };

    report("posterior update vs batch closed form", &posterior_oracle);
    report("rectified mean vs Monte Carlo", &rectified_oracle);
    report("log-Gaussian moment match", &lognormal_moments);
    report("Dijkstra vs brute force", &shortest_path_oracle);
    report("trajectory equivalences", &trajectory_equivalences);
    report("regret scaling with edge count", &scaling);

    let synth = ranking_runs(&|seed| synthetic_instance(30, 200, seed), 10, 2000);
    let toy = ranking_runs(&toy_known_prior, 10, 2000);
    report("policy ranking on synthetic n=30 o=200", &|| {
        let (p, t) = ranking_line(&synth);
        outcome(p, format!("mean final regret {t} (TS must be lowest)"))
    });
    report("policy ranking on toy network, known prior", &|| {
        let (p, t) = ranking_line(&toy);
        outcome(p, format!("mean final regret {t} (TS must be lowest)"))
    });
    report("TS saturation on synthetic", &|| {
        let (p, t) = saturation_line(&synth[0].1);
        outcome(p, t)
    });
    report("TS saturation on toy network", &|| {
        let (p, t) = saturation_line(&toy[0].1);
        outcome(p, t)
    });
    report("fleet benefit", &fleet_benefit);
    report("correlated vs independent", &correlation_robustness);

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
