//! Online learning loop, synchronous fleet loop, regret accounting and
//! experiment sweeps.

use std::fmt;
use std::fs;
use std::path::Path as FsPath;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::energy::{BeliefState, ModelKind, VehicleParams};
use crate::environment::{
    build_correlated, build_known_prior, build_misspecified, known_prior_from_graph, sample_rewards, GroundTruth, Instance,
    ScenarioKind,
};
use crate::error::{Error, Result};
use crate::graph::{path_weight, EdgeId, Path, RoadGraph, VertexId};
use crate::netio::{write_paths, write_summary, write_trace, GroundTruthTable, ScenarioConfig};
use crate::policies::batched::batched_ts_run;
use crate::policies::qpmd::run_qpmd;
use crate::policies::{observe, select_path, PolicyKind};
use crate::rng::{stream_rng, Stream};
use crate::stats::mean_sd;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub agent: usize,
    pub path: Path,
    pub instant_regret: f64,
    pub cumulative_regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub run_id: String,
    pub seed: u64,
    pub scenario: ScenarioKind,
    pub policy: String,
    pub horizon: usize,
    pub agents: usize,
}

impl RunMeta {
    pub fn new(scenario: ScenarioKind, policy: String, seed: u64, horizon: usize, agents: usize) -> Self {
        Self {
            run_id: format!("{policy}_{scenario}_K{agents}_seed{seed}"),
            seed,
            scenario,
            policy,
            horizon,
            agents,
        }
    }
}

/// Per-step regret of one run, ordered by step and then agent.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub meta: RunMeta,
    pub records: Vec<StepRecord>,
}

impl RegretTrace {
    pub fn agent_records(&self, agent: usize) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(move |r| r.agent == agent)
    }

    /// Edge sequences chosen by `agent`, one per step.
    pub fn actions(&self, agent: usize) -> Vec<Vec<EdgeId>> {
        self.agent_records(agent).map(|r| r.path.edges().to_vec()).collect()
    }

    pub fn instant_regrets(&self, agent: usize) -> Vec<f64> {
        self.agent_records(agent).map(|r| r.instant_regret).collect()
    }

    pub fn agent_final_regret(&self, agent: usize) -> f64 {
        self.agent_records(agent).last().map_or(0.0, |r| r.cumulative_regret)
    }

    /// Final cumulative regret averaged over agents.
    pub fn final_regret(&self) -> f64 {
        self.fleet_total() / self.meta.agents.max(1) as f64
    }

    /// Final cumulative regret summed over agents.
    pub fn fleet_total(&self) -> f64 {
        (0..self.meta.agents).map(|k| self.agent_final_regret(k)).sum()
    }
}

/// Computes Δ_t against the instance's optimal path.
#[derive(Debug, Clone)]
pub struct RegretAccountant {
    costs: Vec<f64>,
    optimum: f64,
    cumulative: Vec<f64>,
}

impl RegretAccountant {
    pub fn new(graph: &RoadGraph, instance: &Instance, agents: usize) -> Result<Self> {
        let costs = instance.truth.regret_costs();
        let best = instance.truth.optimal_path(graph, instance.source, instance.target)?;
        let optimum = path_weight(&best, &costs)?;
        Ok(Self {
            costs,
            optimum,
            cumulative: vec![0.0; agents],
        })
    }

    pub fn optimum(&self) -> f64 {
        self.optimum
    }

    pub fn record(&mut self, t: usize, agent: usize, path: &Path) -> Result<StepRecord> {
        let instant_regret = path_weight(path, &self.costs)? - self.optimum;
        self.cumulative[agent] += instant_regret;
        Ok(StepRecord {
            t,
            agent,
            path: path.clone(),
            instant_regret,
            cumulative_regret: self.cumulative[agent],
        })
    }
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::Invalid("horizon must be >= 1".into()));
    }
    Ok(())
}

fn label(belief: &BeliefState, name: impl fmt::Display) -> String {
    format!("{}-{name}", belief.kind().prefix())
}

/// Single-agent online loop.
pub fn run_single(graph: &RoadGraph, instance: &Instance, policy: PolicyKind, horizon: usize, seed: u64) -> Result<RegretTrace> {
    check_horizon(horizon)?;
    let mut belief = instance.prior.clone();
    let mut accountant = RegretAccountant::new(graph, instance, 1)?;
    let meta = RunMeta::new(instance.scenario, label(&belief, policy), seed, horizon, 1);
    let mut records = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mut rng = stream_rng(seed, Stream::Policy, 0, t as u64);
        let path = select_path(policy, graph, &belief, t, instance.source, instance.target, &mut rng)?;
        let rewards = sample_rewards(&instance.truth, &path, &mut stream_rng(seed, Stream::Reward, 0, t as u64));
        records.push(accountant.record(t, 0, &path)?);
        observe(&mut belief, &path, &rewards)?;
    }
    Ok(RegretTrace { meta, records })
}

/// Synchronous fleet: every step, `agents` selections from one frozen
/// belief, then all observations are applied together.
pub fn run_fleet(graph: &RoadGraph, instance: &Instance, policy: PolicyKind, horizon: usize, agents: usize, seed: u64) -> Result<RegretTrace> {
    Ok(run_fleet_with_belief(graph, instance, policy, horizon, agents, seed)?.0)
}

fn run_fleet_with_belief(
    graph: &RoadGraph,
    instance: &Instance,
    policy: PolicyKind,
    horizon: usize,
    agents: usize,
    seed: u64,
) -> Result<(RegretTrace, BeliefState)> {
    check_horizon(horizon)?;
    if agents == 0 {
        return Err(Error::Invalid("fleet size must be >= 1".into()));
    }
    let mut belief = instance.prior.clone();
    let mut accountant = RegretAccountant::new(graph, instance, agents)?;
    let meta = RunMeta::new(instance.scenario, label(&belief, policy), seed, horizon, agents);
    let mut records = Vec::with_capacity(horizon * agents);
    for t in 1..=horizon {
        let snapshot = &belief;
        let plays = (0..agents)
            .map(|k| {
                let mut rng = stream_rng(seed, Stream::Policy, k as u64, t as u64);
                let path = select_path(policy, graph, snapshot, t, instance.source, instance.target, &mut rng)?;
                let rewards = sample_rewards(&instance.truth, &path, &mut stream_rng(seed, Stream::Reward, k as u64, t as u64));
                Ok((path, rewards))
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, (path, rewards)) in plays.iter().enumerate() {
            records.push(accountant.record(t, k, path)?);
            observe(&mut belief, path, rewards)?;
        }
    }
    Ok((RegretTrace { meta, records }, belief))
}

/// Mean and sample SD of final regret over `n_instances` ground truths
/// drawn from `prior`. Instance `i` uses seed `seed + i` for both the
/// draw of θ* and the run.
#[allow(clippy::too_many_arguments)]
pub fn bayes_regret_estimate(
    graph: &RoadGraph,
    prior: &BeliefState,
    source: VertexId,
    target: VertexId,
    policy: PolicyKind,
    horizon: usize,
    n_instances: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_instances == 0 {
        return Err(Error::Invalid("n_instances must be >= 1".into()));
    }
    let finals = (0..n_instances as u64)
        .map(|i| {
            let s = seed.wrapping_add(i);
            let truth = build_known_prior(prior, &mut stream_rng(s, Stream::Instance, 0, 0));
            let instance = Instance::new(ScenarioKind::KnownPrior, truth, prior.clone(), source, target)?;
            Ok(run_single(graph, &instance, policy, horizon, s)?.final_regret())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_sd(&finals))
}

/// A policy as named in configs: a plain rule, batched Thompson Sampling,
/// or a plain rule wrapped in QPM-D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    Plain(PolicyKind),
    BatchedTs,
    Qpmd(PolicyKind),
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Plain(k) => write!(f, "{k}"),
            PolicySpec::BatchedTs => f.write_str("batched-ts"),
            PolicySpec::Qpmd(k) => write!(f, "qpmd-{k}"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "batched-ts" {
            return Ok(PolicySpec::BatchedTs);
        }
        match s.strip_prefix("qpmd-") {
            Some(base) => base.parse().map(PolicySpec::Qpmd),
            None => s.parse().map(PolicySpec::Plain),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunParams {
    pub horizon: usize,
    pub agents: usize,
    pub batch_size: usize,
    pub delay: usize,
}

pub fn run_policy(graph: &RoadGraph, instance: &Instance, spec: PolicySpec, params: RunParams, seed: u64) -> Result<RegretTrace> {
    if params.agents != 1 && !matches!(spec, PolicySpec::Plain(_)) {
        return Err(Error::Config(format!("{spec} runs a single agent, got K = {}", params.agents)));
    }
    match spec {
        PolicySpec::Plain(kind) if params.agents == 1 => run_single(graph, instance, kind, params.horizon, seed),
        PolicySpec::Plain(kind) => run_fleet(graph, instance, kind, params.horizon, params.agents, seed),
        PolicySpec::BatchedTs => Ok(batched_ts_run(graph, instance, params.horizon, params.batch_size, seed)?.trace),
        PolicySpec::Qpmd(kind) => run_qpmd(graph, instance, kind, params.horizon, params.delay, seed),
    }
}

/// A graph with everything needed to build scenario instances.
#[derive(Debug)]
pub struct Experiment<'g> {
    pub graph: &'g RoadGraph,
    pub source: VertexId,
    pub target: VertexId,
    pub model: ModelKind,
    pub theta_factor: f64,
    pub noise_factor: f64,
    pub vehicle: VehicleParams,
    pub synthetic: Option<GroundTruthTable>,
    misspecified: OnceLock<std::result::Result<(GroundTruth, BeliefState), String>>,
}

impl<'g> Experiment<'g> {
    pub fn new(graph: &'g RoadGraph, source: VertexId, target: VertexId, model: ModelKind) -> Result<Self> {
        graph.check_vertex(source)?;
        graph.check_vertex(target)?;
        Ok(Self {
            graph,
            source,
            target,
            model,
            theta_factor: 0.25,
            noise_factor: 0.1,
            vehicle: VehicleParams::default(),
            synthetic: None,
            misspecified: OnceLock::new(),
        })
    }

    /// Settings from a config. Source and target default to the first and
    /// last vertex.
    pub fn from_config(graph: &'g RoadGraph, cfg: &ScenarioConfig, synthetic: Option<GroundTruthTable>) -> Result<Self> {
        if graph.vertex_count() == 0 {
            return Err(Error::InvalidGraph("network has no vertices".into()));
        }
        let source = cfg.source.as_ref().map_or(Ok(0), |v| v.resolve(graph))?;
        let target = cfg.target.as_ref().map_or(Ok(graph.vertex_count() - 1), |v| v.resolve(graph))?;
        let mut exp = Self::new(graph, source, target, cfg.model)?;
        exp.theta_factor = cfg.theta_factor;
        exp.noise_factor = cfg.noise_factor;
        exp.vehicle = cfg.vehicle;
        exp.synthetic = synthetic;
        Ok(exp)
    }

    fn known_prior(&self) -> Result<BeliefState> {
        known_prior_from_graph(self.graph, &self.vehicle, self.theta_factor, self.noise_factor, self.model)
    }

    /// Instance of `scenario` for run seed `seed`. The misspecified and
    /// synthetic ground truths do not depend on the seed.
    pub fn instance(&self, scenario: ScenarioKind, seed: u64) -> Result<Instance> {
        let (truth, prior) = match scenario {
            ScenarioKind::Misspecified => self
                .misspecified
                .get_or_init(|| {
                    let mut mc = stream_rng(0, Stream::MonteCarlo, 0, 0);
                    build_misspecified(self.graph, &self.vehicle, self.theta_factor, self.noise_factor, self.model, &mut mc)
                        .map_err(|e| e.to_string())
                })
                .clone()
                .map_err(Error::Invalid)?,
            ScenarioKind::KnownPrior => {
                let prior = self.known_prior()?;
                (build_known_prior(&prior, &mut stream_rng(seed, Stream::Instance, 0, 0)), prior)
            }
            ScenarioKind::Correlated => {
                let prior = self.known_prior()?;
                let truth = build_correlated(
                    &prior,
                    &mut stream_rng(seed, Stream::Instance, 0, 0),
                    &mut stream_rng(seed, Stream::Pairing, 0, 0),
                );
                (truth, prior)
            }
            ScenarioKind::Synthetic => {
                let table = self
                    .synthetic
                    .as_ref()
                    .ok_or_else(|| Error::Config("the synthetic scenario needs a ground-truth file".into()))?;
                (table.truth()?, BeliefState::from_gaussian_priors(&table.priors, self.model)?)
            }
        };
        Instance::new(scenario, truth, prior, self.source, self.target)
    }
}

/// One row of the sweep summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub scenario: ScenarioKind,
    pub agents: usize,
    pub avg_final_regret: f64,
    pub sd_final_regret: f64,
    pub n_runs: usize,
}

#[derive(Debug)]
pub struct SweepReport {
    pub summary: Vec<SummaryRow>,
    pub traces_written: usize,
    pub failures: Vec<(String, Error)>,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    scenario: ScenarioKind,
    policy: PolicySpec,
    agents: usize,
    seed: u64,
}

/// Runs every (scenario, policy, fleet size, seed) cell of `cfg`, writing
/// `trace_<run_id>.csv`, `paths_<run_id>.csv` and `summary.csv` into
/// `out_dir`. Failing cells are logged and skipped.
pub fn sweep(exp: &Experiment<'_>, cfg: &ScenarioConfig, out_dir: &FsPath, jobs: Option<usize>) -> Result<SweepReport> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let specs = cfg.policy_specs()?;
    let mut cells = Vec::new();
    for &scenario in &cfg.scenarios {
        for &policy in &specs {
            for &agents in &cfg.agents {
                for &seed in &cfg.seeds {
                    cells.push(Cell {
                        scenario,
                        policy,
                        agents,
                        seed,
                    });
                }
            }
        }
    }

    let run_cell = |cell: &Cell| -> Result<RegretTrace> {
        let instance = exp.instance(cell.scenario, cell.seed)?;
        let params = RunParams {
            horizon: cfg.horizon,
            agents: cell.agents,
            batch_size: cfg.batch_size,
            delay: cfg.delay,
        };
        let trace = run_policy(exp.graph, &instance, cell.policy, params, cell.seed)?;
        let id = &trace.meta.run_id;
        write_trace(&trace, &out_dir.join(format!("trace_{id}.csv")))?;
        write_paths(&trace, &out_dir.join(format!("paths_{id}.csv")))?;
        Ok(trace)
    };
    let results: Vec<Result<RegretTrace>> = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(|| cells.par_iter().map(run_cell).collect()),
        None => cells.par_iter().map(run_cell).collect(),
    };

    let mut groups: Vec<((String, ScenarioKind, usize), Vec<f64>)> = Vec::new();
    let mut failures = Vec::new();
    let mut traces_written = 0;
    for (cell, result) in cells.iter().zip(results) {
        let name = format!("{}-{}", cfg.model.prefix(), cell.policy);
        match result {
            Ok(trace) => {
                traces_written += 1;
                let key = (name, cell.scenario, cell.agents);
                match groups.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, v)) => v.push(trace.final_regret()),
                    None => groups.push((key, vec![trace.final_regret()])),
                }
            }
            Err(e) => {
                let id = format!("{name}_{}_K{}_seed{}", cell.scenario, cell.agents, cell.seed);
                log::error!("run {id} failed: {e}");
                failures.push((id, e));
            }
        }
    }
    let summary: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((policy, scenario, agents), finals)| {
            let (avg, sd) = mean_sd(&finals);
            SummaryRow {
                policy,
                scenario,
                agents,
                avg_final_regret: avg,
                sd_final_regret: sd,
                n_runs: finals.len(),
            }
        })
        .collect();
    write_summary(&summary, &out_dir.join("summary.csv"))?;
    Ok(SweepReport {
        summary,
        traces_written,
        failures,
    })
}
