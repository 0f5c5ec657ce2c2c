//! Command-line interface.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::environment::ScenarioKind;
use crate::error::{Error, Result};
use crate::graph::{validate_graph, RoadGraph, Severity};
use crate::netio::{load_config, load_ground_truth, load_network, save_ground_truth, save_network, ScenarioConfig, VertexRef};
use crate::simulator::{sweep, Experiment, SweepReport};
use crate::synthgen::{generate_table, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "bandit-nav", version, about = "Bayesian online learning of energy-efficient routes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a single (scenario, policy, fleet size, seed) cell.
    Run(RunArgs),
    /// Run every cell of the configured grid.
    Sweep(SweepArgs),
    /// Generate a synthetic DAG instance.
    GenSynth(GenSynthArgs),
    /// Check a network for problems between source and target.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub network: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ground-truth file for the synthetic scenario.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub scenario: Option<ScenarioKind>,
    /// Horizon.
    #[arg(long = "T")]
    pub horizon: Option<usize>,
    /// Fleet size.
    #[arg(long = "K")]
    pub agents: Option<usize>,
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: RunArgs,
    /// Parallel runs.
    #[arg(long, env = "BANDIT_NAV_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub o: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub network: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub target: Option<String>,
}

fn vertex_arg(s: &Option<String>) -> Option<VertexRef> {
    s.as_ref().map(|v| VertexRef::Label(v.clone()))
}

/// Loads the config (or defaults) and applies flag overrides.
fn effective_config(args: &RunArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(p) = &args.network {
        cfg.network = Some(p.clone());
    }
    if let Some(p) = &args.ground_truth {
        cfg.ground_truth = Some(p.clone());
    }
    if let Some(p) = &args.out {
        cfg.output_dir = Some(p.clone());
    }
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    if let Some(p) = &args.policy {
        cfg.policies = vec![p.clone()];
    }
    if let Some(s) = args.scenario {
        cfg.scenarios = vec![s];
    }
    if let Some(t) = args.horizon {
        cfg.horizon = t;
    }
    if let Some(k) = args.agents {
        cfg.agents = vec![k];
    }
    if args.source.is_some() {
        cfg.source = vertex_arg(&args.source);
    }
    if args.target.is_some() {
        cfg.target = vertex_arg(&args.target);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn network_of(cfg: &ScenarioConfig) -> Result<RoadGraph> {
    let path = cfg
        .network
        .as_ref()
        .ok_or_else(|| Error::Config("no network given (--network or `network` in the config)".into()))?;
    load_network(path)
}

fn execute_grid(cfg: &ScenarioConfig, jobs: Option<usize>) -> Result<SweepReport> {
    let graph = network_of(cfg)?;
    let synthetic = cfg.ground_truth.as_ref().map(|p| load_ground_truth(&graph, p)).transpose()?;
    let exp = Experiment::from_config(&graph, cfg, synthetic)?;
    let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let echo = out.join("effective_config.toml");
    fs::write(&echo, cfg.to_toml()).map_err(|e| Error::io(&echo, e))?;
    let report = sweep(&exp, cfg, &out, jobs)?;
    for row in &report.summary {
        println!(
            "{} {} K={}: final regret {:.3} ± {:.3} over {} run(s)",
            row.policy, row.scenario, row.agents, row.avg_final_regret, row.sd_final_regret, row.n_runs
        );
    }
    Ok(report)
}

fn first_failure(mut report: SweepReport) -> Result<()> {
    let total = report.failures.len() + report.traces_written;
    if report.failures.is_empty() {
        return Ok(());
    }
    let (id, err) = report.failures.swap_remove(0);
    if total > 1 {
        log::error!("{} of {total} runs failed; first failure was {id}", report.failures.len() + 1);
    }
    Err(err)
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = effective_config(args)?;
    let cells = cfg.scenarios.len() * cfg.policies.len() * cfg.agents.len() * cfg.seeds.len();
    if cells != 1 {
        return Err(Error::Config(format!("run executes exactly one cell, the configuration has {cells}; use sweep")));
    }
    first_failure(execute_grid(&cfg, Some(1))?)
}

fn sweep_cmd(args: &SweepArgs) -> Result<()> {
    let cfg = effective_config(&args.common)?;
    if args.jobs == Some(0) {
        return Err(Error::Config("--jobs must be >= 1".into()));
    }
    first_failure(execute_grid(&cfg, args.jobs)?)
}

fn gen_synth(args: &GenSynthArgs) -> Result<()> {
    let (graph, table) = generate_table(SynthSpec {
        n: args.n,
        o: args.o,
        seed: args.seed,
    })?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    save_network(&graph, &args.out.join("network.csv"))?;
    save_ground_truth(&graph, &table, &args.out.join("ground_truth.csv"))?;
    println!(
        "wrote {} vertices, {} edges to {}",
        graph.vertex_count(),
        graph.edge_count(),
        args.out.display()
    );
    Ok(())
}

fn validate(args: &ValidateArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(p) = &args.network {
        cfg.network = Some(p.clone());
    }
    if args.source.is_some() {
        cfg.source = vertex_arg(&args.source);
    }
    if args.target.is_some() {
        cfg.target = vertex_arg(&args.target);
    }
    let graph = network_of(&cfg)?;
    let exp = Experiment::from_config(&graph, &cfg, None)?;
    let diagnostics = validate_graph(&graph, exp.source, exp.target);
    println!(
        "{} vertices, {} edges, source {} target {}",
        graph.vertex_count(),
        graph.edge_count(),
        graph.label(exp.source),
        graph.label(exp.target)
    );
    for f in &diagnostics.findings {
        let level = match f.severity() {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        println!("{level}: {f}");
    }
    if diagnostics.has_errors() {
        return Err(Error::InvalidGraph(format!(
            "{} problem(s) found",
            diagnostics.findings.iter().filter(|f| f.severity() == Severity::Error).count()
        )));
    }
    println!("ok");
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::GenSynth(a) => gen_synth(a),
        Command::Validate(a) => validate(a),
    }
}

/// Process exit code for a result: 0 success, 1 validation, 2 runtime.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_validation() => 1,
        Err(_) => 2,
    }
}
