//! Network CSV, ground-truth CSV, scenario configuration and run outputs.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::{GaussianBelief, ModelKind, VehicleParams};
use crate::environment::{GroundTruth, ScenarioKind};
use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeAttributes, RoadGraph, VertexId};
use crate::simulator::{PolicySpec, RegretTrace, SummaryRow};

/// Columns of the network file; the four coordinate columns are optional.
pub const NETWORK_COLUMNS: [&str; 11] = [
    "from_id",
    "to_id",
    "length_m",
    "incline_rad",
    "speed_limit_mps",
    "mean_speed_mps",
    "speed_var",
    "lat1",
    "lon1",
    "lat2",
    "lon2",
];

pub const GROUND_TRUTH_COLUMNS: [&str; 7] = ["edge_id", "from_id", "to_id", "theta_star", "sigma", "prior_mu", "prior_var"];

pub const TRACE_COLUMNS: [&str; 8] = [
    "run_id",
    "scenario",
    "policy",
    "agent",
    "t",
    "path_hash",
    "instant_regret",
    "cumulative_regret",
];

pub const SUMMARY_COLUMNS: [&str; 6] = ["policy", "scenario", "K", "avg_final_regret", "sd_final_regret", "n_runs"];

fn parse_err(path: &FsPath, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message: message.into(),
    }
}

fn field<'r>(rec: &'r csv::StringRecord, i: usize) -> &'r str {
    rec.get(i).map(str::trim).unwrap_or("")
}

fn required_f64(path: &FsPath, line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<f64> {
    let s = field(rec, i);
    if s.is_empty() {
        return Err(parse_err(path, line, format!("missing {name}")));
    }
    s.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("{name}: '{s}' is not a number")))
}

fn optional_f64(path: &FsPath, line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<Option<f64>> {
    let s = field(rec, i);
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| parse_err(path, line, format!("{name}: '{s}' is not a number")))
}

/// Dense ids follow numeric order when every label is an integer, and
/// lexicographic order otherwise.
fn dense_labels(raw: &BTreeSet<String>) -> Vec<String> {
    let mut labels: Vec<String> = raw.iter().cloned().collect();
    if labels.iter().all(|l| l.parse::<i64>().is_ok()) {
        labels.sort_by_key(|l| l.parse::<i64>().expect("checked above"));
    }
    labels
}

/// Reads a network file into a graph. External vertex ids are kept as
/// labels and mapped to dense ids.
pub fn load_network(path: &FsPath) -> Result<RoadGraph> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() != 7 && names.len() != 11 || names[..] != NETWORK_COLUMNS[..names.len()] {
        return Err(parse_err(
            path,
            1,
            format!("expected header '{}' (coordinate columns optional)", NETWORK_COLUMNS.join(",")),
        ));
    }

    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != names.len() {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", names.len(), rec.len())));
        }
        let from = field(&rec, 0).to_string();
        let to = field(&rec, 1).to_string();
        if from.is_empty() || to.is_empty() {
            return Err(parse_err(path, line, "empty vertex id"));
        }
        let coords = if names.len() == 11 {
            let c: Vec<Option<f64>> = (7..11)
                .map(|i| optional_f64(path, line, &rec, i, NETWORK_COLUMNS[i]))
                .collect::<Result<_>>()?;
            match (c[0], c[1], c[2], c[3]) {
                (Some(a), Some(b), Some(c), Some(d)) => Some([a, b, c, d]),
                (None, None, None, None) => None,
                _ => return Err(parse_err(path, line, "coordinates must be all present or all empty")),
            }
        } else {
            None
        };
        let attrs = EdgeAttributes {
            length_m: required_f64(path, line, &rec, 2, "length_m")?,
            incline_rad: required_f64(path, line, &rec, 3, "incline_rad")?,
            speed_limit_mps: optional_f64(path, line, &rec, 4, "speed_limit_mps")?,
            mean_speed_mps: optional_f64(path, line, &rec, 5, "mean_speed_mps")?,
            speed_var: optional_f64(path, line, &rec, 6, "speed_var")?,
            coords,
        };
        if let Some(msg) = attrs.violations().first() {
            return Err(parse_err(path, line, msg.clone()));
        }
        rows.push((line, from, to, attrs));
    }

    let raw: BTreeSet<String> = rows.iter().flat_map(|(_, f, t, _)| [f.clone(), t.clone()]).collect();
    let labels = dense_labels(&raw);
    let index: HashMap<&str, VertexId> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut seen = HashSet::new();
    let mut edges = Vec::with_capacity(rows.len());
    for (line, from, to, attrs) in &rows {
        if from == to {
            return Err(parse_err(path, *line, format!("self-loop at vertex '{from}'")));
        }
        if !seen.insert((from.as_str(), to.as_str())) {
            log::warn!("{}:{line}: duplicate edge {from} -> {to}", path.display());
        }
        edges.push(Edge {
            from: index[from.as_str()],
            to: index[to.as_str()],
            attrs: attrs.clone(),
        });
    }
    RoadGraph::with_labels(labels, edges)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes a graph in the network file format (always with coordinate columns).
pub fn save_network(graph: &RoadGraph, path: &FsPath) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(NETWORK_COLUMNS).map_err(|e| Error::csv(path, e))?;
    for edge in graph.edges() {
        let a = &edge.attrs;
        let c = a.coords.map(|c| c.map(|x| x.to_string())).unwrap_or_default();
        w.write_record([
            graph.label(edge.from).to_string(),
            graph.label(edge.to).to_string(),
            a.length_m.to_string(),
            a.incline_rad.to_string(),
            opt(a.speed_limit_mps),
            opt(a.mean_speed_mps),
            opt(a.speed_var),
            c[0].clone(),
            c[1].clone(),
            c[2].clone(),
            c[3].clone(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-edge ground truth and Gaussian prior of a generated instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTable {
    pub theta_star: Vec<f64>,
    pub sigma: Vec<f64>,
    pub priors: Vec<GaussianBelief>,
}

impl GroundTruthTable {
    pub fn truth(&self) -> Result<GroundTruth> {
        GroundTruth::gaussian(self.theta_star.clone(), self.sigma.clone())
    }
}

pub fn save_ground_truth(graph: &RoadGraph, table: &GroundTruthTable, path: &FsPath) -> Result<()> {
    if table.theta_star.len() != graph.edge_count() || table.priors.len() != graph.edge_count() {
        return Err(Error::Invalid("ground-truth table does not match the graph".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(GROUND_TRUTH_COLUMNS).map_err(|e| Error::csv(path, e))?;
    for (e, edge) in graph.edges().iter().enumerate() {
        w.write_record([
            e.to_string(),
            graph.label(edge.from).to_string(),
            graph.label(edge.to).to_string(),
            table.theta_star[e].to_string(),
            table.sigma[e].to_string(),
            table.priors[e].mu.to_string(),
            table.priors[e].var.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a ground-truth file for `graph`. The prior's observation noise is
/// the true noise variance `sigma²`.
pub fn load_ground_truth(graph: &RoadGraph, path: &FsPath) -> Result<GroundTruthTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != GROUND_TRUTH_COLUMNS {
        return Err(parse_err(path, 1, format!("expected header '{}'", GROUND_TRUTH_COLUMNS.join(","))));
    }
    let n = graph.edge_count();
    let mut rows: Vec<Option<(f64, f64, GaussianBelief)>> = vec![None; n];
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let e: usize = field(&rec, 0)
            .parse()
            .map_err(|_| parse_err(path, line, format!("edge_id '{}' is not an index", field(&rec, 0))))?;
        if e >= n {
            return Err(parse_err(path, line, format!("edge_id {e} out of range ({n} edges)")));
        }
        let edge = graph.edge(e);
        if field(&rec, 1) != graph.label(edge.from) || field(&rec, 2) != graph.label(edge.to) {
            return Err(parse_err(
                path,
                line,
                format!("edge {e} is {} -> {} in the network", graph.label(edge.from), graph.label(edge.to)),
            ));
        }
        let theta = required_f64(path, line, &rec, 3, "theta_star")?;
        let sigma = required_f64(path, line, &rec, 4, "sigma")?;
        let mu = required_f64(path, line, &rec, 5, "prior_mu")?;
        let var = required_f64(path, line, &rec, 6, "prior_var")?;
        let prior = GaussianBelief::new(mu, var, sigma * sigma).map_err(|err| parse_err(path, line, err.to_string()))?;
        if rows[e].replace((theta, sigma, prior)).is_some() {
            return Err(parse_err(path, line, format!("edge {e} listed twice")));
        }
    }
    let mut table = GroundTruthTable {
        theta_star: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        priors: Vec::with_capacity(n),
    };
    for (e, row) in rows.into_iter().enumerate() {
        let (t, s, p) = row.ok_or_else(|| Error::Invalid(format!("{}: edge {e} missing", path.display())))?;
        table.theta_star.push(t);
        table.sigma.push(s);
        table.priors.push(p);
    }
    table.truth()?;
    Ok(table)
}

/// External vertex id in a config file: a string or an integer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VertexRef {
    Int(i64),
    Label(String),
}

impl VertexRef {
    pub fn label(&self) -> String {
        match self {
            VertexRef::Int(i) => i.to_string(),
            VertexRef::Label(s) => s.clone(),
        }
    }

    pub fn resolve(&self, graph: &RoadGraph) -> Result<VertexId> {
        let label = self.label();
        graph
            .vertex_by_label(&label)
            .ok_or_else(|| Error::Config(format!("vertex '{label}' not in the network")))
    }
}

/// Experiment configuration. Every key has a default; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenarios: Vec<ScenarioKind>,
    pub policies: Vec<String>,
    pub model: ModelKind,
    pub horizon: usize,
    /// Fleet sizes to sweep.
    pub agents: Vec<usize>,
    /// Batch size of batched Thompson Sampling.
    pub batch_size: usize,
    /// Feedback delay for QPM-D policies; 1 means immediate.
    pub delay: usize,
    pub seeds: Vec<u64>,
    pub source: Option<VertexRef>,
    pub target: Option<VertexRef>,
    pub theta_factor: f64,
    pub noise_factor: f64,
    pub vehicle: VehicleParams,
    pub network: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![ScenarioKind::KnownPrior],
            policies: vec!["ts".into()],
            model: ModelKind::RectifiedGaussian,
            horizon: 2000,
            agents: vec![1],
            batch_size: 1,
            delay: 1,
            seeds: vec![0],
            source: None,
            target: None,
            theta_factor: 0.25,
            noise_factor: 0.1,
            vehicle: VehicleParams::default(),
            network: None,
            ground_truth: None,
            output_dir: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.dedup_seeds();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Removes repeated seeds, keeping first occurrences.
    pub fn dedup_seeds(&mut self) {
        let mut seen = HashSet::new();
        let before = self.seeds.len();
        self.seeds.retain(|s| seen.insert(*s));
        if self.seeds.len() != before {
            log::warn!("removed {} duplicate seed(s)", before - self.seeds.len());
        }
    }

    pub fn policy_specs(&self) -> Result<Vec<PolicySpec>> {
        self.policies.iter().map(|p| p.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.scenarios.is_empty() {
            return bad("at least one scenario is required".into());
        }
        if self.policies.is_empty() {
            return bad("at least one policy is required".into());
        }
        let specs = self.policy_specs()?;
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        if self.agents.is_empty() || self.agents.contains(&0) {
            return bad("agents must be a non-empty list of positive fleet sizes".into());
        }
        if self.batch_size == 0 || self.delay == 0 {
            return bad("batch_size and delay must be >= 1".into());
        }
        if specs.contains(&PolicySpec::BatchedTs) && self.horizon % self.batch_size != 0 {
            return bad(format!("batch_size {} does not divide horizon {}", self.batch_size, self.horizon));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        for (name, v) in [("theta_factor", self.theta_factor), ("noise_factor", self.noise_factor)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        self.vehicle.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.scenarios.contains(&ScenarioKind::Synthetic) && self.ground_truth.is_none() {
            return bad("the synthetic scenario needs a ground_truth file".into());
        }
        Ok(())
    }
}

pub fn load_config(path: &FsPath) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScenarioConfig::from_toml(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Writes the per-step trace of one run.
pub fn write_trace(trace: &RegretTrace, path: &FsPath) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(TRACE_COLUMNS).map_err(|e| Error::csv(path, e))?;
    let m = &trace.meta;
    for r in &trace.records {
        w.write_record([
            m.run_id.clone(),
            m.scenario.to_string(),
            m.policy.clone(),
            r.agent.to_string(),
            r.t.to_string(),
            r.path.hash_hex(),
            r.instant_regret.to_string(),
            r.cumulative_regret.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes each distinct path of a run once: `path_hash`, space-separated
/// edge ids.
pub fn write_paths(trace: &RegretTrace, path: &FsPath) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["path_hash", "edges"]).map_err(|e| Error::csv(path, e))?;
    let mut seen = HashSet::new();
    for r in &trace.records {
        let h = r.path.hash_hex();
        if seen.insert(h.clone()) {
            let edges: Vec<String> = r.path.edges().iter().map(|e| e.to_string()).collect();
            w.write_record([h, edges.join(" ")]).map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary(rows: &[SummaryRow], path: &FsPath) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(SUMMARY_COLUMNS).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.scenario.to_string(),
            r.agents.to_string(),
            r.avg_final_regret.to_string(),
            r.sd_final_regret.to_string(),
            r.n_runs.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
