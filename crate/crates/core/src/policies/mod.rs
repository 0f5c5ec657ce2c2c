//! Exploration policies: edge-weight rules (greedy, Thompson Sampling,
//! BayesUCB), the ε_t-greedy path rule, and the wrappers for delayed
//! (`qpmd`) and batched (`batched`) feedback.

pub mod batched;
pub mod qpmd;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::energy::BeliefState;
use crate::error::{Error, Result};
use crate::graph::{shortest_path, EdgeId, Path, RoadGraph, ShortestPathTree, VertexId};
use crate::rng::{stream_rng, Stream};

/// Edge resamples attempted by ε_t-greedy before falling back to greedy.
pub const MAX_EXPLORATION_RESAMPLES: usize = 100;

/// Exploration probability schedule for ε_t-greedy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsSchedule {
    Constant(f64),
    /// ε_t = 1/t.
    InverseT,
}

impl EpsSchedule {
    pub fn at(self, t: usize) -> f64 {
        match self {
            EpsSchedule::Constant(e) => e,
            EpsSchedule::InverseT => 1.0 / t.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    Greedy,
    Thompson,
    BayesUcb,
    EpsGreedy(EpsSchedule),
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Greedy => f.write_str("greedy"),
            PolicyKind::Thompson => f.write_str("ts"),
            PolicyKind::BayesUcb => f.write_str("bayes-ucb"),
            PolicyKind::EpsGreedy(EpsSchedule::InverseT) => f.write_str("eps-t-greedy"),
            PolicyKind::EpsGreedy(EpsSchedule::Constant(e)) => write!(f, "eps-greedy-{e}"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "ts" | "thompson" => Ok(Self::Thompson),
            "bayes-ucb" | "bayesucb" => Ok(Self::BayesUcb),
            "eps-t-greedy" => Ok(Self::EpsGreedy(EpsSchedule::InverseT)),
            other => {
                let eps = other
                    .strip_prefix("eps-greedy-")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown policy '{other}'")))?;
                if !(0.0..=1.0).contains(&eps) {
                    return Err(Error::Config(format!("exploration probability {eps} outside [0, 1]")));
                }
                Ok(Self::EpsGreedy(EpsSchedule::Constant(eps)))
            }
        }
    }
}

/// Weights from posterior means.
pub fn greedy_weights(belief: &BeliefState) -> Result<Vec<f64>> {
    (0..belief.len()).map(|e| belief.weight(e, belief.mean_reward(e))).collect()
}

/// Weights from one posterior sample per edge, drawn in edge-id order.
pub fn ts_weights<R: Rng + ?Sized>(belief: &BeliefState, rng: &mut R) -> Result<Vec<f64>> {
    (0..belief.len())
        .map(|e| {
            let theta = belief.sample_reward(e, rng);
            belief.weight(e, theta)
        })
        .collect()
}

/// Quantile level used at round `t`: β_t = 1/(t+1).
pub fn bayesucb_level(t: usize) -> f64 {
    1.0 / (t as f64 + 1.0)
}

/// Weights from the β_t lower quantile of each edge's posterior energy.
pub fn bayesucb_weights(belief: &BeliefState, t: usize) -> Result<Vec<f64>> {
    if t == 0 {
        return Err(Error::Invalid("BayesUCB rounds start at t = 1".into()));
    }
    bayesucb_weights_at_level(belief, bayesucb_level(t))
}

pub fn bayesucb_weights_at_level(belief: &BeliefState, beta: f64) -> Result<Vec<f64>> {
    (0..belief.len())
        .map(|e| belief.weight(e, belief.optimistic_reward(e, beta)))
        .collect()
}

/// Shortest source→target path forced through `edge`, under `weights`.
pub fn path_through_edge(graph: &RoadGraph, weights: &[f64], source: VertexId, target: VertexId, edge: EdgeId) -> Result<Path> {
    let from_source = ShortestPathTree::forward(graph, weights, source)?;
    let to_target = ShortestPathTree::reverse(graph, weights, target)?;
    through_edge(graph, &from_source, &to_target, edge)
}

fn through_edge(graph: &RoadGraph, from_source: &ShortestPathTree, to_target: &ShortestPathTree, edge: EdgeId) -> Result<Path> {
    let e = graph.edge(edge);
    let head = from_source.path(graph, e.from)?;
    let tail = to_target.path(graph, e.to)?;
    let middle = Path::from_edges(graph, e.from, vec![edge])?;
    head.concat(&middle)?.concat(&tail)
}

/// ε_t-greedy path selection.
///
/// With probability ε_t an edge is drawn uniformly and the route is the
/// shortest path to its tail, the edge, and the shortest path from its head
/// (all under posterior-mean weights). Edges whose segments are unreachable
/// are redrawn up to [`MAX_EXPLORATION_RESAMPLES`] times before falling back
/// to the greedy path.
pub fn eps_greedy_select<R: Rng + ?Sized>(
    graph: &RoadGraph,
    belief: &BeliefState,
    t: usize,
    schedule: EpsSchedule,
    source: VertexId,
    target: VertexId,
    rng: &mut R,
) -> Result<Path> {
    let eps = schedule.at(t);
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Invalid(format!("exploration probability {eps} outside [0, 1]")));
    }
    let weights = greedy_weights(belief)?;
    let explore = rng.random::<f64>() < eps;
    if !explore || graph.edge_count() == 0 {
        return shortest_path(graph, &weights, source, target);
    }
    let from_source = ShortestPathTree::forward(graph, &weights, source)?;
    let to_target = ShortestPathTree::reverse(graph, &weights, target)?;
    for attempt in 0..=MAX_EXPLORATION_RESAMPLES {
        let edge = rng.random_range(0..graph.edge_count());
        match through_edge(graph, &from_source, &to_target, edge) {
            Ok(p) => return Ok(p),
            Err(Error::NoPath { .. }) => log::debug!("t={t}: exploration edge {edge} unusable (attempt {attempt})"),
            Err(other) => return Err(other),
        }
    }
    log::warn!("t={t}: no usable exploration edge after {MAX_EXPLORATION_RESAMPLES} resamples; playing greedy");
    from_source.path(graph, target)
}

/// One round of path selection for `kind` at round `t` (1-based).
pub fn select_path<R: Rng + ?Sized>(
    kind: PolicyKind,
    graph: &RoadGraph,
    belief: &BeliefState,
    t: usize,
    source: VertexId,
    target: VertexId,
    rng: &mut R,
) -> Result<Path> {
    let weights = match kind {
        PolicyKind::Greedy => greedy_weights(belief)?,
        PolicyKind::Thompson => ts_weights(belief, rng)?,
        PolicyKind::BayesUcb => bayesucb_weights(belief, t)?,
        PolicyKind::EpsGreedy(schedule) => return eps_greedy_select(graph, belief, t, schedule, source, target, rng),
    };
    shortest_path(graph, &weights, source, target)
}

/// Applies one semi-bandit observation (one reward per path position).
pub fn observe(belief: &mut BeliefState, path: &Path, rewards: &[f64]) -> Result<()> {
    if rewards.len() != path.len() {
        return Err(Error::Invalid(format!(
            "{} rewards for a path of {} edges",
            rewards.len(),
            path.len()
        )));
    }
    for (&e, &r) in path.edges().iter().zip(rewards) {
        belief.update(e, r)?;
    }
    Ok(())
}

/// Single-agent learner of the online loop: proposes a path from its
/// belief, learns from semi-bandit feedback.
#[derive(Debug, Clone)]
pub struct OnlineAgent<'g> {
    graph: &'g RoadGraph,
    kind: PolicyKind,
    belief: BeliefState,
    source: VertexId,
    target: VertexId,
    seed: u64,
    agent: u64,
    round: usize,
}

impl<'g> OnlineAgent<'g> {
    pub fn new(graph: &'g RoadGraph, kind: PolicyKind, prior: BeliefState, source: VertexId, target: VertexId, seed: u64, agent: u64) -> Self {
        Self {
            graph,
            kind,
            belief: prior,
            source,
            target,
            seed,
            agent,
            round: 1,
        }
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    /// Current round; advances with every [`OnlineAgent::learn`].
    pub fn round(&self) -> usize {
        self.round
    }
}

impl qpmd::Learner for OnlineAgent<'_> {
    type Arm = Path;
    type Feedback = Vec<f64>;

    fn propose(&mut self) -> Result<Path> {
        let mut rng = stream_rng(self.seed, Stream::Policy, self.agent, self.round as u64);
        select_path(self.kind, self.graph, &self.belief, self.round, self.source, self.target, &mut rng)
    }

    fn learn(&mut self, arm: &Path, feedback: Vec<f64>) -> Result<()> {
        observe(&mut self.belief, arm, &feedback)?;
        self.round += 1;
        Ok(())
    }
}
