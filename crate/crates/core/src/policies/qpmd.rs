//! Queued partial monitoring with delays (QPM-D).
//!
//! Wraps a learner written for immediate feedback. The learner's current
//! proposal is replayed until feedback for it exists; feedback that
//! arrives for other arms waits in a per-arm FIFO and is handed to the
//! learner the next time it proposes that arm.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::hash::Hash;

use crate::environment::{sample_rewards, Instance};
use crate::error::{Error, Result};
use crate::graph::{Path, RoadGraph};
use crate::policies::{OnlineAgent, PolicyKind};
use crate::rng::{stream_rng, Stream};
use crate::simulator::{RegretAccountant, RegretTrace, RunMeta};

/// A bandit learner that expects immediate feedback.
pub trait Learner {
    type Arm: Clone + Eq + Hash;
    type Feedback;

    /// Arm the learner wants to play next. Must not change learner state.
    fn propose(&mut self) -> Result<Self::Arm>;

    /// Feedback for the most recent proposal.
    fn learn(&mut self, arm: &Self::Arm, feedback: Self::Feedback) -> Result<()>;
}

/// Per-arm FIFO queues of timestamped feedback.
///
/// Arms are keyed by their exact value; for paths that is the full edge
/// sequence.
#[derive(Debug, Clone)]
pub struct FeedbackQueue<A, F> {
    queues: HashMap<A, VecDeque<(usize, F)>>,
}

impl<A: Clone + Eq + Hash, F> Default for FeedbackQueue<A, F> {
    fn default() -> Self {
        Self { queues: HashMap::new() }
    }
}

impl<A: Clone + Eq + Hash, F> FeedbackQueue<A, F> {
    pub fn push(&mut self, arm: A, timestamp: usize, feedback: F) {
        self.queues.entry(arm).or_default().push_back((timestamp, feedback));
    }

    pub fn pop(&mut self, arm: &A) -> Option<(usize, F)> {
        self.queues.get_mut(arm)?.pop_front()
    }

    pub fn len(&self, arm: &A) -> usize {
        self.queues.get(arm).map_or(0, VecDeque::len)
    }

    pub fn total(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Timestamps queued for `arm`, front first.
    pub fn timestamps(&self, arm: &A) -> Vec<usize> {
        self.queues
            .get(arm)
            .map(|q| q.iter().map(|(s, _)| *s).collect())
            .unwrap_or_default()
    }
}

/// QPM-D wrapper around a [`Learner`].
#[derive(Debug, Clone)]
pub struct Qpmd<L: Learner> {
    learner: L,
    queues: FeedbackQueue<L::Arm, L::Feedback>,
    pending: Option<L::Arm>,
}

impl<L: Learner> Qpmd<L> {
    pub fn new(learner: L) -> Self {
        Self {
            learner,
            queues: FeedbackQueue::default(),
            pending: None,
        }
    }

    pub fn learner(&self) -> &L {
        &self.learner
    }

    pub fn queues(&self) -> &FeedbackQueue<L::Arm, L::Feedback> {
        &self.queues
    }

    /// Predict step: drain queued feedback into the learner until it
    /// proposes an arm with an empty queue, and return that arm.
    pub fn predict(&mut self) -> Result<L::Arm> {
        let mut arm = match self.pending.take() {
            Some(a) => a,
            None => self.learner.propose()?,
        };
        while let Some((_, feedback)) = self.queues.pop(&arm) {
            self.learner.learn(&arm, feedback)?;
            arm = self.learner.propose()?;
        }
        self.pending = Some(arm.clone());
        Ok(arm)
    }

    /// Update step: store feedback that arrived for the arm played at
    /// `timestamp`.
    pub fn receive(&mut self, arm: L::Arm, timestamp: usize, feedback: L::Feedback) {
        self.queues.push(arm, timestamp, feedback);
    }
}

/// Feedback scheduled for delivery at a future step.
#[derive(Debug, Clone)]
pub struct DelayedInbox<A, F> {
    slots: BTreeMap<usize, Vec<(usize, A, F)>>,
}

impl<A, F> Default for DelayedInbox<A, F> {
    fn default() -> Self {
        Self { slots: BTreeMap::new() }
    }
}

impl<A, F> DelayedInbox<A, F> {
    pub fn schedule(&mut self, arrival: usize, played_at: usize, arm: A, feedback: F) {
        self.slots.entry(arrival).or_default().push((played_at, arm, feedback));
    }

    /// Everything arriving at `t`, in play order.
    pub fn deliver(&mut self, t: usize) -> Vec<(usize, A, F)> {
        self.slots.remove(&t).unwrap_or_default()
    }
}

/// Runs QPM-D around the online agent for `horizon` steps, with feedback for
/// the path played at step `s` arriving at step `s + delay − 1`
/// (`delay = 1` is immediate).
pub fn run_qpmd(graph: &RoadGraph, instance: &Instance, base: PolicyKind, horizon: usize, delay: usize, seed: u64) -> Result<RegretTrace> {
    if delay == 0 {
        return Err(Error::Invalid("delay must be >= 1".into()));
    }
    if horizon == 0 {
        return Err(Error::Invalid("horizon must be >= 1".into()));
    }
    let agent = OnlineAgent::new(graph, base, instance.prior.clone(), instance.source, instance.target, seed, 0);
    let mut qpmd = Qpmd::new(agent);
    let mut inbox: DelayedInbox<Path, Vec<f64>> = DelayedInbox::default();
    let mut accountant = RegretAccountant::new(graph, instance, 1)?;
    let meta = RunMeta::new(instance.scenario, format!("{}-qpmd-{base}", instance.prior.kind().prefix()), seed, horizon, 1);
    let mut records = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let path = qpmd.predict()?;
        let rewards = sample_rewards(&instance.truth, &path, &mut stream_rng(seed, Stream::Reward, 0, t as u64));
        records.push(accountant.record(t, 0, &path)?);
        inbox.schedule(t + delay - 1, t, path, rewards);
        for (s, arm, feedback) in inbox.deliver(t) {
            qpmd.receive(arm, s, feedback);
        }
    }
    Ok(RegretTrace { meta, records })
}
