//! Batched Thompson Sampling: the posterior is frozen for each batch of
//! `batch` consecutive selections and updated once at the batch boundary.

use crate::environment::{sample_rewards, Instance};
use crate::error::{Error, Result};
use crate::graph::{Path, RoadGraph};
use crate::policies::{observe, select_path, PolicyKind};
use crate::rng::{stream_rng, Stream};
use crate::simulator::{RegretAccountant, RegretTrace, RunMeta};

/// Result of a batched run: the trace and how many posterior updates ran.
#[derive(Debug, Clone)]
pub struct BatchedRun {
    pub trace: RegretTrace,
    pub update_events: usize,
}

pub fn batched_ts_run(graph: &RoadGraph, instance: &Instance, horizon: usize, batch: usize, seed: u64) -> Result<BatchedRun> {
    if horizon == 0 || batch == 0 {
        return Err(Error::Invalid("horizon and batch size must be >= 1".into()));
    }
    if horizon % batch != 0 {
        return Err(Error::Invalid(format!("batch size {batch} does not divide horizon {horizon}")));
    }
    let mut belief = instance.prior.clone();
    let mut accountant = RegretAccountant::new(graph, instance, 1)?;
    let meta = RunMeta::new(instance.scenario, format!("{}-batched-ts", belief.kind().prefix()), seed, horizon, 1);
    let mut records = Vec::with_capacity(horizon);
    let mut pending: Vec<(Path, Vec<f64>)> = Vec::with_capacity(batch);
    let mut update_events = 0;
    for t in 1..=horizon {
        let mut rng = stream_rng(seed, Stream::Policy, 0, t as u64);
        let path = select_path(PolicyKind::Thompson, graph, &belief, t, instance.source, instance.target, &mut rng)?;
        let rewards = sample_rewards(&instance.truth, &path, &mut stream_rng(seed, Stream::Reward, 0, t as u64));
        records.push(accountant.record(t, 0, &path)?);
        pending.push((path, rewards));
        if t % batch == 0 {
            for (p, r) in pending.drain(..) {
                observe(&mut belief, &p, &r)?;
            }
            update_events += 1;
        }
    }
    Ok(BatchedRun {
        trace: RegretTrace { meta, records },
        update_events,
    })
}
