//! Synthetic DAG instances that are hard to explore.
//!
//! Vertices `u_1..u_n` (labels `"1"..="n"`) are joined by a chain, plus
//! random forward shortcuts. A shortcut skipping `k` vertices costs `11k`
//! in truth while the chain covers the same span for `10k`, so the chain is
//! optimal. The prior assigns every edge `−11k`, making all paths look
//! equally expensive at the start.

use rand::seq::IndexedRandom;

use crate::energy::{BeliefState, GaussianBelief, ModelKind};
use crate::environment::GroundTruth;
use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeAttributes, RoadGraph};
use crate::netio::GroundTruthTable;
use crate::rng::{stream_rng, Stream};

pub const CHAIN_THETA: f64 = -10.0;
pub const SHORTCUT_THETA_PER_SKIP: f64 = -11.0;
pub const TRUE_NOISE_VAR: f64 = 4.0;
pub const PRIOR_VAR: f64 = 8.0;
/// Nominal edge length per skipped vertex, written to the network file.
pub const SEGMENT_LENGTH_M: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub n: usize,
    pub o: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let max = self.n * self.n.saturating_sub(1) / 2;
        if self.n < 2 || self.o + 1 < self.n || self.o > max {
            return Err(Error::Invalid(format!(
                "need n >= 2 and n - 1 <= o <= n(n - 1)/2, got n = {}, o = {}",
                self.n, self.o
            )));
        }
        Ok(())
    }
}

/// Graph plus per-edge truth and Gaussian prior.
pub fn generate_table(spec: SynthSpec) -> Result<(RoadGraph, GroundTruthTable)> {
    spec.validate()?;
    let n = spec.n;
    let mut pairs: Vec<(usize, usize)> = (0..n - 1).map(|h| (h, h + 1)).collect();
    let candidates: Vec<(usize, usize)> = (0..n).flat_map(|h| (h + 2..n).map(move |h2| (h, h2))).collect();
    let mut rng = stream_rng(spec.seed, Stream::Instance, 0, 0);
    let mut extras: Vec<(usize, usize)> = candidates.choose_multiple(&mut rng, spec.o - (n - 1)).copied().collect();
    extras.sort_unstable();
    pairs.extend(extras);

    let mut table = GroundTruthTable {
        theta_star: Vec::with_capacity(spec.o),
        sigma: Vec::with_capacity(spec.o),
        priors: Vec::with_capacity(spec.o),
    };
    let mut edges = Vec::with_capacity(spec.o);
    for &(h, h2) in &pairs {
        let skip = (h2 - h) as f64;
        table.theta_star.push(if h2 == h + 1 { CHAIN_THETA } else { SHORTCUT_THETA_PER_SKIP * skip });
        table.sigma.push(TRUE_NOISE_VAR.sqrt());
        table
            .priors
            .push(GaussianBelief::new(SHORTCUT_THETA_PER_SKIP * skip, PRIOR_VAR, TRUE_NOISE_VAR)?);
        edges.push(Edge {
            from: h,
            to: h2,
            attrs: EdgeAttributes {
                length_m: SEGMENT_LENGTH_M * skip,
                ..EdgeAttributes::default()
            },
        });
    }
    let labels = (1..=n).map(|i| i.to_string()).collect();
    Ok((RoadGraph::with_labels(labels, edges)?, table))
}

pub fn generate(spec: SynthSpec) -> Result<(RoadGraph, GroundTruth, BeliefState)> {
    generate_table_as(spec, ModelKind::RectifiedGaussian)
}

/// As [`generate`], with the prior expressed in the given model.
pub fn generate_table_as(spec: SynthSpec, kind: ModelKind) -> Result<(RoadGraph, GroundTruth, BeliefState)> {
    let (graph, table) = generate_table(spec)?;
    let truth = table.truth()?;
    let prior = BeliefState::from_gaussian_priors(&table.priors, kind)?;
    Ok((graph, truth, prior))
}
