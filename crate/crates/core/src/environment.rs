//! Ground truth and reward sampling for the experimental scenarios.
//!
//! * misspecified: rewards come from the physics model evaluated at a
//!   random traffic speed, while the agent's prior assumes the speed limit;
//! * known-prior: θ* is drawn from the agent's own prior;
//! * correlated: as known-prior, with edges grouped into perfectly
//!   correlated pairs;
//! * synthetic: ground truth and prior supplied by the instance generator.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::energy::{BeliefState, GaussianBelief, ModelKind, VehicleParams, MIN_WEIGHT};
use crate::error::{Error, Result};
use crate::graph::{path_weight, shortest_path, EdgeAttributes, EdgeId, Path, RoadGraph, VertexId};
use crate::stats::mean_sd;

/// Monte-Carlo sample count for expected physics energies.
pub const PHYSICS_MC_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Misspecified,
    KnownPrior,
    Correlated,
    Synthetic,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Misspecified => "misspecified",
            ScenarioKind::KnownPrior => "known-prior",
            ScenarioKind::Correlated => "correlated",
            ScenarioKind::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "misspecified" => Ok(Self::Misspecified),
            "known-prior" => Ok(Self::KnownPrior),
            "correlated" => Ok(Self::Correlated),
            "synthetic" => Ok(Self::Synthetic),
            other => Err(Error::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Disjoint pairs of edges; `partner[e]` is the other member of e's pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    partner: Vec<Option<EdgeId>>,
}

impl Pairing {
    pub fn from_pairs(edge_count: usize, pairs: &[(EdgeId, EdgeId)]) -> Result<Self> {
        let mut partner = vec![None; edge_count];
        for &(a, b) in pairs {
            if a == b || a >= edge_count || b >= edge_count || partner[a].is_some() || partner[b].is_some() {
                return Err(Error::Invalid(format!("pair ({a}, {b}) is not a disjoint pair of valid edges")));
            }
            partner[a] = Some(b);
            partner[b] = Some(a);
        }
        Ok(Self { partner })
    }

    pub fn partner(&self, e: EdgeId) -> Option<EdgeId> {
        self.partner[e]
    }

    /// Pairs as `(low, high)`, ascending.
    pub fn pairs(&self) -> Vec<(EdgeId, EdgeId)> {
        self.partner
            .iter()
            .enumerate()
            .filter_map(|(e, p)| p.filter(|&p| e < p).map(|p| (e, p)))
            .collect()
    }

    pub fn unpaired(&self) -> Vec<EdgeId> {
        (0..self.partner.len()).filter(|&e| self.partner[e].is_none()).collect()
    }
}

/// Uniformly random perfect matching of the edge ids (one edge left over
/// when the count is odd).
pub fn pair_edges<R: Rng + ?Sized>(edge_count: usize, rng: &mut R) -> Pairing {
    let mut ids: Vec<EdgeId> = (0..edge_count).collect();
    ids.shuffle(rng);
    if edge_count % 2 == 1 {
        log::info!("odd edge count {edge_count}: edge {} left unpaired", ids[edge_count - 1]);
    }
    let pairs: Vec<(EdgeId, EdgeId)> = ids.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    Pairing::from_pairs(edge_count, &pairs).expect("shuffled ids form disjoint pairs")
}

/// Physics-driven reward law: speed ~ N(mean_speed, speed_var), energy from
/// the vehicle model with sign-dependent efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsLaw {
    pub vehicle: VehicleParams,
    pub attrs: Vec<EdgeAttributes>,
}

impl PhysicsLaw {
    fn speed_params(&self, e: EdgeId) -> Result<(f64, f64)> {
        let a = &self.attrs[e];
        match (a.mean_speed_mps, a.speed_var) {
            (Some(m), Some(v)) => Ok((m, v.sqrt())),
            _ => Err(Error::Invalid(format!("edge {e} lacks mean_speed_mps/speed_var"))),
        }
    }

    pub fn sample_energy<R: Rng + ?Sized>(&self, e: EdgeId, rng: &mut R) -> f64 {
        let (mean, sd) = self.speed_params(e).expect("validated at construction");
        let x: f64 = rng.sample(StandardNormal);
        self.vehicle.signed_energy(&self.attrs[e], mean + sd * x)
    }
}

/// True per-edge mean rewards and the law that generates observations.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    theta_star: Vec<f64>,
    sigma: Vec<f64>,
    pairing: Option<Pairing>,
    physics: Option<PhysicsLaw>,
}

impl GroundTruth {
    /// Independent Gaussian rewards `N(θ*_e, σ_e²)`.
    pub fn gaussian(theta_star: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if theta_star.len() != sigma.len() {
            return Err(Error::Invalid("theta_star and sigma lengths differ".into()));
        }
        if let Some((e, s)) = sigma.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::Invalid(format!("sigma[{e}] = {s} must be finite and >= 0")));
        }
        if let Some((e, t)) = theta_star.iter().enumerate().find(|(_, t)| !t.is_finite()) {
            return Err(Error::Invalid(format!("theta_star[{e}] = {t} must be finite")));
        }
        Ok(Self {
            theta_star,
            sigma,
            pairing: None,
            physics: None,
        })
    }

    pub fn with_pairing(mut self, pairing: Pairing) -> Result<Self> {
        if pairing.partner.len() != self.theta_star.len() {
            return Err(Error::Invalid("pairing does not cover the edge set".into()));
        }
        self.pairing = Some(pairing);
        Ok(self)
    }

    pub fn edge_count(&self) -> usize {
        self.theta_star.len()
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn pairing(&self) -> Option<&Pairing> {
        self.pairing.as_ref()
    }

    pub fn physics(&self) -> Option<&PhysicsLaw> {
        self.physics.as_ref()
    }

    /// Per-edge expected energy used for regret, `−θ*` floored at
    /// [`MIN_WEIGHT`] so the optimum is a positive-weight shortest path.
    pub fn regret_costs(&self) -> Vec<f64> {
        self.theta_star.iter().map(|t| (-t).max(MIN_WEIGHT)).collect()
    }

    /// Expected energy of a path under the regret costs.
    pub fn path_cost(&self, path: &Path) -> Result<f64> {
        path_weight(path, &self.regret_costs())
    }

    pub fn optimal_path(&self, graph: &RoadGraph, source: VertexId, target: VertexId) -> Result<Path> {
        shortest_path(graph, &self.regret_costs(), source, target)
    }
}

/// Draws one reward per traversed edge, in path order.
///
/// Paired edges share one standard-normal draw per step, giving unit
/// correlation; each marginal stays `N(θ*_e, σ_e²)`.
pub fn sample_rewards<R: Rng + ?Sized>(gt: &GroundTruth, path: &Path, rng: &mut R) -> Vec<f64> {
    if let Some(physics) = &gt.physics {
        return path.edges().iter().map(|&e| -physics.sample_energy(e, rng)).collect();
    }
    let mut shared: HashMap<EdgeId, f64> = HashMap::new();
    path.edges()
        .iter()
        .map(|&e| {
            let x = match gt.pairing.as_ref().and_then(|p| p.partner(e)) {
                Some(p) => *shared.entry(e.min(p)).or_insert_with(|| rng.sample(StandardNormal)),
                None => rng.sample(StandardNormal),
            };
            gt.theta_star[e] + gt.sigma[e] * x
        })
        .collect()
}

/// Everything needed to run a policy: truth, the agent's prior, endpoints.
#[derive(Debug, Clone)]
pub struct Instance {
    pub scenario: ScenarioKind,
    pub truth: GroundTruth,
    pub prior: BeliefState,
    pub source: VertexId,
    pub target: VertexId,
}

impl Instance {
    pub fn new(scenario: ScenarioKind, truth: GroundTruth, prior: BeliefState, source: VertexId, target: VertexId) -> Result<Self> {
        if truth.edge_count() != prior.len() {
            return Err(Error::Invalid(format!(
                "ground truth covers {} edges but the prior covers {}",
                truth.edge_count(),
                prior.len()
            )));
        }
        Ok(Self {
            scenario,
            truth,
            prior,
            source,
            target,
        })
    }
}

/// Per-edge energy estimate at the given speeds with η⁺.
fn energies_at(graph: &RoadGraph, vp: &VehicleParams, pick: impl Fn(EdgeId, &EdgeAttributes) -> Result<f64>) -> Result<Vec<f64>> {
    graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let v = pick(e, &edge.attrs)?;
            crate::energy::prior_energy(&edge.attrs, vp, v, vp.efficiency_traction)
        })
        .collect()
}

/// Agent prior from speed limits, ground truth from traffic speeds.
///
/// The expected reward of each edge is the Monte-Carlo mean of the physics
/// energy over [`PHYSICS_MC_SAMPLES`] speed draws from `mc_rng`.
pub fn build_misspecified<R: Rng + ?Sized>(
    graph: &RoadGraph,
    vp: &VehicleParams,
    theta_factor: f64,
    noise_factor: f64,
    kind: ModelKind,
    mc_rng: &mut R,
) -> Result<(GroundTruth, BeliefState)> {
    vp.validate()?;
    let limit_energy = energies_at(graph, vp, |e, a| {
        a.speed_limit_mps
            .ok_or_else(|| Error::Invalid(format!("edge {e} has no speed_limit_mps (required by the misspecified scenario)")))
    })?;
    let prior = BeliefState::from_energies(&limit_energy, theta_factor, noise_factor, kind)?;

    let physics = PhysicsLaw {
        vehicle: *vp,
        attrs: graph.edges().iter().map(|e| e.attrs.clone()).collect(),
    };
    let mut theta_star = Vec::with_capacity(graph.edge_count());
    let mut sigma = Vec::with_capacity(graph.edge_count());
    let mut draws = vec![0.0; PHYSICS_MC_SAMPLES];
    for e in 0..graph.edge_count() {
        let a = &physics.attrs[e];
        if a.mean_speed_mps.is_none() || a.speed_var.is_none() {
            return Err(Error::Invalid(format!(
                "edge {e} lacks mean_speed_mps/speed_var (required by the misspecified scenario)"
            )));
        }
        for d in draws.iter_mut() {
            *d = physics.sample_energy(e, mc_rng);
        }
        let (mean, sd) = mean_sd(&draws);
        theta_star.push(-mean);
        sigma.push(sd);
    }
    let truth = GroundTruth {
        theta_star,
        sigma,
        pairing: None,
        physics: Some(physics),
    };
    Ok((truth, prior))
}

/// Gaussian priors centred on the energy at each edge's mean traffic speed
/// (speed limit when no traffic speed is recorded).
pub fn known_prior_from_graph(graph: &RoadGraph, vp: &VehicleParams, theta_factor: f64, noise_factor: f64, kind: ModelKind) -> Result<BeliefState> {
    vp.validate()?;
    let energies = energies_at(graph, vp, |e, a| {
        a.mean_speed_mps
            .or(a.speed_limit_mps)
            .ok_or_else(|| Error::Invalid(format!("edge {e} has neither mean_speed_mps nor speed_limit_mps")))
    })?;
    BeliefState::from_energies(&energies, theta_factor, noise_factor, kind)
}

/// Draws θ* independently from each edge's prior.
pub fn build_known_prior<R: Rng + ?Sized>(prior: &BeliefState, rng: &mut R) -> GroundTruth {
    let n = prior.len();
    let theta_star = (0..n).map(|e| prior.sample_reward(e, rng)).collect();
    let sigma = (0..n).map(|e| prior.noise_std(e)).collect();
    GroundTruth {
        theta_star,
        sigma,
        pairing: None,
        physics: None,
    }
}

/// Known-prior truth whose edges are grouped into correlated pairs.
pub fn build_correlated<R: Rng + ?Sized, P: Rng + ?Sized>(prior: &BeliefState, rng: &mut R, pairing_rng: &mut P) -> GroundTruth {
    let truth = build_known_prior(prior, rng);
    let pairing = pair_edges(prior.len(), pairing_rng);
    truth.with_pairing(pairing).expect("pairing sized to the prior")
}

/// Gaussian beliefs with the given means and variances, for tests and
/// synthetic instances.
pub fn gaussian_prior(mu: &[f64], var: &[f64], noise_var: &[f64]) -> Result<BeliefState> {
    let beliefs = mu
        .iter()
        .zip(var)
        .zip(noise_var)
        .map(|((&m, &v), &n)| GaussianBelief::new(m, v, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(BeliefState::gaussian(beliefs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_edge_graph(attrs: EdgeAttributes) -> RoadGraph {
        RoadGraph::new(2, vec![crate::graph::Edge { from: 0, to: 1, attrs }]).unwrap()
    }

    fn path_of(g: &RoadGraph, edges: Vec<EdgeId>) -> Path {
        Path::from_edges(g, g.edge(edges[0]).from, edges).unwrap()
    }

    #[test]
    fn zero_sigma_rewards_equal_means() {
        let g = crate::graph::tests::graph_of(3, &[(0, 1), (1, 2)]);
        let gt = GroundTruth::gaussian(vec![-3.0, -4.0], vec![0.0, 0.0]).unwrap();
        let r = sample_rewards(&gt, &path_of(&g, vec![0, 1]), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(r, vec![-3.0, -4.0]);
    }

    #[test]
    fn paired_edges_share_noise() {
        let g = crate::graph::tests::graph_of(3, &[(0, 1), (1, 2)]);
        let gt = GroundTruth::gaussian(vec![-3.0, -4.0], vec![1.0, 1.0])
            .unwrap()
            .with_pairing(Pairing::from_pairs(2, &[(0, 1)]).unwrap())
            .unwrap();
        let p = path_of(&g, vec![0, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let r = sample_rewards(&gt, &p, &mut rng);
            assert!(((r[0] + 3.0) - (r[1] + 4.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn pairing_small_cases() {
        let p = pair_edges(2, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(p.pairs(), vec![(0, 1)]);
        let a = pair_edges(4, &mut stream_rng(5, Stream::Pairing, 0, 0));
        let b = pair_edges(4, &mut stream_rng(5, Stream::Pairing, 0, 0));
        assert_eq!(a, b);
        assert_eq!(a.pairs().len(), 2);
        let odd = pair_edges(5, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(odd.unpaired().len(), 1);
        assert_eq!(odd.pairs().len(), 2);
    }

    #[test]
    fn known_prior_zero_variance_reproduces_means() {
        let prior = gaussian_prior(&[-5.0, -7.0], &[1e-300, 1e-300], &[1.0, 1.0]).unwrap();
        let gt = build_known_prior(&prior, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(gt.theta_star(), &[-5.0, -7.0]);
        assert_eq!(gt.sigma(), &[1.0, 1.0]);
    }

    #[test]
    fn known_prior_is_seeded() {
        let prior = gaussian_prior(&[-5.0, -7.0], &[1.0, 4.0], &[1.0, 1.0]).unwrap();
        let a = build_known_prior(&prior, &mut stream_rng(3, Stream::Instance, 0, 0));
        let b = build_known_prior(&prior, &mut stream_rng(3, Stream::Instance, 0, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn misspecified_without_misspecification() {
        let attrs = EdgeAttributes {
            length_m: 800.0,
            incline_rad: 0.01,
            speed_limit_mps: Some(13.89),
            mean_speed_mps: Some(13.89),
            speed_var: Some(0.0),
            coords: None,
        };
        let g = one_edge_graph(attrs);
        let vp = VehicleParams::default();
        let (gt, prior) = build_misspecified(&g, &vp, 0.25, 0.1, ModelKind::RectifiedGaussian, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((prior.mean_reward(0) - gt.theta_star()[0]).abs() < 1e-9);
        assert!(gt.sigma()[0] < 1e-9);
    }

    #[test]
    fn misspecified_prior_underestimates_at_higher_traffic_speed() {
        let attrs = EdgeAttributes {
            length_m: 1000.0,
            incline_rad: 0.0,
            speed_limit_mps: Some(13.89),
            mean_speed_mps: Some(20.0),
            speed_var: Some(0.0),
            coords: None,
        };
        let g = one_edge_graph(attrs.clone());
        let vp = VehicleParams::default();
        let (gt, prior) = build_misspecified(&g, &vp, 0.25, 0.1, ModelKind::RectifiedGaussian, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let at_limit = vp.mechanical_work(&attrs, 13.89) / (3600.0 * 0.88);
        let at_traffic = vp.mechanical_work(&attrs, 20.0) / (3600.0 * 0.88);
        assert!(at_limit < at_traffic);
        assert!((prior.mean_reward(0) + at_limit).abs() < 1e-9);
        assert!((gt.theta_star()[0] + at_traffic).abs() < 1e-9);
        assert!(prior.mean_reward(0).abs() < gt.theta_star()[0].abs());
    }

    #[test]
    fn misspecified_requires_speeds() {
        let attrs = EdgeAttributes {
            length_m: 10.0,
            speed_limit_mps: Some(10.0),
            ..Default::default()
        };
        let g = one_edge_graph(attrs);
        let err = build_misspecified(&g, &VehicleParams::default(), 0.25, 0.1, ModelKind::RectifiedGaussian, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Invalid(_))));
    }

    #[test]
    fn optimal_path_is_stable() {
        let g = crate::graph::tests::graph_of(3, &[(0, 1), (1, 2), (0, 2)]);
        let gt = GroundTruth::gaussian(vec![-1.0, -1.0, -3.0], vec![1.0; 3]).unwrap();
        let a = gt.optimal_path(&g, 0, 2).unwrap();
        assert_eq!(a.edges(), &[0, 1]);
        assert_eq!(a, gt.optimal_path(&g, 0, 2).unwrap());
        assert_eq!(gt.path_cost(&a).unwrap(), 2.0);
    }

    #[test]
    fn regret_costs_are_positive() {
        let gt = GroundTruth::gaussian(vec![-2.0, 0.5], vec![1.0, 1.0]).unwrap();
        assert_eq!(gt.regret_costs(), vec![2.0, MIN_WEIGHT]);
    }
}
