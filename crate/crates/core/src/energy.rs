//! Edge energy models.
//!
//! A deterministic longitudinal-dynamics estimate seeds the prior; two
//! probabilistic models learn from observed consumption:
//!
//! * rectified Gaussian: Gaussian prior and likelihood on the mean reward
//!   θ (negated energy, Wh), with routing weights taken as the mean of the
//!   rectified energy `max(0, Ẽ)`;
//! * Log-Gaussian: a Gaussian belief over `g = log(−θ)`, with a likelihood
//!   parameterized so its first two moments match the Gaussian model.
//!
//! Rewards are always on the negated-energy scale: consuming 100 Wh is a
//! reward of −100.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::EdgeAttributes;
use crate::stats::{normal_cdf, normal_pdf, normal_quantile};

/// Smallest prior/noise variance a belief may carry, Wh².
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Observed energies at or below zero are raised to this before taking logs.
pub const LOG_OBSERVATION_FLOOR: f64 = 1e-3;
/// Lower bound applied to routing weights; Dijkstra needs them strictly positive.
pub const MIN_WEIGHT: f64 = 1e-9;

/// Vehicle constants of the longitudinal energy model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub mass_kg: f64,
    pub front_area_m2: f64,
    pub drag_coeff: f64,
    pub rolling_coeff: f64,
    /// Powertrain efficiency while consuming energy (η⁺).
    pub efficiency_traction: f64,
    /// Powertrain efficiency while regenerating (η⁻).
    pub efficiency_regen: f64,
    pub gravity: f64,
    pub air_density: f64,
}

impl Default for VehicleParams {
    /// Medium-duty electric truck.
    fn default() -> Self {
        Self {
            mass_kg: 14750.0,
            front_area_m2: 8.0,
            drag_coeff: 0.7,
            rolling_coeff: 0.0064,
            efficiency_traction: 0.88,
            efficiency_regen: 1.2,
            gravity: 9.81,
            air_density: 1.2,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass_kg", self.mass_kg),
            ("front_area_m2", self.front_area_m2),
            ("drag_coeff", self.drag_coeff),
            ("rolling_coeff", self.rolling_coeff),
            ("efficiency_traction", self.efficiency_traction),
            ("efficiency_regen", self.efficiency_regen),
            ("gravity", self.gravity),
            ("air_density", self.air_density),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Invalid(format!("vehicle parameter {name} = {v} must be finite and > 0")));
            }
        }
        if self.efficiency_regen < self.efficiency_traction {
            return Err(Error::Invalid(format!(
                "efficiency_regen ({}) must be >= efficiency_traction ({})",
                self.efficiency_regen, self.efficiency_traction
            )));
        }
        Ok(())
    }

    /// Mechanical work (J) to traverse the edge at constant `speed`:
    /// grade, rolling resistance and aerodynamic drag.
    pub fn mechanical_work(&self, attrs: &EdgeAttributes, speed: f64) -> f64 {
        let l = attrs.length_m;
        let a = attrs.incline_rad;
        let grade = self.mass_kg * self.gravity * l * a.sin();
        let rolling = self.mass_kg * self.gravity * self.rolling_coeff * l * a.cos();
        let drag = 0.5 * self.drag_coeff * self.front_area_m2 * self.air_density * l * speed * speed;
        grade + rolling + drag
    }

    /// Energy (Wh) using η⁺ for traction and η⁻ for regeneration.
    pub fn signed_energy(&self, attrs: &EdgeAttributes, speed: f64) -> f64 {
        let work = self.mechanical_work(attrs, speed);
        let eta = if work >= 0.0 {
            self.efficiency_traction
        } else {
            self.efficiency_regen
        };
        work / (3600.0 * eta)
    }
}

/// Approximate energy (Wh) to traverse an edge at constant `speed` with
/// powertrain efficiency `efficiency`.
pub fn prior_energy(attrs: &EdgeAttributes, vp: &VehicleParams, speed: f64, efficiency: f64) -> Result<f64> {
    if !(speed.is_finite() && speed >= 0.0) {
        return Err(Error::Invalid(format!("speed {speed} must be finite and >= 0")));
    }
    if !(efficiency.is_finite() && efficiency > 0.0) {
        return Err(Error::Invalid(format!("efficiency {efficiency} must be finite and > 0")));
    }
    if let Some(msg) = attrs.violations().into_iter().next() {
        return Err(Error::Invalid(msg));
    }
    Ok(vp.mechanical_work(attrs, speed) / (3600.0 * efficiency))
}

/// Gaussian belief over one edge's mean reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief {
    pub mu: f64,
    pub var: f64,
    /// Known observation noise variance σ².
    pub noise_var: f64,
}

impl GaussianBelief {
    pub fn new(mu: f64, var: f64, noise_var: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::Invalid(format!("belief mean {mu} must be finite")));
        }
        for (name, v) in [("variance", var), ("noise variance", noise_var)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Invalid(format!("belief {name} {v} must be finite and > 0")));
            }
        }
        Ok(Self { mu, var, noise_var })
    }

    /// Prior from a deterministic energy estimate: mean −E, variance (ϑE)²,
    /// noise variance (φE)², both floored at [`VARIANCE_FLOOR`].
    pub fn from_energy(energy: f64, theta_factor: f64, noise_factor: f64) -> Result<Self> {
        let prior = init_prior(energy, theta_factor)?;
        if !(noise_factor.is_finite() && noise_factor > 0.0) {
            return Err(Error::Invalid(format!("noise factor {noise_factor} must be finite and > 0")));
        }
        let noise_var = (noise_factor * energy).powi(2).max(VARIANCE_FLOOR);
        Ok(Self { noise_var, ..prior })
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_var.sqrt()
    }

    /// Conjugate update with one observed reward.
    pub fn updated(&self, reward: f64) -> Result<Self> {
        gaussian_update(self, reward)
    }
}

/// Prior mean −E and variance (ϑE)². `noise_var` is left at the floor;
/// see [`GaussianBelief::from_energy`] for the full construction.
pub fn init_prior(energy: f64, theta_factor: f64) -> Result<GaussianBelief> {
    if !energy.is_finite() {
        return Err(Error::Invalid(format!("energy {energy} must be finite")));
    }
    if !(theta_factor.is_finite() && theta_factor > 0.0) {
        return Err(Error::Invalid(format!("prior width factor {theta_factor} must be finite and > 0")));
    }
    let mu = -energy;
    let var = (theta_factor * mu).powi(2).max(VARIANCE_FLOOR);
    Ok(GaussianBelief {
        mu,
        var,
        noise_var: VARIANCE_FLOOR,
    })
}

pub fn gaussian_update(b: &GaussianBelief, reward: f64) -> Result<GaussianBelief> {
    if !reward.is_finite() {
        return Err(Error::Invalid(format!("observed reward {reward} must be finite")));
    }
    let var = 1.0 / (1.0 / b.var + 1.0 / b.noise_var);
    let mu = var * (b.mu / b.var + reward / b.noise_var);
    Ok(GaussianBelief { mu, var, ..*b })
}

/// Mean of `max(0, X)` for `X ~ N(−theta, sigma²)`.
pub fn rectified_mean(theta: f64, sigma: f64) -> f64 {
    let m = -theta;
    if sigma <= 0.0 {
        return m.max(0.0);
    }
    let z = m / sigma;
    if z < -10.0 {
        // φ(z) + zΦ(z) cancels badly here; use its asymptotic series
        let z2 = z * z;
        let series = 1.0 - 3.0 / z2 + 15.0 / (z2 * z2) - 105.0 / (z2 * z2 * z2);
        return sigma * normal_pdf(z) / z2 * series;
    }
    m * normal_cdf(z) + sigma * normal_pdf(z)
}

/// Location and squared scale of the Log-Gaussian likelihood whose mean is
/// −θ and whose variance is `noise_var·θ²/ψ²`.
pub fn lognormal_likelihood_params(theta: f64, noise_var: f64, psi: f64) -> Result<(f64, f64)> {
    if !(theta.is_finite() && theta < 0.0) {
        return Err(Error::Invalid(format!(
            "Log-Gaussian model needs a negative mean reward, got {theta}"
        )));
    }
    if !(psi.is_finite() && psi != 0.0) {
        return Err(Error::Invalid(format!("reference scale psi = {psi} must be finite and nonzero")));
    }
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(Error::Invalid(format!("noise variance {noise_var} must be finite and >= 0")));
    }
    let scale2 = (noise_var / (psi * psi)).ln_1p();
    Ok(((-theta).ln() - scale2 / 2.0, scale2))
}

/// Gaussian parameters `(log_mu, log_var)` of `log(−θ)` such that the
/// induced Log-Gaussian over −θ has mean −mu0 and variance var0.
pub fn lognormal_prior(mu0: f64, var0: f64) -> Result<(f64, f64)> {
    if !(mu0.is_finite() && mu0 < 0.0) {
        return Err(Error::Invalid(format!(
            "Log-Gaussian prior needs a negative mean reward, got {mu0}"
        )));
    }
    if !(var0.is_finite() && var0 >= 0.0) {
        return Err(Error::Invalid(format!("prior variance {var0} must be finite and >= 0")));
    }
    let log_var = (var0 / (mu0 * mu0)).ln_1p();
    Ok(((-mu0).ln() - log_var / 2.0, log_var))
}

/// Belief over `g = log(−θ)` for one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogGaussianBelief {
    pub log_mu: f64,
    pub log_var: f64,
    /// Squared scale of the likelihood, `log(1 + σ²/ψ²)`.
    pub noise_shape: f64,
    /// Reference scale ψ; fixed to the prior mean reward.
    pub psi: f64,
}

impl LogGaussianBelief {
    /// Moment-matched counterpart of a Gaussian prior, with ψ = μ₀.
    pub fn from_gaussian(prior: &GaussianBelief) -> Result<Self> {
        let (log_mu, log_var) = lognormal_prior(prior.mu, prior.var)?;
        let psi = prior.mu;
        let noise_shape = (prior.noise_var / (psi * psi)).ln_1p();
        Self::new(log_mu, log_var, noise_shape, psi)
    }

    pub fn new(log_mu: f64, log_var: f64, noise_shape: f64, psi: f64) -> Result<Self> {
        if !log_mu.is_finite() {
            return Err(Error::Invalid(format!("log mean {log_mu} must be finite")));
        }
        if !(log_var.is_finite() && log_var > 0.0) {
            return Err(Error::Invalid(format!("log variance {log_var} must be finite and > 0")));
        }
        if !(noise_shape.is_finite() && noise_shape > 0.0) {
            return Err(Error::Invalid(format!("noise shape {noise_shape} must be finite and > 0")));
        }
        if !(psi.is_finite() && psi < 0.0) {
            return Err(Error::Invalid(format!("reference scale psi = {psi} must be negative")));
        }
        Ok(Self {
            log_mu,
            log_var,
            noise_shape,
            psi,
        })
    }

    /// Posterior mean of −θ.
    pub fn mean_energy(&self) -> f64 {
        (self.log_mu + self.log_var / 2.0).exp()
    }

    /// Posterior variance of −θ.
    pub fn var_energy(&self) -> f64 {
        self.log_var.exp_m1() * (2.0 * self.log_mu + self.log_var).exp()
    }

    /// Noise std of the energy observation at θ = ψ, i.e. σ.
    pub fn noise_std(&self) -> f64 {
        (self.psi * self.psi * self.noise_shape.exp_m1()).sqrt()
    }

    pub fn updated(&self, observed_energy: f64) -> Result<Self> {
        lognormal_update(self, observed_energy)
    }
}

/// Conjugate update with one observed energy (Wh, positive scale).
///
/// `log(energy)` is a Gaussian observation of `g − s/2` with variance `s`.
pub fn lognormal_update(b: &LogGaussianBelief, observed_energy: f64) -> Result<LogGaussianBelief> {
    if !observed_energy.is_finite() {
        return Err(Error::Invalid(format!("observed energy {observed_energy} must be finite")));
    }
    let x = observed_energy.max(LOG_OBSERVATION_FLOOR).ln() + b.noise_shape / 2.0;
    let log_var = 1.0 / (1.0 / b.log_var + 1.0 / b.noise_shape);
    let log_mu = log_var * (b.log_mu / b.log_var + x / b.noise_shape);
    Ok(LogGaussianBelief { log_mu, log_var, ..*b })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[serde(alias = "gaussian", alias = "n")]
    RectifiedGaussian,
    #[serde(alias = "ln")]
    LogGaussian,
}

impl ModelKind {
    /// Short label prefix used in reports: `N` or `LN`.
    pub fn prefix(self) -> &'static str {
        match self {
            ModelKind::RectifiedGaussian => "N",
            ModelKind::LogGaussian => "LN",
        }
    }
}

/// Routing weight for a sampled or estimated mean reward `theta`.
///
/// Rectified kind: mean of the rectified energy with noise std `sigma`.
/// Log-Gaussian kind: `−theta`, which must be positive.
pub fn belief_to_weight(theta: f64, kind: ModelKind, sigma: f64) -> Result<f64> {
    let w = match kind {
        ModelKind::RectifiedGaussian => {
            if !theta.is_finite() || !(sigma >= 0.0) {
                return Err(Error::Invalid(format!("cannot weight theta={theta}, sigma={sigma}")));
            }
            rectified_mean(theta, sigma)
        }
        ModelKind::LogGaussian => {
            if !(theta.is_finite() && theta < 0.0) {
                return Err(Error::Invalid(format!(
                    "Log-Gaussian weights need a negative mean reward, got {theta}"
                )));
            }
            -theta
        }
    };
    Ok(w.max(MIN_WEIGHT))
}

#[derive(Debug, Clone, PartialEq)]
pub enum EdgeBeliefs {
    Gaussian(Vec<GaussianBelief>),
    LogGaussian(Vec<LogGaussianBelief>),
}

/// Per-edge posterior for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    beliefs: EdgeBeliefs,
}

impl BeliefState {
    pub fn gaussian(beliefs: Vec<GaussianBelief>) -> Self {
        Self {
            beliefs: EdgeBeliefs::Gaussian(beliefs),
        }
    }

    pub fn log_gaussian(beliefs: Vec<LogGaussianBelief>) -> Self {
        Self {
            beliefs: EdgeBeliefs::LogGaussian(beliefs),
        }
    }

    /// Builds a belief of `kind` from per-edge Gaussian priors.
    pub fn from_gaussian_priors(priors: &[GaussianBelief], kind: ModelKind) -> Result<Self> {
        match kind {
            ModelKind::RectifiedGaussian => Ok(Self::gaussian(priors.to_vec())),
            ModelKind::LogGaussian => priors
                .iter()
                .map(LogGaussianBelief::from_gaussian)
                .collect::<Result<Vec<_>>>()
                .map(Self::log_gaussian),
        }
    }

    /// Per-edge priors from deterministic energy estimates.
    pub fn from_energies(energies: &[f64], theta_factor: f64, noise_factor: f64, kind: ModelKind) -> Result<Self> {
        let priors = energies
            .iter()
            .map(|&e| GaussianBelief::from_energy(e, theta_factor, noise_factor))
            .collect::<Result<Vec<_>>>()?;
        Self::from_gaussian_priors(&priors, kind)
    }

    pub fn kind(&self) -> ModelKind {
        match self.beliefs {
            EdgeBeliefs::Gaussian(_) => ModelKind::RectifiedGaussian,
            EdgeBeliefs::LogGaussian(_) => ModelKind::LogGaussian,
        }
    }

    pub fn beliefs(&self) -> &EdgeBeliefs {
        &self.beliefs
    }

    pub fn len(&self) -> usize {
        match &self.beliefs {
            EdgeBeliefs::Gaussian(b) => b.len(),
            EdgeBeliefs::LogGaussian(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn gaussian_at(&self, e: usize) -> Option<&GaussianBelief> {
        match &self.beliefs {
            EdgeBeliefs::Gaussian(b) => b.get(e),
            EdgeBeliefs::LogGaussian(_) => None,
        }
    }

    pub fn log_gaussian_at(&self, e: usize) -> Option<&LogGaussianBelief> {
        match &self.beliefs {
            EdgeBeliefs::LogGaussian(b) => b.get(e),
            EdgeBeliefs::Gaussian(_) => None,
        }
    }

    /// Posterior mean of θ for edge `e`.
    pub fn mean_reward(&self, e: usize) -> f64 {
        match &self.beliefs {
            EdgeBeliefs::Gaussian(b) => b[e].mu,
            EdgeBeliefs::LogGaussian(b) => -b[e].mean_energy(),
        }
    }

    /// Observation noise std σ for edge `e`.
    pub fn noise_std(&self, e: usize) -> f64 {
        match &self.beliefs {
            EdgeBeliefs::Gaussian(b) => b[e].noise_std(),
            EdgeBeliefs::LogGaussian(b) => b[e].noise_std(),
        }
    }

    /// Draws θ̃ for edge `e` from its posterior.
    pub fn sample_reward<R: Rng + ?Sized>(&self, e: usize, rng: &mut R) -> f64 {
        let x: f64 = rng.sample(StandardNormal);
        match &self.beliefs {
            EdgeBeliefs::Gaussian(b) => b[e].mu + b[e].std() * x,
            EdgeBeliefs::LogGaussian(b) => -(b[e].log_mu + b[e].log_var.sqrt() * x).exp(),
        }
    }

    /// θ̃ such that −θ̃ is the `beta` lower quantile of the posterior energy.
    pub fn optimistic_reward(&self, e: usize, beta: f64) -> f64 {
        let z = normal_quantile(beta);
        match &self.beliefs {
            EdgeBeliefs::Gaussian(b) => b[e].mu - b[e].std() * z,
            EdgeBeliefs::LogGaussian(b) => -(b[e].log_mu + b[e].log_var.sqrt() * z).exp(),
        }
    }

    /// Routing weight for a reward value on edge `e`.
    pub fn weight(&self, e: usize, theta: f64) -> Result<f64> {
        belief_to_weight(theta, self.kind(), self.noise_std(e))
    }

    /// Applies one observed reward to edge `e`.
    pub fn update(&mut self, e: usize, reward: f64) -> Result<()> {
        match &mut self.beliefs {
            EdgeBeliefs::Gaussian(b) => b[e] = b[e].updated(reward)?,
            EdgeBeliefs::LogGaussian(b) => b[e] = b[e].updated(-reward)?,
        }
        Ok(())
    }
}
