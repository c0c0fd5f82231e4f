//! MAP search, adaptive Metropolis-Hastings sampling and convergence
//! diagnostics.

pub mod diagnostics;
pub mod mh;
pub mod optimize;
pub mod transform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observations::ObservationSet;
use crate::params::{split_params, ModelParams, StatParams};
use crate::posterior::Posterior;
use crate::scenario::ScenarioConfig;
use transform::{ParameterSpace, Transform};

pub use diagnostics::{effective_sample_size, gelman_rubin, potential_scale_reduction};
pub use mh::{mh_accept, sample_chains, Progress};
pub use optimize::{maximize, nelder_mead, MapBudget, Optimum};

/// A log-density over constrained parameters, together with the bijection
/// used to sample it on the real line.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Unnormalized log-density in constrained coordinates; `-inf` outside
    /// the support.
    fn log_density(&self, theta: &[f64]) -> f64;

    fn space(&self) -> ParameterSpace {
        ParameterSpace::new(vec![Transform::Identity; self.dim()])
    }

    /// Typical spread of each coordinate in unconstrained space.
    fn unconstrained_scales(&self) -> Vec<f64> {
        vec![1.0; self.dim()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationConfig {
    /// Iterations between proposal-covariance refreshes during burn-in.
    pub window: usize,
    pub target_acceptance: f64,
    /// Post-adaptation acceptance rates outside this band are flagged.
    pub acceptance_band: (f64, f64),
    /// Initial proposal scale as a fraction of each coordinate's prior spread.
    pub initial_scale: f64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            window: 500,
            target_acceptance: 0.234,
            acceptance_band: (0.1, 0.5),
            initial_scale: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub adaptation: AdaptationConfig,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_chains: 4,
            n_iterations: 2_000_000,
            burn_in: 500_000,
            thin: 100,
            seed: 1,
            adaptation: AdaptationConfig::default(),
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::config("at least one chain is required"));
        }
        if self.burn_in >= self.n_iterations {
            return Err(Error::config(format!(
                "burn-in ({}) must be shorter than the chain ({})",
                self.burn_in, self.n_iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::config("thinning stride must be at least 1"));
        }
        if self.adaptation.window == 0 {
            return Err(Error::config("adaptation window must be positive"));
        }
        Ok(())
    }
}

/// Post-burn-in, thinned output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// One constrained parameter vector per retained iteration.
    pub samples: Vec<Vec<f64>>,
    pub log_posterior: Vec<f64>,
    /// Acceptance rate over the post-burn-in iterations (before thinning).
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEnsemble {
    pub parameter_names: Vec<String>,
    pub chains: Vec<Chain>,
    pub scenario: String,
    pub config: ChainConfig,
}

impl PosteriorEnsemble {
    pub fn dim(&self) -> usize {
        self.parameter_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.chains.iter().map(|c| c.samples.len()).sum()
    }

    /// All samples, chain by chain.
    pub fn samples(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.chains.iter().flat_map(|c| c.samples.iter())
    }

    /// Per-chain draws of parameter `k`.
    pub fn parameter_draws(&self, k: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.samples.iter().map(|s| s[k]).collect())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (i, c) in self.chains.iter().enumerate() {
            if c.samples.len() != c.log_posterior.len() {
                return Err(Error::data(format!(
                    "chain {i}: sample/log-posterior length mismatch"
                )));
            }
            if c.samples.iter().any(|s| s.len() != d) {
                return Err(Error::data(format!(
                    "chain {i}: sample dimension differs from {d}"
                )));
            }
            if c.log_posterior.iter().any(|l| !l.is_finite()) {
                return Err(Error::data(format!("chain {i}: non-finite log-posterior")));
            }
        }
        Ok(())
    }

    pub fn acceptance_flags(&self) -> Vec<bool> {
        let (lo, hi) = self.config.adaptation.acceptance_band;
        self.chains
            .iter()
            .map(|c| c.acceptance_rate >= lo && c.acceptance_rate <= hi)
            .collect()
    }
}

/// MAP estimate of the scenario posterior: prior median and mode, any
/// `extra_starts`, and random prior draws seed a multi-start Nelder-Mead
/// search.
pub fn map_estimate(
    posterior: &Posterior,
    budget: &MapBudget,
    extra_starts: &[Vec<f64>],
) -> Result<Optimum> {
    let mut starts = vec![posterior.prior_median_point(), posterior.prior_mode_point()];
    starts.extend(extra_starts.iter().cloned());
    let priors = posterior.priors().to_vec();
    let draw = move |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        priors.iter().map(|p| p.sample(rng)).collect()
    };
    maximize(posterior, &starts, Some(&draw), budget)
}

/// Convenience form returning the parameter structs.
pub fn map_params(
    scenario: &ScenarioConfig,
    obs: &ObservationSet,
    budget: &MapBudget,
) -> Result<(ModelParams, StatParams)> {
    let post = Posterior::new(scenario, obs)?;
    let opt = map_estimate(&post, budget, &[])?;
    Ok(split_params(&opt.theta))
}

/// Runs the Metropolis-Hastings chains from `start` (typically the MAP).
pub fn run_mh(
    posterior: &Posterior,
    start: &[f64],
    config: &ChainConfig,
    progress: Option<&(dyn Fn(Progress) + Sync)>,
) -> Result<PosteriorEnsemble> {
    let mut ens = sample_chains(posterior, &[start.to_vec()], config, progress)?;
    ens.parameter_names = crate::params::parameter_names();
    ens.scenario = posterior.scenario().name.clone();
    Ok(ens)
}
