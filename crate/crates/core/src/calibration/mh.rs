//! Adaptive random-walk Metropolis in unconstrained coordinates.
//!
//! During burn-in the proposal covariance tracks the empirical covariance of
//! the chain (refreshed every `window` iterations) and a global scale is
//! tuned toward the target acceptance rate. Both are frozen once burn-in
//! ends, so retained samples come from a fixed Markov kernel.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{Chain, ChainConfig, LogDensity, PosteriorEnsemble};
use crate::error::{Error, Result};

/// Progress report passed to the optional callback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub chain: usize,
    pub iteration: usize,
    pub acceptance_rate: f64,
}

const PROGRESS_EVERY: usize = 10_000;

/// Metropolis rule for a symmetric proposal: accept iff `ln(u) < log_ratio`.
pub fn mh_accept(log_ratio: f64, u: f64) -> bool {
    !log_ratio.is_nan() && u.ln() < log_ratio
}

/// Per-chain random stream, fixed by seed and chain index alone.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Runs `config.n_chains` chains. `starts` holds either one start shared by
/// all chains or one per chain, in constrained coordinates.
pub fn sample_chains<T: LogDensity + ?Sized>(
    target: &T,
    starts: &[Vec<f64>],
    config: &ChainConfig,
    progress: Option<&(dyn Fn(Progress) + Sync)>,
) -> Result<PosteriorEnsemble> {
    config.validate()?;
    if starts.is_empty() || (starts.len() != 1 && starts.len() != config.n_chains) {
        return Err(Error::config(format!(
            "expected 1 or {} starting points, got {}",
            config.n_chains,
            starts.len()
        )));
    }
    let chains = (0..config.n_chains)
        .into_par_iter()
        .map(|c| {
            let start = if starts.len() == 1 {
                &starts[0]
            } else {
                &starts[c]
            };
            run_chain(target, start, config, c, progress)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorEnsemble {
        parameter_names: (0..target.dim()).map(|i| format!("x{i}")).collect(),
        chains,
        scenario: String::new(),
        config: config.clone(),
    })
}

fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    start: &[f64],
    config: &ChainConfig,
    chain_index: usize,
    progress: Option<&(dyn Fn(Progress) + Sync)>,
) -> Result<Chain> {
    let d = target.dim();
    if start.len() != d {
        return Err(Error::config(format!(
            "start has {} entries, expected {d}",
            start.len()
        )));
    }
    let space = target.space();
    let eval = |u: &[f64]| -> f64 {
        let lp = target.log_density(&space.to_constrained(u));
        if lp.is_finite() {
            lp + space.log_abs_jacobian(u)
        } else {
            f64::NEG_INFINITY
        }
    };

    let mut rng = chain_rng(config.seed, chain_index);
    let mut u = space.to_unconstrained(start);
    let mut lp = eval(&u);
    if !lp.is_finite() {
        return Err(Error::numeric(format!(
            "chain {chain_index}: starting point has zero posterior density"
        )));
    }

    let adapt = &config.adaptation;
    let base_sd: Vec<f64> = target
        .unconstrained_scales()
        .iter()
        .map(|s| s * adapt.initial_scale)
        .collect();
    let mut chol = DMatrix::from_diagonal(&DVector::from_vec(base_sd.clone()));
    let mut log_scale = 0.0f64;
    let mut empirical = false;
    let optimal = 2.38 * 2.38 / d as f64;

    // Welford accumulators over burn-in states.
    let mut mean = DVector::<f64>::zeros(d);
    let mut m2 = DMatrix::<f64>::zeros(d, d);
    let mut count = 0usize;

    let mut proposal = vec![0.0; d];
    let mut z = DVector::<f64>::zeros(d);
    let mut accepted_burn = 0usize;
    let mut accepted_main = 0usize;

    let n_keep = (config.n_iterations - config.burn_in).div_ceil(config.thin);
    let mut samples = Vec::with_capacity(n_keep);
    let mut log_post = Vec::with_capacity(n_keep);

    for it in 0..config.n_iterations {
        let burning = it < config.burn_in;
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let step = &chol * &z;
        let factor = log_scale.exp();
        for i in 0..d {
            proposal[i] = u[i] + factor * step[i];
        }
        let lp_prop = eval(&proposal);
        let log_ratio = lp_prop - lp;
        let accept = mh_accept(log_ratio, rng.random::<f64>());
        if accept {
            u.copy_from_slice(&proposal);
            lp = lp_prop;
        }

        if burning {
            accepted_burn += accept as usize;
            let alpha = if log_ratio.is_nan() {
                0.0
            } else {
                log_ratio.min(0.0).exp()
            };
            let gamma = (1.0 + it as f64 / adapt.window as f64).powf(-0.6);
            log_scale += gamma * (alpha - adapt.target_acceptance);

            count += 1;
            let x = DVector::from_column_slice(&u);
            let delta = &x - &mean;
            mean += &delta / count as f64;
            let delta2 = &x - &mean;
            m2.ger(1.0, &delta, &delta2, 1.0);

            if (it + 1) % adapt.window == 0 && count > 2 * d {
                let mut cov = &m2 * (optimal / (count - 1) as f64);
                for i in 0..d {
                    cov[(i, i)] += 1e-8 * base_sd[i] * base_sd[i];
                }
                cov = (&cov + cov.transpose()) * 0.5;
                if let Some(c) = cov.cholesky() {
                    chol = c.l();
                    // The empirical covariance already carries the 2.38^2/d
                    // scaling; restart the global factor on the first switch.
                    if !empirical {
                        log_scale = 0.0;
                        empirical = true;
                    }
                }
            }
        } else {
            accepted_main += accept as usize;
            if (it - config.burn_in) % config.thin == 0 {
                let theta = space.to_constrained(&u);
                log_post.push(lp - space.log_abs_jacobian(&u));
                samples.push(theta);
            }
        }

        if let Some(cb) = progress {
            if (it + 1) % PROGRESS_EVERY == 0 {
                let acc = if burning {
                    accepted_burn as f64 / (it + 1) as f64
                } else {
                    accepted_main as f64 / (it + 1 - config.burn_in) as f64
                };
                cb(Progress {
                    chain: chain_index,
                    iteration: it + 1,
                    acceptance_rate: acc,
                });
            }
        }
    }

    Ok(Chain {
        samples,
        log_posterior: log_post,
        acceptance_rate: accepted_main as f64 / (config.n_iterations - config.burn_in) as f64,
        burn_in_acceptance_rate: if config.burn_in > 0 {
            accepted_burn as f64 / config.burn_in as f64
        } else {
            f64::NAN
        },
    })
}
