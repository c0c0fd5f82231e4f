//! Gelman-Rubin potential scale reduction and effective sample size.

use super::PosteriorEnsemble;
use crate::error::{Error, Result};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Classic potential scale reduction factor of equal-length chains.
///
/// `R = sqrt(((n-1)/n W + B/n) / W)` with `W` the mean within-chain variance
/// and `B/n` the variance of the chain means. Zero within- and between-chain
/// variance is reported as 1.
pub fn potential_scale_reduction(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::data("at least two chains are needed for R-hat"));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::data("chains have unequal lengths"));
    }
    if n < 2 {
        return Err(Error::data("chains need at least two draws"));
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = mean(
        &chains
            .iter()
            .map(|c| sample_variance(c))
            .collect::<Vec<_>>(),
    );
    let between_over_n = sample_variance(&means);
    let nf = n as f64;
    if within <= 0.0 {
        return Ok(if between_over_n <= 0.0 {
            1.0
        } else {
            f64::INFINITY
        });
    }
    let pooled = (nf - 1.0) / nf * within + between_over_n;
    Ok((pooled / within).sqrt())
}

/// R-hat for every parameter of the ensemble.
pub fn gelman_rubin(ensemble: &PosteriorEnsemble) -> Result<Vec<f64>> {
    (0..ensemble.dim())
        .map(|k| potential_scale_reduction(&ensemble.parameter_draws(k)))
        .collect()
}

/// Effective sample size of one chain from its autocorrelations, truncated
/// with Geyer's initial monotone positive sequence.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(x);
    let c0 = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let autocorr = |lag: usize| -> f64 {
        let s: f64 = (0..n - lag).map(|t| (x[t] - m) * (x[t + lag] - m)).sum();
        s / n as f64 / c0
    };
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = autocorr(lag) + autocorr(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = -1.0 + 2.0 * sum_pairs;
    (n as f64 / tau.max(1.0 / n as f64)).min(n as f64 * (n as f64).log10())
}

/// Marginal summary of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub rhat: f64,
    /// Sum of the per-chain effective sample sizes.
    pub ess: f64,
}

pub fn summarize(ensemble: &PosteriorEnsemble) -> Result<Vec<ParameterSummary>> {
    let rhat = if ensemble.chains.len() >= 2 {
        gelman_rubin(ensemble)?
    } else {
        vec![f64::NAN; ensemble.dim()]
    };
    Ok((0..ensemble.dim())
        .map(|k| {
            let mut all: Vec<f64> = ensemble.samples().map(|s| s[k]).collect();
            let m = mean(&all);
            let sd = sample_variance(&all).sqrt();
            all.sort_by(f64::total_cmp);
            ParameterSummary {
                name: ensemble.parameter_names[k].clone(),
                mean: m,
                sd,
                q05: crate::stats::quantile_sorted(&all, 0.05),
                q50: crate::stats::quantile_sorted(&all, 0.5),
                q95: crate::stats::quantile_sorted(&all, 0.95),
                rhat: rhat[k],
                ess: ensemble
                    .parameter_draws(k)
                    .iter()
                    .map(|c| effective_sample_size(c))
                    .sum(),
            }
        })
        .collect())
}

pub fn write_summary_csv(writer: impl std::io::Write, summary: &[ParameterSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "parameter",
        "mean",
        "sd",
        "q05",
        "q50",
        "q95",
        "rhat",
        "ess",
    ])?;
    for s in summary {
        w.write_record([
            s.name.clone(),
            s.mean.to_string(),
            s.sd.to_string(),
            s.q05.to_string(),
            s.q50.to_string(),
            s.q95.to_string(),
            s.rhat.to_string(),
            s.ess.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn normal_chains(means: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        means
            .iter()
            .map(|&m| {
                let d = Normal::new(m, 1.0).unwrap();
                (0..n).map(|_| d.sample(&mut rng)).collect()
            })
            .collect()
    }

    #[test]
    fn iid_chains_are_near_one() {
        for seed in 0..5 {
            let chains = normal_chains(&[0.0; 4], 10_000, seed);
            let r = potential_scale_reduction(&chains).unwrap();
            assert!((1.0 - 1e-3..=1.05).contains(&r), "R = {r}");
        }
    }

    #[test]
    fn separated_chains_are_flagged() {
        let chains = normal_chains(&[-10.0, 10.0], 1000, 1);
        assert!(potential_scale_reduction(&chains).unwrap() > 1.1);
    }

    #[test]
    fn constant_chains_give_one() {
        let chains = vec![vec![2.0; 50]; 3];
        assert_eq!(potential_scale_reduction(&chains).unwrap(), 1.0);
    }

    #[test]
    fn unequal_lengths_rejected() {
        assert!(potential_scale_reduction(&[vec![1.0, 2.0], vec![1.0, 2.0, 3.0]]).is_err());
        assert!(potential_scale_reduction(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn ess_of_iid_and_ar1() {
        let iid = &normal_chains(&[0.0], 20_000, 3)[0];
        let ess = effective_sample_size(iid);
        assert!(ess > 15_000.0 && ess < 25_000.0, "{ess}");

        // AR(1) with phi = 0.9 has integrated autocorrelation time 19.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = 0.0;
        let ar: Vec<f64> = (0..50_000)
            .map(|_| {
                x = 0.9 * x + noise.sample(&mut rng);
                x
            })
            .collect();
        let ess = effective_sample_size(&ar);
        let expected = 50_000.0 / 19.0;
        assert!((ess / expected - 1.0).abs() < 0.25, "{ess} vs {expected}");
    }
}
