//! Hold-out cross-validation: recalibrate on a training subset of years and
//! check how often held-out observations fall inside their predictive
//! intervals.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::mh::chain_rng;
use crate::calibration::{map_estimate, run_mh, ChainConfig, MapBudget};
use crate::error::{Error, Result};
use crate::model::simulate;
use crate::observations::{ObservationSet, Series};
use crate::params::split_params;
use crate::posterior::{log_residuals, Posterior};
use crate::scenario::ScenarioConfig;
use crate::stats::quantile_sorted;
use crate::var::predictive_residual_moments;

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub id: usize,
    pub train: ObservationSet,
    pub holdout: ObservationSet,
}

/// Random hold-out splits. Each fold holds out `holdout_years` distinct
/// observed years drawn uniformly; folds are drawn independently.
pub fn make_folds(
    obs: &ObservationSet,
    n_folds: usize,
    holdout_years: usize,
    seed: u64,
) -> Result<Vec<Fold>> {
    let years = obs.years();
    if holdout_years > 0 && holdout_years >= years.len() {
        return Err(Error::config(format!(
            "cannot hold out {holdout_years} of {} observed years",
            years.len()
        )));
    }
    (0..n_folds)
        .map(|id| {
            let mut rng = chain_rng(seed, id);
            let mut held: Vec<i32> = index::sample(&mut rng, years.len(), holdout_years)
                .into_iter()
                .map(|k| years[k])
                .collect();
            held.sort_unstable();
            let is_held = |y: i32| held.binary_search(&y).is_ok();
            Ok(Fold {
                id,
                train: obs.filter(|r| !is_held(r.year)),
                holdout: obs.filter(|r| is_held(r.year)),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageConfig {
    /// Chains run per fold, usually much shorter than a full calibration.
    pub chain: ChainConfig,
    pub map: MapBudget,
    /// Posterior draws used for each fold's predictive distribution.
    pub n_predictive: usize,
    pub seed: u64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            chain: ChainConfig {
                n_chains: 4,
                n_iterations: 50_000,
                burn_in: 20_000,
                thin: 30,
                seed: 1,
                adaptation: Default::default(),
            },
            map: MapBudget::default(),
            n_predictive: 1000,
            seed: 1,
        }
    }
}

/// Predictive sample for one held-out observation.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOutPrediction {
    pub fold: usize,
    pub series: Series,
    pub year: i32,
    pub observed: f64,
    /// Sorted predictive draws of the observation.
    pub samples: Vec<f64>,
}

impl HeldOutPrediction {
    /// Central interval holding `level` of the predictive mass.
    pub fn interval(&self, level: f64) -> (f64, f64) {
        let tail = (1.0 - level) / 2.0;
        (
            quantile_sorted(&self.samples, tail),
            quantile_sorted(&self.samples, 1.0 - tail),
        )
    }

    pub fn covered(&self, level: f64) -> bool {
        let (lo, hi) = self.interval(level);
        self.observed >= lo && self.observed <= hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub predictions: Vec<HeldOutPrediction>,
    /// Folds whose calibration failed, with the reason.
    pub failed_folds: Vec<(usize, String)>,
    pub n_folds: usize,
    pub config: CoverageConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub level: f64,
    /// Population, GWP, emissions; `None` when nothing was held out.
    pub per_series: [Option<f64>; 3],
    pub overall: Option<f64>,
    pub n_predictions: usize,
    pub n_folds: usize,
    pub n_failed_folds: usize,
}

impl CrossValidation {
    pub fn coverage(&self, level: f64) -> CoverageReport {
        let mut hits = [0usize; 3];
        let mut counts = [0usize; 3];
        for p in &self.predictions {
            let k = p.series.index();
            counts[k] += 1;
            hits[k] += p.covered(level) as usize;
        }
        let frac = |h: usize, c: usize| (c > 0).then(|| h as f64 / c as f64);
        CoverageReport {
            level,
            per_series: [0, 1, 2].map(|k| frac(hits[k], counts[k])),
            overall: frac(hits.iter().sum(), counts.iter().sum()),
            n_predictions: self.predictions.len(),
            n_folds: self.n_folds,
            n_failed_folds: self.failed_folds.len(),
        }
    }

    /// Fold report: one row per held-out observation.
    pub fn write_csv(&self, writer: impl std::io::Write, level: f64) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let tail = (1.0 - level) / 2.0;
        let label = |q: f64| format!("q{:02}", (q * 100.0).round() as u32);
        w.write_record([
            "fold".to_string(),
            "series".to_string(),
            "year".to_string(),
            "observed".to_string(),
            label(tail),
            label(1.0 - tail),
            "covered".to_string(),
        ])?;
        for p in &self.predictions {
            let (lo, hi) = p.interval(level);
            w.write_record([
                p.fold.to_string(),
                p.series.name().to_string(),
                p.year.to_string(),
                p.observed.to_string(),
                lo.to_string(),
                hi.to_string(),
                p.covered(level).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Predictive draws of the held-out observations of one fold given its
/// training data: for each posterior draw, the model trajectory times the
/// exponentiated residual, whose distribution conditions the VAR(1) process
/// on the training residuals and includes observation error.
pub fn predict_holdout(
    scenario: &ScenarioConfig,
    train: &ObservationSet,
    holdout: &ObservationSet,
    draws: &[Vec<f64>],
    seed: u64,
    fold: usize,
) -> Result<Vec<HeldOutPrediction>> {
    let Some(last) = holdout.last_year() else {
        return Ok(Vec::new());
    };
    let query = holdout.years();
    let end = last.max(train.last_year().unwrap_or(last));
    let mut slots: Vec<HeldOutPrediction> = Vec::new();
    let mut slot_of = vec![[None::<usize>; 3]; query.len()];
    for (q, rec) in holdout.records().iter().enumerate() {
        for s in Series::ALL {
            if let Some(v) = rec.get(s) {
                slot_of[q][s.index()] = Some(slots.len());
                slots.push(HeldOutPrediction {
                    fold,
                    series: s,
                    year: rec.year,
                    observed: v,
                    samples: Vec::with_capacity(draws.len()),
                });
            }
        }
    }

    let mut rng = chain_rng(seed, fold);
    for theta in draws {
        let (model, stat) = split_params(theta);
        let Ok(traj) = simulate(&model, scenario.horizons.model_start, end) else {
            continue;
        };
        let residuals = log_residuals(&traj, train)?;
        let moments = predictive_residual_moments(
            &stat.a,
            &stat.innovation_var,
            &stat.obs_error_var,
            &residuals,
            &query,
        )?;
        for (q, &year) in query.iter().enumerate() {
            let i = traj.index_of(year).expect("year inside trajectory");
            let levels = [traj.population[i], traj.gwp[i], traj.emissions[i]];
            let (mean, var) = moments[q];
            for k in 0..3 {
                let z: f64 = rng.sample(StandardNormal);
                if let Some(slot) = slot_of[q][k] {
                    slots[slot]
                        .samples
                        .push(levels[k] * (mean[k] + var[k].sqrt() * z).exp());
                }
            }
        }
    }
    if slots.iter().any(|s| s.samples.is_empty()) {
        return Err(Error::numeric(format!(
            "fold {fold}: no posterior draw could be simulated"
        )));
    }
    for s in &mut slots {
        s.samples.sort_by(f64::total_cmp);
    }
    Ok(slots)
}

fn calibrate_fold(
    scenario: &ScenarioConfig,
    fold: &Fold,
    config: &CoverageConfig,
) -> Result<Vec<HeldOutPrediction>> {
    let post = Posterior::new(scenario, &fold.train)?;
    let map = map_estimate(&post, &config.map, &[])?;
    let mut chain = config.chain.clone();
    chain.seed = config.chain.seed.wrapping_add(fold.id as u64);
    let ens = run_mh(&post, &map.theta, &chain, None)?;
    let samples: Vec<Vec<f64>> = ens.samples().cloned().collect();
    let mut rng = chain_rng(config.seed, fold.id);
    let draws: Vec<Vec<f64>> = if config.n_predictive < samples.len() {
        let mut picks = index::sample(&mut rng, samples.len(), config.n_predictive).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|k| samples[k].clone()).collect()
    } else {
        samples
    };
    predict_holdout(
        scenario,
        post.observations(),
        &fold.holdout,
        &draws,
        config.seed ^ 0x5eed,
        fold.id,
    )
}

/// Calibrates every fold on its training data and predicts its held-out
/// observations. Failing folds are recorded and skipped.
pub fn cross_validate(
    scenario: &ScenarioConfig,
    folds: &[Fold],
    config: &CoverageConfig,
) -> Result<CrossValidation> {
    config.chain.validate()?;
    if config.n_predictive == 0 {
        return Err(Error::config("at least one predictive draw is required"));
    }
    let outcomes: Vec<Result<Vec<HeldOutPrediction>>> = folds
        .par_iter()
        .map(|f| calibrate_fold(scenario, f, config))
        .collect();
    let mut predictions = Vec::new();
    let mut failed_folds = Vec::new();
    for (f, o) in folds.iter().zip(outcomes) {
        match o {
            Ok(p) => predictions.extend(p),
            Err(e) => failed_folds.push((f.id, e.to_string())),
        }
    }
    Ok(CrossValidation {
        predictions,
        failed_folds,
        n_folds: folds.len(),
        config: config.clone(),
    })
}

/// Average coverage of the central `level` predictive intervals.
pub fn coverage(
    scenario: &ScenarioConfig,
    folds: &[Fold],
    config: &CoverageConfig,
    level: f64,
) -> Result<CoverageReport> {
    Ok(cross_validate(scenario, folds, config)?.coverage(level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::default_observations;

    #[test]
    fn empty_holdout_keeps_everything() {
        let obs = default_observations(1).unwrap();
        let folds = make_folds(&obs, 3, 0, 1).unwrap();
        for f in folds {
            assert_eq!(f.train, obs);
            assert!(f.holdout.is_empty());
        }
    }

    #[test]
    fn folds_partition_the_record() {
        let obs = default_observations(1).unwrap();
        let folds = make_folds(&obs, 5, 39, 7).unwrap();
        for f in &folds {
            assert_eq!(f.holdout.len(), 39);
            assert_eq!(f.train.len() + f.holdout.len(), obs.len());
            let mut all = f.train.years();
            all.extend(f.holdout.years());
            all.sort_unstable();
            assert_eq!(all, obs.years());
        }
        assert_eq!(folds, make_folds(&obs, 5, 39, 7).unwrap());
        assert_ne!(folds, make_folds(&obs, 5, 39, 8).unwrap());
        assert!(make_folds(&obs, 1, obs.len(), 1).is_err());
    }

    #[test]
    fn average_holdout_frequency() {
        let obs = default_observations(1).unwrap();
        let folds = make_folds(&obs, 50, 39, 3).unwrap();
        let mut counts = std::collections::HashMap::new();
        for f in &folds {
            for y in f.holdout.years() {
                *counts.entry(y).or_insert(0usize) += 1;
            }
        }
        let expected = 50.0 * 39.0 / 195.0;
        let total: usize = counts.values().sum();
        assert_eq!(total as f64 / 195.0, expected);
    }

    fn prediction(observed: f64, samples: Vec<f64>) -> HeldOutPrediction {
        HeldOutPrediction {
            fold: 0,
            series: Series::Population,
            year: 2000,
            observed,
            samples,
        }
    }

    #[test]
    fn coverage_properties() {
        let samples: Vec<f64> = (0..=100).map(f64::from).collect();
        let cv = CrossValidation {
            predictions: (0..=100)
                .map(|k| prediction(k as f64 + 0.5, samples.clone()))
                .collect(),
            failed_folds: vec![],
            n_folds: 1,
            config: CoverageConfig::default(),
        };
        let c90 = cv.coverage(0.9).overall.unwrap();
        let c95 = cv.coverage(0.95).overall.unwrap();
        assert!((0.0..=1.0).contains(&c90) && c95 >= c90);
        assert_eq!(cv.coverage(1.0).overall.unwrap(), 100.0 / 101.0);
        assert_eq!(cv.coverage(0.9).per_series[1], None);

        // A vacuous interval covers everything.
        let wide = prediction(3.0, vec![0.0, f64::MAX]);
        assert!(wide.covered(1.0));
    }

    #[test]
    fn truth_predictions_are_calibrated() {
        // With the true parameters as the only draw, predictive intervals
        // from the smoother should cover held-out synthetic data at close to
        // the nominal rate.
        let obs = default_observations(11).unwrap();
        let scen = ScenarioConfig::standard();
        let theta = crate::params::join_params(
            &crate::synthetic::true_model_params(),
            &crate::synthetic::true_stat_params(),
        );
        let draws = vec![theta; 400];
        let folds = make_folds(&obs, 10, 39, 5).unwrap();
        let mut preds = Vec::new();
        for f in &folds {
            preds.extend(predict_holdout(&scen, &f.train, &f.holdout, &draws, 1, f.id).unwrap());
        }
        let cv = CrossValidation {
            predictions: preds,
            failed_folds: vec![],
            n_folds: 10,
            config: CoverageConfig::default(),
        };
        let c = cv.coverage(0.9).overall.unwrap();
        assert!((0.82..=0.97).contains(&c), "coverage {c}");
    }
}
