//! Log-posterior of the 32 calibrated parameters: priors, the VAR(1)
//! log-scale residual likelihood, the fossil resource constraint and the
//! optional expert-assessment terms.

use crate::calibration::transform::ParameterSpace;
use crate::calibration::LogDensity;
use crate::error::{Error, Result};
use crate::model::{simulate, Trajectory, MODEL_START_YEAR};
use crate::observations::ObservationSet;
use crate::params::{split_params, ModelParams, StatParams, N_PARAMS};
use crate::prior::Prior;
use crate::scenario::{ExpertConfig, ScenarioConfig};
use crate::var::{var_log_likelihood, ResidualRecord};

/// Growth assessment: average annual per-capita GWP growth between these years.
pub const GROWTH_ASSESSMENT_YEARS: (i32, i32) = (2010, 2100);
/// Emissions assessment year.
pub const EMISSIONS_ASSESSMENT_YEAR: i32 = 2100;

/// Log-scale residuals `ln(obs) - ln(model)` for every observed value.
pub fn log_residuals(traj: &Trajectory, obs: &ObservationSet) -> Result<Vec<ResidualRecord>> {
    obs.records()
        .iter()
        .map(|rec| {
            let i = traj.index_of(rec.year).ok_or_else(|| {
                Error::data(format!(
                    "observation year {} outside simulated span {}..={}",
                    rec.year,
                    traj.start_year,
                    traj.end_year()
                ))
            })?;
            let model = [traj.population[i], traj.gwp[i], traj.emissions[i]];
            let mut values = [None; 3];
            for k in 0..3 {
                if let Some(z) = rec.values()[k] {
                    let r = z.ln() - model[k].ln();
                    if !r.is_finite() {
                        return Err(Error::Domain {
                            year: rec.year,
                            message: "non-positive model output at an observed year".into(),
                        });
                    }
                    values[k] = Some(r);
                }
            }
            Ok(ResidualRecord {
                year: rec.year,
                values,
            })
        })
        .collect()
}

/// Log-likelihood of `obs` given an already simulated trajectory.
pub fn log_likelihood_for_trajectory(
    traj: &Trajectory,
    stat: &StatParams,
    obs: &ObservationSet,
) -> f64 {
    match log_residuals(traj, obs) {
        Ok(res) => var_log_likelihood(&stat.a, &stat.innovation_var, &stat.obs_error_var, &res)
            .unwrap_or(f64::NEG_INFINITY),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Log-likelihood of the observations. Simulation failures, non-positive
/// model output at observed years and non-stationary `A` give `-inf`.
pub fn log_likelihood(model: &ModelParams, stat: &StatParams, obs: &ObservationSet) -> f64 {
    let Some(last) = obs.last_year() else {
        return 0.0;
    };
    match simulate(model, MODEL_START_YEAR, last.max(MODEL_START_YEAR)) {
        Ok(traj) => log_likelihood_for_trajectory(&traj, stat, obs),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// True iff cumulative emissions over the scenario's accounting window stay
/// within its limit.
pub fn fossil_constraint_ok(traj: &Trajectory, scenario: &ScenarioConfig) -> Result<bool> {
    let fl = &scenario.fossil_limit;
    let total = traj.cumulative_emissions(fl.window_start, fl.window_end)?;
    Ok(total <= fl.limit_gtc)
}

/// `(end / start)^(1 / years) - 1`.
pub fn average_growth_rate(start_value: f64, end_value: f64, years: u32) -> f64 {
    (end_value / start_value).powf(1.0 / years as f64) - 1.0
}

/// Average annual per-capita GWP growth over the growth-assessment window.
pub fn per_capita_growth_2010_2100(traj: &Trajectory) -> Result<f64> {
    let (a, b) = GROWTH_ASSESSMENT_YEARS;
    match (traj.gwp_per_capita(a), traj.gwp_per_capita(b)) {
        (Some(ya), Some(yb)) => Ok(average_growth_rate(ya, yb, (b - a) as u32)),
        _ => Err(Error::data(format!(
            "trajectory {}..={} does not span {a}..={b}",
            traj.start_year,
            traj.end_year()
        ))),
    }
}

/// Sum of the enabled expert-assessment log-densities.
pub fn expert_assessment_log_density(traj: &Trajectory, experts: &ExpertConfig) -> Result<f64> {
    let mut total = 0.0;
    if experts.growth.enabled {
        let d = experts
            .growth
            .density
            .ok_or_else(|| Error::config("growth assessment enabled without a density"))?;
        total += d.ln_pdf(per_capita_growth_2010_2100(traj)?);
    }
    if experts.emissions.enabled {
        let d = experts
            .emissions
            .density
            .ok_or_else(|| Error::config("emissions assessment enabled without a density"))?;
        let i = traj.index_of(EMISSIONS_ASSESSMENT_YEAR).ok_or_else(|| {
            Error::data(format!(
                "trajectory does not reach {EMISSIONS_ASSESSMENT_YEAR}"
            ))
        })?;
        total += d.ln_pdf(traj.emissions[i]);
    }
    Ok(total)
}

/// Structural ordering constraints checked before simulating.
pub fn structural_constraints_ok(m: &ModelParams) -> bool {
    m.rho2 >= m.rho3 && m.rho3 >= 0.0 && m.delta < m.s && m.tau2 <= m.tau3 && m.tau3 <= m.tau4
}

/// Additive components of the log-posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorTerms {
    pub log_prior: f64,
    pub log_likelihood: f64,
    pub log_expert: f64,
}

impl PosteriorTerms {
    pub fn total(&self) -> f64 {
        let t = self.log_prior + self.log_likelihood + self.log_expert;
        if t.is_nan() {
            f64::NEG_INFINITY
        } else {
            t
        }
    }

    fn rejected(log_prior: f64) -> Self {
        PosteriorTerms {
            log_prior,
            log_likelihood: f64::NEG_INFINITY,
            log_expert: 0.0,
        }
    }
}

/// Posterior of one scenario given a set of observations.
#[derive(Debug, Clone)]
pub struct Posterior {
    scenario: ScenarioConfig,
    obs: ObservationSet,
    priors: Vec<Prior>,
    space: ParameterSpace,
}

impl Posterior {
    /// Restricts `obs` to the scenario's calibration window.
    pub fn new(scenario: &ScenarioConfig, obs: &ObservationSet) -> Result<Self> {
        scenario.validate()?;
        let obs = obs.window(scenario.window.start, scenario.window.end);
        if let Some(last) = obs.last_year() {
            if last > scenario.horizons.simulation_end {
                return Err(Error::config(
                    "observations extend past the simulation horizon",
                ));
            }
        }
        let priors = scenario.build_priors()?;
        let space = ParameterSpace::new(priors.iter().map(Prior::transform).collect());
        Ok(Posterior {
            scenario: scenario.clone(),
            obs,
            priors,
            space,
        })
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.obs
    }

    pub fn priors(&self) -> &[Prior] {
        &self.priors
    }

    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        self.priors
            .iter()
            .zip(theta)
            .map(|(p, &x)| p.ln_pdf(x))
            .sum()
    }

    pub fn simulate(&self, model: &ModelParams) -> Result<Trajectory> {
        let h = &self.scenario.horizons;
        simulate(model, h.model_start, h.simulation_end)
    }

    /// Evaluates every additive term; any violated constraint makes the
    /// likelihood term `-inf`.
    pub fn terms(&self, theta: &[f64]) -> PosteriorTerms {
        assert_eq!(theta.len(), N_PARAMS);
        let log_prior = self.log_prior(theta);
        if !log_prior.is_finite() {
            return PosteriorTerms::rejected(f64::NEG_INFINITY);
        }
        let (model, stat) = split_params(theta);
        if !structural_constraints_ok(&model) {
            return PosteriorTerms::rejected(log_prior);
        }
        let traj = match self.simulate(&model) {
            Ok(t) => t,
            Err(_) => return PosteriorTerms::rejected(log_prior),
        };
        match fossil_constraint_ok(&traj, &self.scenario) {
            Ok(true) => {}
            _ => return PosteriorTerms::rejected(log_prior),
        }
        let ll = log_likelihood_for_trajectory(&traj, &stat, &self.obs);
        if !ll.is_finite() {
            return PosteriorTerms::rejected(log_prior);
        }
        let log_expert = expert_assessment_log_density(&traj, &self.scenario.experts)
            .unwrap_or(f64::NEG_INFINITY);
        PosteriorTerms {
            log_prior,
            log_likelihood: ll,
            log_expert,
        }
    }

    pub fn log_posterior(&self, theta: &[f64]) -> f64 {
        self.terms(theta).total()
    }

    /// Prior medians, a valid-support starting point.
    pub fn prior_median_point(&self) -> Vec<f64> {
        self.priors.iter().map(Prior::median).collect()
    }

    pub fn prior_mode_point(&self) -> Vec<f64> {
        self.priors.iter().map(Prior::mode).collect()
    }
}

impl LogDensity for Posterior {
    fn dim(&self) -> usize {
        N_PARAMS
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        self.log_posterior(theta)
    }

    fn space(&self) -> ParameterSpace {
        self.space.clone()
    }

    fn unconstrained_scales(&self) -> Vec<f64> {
        self.priors.iter().map(Prior::unconstrained_scale).collect()
    }
}

/// Log-posterior of explicit parameter structs under a scenario.
pub fn log_posterior(
    model: &ModelParams,
    stat: &StatParams,
    obs: &ObservationSet,
    scenario: &ScenarioConfig,
) -> f64 {
    match Posterior::new(scenario, obs) {
        Ok(post) => post.log_posterior(&crate::params::join_params(model, stat)),
        Err(_) => f64::NEG_INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::UnivariateDensity;
    use approx::assert_relative_eq;

    fn flat_trajectory(start: i32, end: i32, emissions: f64) -> Trajectory {
        let n = (end - start + 1) as usize;
        Trajectory {
            start_year: start,
            population: vec![2.0; n],
            gwp: vec![10.0; n],
            emissions: vec![emissions; n],
            tfp: vec![1.0; n],
            capital: vec![1.0; n],
            labor: vec![1.0; n],
        }
    }

    #[test]
    fn fossil_constraint_arithmetic() {
        let std = ScenarioConfig::standard();
        assert!(fossil_constraint_ok(&flat_trajectory(1700, 2500, 0.0), &std).unwrap());
        // 801 years at 10 GtC = 8010 GtC > 6000.
        assert!(!fossil_constraint_ok(&flat_trajectory(1700, 2500, 10.0), &std).unwrap());
        assert!(fossil_constraint_ok(&flat_trajectory(1700, 2400, 1.0), &std).is_err());
    }

    #[test]
    fn low_fossil_window_ignores_earlier_emissions() {
        let low = ScenarioConfig::preset("low_fossil").unwrap();
        let mut t = flat_trajectory(1700, 2500, 0.0);
        for (i, y) in t.years().collect::<Vec<_>>().into_iter().enumerate() {
            t.emissions[i] = if y < 2015 { 100.0 } else { 6.0 };
        }
        // 486 years * 6 = 2916 GtC inside the window.
        assert!(fossil_constraint_ok(&t, &low).unwrap());
        let i = t.index_of(2015).unwrap();
        t.emissions[i] = 100.0;
        assert!(!fossil_constraint_ok(&t, &low).unwrap());
    }

    #[test]
    fn experts_off_contribute_zero() {
        let t = flat_trajectory(1700, 2500, 5.0);
        assert_eq!(
            expert_assessment_log_density(&t, &ExpertConfig::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn emissions_expert_at_mean() {
        let mut e = ExpertConfig::default();
        e.emissions.enabled = true;
        e.emissions.density = Some(UnivariateDensity::Normal {
            mean: 12.0,
            sd: 3.0,
        });
        let t = flat_trajectory(1700, 2500, 12.0);
        let v = expert_assessment_log_density(&t, &e).unwrap();
        assert_relative_eq!(
            v,
            -(3.0 * (2.0 * std::f64::consts::PI).sqrt()).ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn enabled_expert_without_density_errors() {
        let mut e = ExpertConfig::default();
        e.growth.enabled = true;
        e.growth.density = None;
        assert!(expert_assessment_log_density(&flat_trajectory(1700, 2500, 1.0), &e).is_err());
    }

    #[test]
    fn growth_rate_two_ways() {
        let mut t = flat_trajectory(1700, 2500, 1.0);
        for (i, y) in t.years().collect::<Vec<_>>().into_iter().enumerate() {
            let k = (y - 1700) as f64;
            t.gwp[i] = 10.0 * (1.0 + 0.013 + 0.002 * (k * 0.1).sin()).powf(k);
            t.population[i] = 1.0 + 0.001 * k;
        }
        let geometric = per_capita_growth_2010_2100(&t).unwrap();
        let (a, b) = GROWTH_ASSESSMENT_YEARS;
        let mean_log: f64 = (a + 1..=b)
            .map(|y| (t.gwp_per_capita(y).unwrap() / t.gwp_per_capita(y - 1).unwrap()).ln())
            .sum::<f64>()
            / (b - a) as f64;
        assert_relative_eq!(geometric, mean_log.exp() - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn doubling_growth_rate() {
        assert_relative_eq!(
            average_growth_rate(1.0, 2.0, 83),
            2f64.powf(1.0 / 83.0) - 1.0
        );
        assert_eq!(average_growth_rate(3.0, 3.0, 83), 0.0);
    }
}
