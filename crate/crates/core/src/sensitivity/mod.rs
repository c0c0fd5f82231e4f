//! Variance-based sensitivity of cumulative emissions to the model
//! parameters.

pub mod indices;
pub mod saltelli;

use rayon::prelude::*;

use crate::calibration::PosteriorEnsemble;
use crate::error::{Error, Result};
use crate::model::simulate_until_failure;
use crate::params::{ModelParams, MODEL_PARAM_NAMES, N_MODEL_PARAMS};
use crate::prior::Prior;
use crate::projection::CUMULATIVE_WINDOW;
use crate::scenario::ScenarioConfig;
use crate::stats::quantile_sorted;

pub use indices::{sobol_indices, IndexEstimate, PairEstimate, SobolResult};
pub use saltelli::SaltelliDesign;

/// Desk-scale base sample size.
pub const DEFAULT_N: usize = 1 << 13;
/// Smallest power of two above the 1e5 paper-scale sample size.
pub const PAPER_SCALE_N: usize = 1 << 17;
pub const DEFAULT_BOOTSTRAP: usize = 10_000;
pub const DEFAULT_THRESHOLD_FIRST: f64 = 0.01;
pub const DEFAULT_THRESHOLD_SECOND: f64 = 0.10;

/// Marginal sampling distribution of one design parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingDistribution {
    Prior(Prior),
    /// Sorted sample; quantiles interpolate linearly.
    Empirical(Vec<f64>),
}

impl SamplingDistribution {
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            SamplingDistribution::Prior(p) => p.quantile(u),
            SamplingDistribution::Empirical(v) => quantile_sorted(v, u),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanParameter {
    pub name: String,
    pub distribution: SamplingDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityPlan {
    pub parameters: Vec<PlanParameter>,
    pub n: usize,
    pub bootstrap: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl SensitivityPlan {
    /// Plan over the scenario's model-parameter priors.
    pub fn from_priors(
        scenario: &ScenarioConfig,
        n: usize,
        bootstrap: usize,
        seed: u64,
    ) -> Result<Self> {
        let parameters = scenario
            .model_priors()?
            .into_iter()
            .map(|(name, p)| PlanParameter {
                name,
                distribution: SamplingDistribution::Prior(p),
            })
            .collect();
        let plan = SensitivityPlan {
            parameters,
            n,
            bootstrap,
            confidence: 0.95,
            seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Plan over independent empirical marginals of a posterior ensemble.
    pub fn from_posterior(
        ensemble: &PosteriorEnsemble,
        n: usize,
        bootstrap: usize,
        seed: u64,
    ) -> Result<Self> {
        if ensemble.n_samples() == 0 {
            return Err(Error::data("posterior ensemble is empty"));
        }
        let parameters = MODEL_PARAM_NAMES
            .iter()
            .map(|name| {
                let k = ensemble
                    .parameter_names
                    .iter()
                    .position(|p| p == name)
                    .ok_or_else(|| Error::data(format!("ensemble lacks parameter {name}")))?;
                let mut v: Vec<f64> = ensemble.samples().map(|s| s[k]).collect();
                v.sort_by(f64::total_cmp);
                Ok(PlanParameter {
                    name: name.to_string(),
                    distribution: SamplingDistribution::Empirical(v),
                })
            })
            .collect::<Result<_>>()?;
        let plan = SensitivityPlan {
            parameters,
            n,
            bootstrap,
            confidence: 0.95,
            seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn dim(&self) -> usize {
        self.parameters.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.parameters.iter().map(|p| p.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() < 2 {
            return Err(Error::config(
                "a sensitivity plan needs at least two parameters",
            ));
        }
        if self.n == 0 || !self.n.is_power_of_two() {
            return Err(Error::config(format!(
                "base sample size {} is not a power of two",
                self.n
            )));
        }
        if self.bootstrap < 100 {
            return Err(Error::config(format!(
                "{} bootstrap replicates requested, at least 100 are required",
                self.bootstrap
            )));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::config("confidence level must lie in (0, 1)"));
        }
        for p in &self.parameters {
            if let SamplingDistribution::Empirical(v) = &p.distribution {
                if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::config(format!(
                        "empirical marginal of {} is unusable",
                        p.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Design matrix in parameter space together with its unit-cube layout.
#[derive(Debug, Clone)]
pub struct ParameterDesign {
    pub unit: SaltelliDesign,
    parameters: Vec<PlanParameter>,
}

impl ParameterDesign {
    pub fn n_rows(&self) -> usize {
        self.unit.n_rows()
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.unit
            .row(r)
            .iter()
            .zip(&self.parameters)
            .map(|(&u, p)| p.distribution.quantile(u))
            .collect()
    }
}

/// Saltelli design of `M = 2n(d + 1)` parameter vectors, mapped through the
/// inverse CDF of each sampling distribution.
pub fn saltelli_sample(plan: &SensitivityPlan) -> Result<ParameterDesign> {
    plan.validate()?;
    let unit = SaltelliDesign::new(plan.dim(), plan.n, plan.seed)?;
    let design = ParameterDesign {
        unit,
        parameters: plan.parameters.clone(),
    };
    // Every marginal must map interior points to finite values.
    for p in &plan.parameters {
        for u in [1e-7, 0.5, 1.0 - 1e-7] {
            if !p.distribution.quantile(u).is_finite() {
                return Err(Error::config(format!(
                    "sampling distribution of {} has no finite quantile function",
                    p.name
                )));
            }
        }
    }
    Ok(design)
}

/// Cumulative emissions over `[from, to]` with the scenario's fossil limit
/// enforced: once the resource in the accounting window is used up, annual
/// emissions drop to zero. A simulation that breaks down in some year is
/// treated as exhausting the remaining resource in that year.
///
/// Returns the value and whether the breakdown rule was needed.
pub fn capped_cumulative_emissions(
    model: &ModelParams,
    scenario: &ScenarioConfig,
    from: i32,
    to: i32,
) -> (f64, bool) {
    let h = &scenario.horizons;
    let fl = &scenario.fossil_limit;
    let end = to.max(h.model_start);
    let (traj, failed_at) = match simulate_until_failure(model, h.model_start, end) {
        Ok(t) => (t, None),
        Err((t, _)) => {
            let year = t.start_year + t.len() as i32;
            (t, Some(year))
        }
    };
    let mut remaining = fl.limit_gtc;
    let mut total = 0.0;
    let mut broke = false;
    for year in h.model_start..=to {
        let metered = year >= fl.window_start && year <= fl.window_end;
        let emitted = match (traj.index_of(year), failed_at) {
            (Some(i), _) => {
                let e = traj.emissions[i];
                if metered {
                    let e = e.min(remaining.max(0.0));
                    remaining -= e;
                    e
                } else {
                    e
                }
            }
            (None, Some(f)) if year == f => {
                broke = true;
                if metered {
                    let e = remaining.max(0.0);
                    remaining = 0.0;
                    e
                } else {
                    0.0
                }
            }
            _ => 0.0,
        };
        if year >= from {
            total += emitted;
        }
    }
    (total, broke)
}

/// Sobol decomposition of capped cumulative 2018-2100 emissions over the
/// model parameters of `plan`.
pub fn emissions_sensitivity(
    scenario: &ScenarioConfig,
    plan: &SensitivityPlan,
) -> Result<SobolResult> {
    let names = plan.names();
    let columns: Vec<usize> = names
        .iter()
        .map(|n| {
            MODEL_PARAM_NAMES
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| Error::config(format!("{n} is not a model parameter")))
        })
        .collect::<Result<_>>()?;
    if columns.len() != N_MODEL_PARAMS {
        return Err(Error::config(format!(
            "emissions sensitivity needs all {N_MODEL_PARAMS} model parameters"
        )));
    }
    let design = saltelli_sample(plan)?;
    let (from, to) = CUMULATIVE_WINDOW;
    let outputs: Vec<(f64, bool)> = (0..design.n_rows())
        .into_par_iter()
        .map(|r| {
            let row = design.row(r);
            let mut values = [0.0; N_MODEL_PARAMS];
            for (k, &c) in columns.iter().enumerate() {
                values[c] = row[k];
            }
            capped_cumulative_emissions(&ModelParams::from_slice(&values), scenario, from, to)
        })
        .collect();
    let replaced = outputs.iter().filter(|o| o.1).count();
    let y: Vec<f64> = outputs.into_iter().map(|o| o.0).collect();
    let mut result = sobol_indices(
        &names,
        plan.n,
        &y,
        plan.bootstrap,
        plan.confidence,
        plan.seed,
    )?;
    result.n_replaced = replaced;
    Ok(result)
}
