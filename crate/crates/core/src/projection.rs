//! Posterior-predictive projection and the summaries built on it: per-year
//! credible bands, the 2100 marginal, cumulative-emissions CDFs, SSP
//! comparisons and average growth/intensity rates.

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::mh::chain_rng;
use crate::calibration::PosteriorEnsemble;
use crate::error::{Error, Result};
use crate::model::simulate;
use crate::params::{split_params, N_PARAMS};
use crate::posterior::{average_growth_rate, fossil_constraint_ok};
use crate::scenario::ScenarioConfig;
use crate::stats::quantile_sorted;
use crate::var::simulate_var_path;

/// Window of the cumulative-emissions and rate summaries.
pub const CUMULATIVE_WINDOW: (i32, i32) = (2018, 2100);
pub const MARGINAL_YEAR: i32 = 2100;
pub const DEFAULT_QUANTILES: [f64; 3] = [0.05, 0.5, 0.95];

/// Residual noise added to each projected trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Parametric uncertainty only.
    Off,
    /// Adds a VAR(1) discrepancy path.
    Process,
    /// Adds the discrepancy path and independent observation error, which
    /// predicts measurements rather than the underlying process.
    ProcessAndObservation,
}

impl std::fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseMode::Off => "off",
            NoiseMode::Process => "process",
            NoiseMode::ProcessAndObservation => "process-and-observation",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionOptions {
    pub n_draws: usize,
    pub seed: u64,
    pub noise: NoiseMode,
    pub quantiles: Vec<f64>,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions {
            n_draws: 10_000,
            seed: 1,
            noise: NoiseMode::Process,
            quantiles: DEFAULT_QUANTILES.to_vec(),
        }
    }
}

/// Per-year quantiles of one output; `values[year][level]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSummary {
    pub scenario: String,
    pub noise: NoiseMode,
    pub seed: u64,
    pub years: Vec<i32>,
    pub quantile_levels: Vec<f64>,
    pub emissions: Band,
    pub population: Band,
    pub gwp: Band,
    /// One entry per retained draw, in draw order.
    pub emissions_2100: Vec<f64>,
    pub cumulative_2018_2100: Vec<f64>,
    pub per_capita_gwp_2018: Vec<f64>,
    pub per_capita_gwp_2100: Vec<f64>,
    pub intensity_2018: Vec<f64>,
    pub intensity_2100: Vec<f64>,
    /// Ensemble indices of the retained draws.
    pub draw_indices: Vec<usize>,
    pub n_requested: usize,
    pub n_simulation_failures: usize,
    pub n_constraint_violations: usize,
}

impl ProjectionSummary {
    pub fn n_draws(&self) -> usize {
        self.emissions_2100.len()
    }

    /// Central interval of 2100 emissions at the given mass.
    pub fn interval_2100(&self, mass: f64) -> (f64, f64) {
        central_interval(&self.emissions_2100, mass)
    }

    /// Writes `year,<series>_q<level>...` rows.
    pub fn write_quantile_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["year".to_string()];
        for series in ["emissions", "population", "gwp"] {
            for q in &self.quantile_levels {
                header.push(format!("{series}_q{}", level_label(*q)));
            }
        }
        w.write_record(&header)?;
        for (i, year) in self.years.iter().enumerate() {
            let mut row = vec![year.to_string()];
            for band in [&self.emissions, &self.population, &self.gwp] {
                row.extend(band.values[i].iter().map(|v| v.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes one row per retained draw with its scalar outputs.
    pub fn write_marginal_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "draw",
            "ensemble_index",
            "emissions_2100",
            "cumulative_2018_2100",
            "per_capita_gwp_2018",
            "per_capita_gwp_2100",
            "intensity_2018",
            "intensity_2100",
        ])?;
        for i in 0..self.n_draws() {
            w.write_record([
                i.to_string(),
                self.draw_indices[i].to_string(),
                self.emissions_2100[i].to_string(),
                self.cumulative_2018_2100[i].to_string(),
                self.per_capita_gwp_2018[i].to_string(),
                self.per_capita_gwp_2100[i].to_string(),
                self.intensity_2018[i].to_string(),
                self.intensity_2100[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// "0.05" -> "05", "0.5" -> "50", "0.975" -> "975".
fn level_label(q: f64) -> String {
    let s = format!("{q}");
    let digits = s.trim_start_matches("0.").to_string();
    if digits.len() == 1 {
        format!("{digits}0")
    } else {
        digits
    }
}

fn central_interval(values: &[f64], mass: f64) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let tail = (1.0 - mass) / 2.0;
    (quantile_sorted(&v, tail), quantile_sorted(&v, 1.0 - tail))
}

struct DrawOutcome {
    emissions: Vec<f64>,
    population: Vec<f64>,
    gwp: Vec<f64>,
    cumulative: f64,
}

enum DrawResult {
    Kept(DrawOutcome),
    Failed,
    Violates,
}

/// Simulates one parameter draw and adds the requested noise over
/// `years[0]..=years[last]`.
fn project_draw(
    theta: &[f64],
    scenario: &ScenarioConfig,
    first_year: i32,
    n_years: usize,
    noise: NoiseMode,
    rng: &mut impl Rng,
) -> Result<DrawResult> {
    let (model, stat) = split_params(theta);
    let h = &scenario.horizons;
    let traj = match simulate(&model, h.model_start, h.simulation_end) {
        Ok(t) => t,
        Err(_) => return Ok(DrawResult::Failed),
    };
    if !fossil_constraint_ok(&traj, scenario)? {
        return Ok(DrawResult::Violates);
    }
    let offset = traj.index_of(first_year).ok_or_else(|| {
        Error::config(format!("projection start {first_year} outside simulation"))
    })?;
    if offset + n_years > traj.len() {
        return Err(Error::config(
            "projection horizon extends past the simulation end",
        ));
    }
    let range = offset..offset + n_years;
    let mut population = traj.population[range.clone()].to_vec();
    let mut gwp = traj.gwp[range.clone()].to_vec();
    let mut emissions = traj.emissions[range].to_vec();

    if noise != NoiseMode::Off {
        let path = simulate_var_path(&stat.a, &stat.innovation_var, n_years, rng)?;
        let obs_sd = stat.obs_error_var.map(f64::sqrt);
        for (t, x) in path.iter().enumerate() {
            let mut r = [x[0], x[1], x[2]];
            if noise == NoiseMode::ProcessAndObservation {
                for (k, rk) in r.iter_mut().enumerate() {
                    *rk += obs_sd[k] * rng.sample::<f64, _>(StandardNormal);
                }
            }
            population[t] *= r[0].exp();
            gwp[t] *= r[1].exp();
            emissions[t] = (emissions[t] * r[2].exp()).max(0.0);
        }
    }
    let (c0, c1) = CUMULATIVE_WINDOW;
    let cumulative = emissions[(c0 - first_year) as usize..=(c1 - first_year) as usize]
        .iter()
        .sum();
    Ok(DrawResult::Kept(DrawOutcome {
        emissions,
        population,
        gwp,
        cumulative,
    }))
}

fn select_draws(available: usize, n_draws: usize, seed: u64) -> Vec<usize> {
    let mut rng = chain_rng(seed, usize::MAX);
    if n_draws <= available {
        index::sample(&mut rng, available, n_draws).into_vec()
    } else {
        (0..n_draws)
            .map(|_| rng.random_range(0..available))
            .collect()
    }
}

/// Posterior-predictive projection of an ensemble under `scenario`.
///
/// Draws are taken without replacement when `n_draws` does not exceed the
/// ensemble size, otherwise with replacement. Each draw uses its own random
/// stream, so results do not depend on the number of worker threads. Draws
/// whose simulation fails or whose trajectory breaks the fossil limit are
/// excluded and counted.
pub fn posterior_predictive(
    ensemble: &PosteriorEnsemble,
    scenario: &ScenarioConfig,
    options: &ProjectionOptions,
) -> Result<ProjectionSummary> {
    let samples: Vec<&Vec<f64>> = ensemble.samples().collect();
    if samples.is_empty() {
        return Err(Error::data("posterior ensemble is empty"));
    }
    if ensemble.dim() != N_PARAMS {
        return Err(Error::data(format!(
            "ensemble has {} parameters, expected {N_PARAMS}",
            ensemble.dim()
        )));
    }
    if options.n_draws == 0 {
        return Err(Error::config("at least one projection draw is required"));
    }
    if options.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::config("quantile levels must lie in [0, 1]"));
    }
    let mut levels = options.quantiles.clone();
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    let h = &scenario.horizons;
    let first_year = h.report_start.min(CUMULATIVE_WINDOW.0);
    let last_year = h.report_end.max(MARGINAL_YEAR);
    if last_year > h.simulation_end || first_year < h.model_start {
        return Err(Error::config(
            "reporting window lies outside the simulation horizon",
        ));
    }
    let n_years = (last_year - first_year + 1) as usize;

    let picks = select_draws(samples.len(), options.n_draws, options.seed);
    let results: Vec<DrawResult> = picks
        .par_iter()
        .enumerate()
        .map(|(d, &k)| {
            let mut rng = chain_rng(options.seed, d);
            project_draw(
                samples[k],
                scenario,
                first_year,
                n_years,
                options.noise,
                &mut rng,
            )
        })
        .collect::<Result<_>>()?;

    let mut kept = Vec::with_capacity(results.len());
    let mut draw_indices = Vec::with_capacity(results.len());
    let (mut failures, mut violations) = (0, 0);
    for (r, &k) in results.into_iter().zip(&picks) {
        match r {
            DrawResult::Kept(o) => {
                kept.push(o);
                draw_indices.push(k);
            }
            DrawResult::Failed => failures += 1,
            DrawResult::Violates => violations += 1,
        }
    }
    if kept.is_empty() {
        return Err(Error::numeric(
            "no projection draw produced a valid trajectory",
        ));
    }

    let report: Vec<usize> =
        ((h.report_start - first_year) as usize..=(h.report_end - first_year) as usize).collect();
    let band = |pick: fn(&DrawOutcome) -> &Vec<f64>| -> Band {
        let values = report
            .iter()
            .map(|&t| {
                let mut col: Vec<f64> = kept.iter().map(|o| pick(o)[t]).collect();
                col.sort_by(f64::total_cmp);
                levels.iter().map(|&q| quantile_sorted(&col, q)).collect()
            })
            .collect();
        Band { values }
    };
    let at = |year: i32| (year - first_year) as usize;
    let per_capita = |year: i32| -> Vec<f64> {
        kept.iter()
            .map(|o| o.gwp[at(year)] / o.population[at(year)])
            .collect()
    };
    let intensity = |year: i32| -> Vec<f64> {
        kept.iter()
            .map(|o| o.emissions[at(year)] / o.gwp[at(year)])
            .collect()
    };
    let (c0, c1) = CUMULATIVE_WINDOW;

    Ok(ProjectionSummary {
        scenario: scenario.name.clone(),
        noise: options.noise,
        seed: options.seed,
        years: (h.report_start..=h.report_end).collect(),
        emissions: band(|o| &o.emissions),
        population: band(|o| &o.population),
        gwp: band(|o| &o.gwp),
        quantile_levels: levels,
        emissions_2100: kept
            .iter()
            .map(|o| o.emissions[at(MARGINAL_YEAR)])
            .collect(),
        cumulative_2018_2100: kept.iter().map(|o| o.cumulative).collect(),
        per_capita_gwp_2018: per_capita(c0),
        per_capita_gwp_2100: per_capita(c1),
        intensity_2018: intensity(c0),
        intensity_2100: intensity(c1),
        draw_indices,
        n_requested: options.n_draws,
        n_simulation_failures: failures,
        n_constraint_violations: violations,
    })
}

/// Right-continuous empirical distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::data("empirical CDF of an empty sample"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::data("empirical CDF sample contains NaN"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of the sample `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    /// Fraction of the sample `> x`.
    pub fn exceedance(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }

    /// Smallest sample value `v` with `cdf(v) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.len();
        let k = (p.clamp(0.0, 1.0) * n as f64).ceil() as usize;
        self.sorted[k.clamp(1, n) - 1]
    }

    /// `(value, probability)` at each distinct sample value.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.sorted.iter().enumerate() {
            let p = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = p,
                _ => out.push((v, p)),
            }
        }
        out
    }

    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["value", "probability"])?;
        for (v, p) in self.steps() {
            w.write_record([v.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical CDF of cumulative 2018-2100 emissions.
pub fn cumulative_cdf(summary: &ProjectionSummary) -> Result<EmpiricalCdf> {
    EmpiricalCdf::new(&summary.cumulative_2018_2100)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SspReference {
    pub key: String,
    pub annual_2100_gtc: Option<f64>,
    pub cumulative_2018_2100_gtc: Option<f64>,
    #[serde(default)]
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarbonBudget {
    pub key: String,
    pub limit_gtc: f64,
}

/// Reference scenario values, loaded from a versioned data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SspTable {
    pub version: u32,
    #[serde(rename = "scenario", default)]
    pub scenarios: Vec<SspReference>,
    #[serde(rename = "budget", default)]
    pub budgets: Vec<CarbonBudget>,
}

const BUILTIN_SSP_TABLE: &str = include_str!("../data/ssp_reference.toml");

impl SspTable {
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN_SSP_TABLE).expect("bundled SSP table parses")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("SSP table: {e}")))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Result<&SspReference> {
        self.scenarios
            .iter()
            .find(|s| s.key == key)
            .ok_or_else(|| Error::config(format!("unknown SSP scenario '{key}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SspReport {
    pub key: String,
    pub annual_2100_gtc: Option<f64>,
    /// Whether the annual value lies in the central 90% interval.
    pub inside_90: Option<bool>,
    /// Fraction of draws whose 2100 emissions exceed the annual value.
    pub annual_exceedance: Option<f64>,
    pub cumulative_2018_2100_gtc: Option<f64>,
    pub cumulative_exceedance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetReport {
    pub key: String,
    pub limit_gtc: f64,
    /// Fraction of draws with cumulative emissions within the budget.
    pub probability_within: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SspComparison {
    pub interval_90: (f64, f64),
    pub scenarios: Vec<SspReport>,
    pub budgets: Vec<BudgetReport>,
}

/// Compares a projection with reference scenarios. `keys` restricts the
/// comparison; `None` uses every table entry.
pub fn ssp_compare(
    summary: &ProjectionSummary,
    table: &SspTable,
    keys: Option<&[String]>,
) -> Result<SspComparison> {
    let annual = EmpiricalCdf::new(&summary.emissions_2100)?;
    let cumulative = EmpiricalCdf::new(&summary.cumulative_2018_2100)?;
    let interval = summary.interval_2100(0.9);
    let refs: Vec<&SspReference> = match keys {
        Some(keys) => keys.iter().map(|k| table.get(k)).collect::<Result<_>>()?,
        None => table.scenarios.iter().collect(),
    };
    let scenarios = refs
        .into_iter()
        .map(|r| SspReport {
            key: r.key.clone(),
            annual_2100_gtc: r.annual_2100_gtc,
            inside_90: r
                .annual_2100_gtc
                .map(|v| v >= interval.0 && v <= interval.1),
            annual_exceedance: r.annual_2100_gtc.map(|v| annual.exceedance(v)),
            cumulative_2018_2100_gtc: r.cumulative_2018_2100_gtc,
            cumulative_exceedance: r.cumulative_2018_2100_gtc.map(|v| cumulative.exceedance(v)),
        })
        .collect();
    let budgets = table
        .budgets
        .iter()
        .map(|b| BudgetReport {
            key: b.key.clone(),
            limit_gtc: b.limit_gtc,
            probability_within: cumulative.cdf(b.limit_gtc),
        })
        .collect();
    Ok(SspComparison {
        interval_90: interval,
        scenarios,
        budgets,
    })
}

/// Joint per-draw sample of average annual rates over 2018-2100.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSample {
    /// Per-capita GWP growth rate, per year.
    pub growth: Vec<f64>,
    /// Carbon-intensity decline rate, per year; positive when falling.
    pub intensity_decline: Vec<f64>,
    /// Cumulative emissions of the same draws.
    pub cumulative: Vec<f64>,
    /// Draws with a zero or negative endpoint, which have no geometric rate.
    pub excluded: usize,
}

impl RateSample {
    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "growth_rate",
            "intensity_decline_rate",
            "cumulative_2018_2100",
        ])?;
        for i in 0..self.growth.len() {
            w.write_record([
                self.growth[i].to_string(),
                self.intensity_decline[i].to_string(),
                self.cumulative[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Geometric-average annual rate of decline, `1 - (end/start)^(1/years)`.
pub fn average_decline_rate(start_value: f64, end_value: f64, years: u32) -> f64 {
    -average_growth_rate(start_value, end_value, years)
}

pub fn rate_summaries(summary: &ProjectionSummary) -> RateSample {
    let years = (CUMULATIVE_WINDOW.1 - CUMULATIVE_WINDOW.0) as u32;
    let mut out = RateSample {
        growth: Vec::new(),
        intensity_decline: Vec::new(),
        cumulative: Vec::new(),
        excluded: 0,
    };
    for i in 0..summary.n_draws() {
        let ends = [
            summary.per_capita_gwp_2018[i],
            summary.per_capita_gwp_2100[i],
            summary.intensity_2018[i],
            summary.intensity_2100[i],
        ];
        if ends.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            out.excluded += 1;
            continue;
        }
        out.growth
            .push(average_growth_rate(ends[0], ends[1], years));
        out.intensity_decline
            .push(average_decline_rate(ends[2], ends[3], years));
        out.cumulative.push(summary.cumulative_2018_2100[i]);
    }
    out
}
