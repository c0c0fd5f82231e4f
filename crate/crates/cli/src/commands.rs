use std::path::{Path, PathBuf};

use emproj::calibration::diagnostics::{summarize, write_summary_csv};
use emproj::calibration::{
    map_estimate, run_mh, ChainConfig, MapBudget, PosteriorEnsemble, Progress,
};
use emproj::io::{self, RunManifest};
use emproj::observations::ObservationSet;
use emproj::params::parameter_names;
use emproj::posterior::Posterior;
use emproj::projection::{
    cumulative_cdf, posterior_predictive, rate_summaries, ssp_compare, EmpiricalCdf,
    ProjectionOptions, ProjectionSummary, SspComparison, SspTable,
};
use emproj::scenario::{load_scenario, ScenarioConfig};
use emproj::sensitivity::{emissions_sensitivity, SensitivityPlan, PAPER_SCALE_N};
use emproj::stats::quantile;
use emproj::synthetic::{default_observations, BUNDLED_SEED};
use emproj::validation::{cross_validate, make_folds, CoverageConfig};
use emproj::{Error, Result};
use serde::Serialize;

use crate::args::*;

/// Scenario, observations and manifest shared by every subcommand.
pub struct Context {
    pub scenario: ScenarioConfig,
    pub observations: ObservationSet,
    pub manifest: RunManifest,
    pub seed: u64,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Context {
    pub fn new(cli: &Cli, command: &str) -> Result<Self> {
        let scenario = load_scenario(&cli.scenario)?;
        let mut manifest = RunManifest::new(command, &scenario, cli.seed);
        if Path::new(&cli.scenario).is_file() {
            manifest.add_input(&cli.scenario)?;
        }
        let observations = match &cli.data {
            Some(path) => {
                manifest.add_input(path)?;
                ObservationSet::from_path(path)?
            }
            None => {
                manifest.set(
                    "data",
                    format!("bundled synthetic record, seed {BUNDLED_SEED}"),
                )?;
                default_observations(BUNDLED_SEED)?
            }
        };
        Ok(Context {
            scenario,
            observations,
            manifest,
            seed: cli.seed,
            out: cli.out.clone(),
            quiet: cli.quiet,
        })
    }

    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn with_experts(&mut self, experts: Option<emproj::scenario::ExpertToggle>) -> Result<()> {
        if let Some(t) = experts {
            self.scenario.set_experts(t);
            self.manifest
                .set("experts", format!("{t:?}").to_lowercase())?;
            // The hash must describe the configuration actually used.
            self.manifest.scenario_hash = self.scenario.config_hash();
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let out = self.out.clone();
        self.manifest.finish(&out)?;
        Ok(())
    }
}

fn map_budget(args: &MapArgs, seed: u64) -> MapBudget {
    MapBudget {
        n_random_starts: args.random_starts,
        n_local: args.local_starts,
        max_evaluations: args.max_evaluations,
        seed,
    }
}

fn write_named_values(path: PathBuf, names: &[String], values: &[f64]) -> Result<()> {
    io::write_csv_file(path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["parameter", "value"])?;
        for (n, v) in names.iter().zip(values) {
            w.write_record([n.clone(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })
}

#[derive(Serialize)]
struct MapReport {
    log_posterior: f64,
    evaluations: usize,
    parameters: Vec<(String, f64)>,
}

fn run_map(ctx: &mut Context, args: &MapArgs) -> Result<Vec<f64>> {
    ctx.with_experts(args.experts)?;
    let post = Posterior::new(&ctx.scenario, &ctx.observations)?;
    let budget = map_budget(args, ctx.seed);
    ctx.manifest.set("map_budget", &budget)?;
    ctx.note("searching for the MAP estimate");
    let opt = map_estimate(&post, &budget, &[])?;
    ctx.note(format!(
        "MAP log-posterior {:.3} after {} evaluations",
        opt.log_density, opt.evaluations
    ));
    let names = parameter_names();
    write_named_values(ctx.path("map.csv"), &names, &opt.theta)?;
    io::write_json_file(
        ctx.path("map.json"),
        &MapReport {
            log_posterior: opt.log_density,
            evaluations: opt.evaluations,
            parameters: names.into_iter().zip(opt.theta.iter().copied()).collect(),
        },
    )?;
    Ok(opt.theta)
}

pub fn map(mut ctx: Context, args: &MapArgs) -> Result<()> {
    run_map(&mut ctx, args)?;
    ctx.finish()
}

fn write_chain_table(path: PathBuf, ens: &PosteriorEnsemble) -> Result<()> {
    let flags = ens.acceptance_flags();
    io::write_csv_file(path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "chain",
            "samples",
            "acceptance_rate",
            "burn_in_acceptance_rate",
            "within_band",
        ])?;
        for (k, c) in ens.chains.iter().enumerate() {
            w.write_record([
                k.to_string(),
                c.samples.len().to_string(),
                c.acceptance_rate.to_string(),
                c.burn_in_acceptance_rate.to_string(),
                flags[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn write_diagnostics(ctx: &Context, ens: &PosteriorEnsemble) -> Result<()> {
    let summary = summarize(ens)?;
    io::write_csv_file(ctx.path("summary.csv"), |buf| {
        write_summary_csv(buf, &summary)
    })?;
    write_chain_table(ctx.path("chains.csv"), ens)?;
    let worst = summary
        .iter()
        .filter(|s| s.rhat.is_finite())
        .max_by(|a, b| a.rhat.total_cmp(&b.rhat));
    if let Some(w) = worst {
        ctx.note(format!("largest R-hat {:.4} ({})", w.rhat, w.name));
    }
    for (k, ok) in ens.acceptance_flags().into_iter().enumerate() {
        if !ok {
            ctx.note(format!(
                "warning: chain {k} acceptance rate {:.3} is outside the target band",
                ens.chains[k].acceptance_rate
            ));
        }
    }
    Ok(())
}

pub fn calibrate(mut ctx: Context, args: &CalibrateArgs) -> Result<()> {
    let config = ChainConfig {
        n_chains: args.chains,
        n_iterations: args.iterations,
        burn_in: args.burn_in,
        thin: args.thin,
        seed: ctx.seed,
        ..Default::default()
    };
    config.validate()?;
    let start = run_map(&mut ctx, &args.map)?;
    ctx.manifest.chain_settings = Some(config.clone());
    let post = Posterior::new(&ctx.scenario, &ctx.observations)?;
    let quiet = ctx.quiet;
    let report = move |p: Progress| {
        if !quiet {
            eprintln!(
                "chain {}: iteration {} acceptance {:.3}",
                p.chain, p.iteration, p.acceptance_rate
            );
        }
    };
    let ens = run_mh(&post, &start, &config, Some(&report))?;
    io::persist_ensemble(&ens, ctx.path("ensemble"))?;
    write_diagnostics(&ctx, &ens)?;
    ctx.finish()
}

fn load_ensemble(ctx: &mut Context, dir: &Path) -> Result<PosteriorEnsemble> {
    let dir = if dir.join(io::ENSEMBLE_MANIFEST).is_file() {
        dir.to_path_buf()
    } else {
        dir.join("ensemble")
    };
    ctx.manifest.add_input(dir.join(io::ENSEMBLE_MANIFEST))?;
    let ens = io::load_ensemble(&dir)?;
    ctx.manifest.chain_settings = Some(ens.config.clone());
    if ens.scenario != ctx.scenario.name {
        ctx.note(format!(
            "warning: ensemble was calibrated under scenario '{}', projecting under '{}'",
            ens.scenario, ctx.scenario.name
        ));
    }
    Ok(ens)
}

pub fn diagnose(mut ctx: Context, args: &EnsembleArg) -> Result<()> {
    let ens = load_ensemble(&mut ctx, &args.ensemble)?;
    write_diagnostics(&ctx, &ens)?;
    ctx.finish()
}

fn project_from(ctx: &mut Context, args: &ProjectArgs) -> Result<ProjectionSummary> {
    let ens = load_ensemble(ctx, &args.ensemble.ensemble)?;
    let options = ProjectionOptions {
        n_draws: args.draws,
        seed: ctx.seed,
        noise: args.noise.into(),
        quantiles: args.quantiles.clone(),
    };
    ctx.manifest.set("draws", options.n_draws)?;
    ctx.manifest.set("noise", options.noise)?;
    ctx.manifest.set("quantiles", &options.quantiles)?;
    let summary = posterior_predictive(&ens, &ctx.scenario, &options)?;
    ctx.note(format!(
        "{} of {} draws retained ({} simulation failures, {} constraint violations)",
        summary.n_draws(),
        summary.n_requested,
        summary.n_simulation_failures,
        summary.n_constraint_violations
    ));
    Ok(summary)
}

#[derive(Serialize)]
struct ProjectionReport {
    n_requested: usize,
    n_retained: usize,
    n_simulation_failures: usize,
    n_constraint_violations: usize,
    emissions_2100_interval_90: (f64, f64),
    emissions_2100_median: f64,
    cumulative_2018_2100_median: f64,
    cumulative_2018_2100_likely: (f64, f64),
    per_capita_growth_median: f64,
    intensity_decline_median: f64,
    rates_excluded: usize,
}

pub fn project(mut ctx: Context, args: &ProjectArgs) -> Result<()> {
    let s = project_from(&mut ctx, args)?;
    let rates = rate_summaries(&s);
    io::write_csv_file(ctx.path("quantiles.csv"), |b| s.write_quantile_csv(b))?;
    io::write_csv_file(ctx.path("marginal_2100.csv"), |b| s.write_marginal_csv(b))?;
    io::write_csv_file(ctx.path("rates.csv"), |b| rates.write_csv(b))?;
    let report = ProjectionReport {
        n_requested: s.n_requested,
        n_retained: s.n_draws(),
        n_simulation_failures: s.n_simulation_failures,
        n_constraint_violations: s.n_constraint_violations,
        emissions_2100_interval_90: s.interval_2100(0.9),
        emissions_2100_median: quantile(&s.emissions_2100, 0.5),
        cumulative_2018_2100_median: quantile(&s.cumulative_2018_2100, 0.5),
        cumulative_2018_2100_likely: (
            quantile(&s.cumulative_2018_2100, 1.0 / 6.0),
            quantile(&s.cumulative_2018_2100, 5.0 / 6.0),
        ),
        per_capita_growth_median: quantile(&rates.growth, 0.5),
        intensity_decline_median: quantile(&rates.intensity_decline, 0.5),
        rates_excluded: rates.excluded,
    };
    let (lo, hi) = report.emissions_2100_interval_90;
    ctx.note(format!(
        "2100 emissions 90% interval [{lo:.2}, {hi:.2}] GtC/yr"
    ));
    io::write_json_file(ctx.path("projection.json"), &report)?;
    ctx.finish()
}

pub fn cdf(mut ctx: Context, args: &ProjectArgs) -> Result<()> {
    let s = project_from(&mut ctx, args)?;
    let cumulative = cumulative_cdf(&s)?;
    let annual = EmpiricalCdf::new(&s.emissions_2100)?;
    io::write_csv_file(ctx.path("cdf_cumulative_2018_2100.csv"), |b| {
        cumulative.write_csv(b)
    })?;
    io::write_csv_file(ctx.path("cdf_emissions_2100.csv"), |b| annual.write_csv(b))?;
    ctx.finish()
}

fn write_ssp_csv(path: PathBuf, cmp: &SspComparison) -> Result<()> {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    io::write_csv_file(path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "scenario",
            "annual_2100_gtc",
            "inside_90",
            "annual_exceedance",
            "cumulative_2018_2100_gtc",
            "cumulative_exceedance",
        ])?;
        for r in &cmp.scenarios {
            w.write_record([
                r.key.clone(),
                cell(r.annual_2100_gtc),
                r.inside_90.map(|b| b.to_string()).unwrap_or_default(),
                cell(r.annual_exceedance),
                cell(r.cumulative_2018_2100_gtc),
                cell(r.cumulative_exceedance),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn write_budget_csv(path: PathBuf, cmp: &SspComparison) -> Result<()> {
    io::write_csv_file(path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["budget", "limit_gtc", "probability_within"])?;
        for b in &cmp.budgets {
            w.write_record([
                b.key.clone(),
                b.limit_gtc.to_string(),
                b.probability_within.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn ssp_compare_cmd(mut ctx: Context, args: &SspArgs) -> Result<()> {
    let table = match &args.table {
        Some(p) => {
            ctx.manifest.add_input(p)?;
            SspTable::from_path(p)?
        }
        None => SspTable::builtin(),
    };
    let s = project_from(&mut ctx, &args.projection)?;
    let keys = (!args.keys.is_empty()).then_some(args.keys.as_slice());
    let cmp = ssp_compare(&s, &table, keys)?;
    for r in &cmp.scenarios {
        if let (Some(v), Some(inside)) = (r.annual_2100_gtc, r.inside_90) {
            let verdict = if inside { "inside" } else { "outside" };
            ctx.note(format!(
                "{}: {v} GtC/yr in 2100 lies {verdict} the 90% interval",
                r.key
            ));
        }
    }
    write_ssp_csv(ctx.path("ssp_report.csv"), &cmp)?;
    write_budget_csv(ctx.path("budgets.csv"), &cmp)?;
    io::write_json_file(ctx.path("ssp_report.json"), &cmp)?;
    ctx.finish()
}

#[derive(Serialize)]
struct SensitivityReport {
    design: String,
    n: usize,
    bootstrap: usize,
    evaluations: usize,
    n_replaced: usize,
    degenerate: bool,
    top_first_order: String,
    significant_first: Vec<String>,
    significant_total: Vec<String>,
    significant_pairs: Vec<(String, String)>,
}

pub fn sensitivity(mut ctx: Context, args: &SensitivityArgs) -> Result<()> {
    let n = if args.paper_scale {
        PAPER_SCALE_N
    } else {
        args.n
    };
    let plan = match args.design {
        DesignArg::Prior => {
            SensitivityPlan::from_priors(&ctx.scenario, n, args.bootstrap, ctx.seed)?
        }
        DesignArg::Posterior => {
            let dir = args
                .ensemble
                .as_ref()
                .ok_or_else(|| Error::Config("--design posterior requires --ensemble".into()))?;
            let ens = load_ensemble(&mut ctx, dir)?;
            SensitivityPlan::from_posterior(&ens, n, args.bootstrap, ctx.seed)?
        }
    };
    let design = format!("{:?}", args.design).to_lowercase();
    ctx.manifest.set("design", &design)?;
    ctx.manifest.set("n", n)?;
    ctx.manifest.set("bootstrap", args.bootstrap)?;
    ctx.manifest.set("threshold_first", args.threshold_first)?;
    ctx.manifest
        .set("threshold_second", args.threshold_second)?;
    ctx.note(format!(
        "evaluating {} model runs",
        n * (2 * plan.dim() + 2)
    ));
    let r = emissions_sensitivity(&ctx.scenario, &plan)?;
    io::write_csv_file(ctx.path("sobol_indices.csv"), |b| {
        r.write_csv(b, args.threshold_first)
    })?;
    io::write_csv_file(ctx.path("sobol_pairs.csv"), |b| {
        r.write_pairs_csv(b, args.threshold_second)
    })?;
    let pick = |flags: Vec<bool>| -> Vec<String> {
        flags
            .into_iter()
            .zip(&r.names)
            .filter_map(|(f, n)| f.then(|| n.clone()))
            .collect()
    };
    let report = SensitivityReport {
        design,
        n,
        bootstrap: r.bootstrap,
        evaluations: n * (2 * plan.dim() + 2),
        n_replaced: r.n_replaced,
        degenerate: r.degenerate,
        top_first_order: r.names[r.top_first_order()].clone(),
        significant_first: pick(r.significant_first(args.threshold_first)),
        significant_total: pick(r.significant_total(args.threshold_first)),
        significant_pairs: r
            .significant_pairs(args.threshold_second)
            .into_iter()
            .map(|p| (r.names[p.i].clone(), r.names[p.j].clone()))
            .collect(),
    };
    ctx.note(format!(
        "largest first-order index: {}",
        report.top_first_order
    ));
    io::write_json_file(ctx.path("sensitivity.json"), &report)?;
    ctx.finish()
}

#[derive(Serialize)]
struct ValidationReport {
    coverage: emproj::validation::CoverageReport,
    failed_folds: Vec<(usize, String)>,
}

pub fn validate(mut ctx: Context, args: &ValidateArgs) -> Result<()> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Error::Config(format!(
            "--level {} must lie in (0, 1)",
            args.level
        )));
    }
    ctx.with_experts(args.map.experts)?;
    let config = CoverageConfig {
        chain: ChainConfig {
            n_chains: args.fold_chains,
            n_iterations: args.fold_iterations,
            burn_in: args.fold_burn_in.unwrap_or(args.fold_iterations * 2 / 5),
            thin: args.fold_thin,
            seed: ctx.seed,
            ..Default::default()
        },
        map: map_budget(&args.map, ctx.seed),
        n_predictive: args.predictive_draws,
        seed: ctx.seed,
    };
    ctx.manifest.chain_settings = Some(config.chain.clone());
    ctx.manifest.set("coverage", &config)?;
    ctx.manifest.set("folds", args.folds)?;
    ctx.manifest.set("holdout_years", args.holdout_years)?;
    let folds = make_folds(&ctx.observations, args.folds, args.holdout_years, ctx.seed)?;
    ctx.note(format!("calibrating {} folds", folds.len()));
    let cv = cross_validate(&ctx.scenario, &folds, &config)?;
    let coverage = cv.coverage(args.level);
    if let Some(c) = coverage.overall {
        ctx.note(format!(
            "{:.0}% interval coverage {c:.3}",
            args.level * 100.0
        ));
    }
    io::write_csv_file(ctx.path("holdout_predictions.csv"), |b| {
        cv.write_csv(b, args.level)
    })?;
    io::write_json_file(
        ctx.path("coverage.json"),
        &ValidationReport {
            coverage,
            failed_folds: cv.failed_folds.clone(),
        },
    )?;
    if cv.predictions.is_empty() && !cv.failed_folds.is_empty() {
        return Err(Error::Numeric("every fold failed to calibrate".into()));
    }
    ctx.finish()
}
