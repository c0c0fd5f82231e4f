//! Short end-to-end run on the synthetic record: MAP, a brief chain,
//! persistence, projection and the derived summaries.

use emproj::calibration::{map_estimate, run_mh, ChainConfig, MapBudget};
use emproj::io::{load_ensemble, persist_ensemble};
use emproj::observations::ObservationSet;
use emproj::posterior::Posterior;
use emproj::projection::{
    cumulative_cdf, posterior_predictive, rate_summaries, ssp_compare, NoiseMode,
    ProjectionOptions, SspTable,
};
use emproj::scenario::ScenarioConfig;
use emproj::synthetic::{default_observations, BUNDLED_SEED};

#[test]
fn bundled_csv_matches_the_generator() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/synthetic_observations.csv"
    );
    let from_file = ObservationSet::from_path(path).unwrap();
    let generated = default_observations(BUNDLED_SEED).unwrap();
    assert_eq!(from_file.records(), generated.records());
}

#[test]
fn calibrate_persist_and_project() {
    let scenario = ScenarioConfig::standard();
    let obs = default_observations(BUNDLED_SEED).unwrap();
    let post = Posterior::new(&scenario, &obs).unwrap();
    let budget = MapBudget {
        n_random_starts: 40,
        max_evaluations: 4000,
        ..Default::default()
    };
    let map = map_estimate(&post, &budget, &[]).unwrap();
    assert!(map.log_density.is_finite());

    let config = ChainConfig {
        n_chains: 2,
        n_iterations: 3000,
        burn_in: 1000,
        thin: 10,
        seed: 5,
        ..Default::default()
    };
    let ens = run_mh(&post, &map.theta, &config, None).unwrap();
    assert_eq!(ens.n_samples(), 400);
    assert!(ens
        .chains
        .iter()
        .flat_map(|c| &c.log_posterior)
        .all(|l| l.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    persist_ensemble(&ens, dir.path()).unwrap();
    let loaded = load_ensemble(dir.path()).unwrap();
    assert_eq!(loaded, ens);

    let opts = ProjectionOptions {
        n_draws: 300,
        seed: 9,
        noise: NoiseMode::Process,
        ..Default::default()
    };
    let summary = posterior_predictive(&loaded, &scenario, &opts).unwrap();
    assert_eq!(
        summary.n_draws() + summary.n_simulation_failures + summary.n_constraint_violations,
        300
    );
    let (lo, hi) = summary.interval_2100(0.9);
    assert!(lo <= hi && lo >= 0.0);

    let cdf = cumulative_cdf(&summary).unwrap();
    assert_eq!(cdf.len(), summary.n_draws());
    assert_eq!(cdf.cdf(f64::INFINITY), 1.0);

    let cmp = ssp_compare(&summary, &SspTable::builtin(), None).unwrap();
    assert_eq!(cmp.scenarios.len(), SspTable::builtin().scenarios.len());
    for b in &cmp.budgets {
        assert!((0.0..=1.0).contains(&b.probability_within));
    }
    let rates = rate_summaries(&summary);
    assert_eq!(rates.growth.len() + rates.excluded, summary.n_draws());
}
