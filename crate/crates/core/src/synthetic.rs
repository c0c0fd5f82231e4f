//! Synthetic observations generated from known parameters: the model
//! trajectory perturbed by a VAR(1) discrepancy and independent observation
//! error, both on the log scale.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::calibration::mh::chain_rng;
use crate::error::Result;
use crate::model::simulate;
use crate::observations::{ObservationRecord, ObservationSet};
use crate::params::{ModelParams, StatParams};
use crate::var::simulate_var_path;

/// Parameters behind the bundled synthetic dataset. Chosen inside the
/// standard priors, with 2014 levels near 7.2 billion people, 80 trillion
/// dollars and 10 GtC per year, and 4,300 GtC cumulative over 1700-2500.
pub fn true_model_params() -> ModelParams {
    ModelParams {
        psi1: 0.1,
        psi2: 24.5,
        psi3: 12.0,
        p0: 0.84,
        lambda: 0.7,
        s: 0.24,
        delta: 0.05,
        alpha: 0.0127,
        a_sat: 10.0,
        pi: 0.64,
        a0: 0.2,
        rho2: 0.25,
        rho3: 0.15,
        tau2: 1860.0,
        tau3: 1970.0,
        tau4: 2100.0,
        kappa: 0.015,
    }
}

pub fn true_stat_params() -> StatParams {
    StatParams {
        a: Matrix3::new(0.8, 0.0, 0.0, 0.05, 0.7, 0.0, 0.0, 0.1, 0.6),
        innovation_var: Vector3::new(1e-4, 1e-3, 2e-3),
        obs_error_var: Vector3::new(5e-5, 5e-4, 5e-4),
    }
}

/// Observation layout of a synthetic record.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDesign {
    pub start_year: i32,
    pub end_year: i32,
    /// Before this year GWP is only observed every `sparse_gwp_step` years.
    pub dense_gwp_from: i32,
    pub sparse_gwp_step: i32,
}

impl Default for SyntheticDesign {
    fn default() -> Self {
        SyntheticDesign {
            start_year: 1820,
            end_year: 2014,
            dense_gwp_from: 1870,
            sparse_gwp_step: 10,
        }
    }
}

/// Draws one synthetic observation record.
pub fn generate(
    model: &ModelParams,
    stat: &StatParams,
    design: &SyntheticDesign,
    seed: u64,
) -> Result<ObservationSet> {
    let traj = simulate(model, crate::model::MODEL_START_YEAR, design.end_year)?;
    let n = (design.end_year - design.start_year + 1) as usize;
    let mut rng = chain_rng(seed, 0);
    let path = simulate_var_path(&stat.a, &stat.innovation_var, n, &mut rng)?;
    let obs_sd = stat.obs_error_var.map(f64::sqrt);
    let mut records = Vec::with_capacity(n);
    for (t, x) in path.iter().enumerate() {
        let year = design.start_year + t as i32;
        let i = traj.index_of(year).expect("year inside simulated span");
        let mut noisy = [0.0; 3];
        for (k, level) in [traj.population[i], traj.gwp[i], traj.emissions[i]]
            .into_iter()
            .enumerate()
        {
            let e: f64 = rng.sample(StandardNormal);
            noisy[k] = level * (x[k] + obs_sd[k] * e).exp();
        }
        let gwp_observed = year >= design.dense_gwp_from
            || (year - design.start_year) % design.sparse_gwp_step == 0;
        records.push(ObservationRecord {
            year,
            population: Some(noisy[0]),
            gwp: gwp_observed.then_some(noisy[1]),
            emissions: Some(noisy[2]),
        });
    }
    let mut set = ObservationSet::new(records)?;
    set.provenance = vec![format!(
        "synthetic record generated from known parameters, seed {seed}"
    )];
    Ok(set)
}

/// Seed of the bundled `data/synthetic_observations.csv`.
pub const BUNDLED_SEED: u64 = 2014;

/// The default synthetic record from the true parameters.
pub fn default_observations(seed: u64) -> Result<ObservationSet> {
    generate(
        &true_model_params(),
        &true_stat_params(),
        &SyntheticDesign::default(),
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::Posterior;
    use crate::scenario::ScenarioConfig;
    use crate::var::spectral_radius;

    #[test]
    fn truth_is_valid_and_inside_the_standard_support() {
        let m = true_model_params();
        m.validate().unwrap();
        assert!(spectral_radius(&true_stat_params().a) < 1.0);
        let obs = default_observations(1).unwrap();
        let post = Posterior::new(&ScenarioConfig::standard(), &obs).unwrap();
        let theta = crate::params::join_params(&m, &true_stat_params());
        let terms = post.terms(&theta);
        assert!(terms.log_prior.is_finite());
        assert!(terms.total().is_finite(), "{terms:?}");
    }

    #[test]
    fn layout_and_determinism() {
        let a = default_observations(3).unwrap();
        let b = default_observations(3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 195);
        let gwp_1825 = a.records()[5].gwp;
        assert!(gwp_1825.is_none());
        assert!(a.records()[10].gwp.is_some());
        assert_ne!(a, default_observations(4).unwrap());
    }
}
