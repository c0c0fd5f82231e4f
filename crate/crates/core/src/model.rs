//! Deterministic annual simulation of the coupled population, economy and
//! emissions model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Default first simulated year; `P0` and `A0` refer to this year.
pub const MODEL_START_YEAR: i32 = 1700;

/// Numerically stable logistic function.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Market shares of the four technologies in `year`: pre-industrial,
/// high-carbon fossil, lower-carbon fossil, zero-carbon.
///
/// Shares are telescoping differences of three logistic curves, so they sum
/// to one by construction. A negative difference (half-saturation years out
/// of order) is clamped to zero and the shares renormalized.
pub fn technology_shares(params: &ModelParams, year: f64) -> [f64; 4] {
    let l2 = logistic(params.kappa * (year - params.tau2));
    let l3 = logistic(params.kappa * (year - params.tau3));
    let l4 = logistic(params.kappa * (year - params.tau4));
    let mut g = [1.0 - l2, l2 - l3, l3 - l4, l4];
    if g.iter().any(|&x| x < 0.0) {
        for x in g.iter_mut() {
            *x = x.max(0.0);
        }
        let total: f64 = g.iter().sum();
        for x in g.iter_mut() {
            *x /= total;
        }
    }
    g
}

/// Carbon intensity (kgC per 2011US$) as the share-weighted average of the
/// technology intensities. Technologies 1 and 4 emit nothing.
pub fn carbon_intensity(params: &ModelParams, year: f64) -> f64 {
    let g = technology_shares(params, year);
    intensity_from_shares(&g, params.rho2, params.rho3)
}

pub(crate) fn intensity_from_shares(shares: &[f64; 4], rho2: f64, rho3: f64) -> f64 {
    shares[1] * rho2 + shares[2] * rho3
}

/// Annual model output over `[start_year, start_year + len)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start_year: i32,
    /// Billions.
    pub population: Vec<f64>,
    /// Trillions 2011US$ per year.
    pub gwp: Vec<f64>,
    /// GtC per year.
    pub emissions: Vec<f64>,
    pub tfp: Vec<f64>,
    pub capital: Vec<f64>,
    pub labor: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.population.len()
    }

    pub fn is_empty(&self) -> bool {
        self.population.is_empty()
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.len() as i32 - 1
    }

    pub fn index_of(&self, year: i32) -> Option<usize> {
        if year < self.start_year || year > self.end_year() {
            None
        } else {
            Some((year - self.start_year) as usize)
        }
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.len()).map(move |i| self.start_year + i as i32)
    }

    /// Per-capita gross output (thousand 2011US$ per person) in `year`.
    pub fn gwp_per_capita(&self, year: i32) -> Option<f64> {
        self.index_of(year)
            .map(|i| self.gwp[i] / self.population[i])
    }

    /// Sum of annual emissions over the inclusive window `[from_year, to_year]`.
    pub fn cumulative_emissions(&self, from_year: i32, to_year: i32) -> Result<f64> {
        if from_year > to_year {
            return Err(Error::data(format!(
                "empty accounting window {from_year}..={to_year}"
            )));
        }
        match (self.index_of(from_year), self.index_of(to_year)) {
            (Some(a), Some(b)) => Ok(self.emissions[a..=b].iter().sum()),
            _ => Err(Error::data(format!(
                "window {from_year}..={to_year} outside trajectory span {}..={}",
                self.start_year,
                self.end_year()
            ))),
        }
    }
}

/// Free function form of [`Trajectory::cumulative_emissions`].
pub fn cumulative_emissions(traj: &Trajectory, from_year: i32, to_year: i32) -> Result<f64> {
    traj.cumulative_emissions(from_year, to_year)
}

/// Initial capital stock from the steady-state relationship
/// `K0 = (s A0 / delta)^(1/lambda) L0`.
pub fn initial_capital(params: &ModelParams) -> f64 {
    let labor0 = params.pi * params.p0;
    (params.s * params.a0 / params.delta).powf(1.0 / params.lambda) * labor0
}

/// `A L^lambda K^(1-lambda)`, written with a single power.
fn cobb_douglas(tfp: f64, labor: f64, capital: f64, lambda: f64) -> f64 {
    if capital > 0.0 {
        tfp * capital * (labor / capital).powf(lambda)
    } else {
        0.0
    }
}

fn check_state(year: i32, name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::Domain {
            year,
            message: format!("{name} became {v}"),
        })
    }
}

/// Simulates the model at annual resolution from `start_year` to `end_year`
/// inclusive.
///
/// Within a step, TFP, capital and population are advanced from lagged
/// values only; labor, output and emissions then follow from current values.
pub fn simulate(params: &ModelParams, start_year: i32, end_year: i32) -> Result<Trajectory> {
    simulate_until_failure(params, start_year, end_year).map_err(|(_, e)| e)
}

/// Like [`simulate`], but on a domain error also returns the trajectory
/// computed up to (excluding) the failing year.
pub(crate) fn simulate_until_failure(
    params: &ModelParams,
    start_year: i32,
    end_year: i32,
) -> std::result::Result<Trajectory, (Trajectory, Error)> {
    let n = if end_year >= start_year {
        (end_year - start_year + 1) as usize
    } else {
        0
    };
    let mut traj = Trajectory {
        start_year,
        population: Vec::with_capacity(n),
        gwp: Vec::with_capacity(n),
        emissions: Vec::with_capacity(n),
        tfp: Vec::with_capacity(n),
        capital: Vec::with_capacity(n),
        labor: Vec::with_capacity(n),
    };
    if n == 0 {
        return Err((
            traj,
            Error::config(format!(
                "end year {end_year} precedes start year {start_year}"
            )),
        ));
    }

    let p = params;
    let step = |traj: &mut Trajectory, year: i32, pop: f64, tfp: f64, cap: f64| -> Result<()> {
        let pop = check_state(year, "population", pop)?;
        let tfp = check_state(year, "TFP", tfp)?;
        let cap = check_state(year, "capital", cap)?;
        let labor = p.pi * pop;
        let output = check_state(year, "output", cobb_douglas(tfp, labor, cap, p.lambda))?;
        let emissions = check_state(year, "emissions", output * carbon_intensity(p, year as f64))?;
        traj.population.push(pop);
        traj.tfp.push(tfp);
        traj.capital.push(cap);
        traj.labor.push(labor);
        traj.gwp.push(output);
        traj.emissions.push(emissions);
        Ok(())
    };

    if let Err(e) = step(&mut traj, start_year, p.p0, p.a0, initial_capital(p)) {
        return Err((traj, e));
    }
    for i in 1..n {
        let year = start_year + i as i32;
        let prev_pop = traj.population[i - 1];
        let prev_tfp = traj.tfp[i - 1];
        let prev_cap = traj.capital[i - 1];
        let prev_out = traj.gwp[i - 1];

        let tfp = prev_tfp + p.alpha * prev_tfp * (1.0 - prev_tfp / p.a_sat);
        let cap = (1.0 - p.delta) * prev_cap + p.s * prev_out;
        let income = prev_out / prev_pop;
        let growth = p.psi1 * (income / (p.psi2 + income)) * ((p.psi3 - prev_pop) / p.psi3);
        let pop = prev_pop * (1.0 + growth);

        if let Err(e) = step(&mut traj, year, pop, tfp, cap) {
            return Err((traj, e));
        }
    }
    Ok(traj)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn reference() -> ModelParams {
        ModelParams {
            psi1: 0.05,
            psi2: 5.0,
            psi3: 10.0,
            p0: 0.6,
            lambda: 0.7,
            s: 0.24,
            delta: 0.05,
            alpha: 0.01,
            a_sat: 10.0,
            pi: 0.64,
            a0: 1.0,
            rho2: 0.4,
            rho3: 0.2,
            tau2: 1880.0,
            tau3: 1960.0,
            tau4: 2100.0,
            kappa: 0.05,
        }
    }

    #[test]
    fn first_share_is_half_at_tau2() {
        for kappa in [0.005, 0.05, 0.2] {
            let p = ModelParams {
                kappa,
                ..reference()
            };
            let g = technology_shares(&p, p.tau2);
            assert_relative_eq!(g[0], 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn shares_in_far_past_are_preindustrial() {
        let p = ModelParams {
            kappa: 0.1,
            ..reference()
        };
        let g = technology_shares(&p, p.tau2 - 10000.0);
        assert_relative_eq!(g[0], 1.0, epsilon = 1e-15);
        assert!(g[1].abs() < 1e-15 && g[2].abs() < 1e-15 && g[3].abs() < 1e-15);
    }

    #[test]
    fn second_share_matches_hand_evaluation() {
        let p = ModelParams {
            tau2: 1850.0,
            tau3: 1950.0,
            tau4: 2050.0,
            kappa: 0.05,
            ..reference()
        };
        let g = technology_shares(&p, 1950.0);
        let expected = 1.0 / (1.0 + (-5.0f64).exp()) - 0.5;
        assert_relative_eq!(g[1], expected, epsilon = 1e-14);
    }

    #[test]
    fn out_of_order_taus_are_clamped() {
        let p = ModelParams {
            tau2: 1950.0,
            tau3: 1900.0,
            ..reference()
        };
        let g = technology_shares(&p, 1925.0);
        assert!(g.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn zero_intensities_give_zero_emissions() {
        let p = ModelParams {
            rho2: 0.0,
            rho3: 0.0,
            ..reference()
        };
        for y in [1700.0, 1900.0, 2100.0] {
            assert_eq!(carbon_intensity(&p, y), 0.0);
        }
        let t = simulate(&p, 1700, 2100).unwrap();
        assert!(t.emissions.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn intensity_is_half_rho2_at_tau2_when_later_taus_are_remote() {
        let p = ModelParams {
            tau3: 1e6,
            tau4: 2e6,
            ..reference()
        };
        assert_relative_eq!(carbon_intensity(&p, p.tau2), 0.5 * p.rho2, epsilon = 1e-15);
    }

    #[test]
    fn intensity_weighted_average() {
        let phi = intensity_from_shares(&[0.1, 0.3, 0.5, 0.1], 0.4, 0.1);
        assert_relative_eq!(phi, 0.17, epsilon = 1e-15);
    }

    #[test]
    fn initial_capital_matches_steady_state() {
        let p = ModelParams {
            a0: 1.0,
            lambda: 0.7,
            s: 0.24,
            delta: 0.05,
            pi: 0.64,
            p0: 0.6,
            ..reference()
        };
        let expected = (0.24f64 * 1.0 / 0.05).powf(1.0 / 0.7) * (0.64 * 0.6);
        let t = simulate(&p, 1700, 1700).unwrap();
        assert_relative_eq!(t.capital[0], expected, max_relative = 1e-14);
        assert_relative_eq!(initial_capital(&p), expected, max_relative = 1e-14);
    }

    #[test]
    fn doubling_a0_scales_initial_capital() {
        let p = reference();
        let q = ModelParams {
            a0: 2.0 * p.a0,
            ..p
        };
        let ratio = initial_capital(&q) / initial_capital(&p);
        assert_relative_eq!(ratio, 2f64.powf(1.0 / p.lambda), max_relative = 1e-12);
    }

    #[test]
    fn carrying_capacity_and_tfp_saturation_are_fixed_points() {
        let p = ModelParams {
            p0: 10.0,
            psi3: 10.0,
            a0: 10.0,
            a_sat: 10.0,
            ..reference()
        };
        let t = simulate(&p, 1700, 1750).unwrap();
        assert!(t.population.iter().all(|&x| (x - 10.0).abs() < 1e-12));
        assert!(t.tfp.iter().all(|&x| (x - 10.0).abs() < 1e-12));
    }

    #[test]
    fn cumulative_emissions_windows() {
        let t = Trajectory {
            start_year: 2000,
            population: vec![1.0; 101],
            gwp: vec![1.0; 101],
            emissions: vec![10.0; 101],
            tfp: vec![1.0; 101],
            capital: vec![1.0; 101],
            labor: vec![1.0; 101],
        };
        assert_relative_eq!(t.cumulative_emissions(2018, 2100).unwrap(), 830.0);
        assert!(t.cumulative_emissions(1990, 2010).is_err());
        assert!(t.cumulative_emissions(2050, 2101).is_err());
    }

    #[test]
    fn overflow_is_a_domain_error() {
        let p = ModelParams {
            a0: 1e300,
            a_sat: 1e300,
            ..reference()
        };
        match simulate(&p, 1700, 1800) {
            Err(Error::Domain { .. }) => {}
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let a = simulate(&reference(), 1700, 2500).unwrap();
        let b = simulate(&reference(), 1700, 2500).unwrap();
        assert_eq!(a, b);
    }

    fn arb_params() -> impl Strategy<Value = ModelParams> {
        (
            (0.001f64..0.5, 0.01f64..50.0, 1.0f64..20.0, 0.1f64..1.0),
            (0.5f64..0.9, 0.15f64..0.3, 0.01f64..0.14, 0.0005f64..0.05),
            (5.0f64..16.0, 0.6f64..0.7, 0.1f64..3.0),
            (0.0f64..0.75, 0.0f64..1.0),
            (
                1700.0f64..2100.0,
                1700.0f64..2100.0,
                2020.0f64..2300.0,
                0.005f64..0.2,
            ),
        )
            .prop_map(|(pop, econ, tfp, rho, tech)| ModelParams {
                psi1: pop.0,
                psi2: pop.1,
                psi3: pop.2,
                p0: pop.3,
                lambda: econ.0,
                s: econ.1,
                delta: econ.2,
                alpha: econ.3,
                a_sat: tfp.0,
                pi: tfp.1,
                a0: tfp.2,
                rho2: rho.0,
                rho3: rho.0 * rho.1,
                tau2: tech.0,
                tau3: tech.1,
                tau4: tech.2,
                kappa: tech.3,
            })
    }

    proptest! {
        #[test]
        fn shares_sum_to_one(p in arb_params(), year in 1500.0f64..2600.0) {
            let g = technology_shares(&p, year);
            prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(g.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn outer_shares_are_monotone(p in arb_params(), year in 1500.0f64..2600.0, dy in 0.0f64..50.0) {
            let a = technology_shares(&p, year);
            let b = technology_shares(&p, year + dy);
            prop_assert!(b[3] >= a[3] - 1e-15);
            prop_assert!(b[0] <= a[0] + 1e-15);
        }

        #[test]
        fn intensity_bounded_by_rho2(p in arb_params(), year in 1500.0f64..2600.0) {
            let phi = carbon_intensity(&p, year);
            prop_assert!(phi >= 0.0 && phi <= p.rho2 + 1e-15);
        }

        #[test]
        fn population_and_tfp_approach_saturation(p in arb_params()) {
            prop_assume!(p.p0 < p.psi3 && p.a0 <= p.a_sat);
            let t = simulate(&p, 1700, 2500).unwrap();
            for w in t.population.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            prop_assert!(t.population.iter().all(|&x| x <= p.psi3 * (1.0 + 1e-12)));
            for w in t.tfp.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            prop_assert!(t.tfp.iter().all(|&x| x <= p.a_sat * (1.0 + 1e-12)));
        }

        #[test]
        fn cumulative_is_additive(p in arb_params(), a in 1700i32..1900, b in 1900i32..2000, c in 2000i32..2100) {
            let t = simulate(&p, 1700, 2100).unwrap();
            let whole = t.cumulative_emissions(a, c).unwrap();
            let split = t.cumulative_emissions(a, b).unwrap() + t.cumulative_emissions(b + 1, c).unwrap();
            prop_assert!((whole - split).abs() <= 1e-9 * whole.max(1.0));
            prop_assert!(t.cumulative_emissions(a, c).unwrap() >= t.cumulative_emissions(a, b).unwrap());
        }
    }
}
