//! Derivative-free maximization: random screening, CMA-ES from the best
//! screened points, then restarted Nelder-Mead polishing, all in scaled
//! unconstrained coordinates.

use cmaes::{CMAESOptions, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::mh::chain_rng;
use super::LogDensity;
use crate::error::{Error, Result};

/// Objective value standing in for zero density, which CMA-ES cannot rank.
const INFEASIBLE: f64 = 1e10;
/// Initial CMA-ES step in units of the prior scales.
const CMA_STEP: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapBudget {
    /// Random starting points drawn in the global phase.
    pub n_random_starts: usize,
    /// Best starting points refined by CMA-ES and Nelder-Mead.
    pub n_local: usize,
    /// Total objective evaluations after screening.
    pub max_evaluations: usize,
    pub seed: u64,
}

impl Default for MapBudget {
    fn default() -> Self {
        MapBudget {
            n_random_starts: 200,
            n_local: 4,
            max_evaluations: 200_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    /// Constrained coordinates.
    pub theta: Vec<f64>,
    pub log_density: f64,
    pub evaluations: usize,
}

/// Minimizes `f` from `x0` with an adaptive-coefficient Nelder-Mead simplex.
/// Returns the best point, its value and the number of evaluations used.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    max_evals: usize,
    ftol: f64,
) -> (Vec<f64>, f64, usize) {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut values: Vec<f64> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    values.push(eval(x0, &mut evals));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step[i];
        values.push(eval(&x, &mut evals));
        simplex.push(x);
    }

    let mut order: Vec<usize> = (0..=n).collect();
    while evals < max_evals {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second = order[n - 1];
        let spread = (values[worst] - values[best]).abs();
        if spread.is_finite() && spread <= ftol * (values[best].abs() + ftol) {
            break;
        }

        let mut centroid = vec![0.0; n];
        for &k in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&simplex[k]) {
                *c += x / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < values[best] {
            let xe = along(beta);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second] {
            simplex[worst] = xr;
            values[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[worst] {
            let xc = along(gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < values[worst].min(fr) {
            simplex[worst] = xc;
            values[worst] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        let xb = simplex[best].clone();
        for &k in &order[1..] {
            let shrunk: Vec<f64> = xb
                .iter()
                .zip(&simplex[k])
                .map(|(b, x)| b + delta * (x - b))
                .collect();
            values[k] = eval(&shrunk, &mut evals);
            simplex[k] = shrunk;
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    (simplex[best].clone(), values[best], evals)
}

/// Random starting-point generator for the global phase.
pub type StartSampler<'a> = &'a (dyn Fn(&mut dyn RngCore) -> Vec<f64> + Sync);

/// Maximizes `target` in its unconstrained coordinates.
///
/// All `starts` and `n_random_starts` draws from `random_start` are scored;
/// the `n_local` best finite ones are refined by CMA-ES (three quarters of
/// each share of `max_evaluations`) and then Nelder-Mead with restarts.
/// The result is never worse than any scored starting point, and it is
/// deterministic given `budget.seed`.
pub fn maximize<T: LogDensity + ?Sized>(
    target: &T,
    starts: &[Vec<f64>],
    random_start: Option<StartSampler<'_>>,
    budget: &MapBudget,
) -> Result<Optimum> {
    let space = target.space();
    let d = target.dim();
    let mut evaluations = 0usize;
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut score = |theta: Vec<f64>, evaluations: &mut usize| {
        *evaluations += 1;
        if theta.len() != d {
            return;
        }
        let lp = target.log_density(&theta);
        if lp.is_finite() {
            candidates.push((lp, theta));
        }
    };
    for s in starts {
        score(s.clone(), &mut evaluations);
    }
    if let Some(sampler) = random_start {
        let mut rng = chain_rng(budget.seed, usize::MAX);
        for _ in 0..budget.n_random_starts {
            score(sampler(&mut rng), &mut evaluations);
        }
    }
    if candidates.is_empty() {
        return Err(Error::numeric(
            "no starting point with finite posterior density was found",
        ));
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));

    let scales = target.unconstrained_scales();
    let n_local = budget.n_local.max(1).min(candidates.len());
    let per_start = budget.max_evaluations / n_local;
    let mut best = candidates[0].clone();
    // Minimized in unconstrained coordinates divided by the prior scales.
    let neg = |z: &[f64]| -> f64 {
        let u: Vec<f64> = z.iter().zip(&scales).map(|(z, s)| z * s).collect();
        let lp = target.log_density(&space.to_constrained(&u));
        if lp.is_finite() {
            -lp
        } else {
            INFEASIBLE
        }
    };

    for (k, (lp0, theta0)) in candidates.into_iter().take(n_local).enumerate() {
        let mut z: Vec<f64> = space
            .to_unconstrained(&theta0)
            .iter()
            .zip(&scales)
            .map(|(u, s)| u / s)
            .collect();
        let mut fz = -lp0;
        let mut used = 0usize;

        let cma_evals = per_start * 3 / 4;
        if cma_evals > 0 {
            let seed = budget
                .seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(k as u64);
            let run = CMAESOptions::new(z.clone(), CMA_STEP)
                .seed(seed)
                .max_function_evals(cma_evals)
                .build(|x: &DVector<f64>| neg(x.as_slice()))
                .map_err(|e| Error::numeric(format!("CMA-ES setup failed: {e:?}")))?
                .run();
            used += cma_evals;
            if let Some(ind) = run.overall_best {
                if ind.value < fz {
                    z = ind.point.as_slice().to_vec();
                    fz = ind.value;
                }
            }
        }

        let mut step_factor = 0.1;
        while used < per_start {
            let step = vec![step_factor; z.len()];
            let (x, fx, n) = nelder_mead(neg, &z, &step, per_start - used, 1e-10);
            used += n;
            let improved = fx < fz - 1e-9 * fz.abs().max(1.0);
            if fx < fz {
                z = x;
                fz = fx;
            }
            if !improved {
                step_factor *= 0.5;
                if step_factor < 1e-4 {
                    break;
                }
            }
        }
        evaluations += used;
        if -fz > best.0 {
            let u: Vec<f64> = z.iter().zip(&scales).map(|(z, s)| z * s).collect();
            best = (-fz, space.to_constrained(&u));
        }
    }

    Ok(Optimum {
        theta: best.1,
        log_density: best.0,
        evaluations,
    })
}
