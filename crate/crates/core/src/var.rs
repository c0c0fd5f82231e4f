//! VAR(1) residual process: stationary covariance, exact Gaussian
//! log-likelihood by sequential filtering, and path simulation.
//!
//! The residual at year `t` is `r_t = x_t + e_t` with `x_t = A x_{t-1} + w_t`,
//! `w_t ~ N(0, W)`, `e_t ~ N(0, D)` and `x` started from its stationary
//! distribution `N(0, Sigma_x)` at the first observed year.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn spectral_radius(a: &Matrix3<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Solves `Sigma = A Sigma A' + W` through
/// `vec(Sigma) = (I - A kron A)^{-1} vec(W)`.
pub fn stationary_covariance(a: &Matrix3<f64>, w: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let radius = spectral_radius(a);
    if !(radius < 1.0) {
        return Err(Error::NonStationary(radius));
    }
    let system = SMatrix::<f64, 9, 9>::identity() - a.kronecker(a);
    let rhs = SVector::<f64, 9>::from_column_slice(w.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numeric("singular Kronecker system"))?;
    let sigma = Matrix3::from_column_slice(sol.as_slice());
    Ok(0.5 * (sigma + sigma.transpose()))
}

/// One year of residuals; `None` marks a missing series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRecord {
    pub year: i32,
    pub values: [Option<f64>; 3],
}

/// Exact log-density of the residual records under the VAR(1) plus
/// observation-error model, in time linear in the number of years.
///
/// Years must be strictly increasing; gaps between years propagate the
/// latent state without an update. Because `D` is diagonal, the components of
/// each year are assimilated one at a time, which also marginalizes missing
/// entries exactly.
pub fn var_log_likelihood(
    a: &Matrix3<f64>,
    innovation_var: &Vector3<f64>,
    obs_error_var: &Vector3<f64>,
    residuals: &[ResidualRecord],
) -> Result<f64> {
    let w = Matrix3::from_diagonal(innovation_var);
    let sigma_x = stationary_covariance(a, &w)?;
    let mut mean = Vector3::zeros();
    let mut cov = sigma_x;
    let mut ll = 0.0;
    let mut prev_year: Option<i32> = None;

    for rec in residuals {
        if let Some(py) = prev_year {
            if rec.year <= py {
                return Err(Error::data(format!(
                    "residual years must increase ({} after {py})",
                    rec.year
                )));
            }
            for _ in 0..(rec.year - py) {
                mean = a * mean;
                cov = a * cov * a.transpose() + w;
            }
            cov = 0.5 * (cov + cov.transpose());
        }
        prev_year = Some(rec.year);

        for (i, v) in rec.values.iter().enumerate() {
            let Some(y) = *v else { continue };
            let s = cov[(i, i)] + obs_error_var[i];
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::numeric(format!(
                    "non-positive innovation variance {s} in year {}",
                    rec.year
                )));
            }
            let innov = y - mean[i];
            ll -= 0.5 * (LN_2PI + s.ln() + innov * innov / s);
            let gain: Vector3<f64> = cov.column(i) / s;
            mean += gain * innov;
            let row = cov.row(i).into_owned();
            cov -= gain * row;
        }
    }
    Ok(ll)
}

/// Draws a path of the latent process `x` over `n_years`, starting from the
/// stationary distribution.
pub fn simulate_var_path<R: Rng + ?Sized>(
    a: &Matrix3<f64>,
    innovation_var: &Vector3<f64>,
    n_years: usize,
    rng: &mut R,
) -> Result<Vec<Vector3<f64>>> {
    let w = Matrix3::from_diagonal(innovation_var);
    let sigma_x = stationary_covariance(a, &w)?;
    let chol = sigma_x
        .cholesky()
        .ok_or_else(|| Error::numeric("stationary covariance is not positive definite"))?;
    let sd_w = innovation_var.map(f64::sqrt);
    let mut path = Vec::with_capacity(n_years);
    if n_years == 0 {
        return Ok(path);
    }
    let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let mut x = chol.l() * z;
    path.push(x);
    for _ in 1..n_years {
        let noise = Vector3::from_fn(|i, _| sd_w[i] * rng.sample::<f64, _>(StandardNormal));
        x = a * x + noise;
        path.push(x);
    }
    Ok(path)
}

/// Predictive mean and variance of the residual `r_t = x_t + e_t` at each
/// `query` year given the `conditioning` records, from a forward filter and
/// a Rauch-Tung-Striebel backward pass over the joint span of years.
///
/// Query years must not carry conditioning values.
pub fn predictive_residual_moments(
    a: &Matrix3<f64>,
    innovation_var: &Vector3<f64>,
    obs_error_var: &Vector3<f64>,
    conditioning: &[ResidualRecord],
    query: &[i32],
) -> Result<Vec<(Vector3<f64>, Vector3<f64>)>> {
    if query.is_empty() {
        return Ok(Vec::new());
    }
    if conditioning.windows(2).any(|w| w[1].year <= w[0].year) {
        return Err(Error::data("conditioning years must increase"));
    }
    let w = Matrix3::from_diagonal(innovation_var);
    let sigma_x = stationary_covariance(a, &w)?;
    let years = conditioning
        .iter()
        .map(|r| r.year)
        .chain(query.iter().copied());
    let first = years.clone().min().expect("non-empty");
    let last = years.max().expect("non-empty");
    let n = (last - first + 1) as usize;

    let mut pred_mean = Vec::with_capacity(n);
    let mut pred_cov = Vec::with_capacity(n);
    let mut filt_mean: Vec<Vector3<f64>> = Vec::with_capacity(n);
    let mut filt_cov: Vec<Matrix3<f64>> = Vec::with_capacity(n);
    let mut next = conditioning.iter().peekable();
    for t in 0..n {
        let year = first + t as i32;
        let (mut m, mut c) = if t == 0 {
            (Vector3::zeros(), sigma_x)
        } else {
            let c = a * filt_cov[t - 1] * a.transpose() + w;
            (a * filt_mean[t - 1], 0.5 * (c + c.transpose()))
        };
        pred_mean.push(m);
        pred_cov.push(c);
        if let Some(rec) = next.next_if(|r| r.year == year) {
            for (i, v) in rec.values.iter().enumerate() {
                let Some(y) = *v else { continue };
                let s = c[(i, i)] + obs_error_var[i];
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::numeric(format!(
                        "non-positive variance in year {year}"
                    )));
                }
                let gain: Vector3<f64> = c.column(i) / s;
                m += gain * (y - m[i]);
                let row = c.row(i).into_owned();
                c -= gain * row;
            }
        }
        filt_mean.push(m);
        filt_cov.push(c);
    }

    let mut smooth_mean = filt_mean.clone();
    let mut smooth_cov = filt_cov.clone();
    for t in (0..n - 1).rev() {
        let inv = pred_cov[t + 1]
            .try_inverse()
            .ok_or_else(|| Error::numeric("singular predicted covariance"))?;
        let gain = filt_cov[t] * a.transpose() * inv;
        smooth_mean[t] = filt_mean[t] + gain * (smooth_mean[t + 1] - pred_mean[t + 1]);
        let c = filt_cov[t] + gain * (smooth_cov[t + 1] - pred_cov[t + 1]) * gain.transpose();
        smooth_cov[t] = 0.5 * (c + c.transpose());
    }

    Ok(query
        .iter()
        .map(|&y| {
            let t = (y - first) as usize;
            let var = Vector3::from_fn(|i, _| smooth_cov[t][(i, i)] + obs_error_var[i]);
            (smooth_mean[t], var)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_matrix_gives_w() {
        let w = Matrix3::from_diagonal(&Vector3::new(0.1, 0.2, 0.3));
        let s = stationary_covariance(&Matrix3::zeros(), &w).unwrap();
        assert_relative_eq!(s, w, epsilon = 1e-15);
    }

    #[test]
    fn scalar_ar1_closed_form() {
        // Embed the scalar AR(1) in the first coordinate.
        let a = Matrix3::from_diagonal(&Vector3::new(0.5, 0.0, 0.0));
        let w = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 1.0));
        let s = stationary_covariance(&a, &w).unwrap();
        assert_relative_eq!(s[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn non_stationary_is_rejected() {
        let a = Matrix3::from_diagonal(&Vector3::new(1.01, 0.2, 0.1));
        let w = Matrix3::identity();
        assert!(matches!(
            stationary_covariance(&a, &w),
            Err(Error::NonStationary(_))
        ));
        let recs = [ResidualRecord {
            year: 2000,
            values: [Some(0.0); 3],
        }];
        assert!(
            var_log_likelihood(&a, &Vector3::repeat(1.0), &Vector3::repeat(0.1), &recs).is_err()
        );
    }

    #[test]
    fn single_year_at_mean() {
        let w = Vector3::new(0.01, 0.02, 0.05);
        let recs = [ResidualRecord {
            year: 1900,
            values: [Some(0.0); 3],
        }];
        let ll = var_log_likelihood(&Matrix3::zeros(), &w, &Vector3::zeros(), &recs).unwrap();
        let det = w.iter().product::<f64>();
        let expected = -0.5 * ((2.0 * std::f64::consts::PI).powi(3) * det).ln();
        assert_relative_eq!(ll, expected, epsilon = 1e-12);
    }

    #[test]
    fn all_missing_year_contributes_nothing() {
        let a = Matrix3::from_diagonal(&Vector3::new(0.5, 0.4, 0.3));
        let w = Vector3::new(0.01, 0.02, 0.05);
        let d = Vector3::new(0.001, 0.001, 0.001);
        let base = [ResidualRecord {
            year: 1900,
            values: [Some(0.1), None, Some(-0.2)],
        }];
        let with_empty = [
            base[0],
            ResidualRecord {
                year: 1901,
                values: [None; 3],
            },
        ];
        let a1 = var_log_likelihood(&a, &w, &d, &base).unwrap();
        let a2 = var_log_likelihood(&a, &w, &d, &with_empty).unwrap();
        assert_relative_eq!(a1, a2, epsilon = 1e-15);
    }

    #[test]
    fn simulated_path_has_stationary_variance() {
        use rand::SeedableRng;
        let a = Matrix3::new(0.6, 0.1, 0.0, 0.0, 0.5, 0.1, 0.05, 0.0, 0.9);
        let wv = Vector3::new(0.01, 0.02, 0.005);
        let sigma = stationary_covariance(&a, &Matrix3::from_diagonal(&wv)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let reps = 20_000;
        let mut acc = Matrix3::zeros();
        for _ in 0..reps {
            let p = simulate_var_path(&a, &wv, 5, &mut rng).unwrap();
            acc += p[4] * p[4].transpose();
        }
        acc /= reps as f64;
        assert!((acc - sigma).norm() / sigma.norm() < 0.05);
    }
}
