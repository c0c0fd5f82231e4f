//! The VAR(1) filter and smoother against dense Gaussian computations over
//! the stacked residual vector.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use proptest::prelude::*;

use emproj::var::{
    predictive_residual_moments, spectral_radius, stationary_covariance, var_log_likelihood,
    ResidualRecord,
};

/// Latent covariance `Cov(x_s[i], x_t[j])`.
fn latent_cov(a: &Matrix3<f64>, sigma: &Matrix3<f64>, s: i32, i: usize, t: i32, j: usize) -> f64 {
    if t >= s {
        (a.pow((t - s) as u32) * sigma)[(j, i)]
    } else {
        (a.pow((s - t) as u32) * sigma)[(i, j)]
    }
}

fn entries(records: &[ResidualRecord]) -> Vec<(i32, usize, f64)> {
    records
        .iter()
        .flat_map(|r| {
            r.values
                .iter()
                .enumerate()
                .filter_map(move |(k, v)| v.map(|v| (r.year, k, v)))
        })
        .collect()
}

fn dense_cov(
    a: &Matrix3<f64>,
    sigma: &Matrix3<f64>,
    d: &Vector3<f64>,
    idx: &[(i32, usize, f64)],
) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |p, q| {
        let (s, i, _) = idx[p];
        let (t, j, _) = idx[q];
        latent_cov(a, sigma, s, i, t, j) + if p == q { d[i] } else { 0.0 }
    })
}

fn dense_log_density(
    a: &Matrix3<f64>,
    w: &Vector3<f64>,
    d: &Vector3<f64>,
    records: &[ResidualRecord],
) -> f64 {
    let sigma = stationary_covariance(a, &Matrix3::from_diagonal(w)).unwrap();
    let idx = entries(records);
    let c = dense_cov(a, &sigma, d, &idx);
    let y = DVector::from_iterator(idx.len(), idx.iter().map(|e| e.2));
    let chol = c.cholesky().unwrap();
    let z = chol.l().solve_lower_triangular(&y).unwrap();
    let log_det = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    -0.5 * (idx.len() as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + z.dot(&z))
}

fn stationary_matrix() -> impl Strategy<Value = Matrix3<f64>> {
    prop::array::uniform9(-0.8f64..0.8)
        .prop_map(|v| Matrix3::from_row_slice(&v))
        .prop_filter("stationary", |a| spectral_radius(a) < 0.95)
}

fn records() -> impl Strategy<Value = Vec<ResidualRecord>> {
    prop::collection::vec(
        (
            1i32..=3,
            prop::array::uniform3(prop::option::weighted(0.75, -1.5f64..1.5)),
        ),
        2..12,
    )
    .prop_map(|rows| {
        let mut year = 1950;
        rows.into_iter()
            .map(|(gap, values)| {
                year += gap;
                ResidualRecord { year, values }
            })
            .collect::<Vec<_>>()
    })
    .prop_filter("at least one value", |r| {
        r.iter().any(|rec| rec.values.iter().any(Option::is_some))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_matches_dense_density(
        a in stationary_matrix(),
        w in prop::array::uniform3(0.05f64..1.0),
        d in prop::array::uniform3(0.05f64..0.5),
        recs in records(),
    ) {
        let (w, d) = (Vector3::from(w), Vector3::from(d));
        let filter = var_log_likelihood(&a, &w, &d, &recs).unwrap();
        let dense = dense_log_density(&a, &w, &d, &recs);
        prop_assert!((filter - dense).abs() <= 1e-9 * dense.abs().max(1.0), "{filter} vs {dense}");
    }

    #[test]
    fn smoother_matches_dense_conditioning(
        a in stationary_matrix(),
        w in prop::array::uniform3(0.05f64..1.0),
        d in prop::array::uniform3(0.05f64..0.5),
        recs in records(),
        offsets in prop::collection::vec(-3i32..30, 1..4),
    ) {
        let (w, d) = (Vector3::from(w), Vector3::from(d));
        let first = recs[0].year;
        let taken: Vec<i32> = recs.iter().map(|r| r.year).collect();
        let mut query: Vec<i32> = offsets
            .into_iter()
            .map(|o| first + o)
            .filter(|y| !taken.contains(y))
            .collect();
        query.sort_unstable();
        query.dedup();
        prop_assume!(!query.is_empty());

        let moments = predictive_residual_moments(&a, &w, &d, &recs, &query).unwrap();
        let sigma = stationary_covariance(&a, &Matrix3::from_diagonal(&w)).unwrap();
        let idx = entries(&recs);
        let c = dense_cov(&a, &sigma, &d, &idx);
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|e| e.2));
        let c_inv = c.try_inverse().unwrap();
        for (q, &year) in query.iter().enumerate() {
            for k in 0..3 {
                let cross = DVector::from_iterator(
                    idx.len(),
                    idx.iter().map(|&(t, j, _)| latent_cov(&a, &sigma, year, k, t, j)),
                );
                let mean = cross.dot(&(&c_inv * &y));
                let var = sigma[(k, k)] + d[k] - cross.dot(&(&c_inv * &cross));
                let (m, v) = (moments[q].0[k], moments[q].1[k]);
                prop_assert!((m - mean).abs() < 1e-8 * mean.abs().max(1.0), "mean {m} vs {mean}");
                prop_assert!((v - var).abs() < 1e-8 * var.abs().max(1.0), "var {v} vs {var}");
            }
        }
    }
}

#[test]
fn smoother_without_conditioning_is_stationary() {
    let a = Matrix3::new(0.5, 0.1, 0.0, 0.0, 0.4, 0.2, 0.1, 0.0, 0.3);
    let w = Vector3::new(0.2, 0.3, 0.1);
    let d = Vector3::new(0.05, 0.01, 0.02);
    let sigma = stationary_covariance(&a, &Matrix3::from_diagonal(&w)).unwrap();
    let out = predictive_residual_moments(&a, &w, &d, &[], &[2000, 2005]).unwrap();
    for (mean, var) in out {
        for k in 0..3 {
            assert!(mean[k].abs() < 1e-14);
            assert!((var[k] - sigma[(k, k)] - d[k]).abs() < 1e-12);
        }
    }
}
