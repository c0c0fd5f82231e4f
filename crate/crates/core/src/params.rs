//! Parameter containers and the canonical ordering of the 32 sampled
//! parameters (17 structural, 15 statistical).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_MODEL_PARAMS: usize = 17;
pub const N_STAT_PARAMS: usize = 15;
pub const N_PARAMS: usize = N_MODEL_PARAMS + N_STAT_PARAMS;

pub const MODEL_PARAM_NAMES: [&str; N_MODEL_PARAMS] = [
    "psi1", "psi2", "psi3", "P0", "lambda", "s", "delta", "alpha", "As", "pi", "A0", "rho2",
    "rho3", "tau2", "tau3", "tau4", "kappa",
];

pub const STAT_PARAM_NAMES: [&str; N_STAT_PARAMS] = [
    "a11", "a12", "a13", "a21", "a22", "a23", "a31", "a32", "a33", "sigma1", "sigma2", "sigma3",
    "eps1", "eps2", "eps3",
];

/// All sampled parameter names in canonical order.
pub fn parameter_names() -> Vec<String> {
    MODEL_PARAM_NAMES
        .iter()
        .chain(STAT_PARAM_NAMES.iter())
        .map(|s| s.to_string())
        .collect()
}

pub fn parameter_index(name: &str) -> Option<usize> {
    MODEL_PARAM_NAMES
        .iter()
        .chain(STAT_PARAM_NAMES.iter())
        .position(|n| *n == name)
}

/// Physical domain of a parameter, independent of any prior. Priors are
/// truncated to this interval.
pub fn physical_domain(name: &str) -> (f64, f64) {
    const INF: f64 = f64::INFINITY;
    match name {
        "psi1" | "alpha" | "lambda" | "s" | "pi" => (0.0, 1.0),
        "delta" => (0.0, 1.0),
        "psi2" | "psi3" | "P0" | "As" | "A0" | "kappa" => (0.0, INF),
        "rho2" | "rho3" => (0.0, INF),
        "sigma1" | "sigma2" | "sigma3" | "eps1" | "eps2" | "eps3" => (0.0, INF),
        _ => (-INF, INF),
    }
}

/// Structural parameters of the coupled population-economy-emissions model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Population growth rate (1/yr).
    pub psi1: f64,
    /// Income half-saturation constant (thousand 2011US$ per capita per yr).
    pub psi2: f64,
    /// Population carrying capacity (billions).
    pub psi3: f64,
    /// Population in the initial year (billions).
    pub p0: f64,
    /// Elasticity of production with respect to labor.
    pub lambda: f64,
    /// Savings rate.
    pub s: f64,
    /// Capital depreciation rate (1/yr).
    pub delta: f64,
    /// TFP growth rate (1/yr).
    pub alpha: f64,
    /// TFP saturation level.
    pub a_sat: f64,
    /// Labor force participation rate.
    pub pi: f64,
    /// Initial TFP.
    pub a0: f64,
    /// Carbon intensity of the high-carbon fossil technology (kgC per 2011US$).
    pub rho2: f64,
    /// Carbon intensity of the lower-carbon fossil technology (kgC per 2011US$).
    pub rho3: f64,
    pub tau2: f64,
    pub tau3: f64,
    /// Half-saturation year of the zero-carbon technology.
    pub tau4: f64,
    /// Technology penetration rate (1/yr).
    pub kappa: f64,
}

impl ModelParams {
    pub fn to_array(&self) -> [f64; N_MODEL_PARAMS] {
        [
            self.psi1,
            self.psi2,
            self.psi3,
            self.p0,
            self.lambda,
            self.s,
            self.delta,
            self.alpha,
            self.a_sat,
            self.pi,
            self.a0,
            self.rho2,
            self.rho3,
            self.tau2,
            self.tau3,
            self.tau4,
            self.kappa,
        ]
    }

    /// Builds from the first 17 entries of `v` in canonical order.
    pub fn from_slice(v: &[f64]) -> Self {
        assert!(v.len() >= N_MODEL_PARAMS, "model parameter slice too short");
        ModelParams {
            psi1: v[0],
            psi2: v[1],
            psi3: v[2],
            p0: v[3],
            lambda: v[4],
            s: v[5],
            delta: v[6],
            alpha: v[7],
            a_sat: v[8],
            pi: v[9],
            a0: v[10],
            rho2: v[11],
            rho3: v[12],
            tau2: v[13],
            tau3: v[14],
            tau4: v[15],
            kappa: v[16],
        }
    }

    /// Checks the hard structural constraints: positivity, `delta < s`,
    /// `rho2 >= rho3 >= 0`.
    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("model parameters must be finite"));
        }
        let positive = [
            ("psi3", self.psi3),
            ("P0", self.p0),
            ("A0", self.a0),
            ("As", self.a_sat),
            ("kappa", self.kappa),
            ("s", self.s),
            ("delta", self.delta),
            ("lambda", self.lambda),
            ("pi", self.pi),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("lambda", self.lambda), ("s", self.s), ("pi", self.pi)] {
            if v >= 1.0 {
                return Err(Error::config(format!("{name} must be below 1, got {v}")));
            }
        }
        if self.delta >= self.s {
            return Err(Error::config(format!(
                "depreciation rate {} must be below the savings rate {}",
                self.delta, self.s
            )));
        }
        if self.rho3 < 0.0 || self.rho2 < self.rho3 {
            return Err(Error::config(format!(
                "carbon intensities must satisfy rho2 >= rho3 >= 0 (rho2 = {}, rho3 = {})",
                self.rho2, self.rho3
            )));
        }
        Ok(())
    }
}

/// Statistical parameters of the VAR(1) residual model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatParams {
    /// VAR coefficient matrix.
    pub a: Matrix3<f64>,
    /// Diagonal of the innovation covariance `W`.
    pub innovation_var: Vector3<f64>,
    /// Diagonal of the observation-error covariance `D`.
    pub obs_error_var: Vector3<f64>,
}

impl StatParams {
    /// Builds from 15 values: `a11..a33` row-major, then the three innovation
    /// variances and the three observation-error variances.
    pub fn from_slice(v: &[f64]) -> Self {
        assert!(
            v.len() >= N_STAT_PARAMS,
            "statistical parameter slice too short"
        );
        StatParams {
            a: Matrix3::from_row_slice(&v[0..9]),
            innovation_var: Vector3::new(v[9], v[10], v[11]),
            obs_error_var: Vector3::new(v[12], v[13], v[14]),
        }
    }

    pub fn to_array(&self) -> [f64; N_STAT_PARAMS] {
        let mut out = [0.0; N_STAT_PARAMS];
        for i in 0..3 {
            for j in 0..3 {
                out[3 * i + j] = self.a[(i, j)];
            }
        }
        out[9..12].copy_from_slice(self.innovation_var.as_slice());
        out[12..15].copy_from_slice(self.obs_error_var.as_slice());
        out
    }

    pub fn innovation_cov(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.innovation_var)
    }

    pub fn obs_error_cov(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.obs_error_var)
    }
}

/// Splits a full 32-entry parameter vector.
pub fn split_params(theta: &[f64]) -> (ModelParams, StatParams) {
    assert_eq!(theta.len(), N_PARAMS, "expected {N_PARAMS} parameters");
    (
        ModelParams::from_slice(&theta[..N_MODEL_PARAMS]),
        StatParams::from_slice(&theta[N_MODEL_PARAMS..]),
    )
}

pub fn join_params(model: &ModelParams, stat: &StatParams) -> Vec<f64> {
    let mut v = model.to_array().to_vec();
    v.extend_from_slice(&stat.to_array());
    v
}
