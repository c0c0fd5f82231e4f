//! Bijections between a parameter's support and the real line.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Transform {
    Identity,
    /// `x = lo + exp(u)`.
    LowerBounded(f64),
    /// `x = hi - exp(u)`.
    UpperBounded(f64),
    /// `x = lo + (hi - lo) * logistic(u)`.
    Interval(f64, f64),
}

/// `ln(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl Transform {
    pub fn for_support(lo: f64, hi: f64) -> Self {
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => Transform::Interval(lo, hi),
            (true, false) => Transform::LowerBounded(lo),
            (false, true) => Transform::UpperBounded(hi),
            (false, false) => Transform::Identity,
        }
    }

    pub fn to_constrained(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => u,
            Transform::LowerBounded(lo) => lo + u.exp(),
            Transform::UpperBounded(hi) => hi - u.exp(),
            Transform::Interval(lo, hi) => {
                // Anchor at the nearer bound so values near either end keep
                // their precision.
                if u <= 0.0 {
                    lo + (hi - lo) * logistic(u)
                } else {
                    hi - (hi - lo) * logistic(-u)
                }
            }
        }
    }

    pub fn to_unconstrained(&self, x: f64) -> f64 {
        match *self {
            Transform::Identity => x,
            Transform::LowerBounded(lo) => (x - lo).ln(),
            Transform::UpperBounded(hi) => (hi - x).ln(),
            Transform::Interval(lo, hi) => (x - lo).ln() - (hi - x).ln(),
        }
    }

    /// `ln |dx/du|` at `u`.
    pub fn log_abs_jacobian(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => 0.0,
            Transform::LowerBounded(_) | Transform::UpperBounded(_) => u,
            Transform::Interval(lo, hi) => (hi - lo).ln() - softplus(-u) - softplus(u),
        }
    }

    /// `dx/du` at `u`.
    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => 1.0,
            Transform::LowerBounded(_) => u.exp(),
            Transform::UpperBounded(_) => -u.exp(),
            Transform::Interval(lo, hi) => (hi - lo) * logistic(u) * logistic(-u),
        }
    }
}

/// Maps whole vectors between spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    pub transforms: Vec<Transform>,
}

impl ParameterSpace {
    pub fn new(transforms: Vec<Transform>) -> Self {
        ParameterSpace { transforms }
    }

    pub fn dim(&self) -> usize {
        self.transforms.len()
    }

    pub fn to_constrained(&self, u: &[f64]) -> Vec<f64> {
        self.transforms
            .iter()
            .zip(u)
            .map(|(t, &v)| t.to_constrained(v))
            .collect()
    }

    pub fn to_unconstrained(&self, x: &[f64]) -> Vec<f64> {
        self.transforms
            .iter()
            .zip(x)
            .map(|(t, &v)| t.to_unconstrained(v))
            .collect()
    }

    pub fn log_abs_jacobian(&self, u: &[f64]) -> f64 {
        self.transforms
            .iter()
            .zip(u)
            .map(|(t, &v)| t.log_abs_jacobian(v))
            .sum()
    }
}
