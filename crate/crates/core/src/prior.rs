//! Prior specifications and the truncated univariate distributions built
//! from them.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::calibration::transform::Transform;
use crate::error::{Error, Result};

/// Standard normal 97.5% quantile; maps a central 95% interval to a
/// standard deviation.
pub fn z975() -> f64 {
    std_normal().inverse_cdf(0.975)
}

fn std_normal() -> Normal {
    Normal::standard()
}

fn phi(z: f64) -> f64 {
    std_normal().cdf(z)
}

fn phi_inv(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Normal,
    LogNormal,
    Uniform,
}

/// How `lower` / `upper` of a [`PriorSpec`] are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsMeaning {
    /// Absolute support bounds (uniform).
    Absolute,
    /// 2.5% and 97.5% quantiles (normal, log-normal; log-normal on log scale).
    Central95,
    /// `lower` is the location (mean or log-mean), `upper` the scale.
    LocationScale,
}

/// A user-facing prior specification as it appears in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub family: Family,
    pub lower: f64,
    pub upper: f64,
    /// Defaults to `absolute` for uniform and `central95` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsMeaning>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncate_below: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncate_above: Option<f64>,
}

impl PriorSpec {
    pub fn uniform(lower: f64, upper: f64) -> Self {
        Self::new(Family::Uniform, lower, upper)
    }

    /// Normal with the given central 95% interval.
    pub fn normal(lower: f64, upper: f64) -> Self {
        Self::new(Family::Normal, lower, upper)
    }

    /// Log-normal with the given central 95% interval.
    pub fn log_normal(lower: f64, upper: f64) -> Self {
        Self::new(Family::LogNormal, lower, upper)
    }

    pub fn log_normal_location_scale(log_mean: f64, log_sd: f64) -> Self {
        PriorSpec {
            bounds: Some(BoundsMeaning::LocationScale),
            ..Self::new(Family::LogNormal, log_mean, log_sd)
        }
    }

    pub fn truncated_below(mut self, at: f64) -> Self {
        self.truncate_below = Some(at);
        self
    }

    fn new(family: Family, lower: f64, upper: f64) -> Self {
        PriorSpec {
            family,
            lower,
            upper,
            bounds: None,
            truncate_below: None,
            truncate_above: None,
        }
    }

    pub fn bounds_meaning(&self) -> BoundsMeaning {
        self.bounds.unwrap_or(match self.family {
            Family::Uniform => BoundsMeaning::Absolute,
            _ => BoundsMeaning::Central95,
        })
    }

    /// Builds the distribution, truncated to `domain` and to any explicit
    /// truncation points. `name` is used in error messages.
    pub fn build(&self, name: &str, domain: (f64, f64)) -> Result<Prior> {
        let err = |msg: String| Error::config(format!("prior for `{name}`: {msg}"));
        if self.lower.is_nan() || self.upper.is_nan() {
            return Err(err("bounds must be numbers".into()));
        }
        let meaning = self.bounds_meaning();
        let kind = match (self.family, meaning) {
            (Family::Uniform, BoundsMeaning::Absolute) => {
                if !(self.lower < self.upper) {
                    return Err(err(format!(
                        "lower bound {} must be below upper bound {}",
                        self.lower, self.upper
                    )));
                }
                if !self.lower.is_finite() || !self.upper.is_finite() {
                    return Err(err("uniform bounds must be finite".into()));
                }
                Kind::Uniform
            }
            (Family::Uniform, _) => {
                return Err(err("uniform priors take absolute bounds".into()));
            }
            (Family::Normal, BoundsMeaning::Central95) => {
                if !(self.lower < self.upper) || !self.upper.is_finite() || !self.lower.is_finite()
                {
                    return Err(err(format!(
                        "lower bound {} must be below upper bound {}",
                        self.lower, self.upper
                    )));
                }
                Kind::Normal {
                    mean: 0.5 * (self.lower + self.upper),
                    sd: (self.upper - self.lower) / (2.0 * z975()),
                }
            }
            (Family::LogNormal, BoundsMeaning::Central95) => {
                if !(self.lower < self.upper) || !self.upper.is_finite() {
                    return Err(err(format!(
                        "lower bound {} must be below upper bound {}",
                        self.lower, self.upper
                    )));
                }
                if self.lower <= 0.0 {
                    return Err(err("log-normal quantile bounds must be positive".into()));
                }
                let (a, b) = (self.lower.ln(), self.upper.ln());
                Kind::LogNormal {
                    mu: 0.5 * (a + b),
                    sigma: (b - a) / (2.0 * z975()),
                }
            }
            (Family::Normal, BoundsMeaning::LocationScale) => {
                if !(self.upper > 0.0) || !self.lower.is_finite() || !self.upper.is_finite() {
                    return Err(err("scale must be positive".into()));
                }
                Kind::Normal {
                    mean: self.lower,
                    sd: self.upper,
                }
            }
            (Family::LogNormal, BoundsMeaning::LocationScale) => {
                if !(self.upper > 0.0) || !self.lower.is_finite() || !self.upper.is_finite() {
                    return Err(err("scale must be positive".into()));
                }
                Kind::LogNormal {
                    mu: self.lower,
                    sigma: self.upper,
                }
            }
            (_, BoundsMeaning::Absolute) => {
                return Err(err(
                    "normal-family priors take quantile or location-scale bounds".into(),
                ));
            }
        };

        let (mut lo, mut hi) = match kind {
            Kind::Uniform => (self.lower, self.upper),
            Kind::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Kind::LogNormal { .. } => (0.0, f64::INFINITY),
        };
        lo = lo.max(domain.0);
        hi = hi.min(domain.1);
        if let Some(t) = self.truncate_below {
            lo = lo.max(t);
        }
        if let Some(t) = self.truncate_above {
            hi = hi.min(t);
        }
        if !(lo < hi) {
            return Err(err(format!("empty support [{lo}, {hi}] after truncation")));
        }
        let prior = Prior::with_support(kind, lo, hi);
        if !(prior.log_mass.is_finite()) {
            return Err(err(
                "support has zero probability under the base distribution".into(),
            ));
        }
        Ok(prior)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Normal { mean: f64, sd: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Uniform,
}

/// A univariate distribution truncated (and renormalized) to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prior {
    kind: Kind,
    lo: f64,
    hi: f64,
    /// Log of the base-distribution mass inside the support.
    log_mass: f64,
}

impl Prior {
    fn with_support(kind: Kind, lo: f64, hi: f64) -> Self {
        let mut p = Prior {
            kind,
            lo,
            hi,
            log_mass: 0.0,
        };
        p.log_mass = match kind {
            Kind::Uniform => 0.0,
            _ => {
                let (za, zb) = (p.to_z(lo), p.to_z(hi));
                z_interval_mass(za, zb).ln()
            }
        };
        p
    }

    /// Standard-normal coordinate of `x` for normal-family kinds.
    fn to_z(&self, x: f64) -> f64 {
        match self.kind {
            Kind::Normal { mean, sd } => (x - mean) / sd,
            Kind::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (x.ln() - mu) / sigma
                }
            }
            Kind::Uniform => unreachable!("uniform has no z coordinate"),
        }
    }

    fn from_z(&self, z: f64) -> f64 {
        match self.kind {
            Kind::Normal { mean, sd } => mean + sd * z,
            Kind::LogNormal { mu, sigma } => (mu + sigma * z).exp(),
            Kind::Uniform => unreachable!("uniform has no z coordinate"),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x >= self.lo && x <= self.hi) {
            return f64::NEG_INFINITY;
        }
        match self.kind {
            Kind::Uniform => -(self.hi - self.lo).ln(),
            Kind::Normal { sd, .. } => {
                let z = self.to_z(x);
                -0.5 * z * z - sd.ln() - LN_SQRT_2PI - self.log_mass
            }
            Kind::LogNormal { sigma, .. } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = self.to_z(x);
                -0.5 * z * z - sigma.ln() - x.ln() - LN_SQRT_2PI - self.log_mass
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        match self.kind {
            Kind::Uniform => (x - self.lo) / (self.hi - self.lo),
            _ => {
                let (za, z) = (self.to_z(self.lo), self.to_z(x));
                (z_interval_mass(za, z) / self.log_mass.exp()).clamp(0.0, 1.0)
            }
        }
    }

    /// Inverse CDF over the truncated support; `p` in `[0, 1]`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self.kind {
            Kind::Uniform => self.lo + p * (self.hi - self.lo),
            _ => {
                let (za, zb) = (self.to_z(self.lo), self.to_z(self.hi));
                let z = truncated_z_quantile(za, zb, p);
                self.from_z(z).clamp(self.lo, self.hi)
            }
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Mode of the truncated density.
    pub fn mode(&self) -> f64 {
        let m = match self.kind {
            Kind::Uniform => 0.5 * (self.lo + self.hi),
            Kind::Normal { mean, .. } => mean,
            Kind::LogNormal { mu, sigma } => (mu - sigma * sigma).exp(),
        };
        m.clamp(self.lo, self.hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u)
    }

    /// Transform mapping the real line onto the support.
    pub fn transform(&self) -> Transform {
        Transform::for_support(self.lo, self.hi)
    }

    /// Rough spread of the prior in unconstrained coordinates, used to seed
    /// proposal and simplex scales.
    pub fn unconstrained_scale(&self) -> f64 {
        let t = self.transform();
        let a = t.to_unconstrained(self.quantile(0.16));
        let b = t.to_unconstrained(self.quantile(0.84));
        let s = 0.5 * (b - a);
        if s.is_finite() && s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

/// `Phi(zb) - Phi(za)`, computed in whichever tail keeps precision.
fn z_interval_mass(za: f64, zb: f64) -> f64 {
    if za > 0.0 {
        phi(-za) - phi(-zb)
    } else {
        phi(zb) - phi(za)
    }
}

/// Quantile of a standard normal truncated to `[za, zb]`.
fn truncated_z_quantile(za: f64, zb: f64, p: f64) -> f64 {
    if za > 0.0 {
        // Mirror into the lower tail.
        return -truncated_z_quantile(-zb, -za, 1.0 - p);
    }
    let (fa, fb) = (phi(za), phi(zb));
    let target = fa + p * (fb - fa);
    if target <= 0.0 {
        return za;
    }
    if target >= 1.0 {
        return zb;
    }
    phi_inv(target).clamp(za, zb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const ALL: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

    #[test]
    fn normal_from_central_interval() {
        let p = PriorSpec::normal(0.6, 0.8).build("lambda", ALL).unwrap();
        assert_relative_eq!(p.median(), 0.7, epsilon = 1e-12);
        assert_relative_eq!(p.quantile(0.025), 0.6, epsilon = 1e-12);
        assert_relative_eq!(p.quantile(0.975), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn log_normal_quantiles_on_log_scale() {
        let p = PriorSpec::log_normal(0.22, 0.26)
            .build("s", (0.0, 1.0))
            .unwrap();
        assert_relative_eq!(p.quantile(0.025), 0.22, max_relative = 1e-10);
        assert_relative_eq!(p.quantile(0.975), 0.26, max_relative = 1e-10);
        assert_relative_eq!(p.median(), (0.22f64 * 0.26).sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn location_scale_log_normal_density() {
        let p = PriorSpec::log_normal_location_scale(-1.0, 1.0)
            .build("sigma1", (0.0, f64::INFINITY))
            .unwrap();
        let x: f64 = 0.3;
        let z = x.ln() + 1.0;
        let expected = -0.5 * z * z - x.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(p.ln_pdf(x), expected, epsilon = 1e-12);
        assert_eq!(p.ln_pdf(-0.1), f64::NEG_INFINITY);
    }

    #[test]
    fn uniform_density_and_support() {
        let p = PriorSpec::uniform(0.01, 0.14)
            .build("delta", (0.0, 1.0))
            .unwrap();
        assert_relative_eq!(p.ln_pdf(0.05), -(0.13f64).ln(), epsilon = 1e-12);
        assert_eq!(p.ln_pdf(0.2), f64::NEG_INFINITY);
        assert_eq!(p.support(), (0.01, 0.14));
        assert_relative_eq!(p.mode(), 0.075);
    }

    #[test]
    fn truncated_normal_is_renormalized() {
        let p = PriorSpec::normal(2050.0, 2150.0)
            .truncated_below(2020.0)
            .build("tau4", ALL)
            .unwrap();
        // Trapezoid integration of the density over the support.
        let (a, b) = (2020.0, 2400.0);
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * p.ln_pdf(a + i as f64 * h).exp();
        }
        assert_relative_eq!(total * h, 1.0, epsilon = 1e-6);
        assert_eq!(p.ln_pdf(2019.0), f64::NEG_INFINITY);
        assert!(p.quantile(0.0) >= 2020.0);
        assert_relative_eq!(p.mode(), 2100.0);
    }

    #[test]
    fn rejects_inverted_bounds() {
        let e = PriorSpec::uniform(2.0, 1.0).build("psi2", ALL).unwrap_err();
        assert!(e.to_string().contains("psi2"));
        assert!(PriorSpec::normal(1.0, 1.0).build("x", ALL).is_err());
        assert!(PriorSpec::log_normal(-1.0, 1.0).build("x", ALL).is_err());
    }

    #[test]
    fn empty_truncated_support_is_rejected() {
        let spec = PriorSpec::uniform(0.0, 1.0).truncated_below(2.0);
        assert!(spec.build("x", ALL).is_err());
    }

    #[test]
    fn far_tail_truncation_keeps_precision() {
        let p = PriorSpec::normal(-1.0, 1.0)
            .truncated_below(8.0)
            .build("x", ALL)
            .unwrap();
        let q = p.quantile(0.5);
        assert!(q > 8.0 && q < 8.5, "median {q}");
        assert!(p.ln_pdf(8.1).is_finite());
    }

    proptest! {
        #[test]
        fn normal_quantile_round_trip(lo in -1e3f64..1e3, width in 1e-3f64..1e3) {
            let hi = lo + width;
            let p = PriorSpec::normal(lo, hi).build("x", ALL).unwrap();
            prop_assert!((p.quantile(0.025) - lo).abs() <= 1e-9 * width.max(lo.abs()).max(1.0));
            prop_assert!((p.quantile(0.975) - hi).abs() <= 1e-9 * width.max(hi.abs()).max(1.0));
        }

        #[test]
        fn cdf_inverts_quantile(prob in 0.001f64..0.999) {
            let specs = [
                PriorSpec::normal(2050.0, 2150.0).truncated_below(2020.0),
                PriorSpec::log_normal(0.6, 0.8),
                PriorSpec::uniform(5.3, 16.11),
                PriorSpec::normal(0.0, 0.75),
            ];
            for spec in specs {
                let p = spec.build("x", (0.0, f64::INFINITY)).unwrap();
                let x = p.quantile(prob);
                prop_assert!((p.cdf(x) - prob).abs() < 1e-9);
            }
        }
    }
}
