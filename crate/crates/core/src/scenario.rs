//! Scenario definitions: fossil resource limit, prior tables, expert
//! assessment settings and time horizons.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::{parameter_names, physical_domain, MODEL_PARAM_NAMES, STAT_PARAM_NAMES};
use crate::prior::{Prior, PriorSpec};

pub const PRESET_NAMES: [&str; 6] = [
    "standard",
    "low_fossil",
    "high_fossil",
    "delayed_zero_carbon",
    "alt_priors",
    "alt_tau4",
];

/// Limit on cumulative emissions over an accounting window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FossilLimit {
    pub limit_gtc: f64,
    pub window_start: i32,
    pub window_end: i32,
}

/// Inclusive year range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YearWindow {
    pub start: i32,
    pub end: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizons {
    /// First simulated year; `P0` and `A0` refer to it.
    pub model_start: i32,
    /// Last simulated year, must cover the fossil accounting window.
    pub simulation_end: i32,
    pub report_start: i32,
    pub report_end: i32,
}

impl Default for Horizons {
    fn default() -> Self {
        Horizons {
            model_start: 1700,
            simulation_end: 2500,
            report_start: 2015,
            report_end: 2100,
        }
    }
}

/// Univariate density used by an expert assessment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum UnivariateDensity {
    Normal { mean: f64, sd: f64 },
    LogNormal { log_mean: f64, log_sd: f64 },
}

impl UnivariateDensity {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
        match *self {
            UnivariateDensity::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - LN_SQRT_2PI
            }
            UnivariateDensity::LogNormal { log_mean, log_sd } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = (x.ln() - log_mean) / log_sd;
                -0.5 * z * z - log_sd.ln() - x.ln() - LN_SQRT_2PI
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let scale = match *self {
            UnivariateDensity::Normal { sd, .. } => sd,
            UnivariateDensity::LogNormal { log_sd, .. } => log_sd,
        };
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config("expert density scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExpertAssessment {
    pub enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<UnivariateDensity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// The two expert assessments: average per-capita GWP growth 2010-2100 and
/// emissions in 2100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertConfig {
    pub growth: ExpertAssessment,
    pub emissions: ExpertAssessment,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        let note = Some("placeholder density; replace with the assessed distribution".to_string());
        ExpertConfig {
            growth: ExpertAssessment {
                enabled: false,
                density: Some(UnivariateDensity::Normal {
                    mean: 0.02,
                    sd: 0.01,
                }),
                note: note.clone(),
            },
            emissions: ExpertAssessment {
                enabled: false,
                density: Some(UnivariateDensity::Normal {
                    mean: 20.0,
                    sd: 10.0,
                }),
                note,
            },
        }
    }
}

/// Which expert assessments enter the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpertToggle {
    None,
    Growth,
    Emissions,
    Both,
}

impl ExpertToggle {
    pub fn growth(self) -> bool {
        matches!(self, ExpertToggle::Growth | ExpertToggle::Both)
    }

    pub fn emissions(self) -> bool {
        matches!(self, ExpertToggle::Emissions | ExpertToggle::Both)
    }
}

impl FromStr for ExpertToggle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ExpertToggle::None),
            "growth" => Ok(ExpertToggle::Growth),
            "emissions" => Ok(ExpertToggle::Emissions),
            "both" => Ok(ExpertToggle::Both),
            other => Err(Error::config(format!(
                "unknown expert selection `{other}` (none|growth|emissions|both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub fossil_limit: FossilLimit,
    /// Calibration window for the historical observations.
    pub window: YearWindow,
    #[serde(default)]
    pub horizons: Horizons,
    #[serde(default)]
    pub experts: ExpertConfig,
    pub priors: BTreeMap<String, PriorSpec>,
}

fn standard_priors() -> BTreeMap<String, PriorSpec> {
    let mut p = BTreeMap::new();
    let mut put = |k: &str, v: PriorSpec| {
        p.insert(k.to_string(), v);
    };
    put("psi1", PriorSpec::normal(0.0001, 0.15));
    put("psi2", PriorSpec::uniform(0.0, 50.0));
    put("psi3", PriorSpec::normal(6.9, 14.4));
    put("P0", PriorSpec::normal(0.3, 0.9));
    put("lambda", PriorSpec::normal(0.6, 0.8));
    put("s", PriorSpec::normal(0.22, 0.26));
    put("delta", PriorSpec::uniform(0.01, 0.14));
    put("alpha", PriorSpec::normal(0.0007, 0.0212));
    put("As", PriorSpec::uniform(5.3, 16.11));
    put("pi", PriorSpec::normal(0.62, 0.66));
    put("A0", PriorSpec::uniform(0.0, 3.0));
    put("rho2", PriorSpec::normal(0.0, 0.75));
    put("rho3", PriorSpec::normal(0.0, 0.75));
    put("tau2", PriorSpec::uniform(1700.0, 2100.0));
    put("tau3", PriorSpec::uniform(1700.0, 2100.0));
    put(
        "tau4",
        PriorSpec::normal(2050.0, 2150.0).truncated_below(2020.0),
    );
    put("kappa", PriorSpec::uniform(0.005, 0.2));
    for (i, name) in STAT_PARAM_NAMES[..9].iter().enumerate() {
        let diagonal = i % 4 == 0;
        put(
            name,
            if diagonal {
                PriorSpec::normal(0.0, 1.0)
            } else {
                PriorSpec::normal(-1.0, 1.0)
            },
        );
    }
    for name in &STAT_PARAM_NAMES[9..] {
        put(name, PriorSpec::log_normal_location_scale(-1.0, 1.0));
    }
    p
}

impl ScenarioConfig {
    /// The standard scenario: 6,000 GtC over 1700-2500.
    pub fn standard() -> Self {
        ScenarioConfig {
            name: "standard".to_string(),
            fossil_limit: FossilLimit {
                limit_gtc: 6000.0,
                window_start: 1700,
                window_end: 2500,
            },
            window: YearWindow {
                start: 1820,
                end: 2014,
            },
            horizons: Horizons::default(),
            experts: ExpertConfig::default(),
            priors: standard_priors(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let mut s = Self::standard();
        s.name = name.to_string();
        match name {
            "standard" => {}
            "low_fossil" => {
                s.fossil_limit = FossilLimit {
                    limit_gtc: 3000.0,
                    window_start: 2015,
                    window_end: 2500,
                };
            }
            "high_fossil" => {
                s.fossil_limit = FossilLimit {
                    limit_gtc: 10000.0,
                    window_start: 2015,
                    window_end: 2500,
                };
            }
            "delayed_zero_carbon" => {
                s.priors.insert(
                    "tau4".into(),
                    PriorSpec::normal(2100.0, 2400.0).truncated_below(2020.0),
                );
            }
            "alt_priors" => {
                s.priors
                    .insert("lambda".into(), PriorSpec::log_normal(0.6, 0.8));
                s.priors
                    .insert("s".into(), PriorSpec::log_normal(0.22, 0.26));
                s.priors.insert("As".into(), PriorSpec::normal(5.3, 16.11));
                s.priors
                    .insert("pi".into(), PriorSpec::log_normal(0.62, 0.66));
            }
            "alt_tau4" => {
                s.priors.insert(
                    "tau4".into(),
                    PriorSpec::normal(2050.0, 2250.0).truncated_below(2020.0),
                );
            }
            other => {
                return Err(Error::config(format!(
                    "unknown scenario preset `{other}` (known: {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        }
        Ok(s)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)
            .map_err(|e| Error::config(format!("invalid scenario file: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let fl = &self.fossil_limit;
        if !(fl.limit_gtc > 0.0 && fl.limit_gtc.is_finite()) {
            return Err(Error::config("fossil limit must be positive"));
        }
        if fl.window_end < fl.window_start {
            return Err(Error::config(
                "fossil accounting window end precedes its start",
            ));
        }
        if self.window.end < self.window.start {
            return Err(Error::config("calibration window end precedes its start"));
        }
        let h = &self.horizons;
        if h.simulation_end < fl.window_end || h.model_start > fl.window_start {
            return Err(Error::config(
                "simulation horizon must cover the fossil accounting window",
            ));
        }
        if h.report_end < h.report_start
            || h.report_end > h.simulation_end
            || h.report_start < h.model_start
        {
            return Err(Error::config(
                "reporting window must lie inside the simulation horizon",
            ));
        }
        if h.model_start > self.window.start {
            return Err(Error::config(
                "calibration window starts before the model start year",
            ));
        }
        let known = parameter_names();
        for name in self.priors.keys() {
            if !known.iter().any(|k| k == name) {
                return Err(Error::config(format!(
                    "unknown parameter `{name}` in priors"
                )));
            }
        }
        for name in &known {
            let spec = self
                .priors
                .get(name)
                .ok_or_else(|| Error::config(format!("missing prior for `{name}`")))?;
            spec.build(name, physical_domain(name))?;
        }
        for (label, e) in [
            ("growth", &self.experts.growth),
            ("emissions", &self.experts.emissions),
        ] {
            if let Some(d) = &e.density {
                d.validate().map_err(|_| {
                    Error::config(format!("{label} expert density has invalid scale"))
                })?;
            }
        }
        Ok(())
    }

    /// Priors of all 32 parameters in canonical order.
    pub fn build_priors(&self) -> Result<Vec<Prior>> {
        parameter_names()
            .iter()
            .map(|name| {
                self.priors
                    .get(name)
                    .ok_or_else(|| Error::config(format!("missing prior for `{name}`")))?
                    .build(name, physical_domain(name))
            })
            .collect()
    }

    /// Priors of the 17 structural parameters in canonical order.
    pub fn model_priors(&self) -> Result<Vec<(String, Prior)>> {
        let all = self.build_priors()?;
        Ok(MODEL_PARAM_NAMES
            .iter()
            .zip(all)
            .map(|(n, p)| (n.to_string(), p))
            .collect())
    }

    pub fn set_experts(&mut self, toggle: ExpertToggle) {
        self.experts.growth.enabled = toggle.growth();
        self.experts.emissions.enabled = toggle.emissions();
    }
}

/// Resolves a preset name or reads a TOML scenario file.
pub fn load_scenario(name_or_path: &str) -> Result<ScenarioConfig> {
    if PRESET_NAMES.contains(&name_or_path) {
        return ScenarioConfig::preset(name_or_path);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::config(format!(
            "`{name_or_path}` is neither a preset ({}) nor an existing file",
            PRESET_NAMES.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            let s = ScenarioConfig::preset(name).unwrap();
            s.validate().unwrap();
            assert_eq!(s.build_priors().unwrap().len(), 32);
        }
        assert!(ScenarioConfig::preset("nope").is_err());
    }

    #[test]
    fn fossil_presets() {
        let s = load_scenario("standard").unwrap();
        assert_eq!(s.fossil_limit.limit_gtc, 6000.0);
        assert_eq!(
            (s.fossil_limit.window_start, s.fossil_limit.window_end),
            (1700, 2500)
        );
        let low = load_scenario("low_fossil").unwrap();
        assert_eq!(low.fossil_limit.limit_gtc, 3000.0);
        assert_eq!(
            (low.fossil_limit.window_start, low.fossil_limit.window_end),
            (2015, 2500)
        );
        let high = load_scenario("high_fossil").unwrap();
        assert_eq!(high.fossil_limit.limit_gtc, 10000.0);
    }

    #[test]
    fn tau4_variants() {
        let idx = crate::params::parameter_index("tau4").unwrap();
        let std = ScenarioConfig::standard().build_priors().unwrap()[idx];
        assert!((std.cdf(2050.0) - 0.025).abs() < 1e-3);
        assert_eq!(std.support().0, 2020.0);
        let delayed = ScenarioConfig::preset("delayed_zero_carbon")
            .unwrap()
            .build_priors()
            .unwrap()[idx];
        // Truncation at 2020 removes the mass below it and renormalizes.
        let sd = 150.0 / crate::prior::z975();
        let cut = statrs::function::erf::erfc(230.0 / sd / std::f64::consts::SQRT_2) / 2.0;
        assert!((delayed.cdf(2100.0) - (0.025 - cut) / (1.0 - cut)).abs() < 1e-9);
        let alt = ScenarioConfig::preset("alt_tau4")
            .unwrap()
            .build_priors()
            .unwrap()[idx];
        assert!((alt.cdf(2250.0) - 0.975).abs() < 1e-3);
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let s = ScenarioConfig::preset("alt_priors").unwrap();
        let text = s.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.config_hash(), s.config_hash());
        assert_ne!(s.config_hash(), ScenarioConfig::standard().config_hash());
    }

    #[test]
    fn inverted_prior_bounds_name_the_parameter() {
        let mut s = ScenarioConfig::standard();
        s.priors
            .insert("kappa".into(), PriorSpec::uniform(0.2, 0.005));
        let err = ScenarioConfig::from_toml_str(&s.to_toml_string()).unwrap_err();
        assert!(err.to_string().contains("kappa"), "{err}");
    }

    #[test]
    fn unknown_and_missing_parameters() {
        let mut s = ScenarioConfig::standard();
        s.priors.insert("zeta".into(), PriorSpec::uniform(0.0, 1.0));
        assert!(s.validate().unwrap_err().to_string().contains("zeta"));
        let mut s = ScenarioConfig::standard();
        s.priors.remove("psi2");
        assert!(s.validate().unwrap_err().to_string().contains("psi2"));
    }

    #[test]
    fn expert_toggles() {
        let mut s = ScenarioConfig::standard();
        s.set_experts("both".parse().unwrap());
        assert!(s.experts.growth.enabled && s.experts.emissions.enabled);
        s.set_experts("growth".parse().unwrap());
        assert!(s.experts.growth.enabled && !s.experts.emissions.enabled);
        assert!("some".parse::<ExpertToggle>().is_err());
    }

    #[test]
    fn normal_density_at_mean() {
        let d = UnivariateDensity::Normal {
            mean: 20.0,
            sd: 4.0,
        };
        let expected = -(4.0 * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((d.ln_pdf(20.0) - expected).abs() < 1e-14);
    }
}
