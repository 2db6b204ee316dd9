//! Study configuration: a flat `key = value` text format.
//!
//! Blank lines and text after `#` are ignored. Lists are comma separated.
//! Every key is optional except `model`; omitted keys take the defaults
//! listed in [`KEYS`].

use std::collections::BTreeMap;

use crate::hmc::HmcConfig;
use crate::influence::{Estimator, InfluenceOptions};
use crate::models::{ErrorFamily, GarchDeletion, ModelKind};
use crate::{Error, Result};

use super::generate::GARCH_BURNIN;

/// Recognized keys with a short description.
pub const KEYS: &[(&str, &str)] = &[
    ("study", "influence | bias (default influence)"),
    ("model", "logistic | spatial | garch (required)"),
    ("true_params", "logistic: β₀,β₁,β₂; spatial: β₀..β₅,σ²; garch: α₀,α₁,β₁"),
    ("n", "sample size (series length for garch)"),
    ("prior", "prior preset 1, 2 or 3"),
    ("scenarios", "comma-separated subset of I, II, III, IV"),
    ("watched", "watched observation indices (1-based)"),
    ("replications", "number of replications m"),
    ("seed", "master seed"),
    ("chains", "HMC chains"),
    ("iterations", "HMC iterations per chain, warmup included"),
    ("warmup", "HMC warmup iterations"),
    ("num_leapfrog", "leapfrog steps per iteration"),
    ("step_size", "initial step size"),
    ("target_accept", "dual-averaging target acceptance"),
    ("estimator", "kl_fast | general_alpha"),
    ("alpha", "ψ_α exponent for general_alpha"),
    ("multiplier", "flag threshold multiplier on 1/n"),
    ("garch_errors", "normal | student_t"),
    ("garch_nu", "Student-t degrees of freedom (> 2)"),
    ("garch_deletion", "impute_zero | drop_term_only"),
    ("garch_burnin", "discarded generator warm-up values"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    I,
    II,
    III,
    IV,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::I, Scenario::II, Scenario::III, Scenario::IV];

    /// Number of contaminated watched observations.
    pub fn contaminated_count(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::I => "I",
            Self::II => "II",
            Self::III => "III",
            Self::IV => "IV",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" => Ok(Self::I),
            "II" => Ok(Self::II),
            "III" => Ok(Self::III),
            "IV" => Ok(Self::IV),
            other => Err(Error::config(
                "scenarios",
                format!("unknown scenario `{other}`; valid labels are I, II, III, IV"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Bias,
    Influence,
}

impl StudyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Bias => "bias",
            Self::Influence => "influence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchOptions {
    pub family: ErrorFamily,
    pub deletion: GarchDeletion,
    pub burnin: usize,
}

impl Default for GarchOptions {
    fn default() -> Self {
        Self {
            family: ErrorFamily::Normal,
            deletion: GarchDeletion::ImputeZero,
            burnin: GARCH_BURNIN,
        }
    }
}

/// A replication study.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub study: StudyKind,
    pub model_kind: ModelKind,
    pub true_params: Vec<f64>,
    pub n: usize,
    pub prior_id: u8,
    pub scenarios: Vec<Scenario>,
    pub watched_indices: Vec<usize>,
    pub replications: usize,
    pub hmc: HmcConfig,
    pub master_seed: u64,
    pub influence: InfluenceOptions,
    pub garch: GarchOptions,
}

/// Bundled presets, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("table1_desk", include_str!("../../../../configs/table1_desk.cfg")),
    ("table5_desk", include_str!("../../../../configs/table5_desk.cfg")),
    ("table5_model1", include_str!("../../../../configs/table5_model1.cfg")),
    ("table6_desk", include_str!("../../../../configs/table6_desk.cfg")),
    ("table7_desk", include_str!("../../../../configs/table7_desk.cfg")),
];

/// Splits `key = value` lines into a map.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {}", k + 1), format!("expected `key = value`, got `{line}`"))
        })?;
        let key = key.trim().to_ascii_lowercase();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::config(key, "duplicate key"));
        }
    }
    Ok(map)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{}`", v.trim())))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

struct Defaults {
    true_params: &'static [f64],
    n: usize,
    prior: u8,
    watched: &'static [usize],
}

fn defaults(kind: ModelKind) -> Defaults {
    match kind {
        ModelKind::Spatial => Defaults {
            true_params: &[3.0, 0.25, 0.65, 0.2, -0.3, -0.2, 1.0],
            n: 50,
            prior: 2,
            watched: &[3, 15, 19],
        },
        ModelKind::Garch => Defaults {
            true_params: &[2.0, 0.2, 0.6],
            n: 100,
            prior: 3,
            watched: &[19, 44, 64],
        },
        _ => Defaults {
            true_params: &[-3.0, -0.7, 0.3],
            n: 100,
            prior: 3,
            watched: &[19, 44, 64],
        },
    }
}

impl ScenarioConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_map(&parse_kv(text)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                Error::config("preset", format!("unknown preset `{name}`; expected one of {}", names.join(", ")))
            })?;
        Self::from_text(text)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KEYS.iter().any(|(name, _)| name == k)) {
            let valid: Vec<&str> = KEYS.iter().map(|(n, _)| *n).collect();
            return Err(Error::config(k.as_str(), format!("unknown key; valid keys are {}", valid.join(", "))));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let model_kind: ModelKind = get("model")
            .ok_or_else(|| Error::config("model", "missing required key"))?
            .parse()?;
        let d = defaults(model_kind);
        let study = match get("study").unwrap_or("influence").trim() {
            "influence" => StudyKind::Influence,
            "bias" => StudyKind::Bias,
            other => {
                return Err(Error::config("study", format!("unknown study `{other}`; expected influence or bias")))
            }
        };
        let scenarios = match get("scenarios") {
            Some(v) => {
                let mut s = v
                    .split(',')
                    .filter(|x| !x.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<Vec<Scenario>>>()?;
                s.sort();
                s.dedup();
                s
            }
            None if study == StudyKind::Bias => vec![Scenario::I],
            None => Scenario::ALL.to_vec(),
        };
        let num = |k: &str| get(k).map(|v| parse_num::<f64>(k, v)).transpose();
        let int = |k: &str| get(k).map(|v| parse_num::<usize>(k, v)).transpose();

        let base = HmcConfig::default();
        let hmc = HmcConfig {
            chains: int("chains")?.unwrap_or(2),
            iterations: int("iterations")?.unwrap_or(2000),
            warmup: int("warmup")?.unwrap_or(1000),
            num_leapfrog: int("num_leapfrog")?.unwrap_or(base.num_leapfrog),
            step_size: num("step_size")?.unwrap_or(base.step_size),
            target_accept: num("target_accept")?.unwrap_or(base.target_accept),
            ..base
        };
        let influence = InfluenceOptions {
            estimator: get("estimator").map(str::parse).transpose()?.unwrap_or(Estimator::KlFast),
            alpha: num("alpha")?.unwrap_or(1.0),
            multiplier: num("multiplier")?.unwrap_or(1.0),
        };
        let family = match get("garch_errors").unwrap_or("normal").trim() {
            "normal" => ErrorFamily::Normal,
            "student_t" => ErrorFamily::StudentT {
                nu: num("garch_nu")?.unwrap_or(ErrorFamily::DEFAULT_NU),
            },
            other => {
                return Err(Error::config(
                    "garch_errors",
                    format!("unknown error family `{other}`; expected normal or student_t"),
                ))
            }
        };
        let deletion = match get("garch_deletion").unwrap_or("impute_zero").trim() {
            "impute_zero" => GarchDeletion::ImputeZero,
            "drop_term_only" => GarchDeletion::DropTermOnly,
            other => {
                return Err(Error::config(
                    "garch_deletion",
                    format!("unknown deletion `{other}`; expected impute_zero or drop_term_only"),
                ))
            }
        };
        let cfg = Self {
            study,
            model_kind,
            true_params: get("true_params")
                .map(|v| parse_list("true_params", v))
                .transpose()?
                .unwrap_or_else(|| d.true_params.to_vec()),
            n: int("n")?.unwrap_or(d.n),
            prior_id: get("prior").map(|v| parse_num("prior", v)).transpose()?.unwrap_or(d.prior),
            scenarios,
            watched_indices: get("watched")
                .map(|v| parse_list("watched", v))
                .transpose()?
                .unwrap_or_else(|| d.watched.to_vec()),
            replications: int("replications")?.unwrap_or(50),
            hmc,
            master_seed: get("seed").map(|v| parse_num("seed", v)).transpose()?.unwrap_or(1),
            influence,
            garch: GarchOptions {
                family,
                deletion,
                burnin: int("garch_burnin")?.unwrap_or(GARCH_BURNIN),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = match self.model_kind {
            ModelKind::Logistic => 3,
            ModelKind::Spatial => 7,
            ModelKind::Garch => 3,
            ModelKind::NormalMean => {
                return Err(Error::config("model", "normal_mean is not available for studies"))
            }
        };
        if self.true_params.len() != expected {
            return Err(Error::config(
                "true_params",
                format!("{} needs {expected} values, got {}", self.model_kind.as_str(), self.true_params.len()),
            ));
        }
        if self.model_kind == ModelKind::Spatial && !(self.true_params[6] > 0.0) {
            return Err(Error::config("true_params", "σ² must be positive"));
        }
        if self.model_kind == ModelKind::Garch {
            let p = &self.true_params;
            if !(p[0] > 0.0 && p[1] >= 0.0 && p[2] >= 0.0 && p[1] + p[2] < 1.0) {
                return Err(Error::config("true_params", "garch needs α₀ > 0, α₁, β₁ ≥ 0, α₁ + β₁ < 1"));
            }
        }
        if !(1..=3).contains(&self.prior_id) {
            return Err(Error::config("prior", format!("unknown prior {}; expected 1, 2 or 3", self.prior_id)));
        }
        let min_n = match self.model_kind {
            ModelKind::Spatial => 8,
            _ => 5,
        };
        if self.n < min_n {
            return Err(Error::config("n", format!("must be at least {min_n}")));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be positive"));
        }
        if self.scenarios.is_empty() {
            return Err(Error::config("scenarios", "at least one scenario is required"));
        }
        if self.study == StudyKind::Bias && self.scenarios != [Scenario::I] {
            return Err(Error::config("scenarios", "bias studies run on uncontaminated data (scenario I only)"));
        }
        if self.study == StudyKind::Influence {
            if self.watched_indices.is_empty() {
                return Err(Error::config("watched", "at least one watched index is required"));
            }
            let mut seen = self.watched_indices.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != self.watched_indices.len() {
                return Err(Error::config("watched", "indices must be distinct"));
            }
            if let Some(&bad) = self.watched_indices.iter().find(|&&i| i == 0 || i > self.n) {
                return Err(Error::config("watched", format!("index {bad} outside 1..={}", self.n)));
            }
            if self.model_kind == ModelKind::Garch && self.watched_indices.contains(&1) {
                return Err(Error::config("watched", "garch observation 1 has no likelihood term"));
            }
            let need = self.scenarios.iter().map(|s| s.contaminated_count()).max().unwrap_or(0);
            if need > self.watched_indices.len() {
                return Err(Error::config(
                    "scenarios",
                    format!("scenario needs {need} watched indices, only {} given", self.watched_indices.len()),
                ));
            }
            if !(self.influence.multiplier > 0.0) {
                return Err(Error::config("multiplier", "must be positive"));
            }
            if !self.influence.alpha.is_finite() {
                return Err(Error::config("alpha", "must be finite"));
            }
        }
        if let ErrorFamily::StudentT { nu } = self.garch.family {
            if !(nu > 2.0) {
                return Err(Error::config("garch_nu", "must exceed 2"));
            }
        }
        self.hmc.validate(1)
    }

    /// Watched indices contaminated under `scenario`: the last
    /// `contaminated_count` of them, so that scenarios are nested.
    pub fn contaminated(&self, scenario: Scenario) -> Vec<usize> {
        let k = scenario.contaminated_count();
        self.watched_indices[self.watched_indices.len() - k..].to_vec()
    }

    /// Fully resolved settings as key/value pairs, sorted by key.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("study", self.study.as_str().into());
        put("model", self.model_kind.as_str().into());
        put("true_params", join(&self.true_params));
        put("n", self.n.to_string());
        put("prior", self.prior_id.to_string());
        put(
            "scenarios",
            self.scenarios.iter().map(|s| s.label()).collect::<Vec<_>>().join(","),
        );
        put("watched", join(&self.watched_indices));
        put("replications", self.replications.to_string());
        put("seed", self.master_seed.to_string());
        put("chains", self.hmc.chains.to_string());
        put("iterations", self.hmc.iterations.to_string());
        put("warmup", self.hmc.warmup.to_string());
        put("num_leapfrog", self.hmc.num_leapfrog.to_string());
        put("step_size", self.hmc.step_size.to_string());
        put("target_accept", self.hmc.target_accept.to_string());
        put("estimator", self.influence.estimator.as_str().into());
        put("alpha", self.influence.alpha.to_string());
        put("multiplier", self.influence.multiplier.to_string());
        match self.garch.family {
            ErrorFamily::Normal => put("garch_errors", "normal".into()),
            ErrorFamily::StudentT { nu } => {
                put("garch_errors", "student_t".into());
                put("garch_nu", nu.to_string());
            }
        }
        put(
            "garch_deletion",
            match self.garch.deletion {
                GarchDeletion::ImputeZero => "impute_zero",
                GarchDeletion::DropTermOnly => "drop_term_only",
            }
            .into(),
        );
        put("garch_burnin", self.garch.burnin.to_string());
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let m = parse_kv("# header\nmodel = logistic  # trailing\n\nwatched = 1, 2,3\n").unwrap();
        assert_eq!(m["model"], "logistic");
        assert_eq!(m["watched"], "1, 2,3");
        assert!(parse_kv("model logistic").is_err());
        assert!(parse_kv("n = 1\nn = 2").is_err());
    }

    #[test]
    fn defaults_follow_the_model() {
        let c = ScenarioConfig::from_text("model = spatial").unwrap();
        assert_eq!(c.n, 50);
        assert_eq!(c.watched_indices, vec![3, 15, 19]);
        assert_eq!(c.scenarios, Scenario::ALL.to_vec());
        assert_eq!(c.hmc.chains, 2);
        assert_eq!(c.hmc.iterations, 2000);
        assert_eq!(c.hmc.warmup, 1000);
    }

    #[test]
    fn scenarios_are_nested() {
        let c = ScenarioConfig::from_text("model = logistic").unwrap();
        assert!(c.contaminated(Scenario::I).is_empty());
        assert_eq!(c.contaminated(Scenario::II), vec![64]);
        assert_eq!(c.contaminated(Scenario::III), vec![44, 64]);
        assert_eq!(c.contaminated(Scenario::IV), vec![19, 44, 64]);
    }

    #[test]
    fn errors_name_the_field() {
        let err = ScenarioConfig::from_text("model = logistic\nscenarios = I, V").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("scenarios") && msg.contains("I, II, III, IV"), "{msg}");
        let err = ScenarioConfig::from_text("model = logistic\ncolour = red").unwrap_err();
        assert!(err.to_string().contains("colour"));
        let err = ScenarioConfig::from_text("model = logistic\nwatched = 19, 400").unwrap_err();
        assert!(err.to_string().contains("watched"));
        let err = ScenarioConfig::from_text("model = garch\nwatched = 1, 5").unwrap_err();
        assert!(err.to_string().contains("watched"));
        let err = ScenarioConfig::from_text("model = garch\ntrue_params = 1, 0.5, 0.5").unwrap_err();
        assert!(err.to_string().contains("true_params"));
        let err = ScenarioConfig::from_text("model = logistic\niterations = 500\nwarmup = 500").unwrap_err();
        assert!(err.to_string().contains("iterations") || err.to_string().contains("warmup"), "{err}");
        assert!(ScenarioConfig::from_text("n = 5").is_err());
        assert!(ScenarioConfig::from_text("model = logistic\nstudy = bias\nscenarios = II").is_err());
    }

    #[test]
    fn presets_parse_and_round_trip() {
        for (name, _) in PRESETS {
            let c = ScenarioConfig::preset(name).unwrap();
            let text: String = c
                .to_pairs()
                .iter()
                .map(|(k, v)| format!("{k} = {v}\n"))
                .collect();
            let back = ScenarioConfig::from_text(&text).unwrap();
            assert_eq!(back.to_pairs(), c.to_pairs(), "{name}");
        }
        assert!(ScenarioConfig::preset("table9").is_err());
    }
}
