//! Posterior models.
//!
//! Every model samples on an unconstrained scale (log for positive
//! parameters, logit for unit-interval parameters); the log-Jacobians of
//! those transforms are part of [`PosteriorModel::log_prior`], so the target
//! density is `log_likelihood + log_prior` on the sampling scale.
//!
//! Observation indices are 1-based throughout the public API.

mod garch;
mod logistic;
mod normal_mean;
pub mod prior;
mod spatial;

pub use garch::{garch_volatility, ErrorFamily, GarchDeletion, GarchModel, GarchPrior};
pub use logistic::LogisticModel;
pub use normal_mean::NormalMeanModel;
pub use prior::{BetaPrior, CoefficientPrior, GammaPrior};
pub use spatial::{spatial_design, SpatialTrendModel};

use serde::{Deserialize, Serialize};

use crate::hmc::TargetDensity;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Remove the observations' likelihood contributions.
    CaseDeletion,
    /// Shift continuous responses by five sample standard deviations.
    Additive5Sigma,
    /// Swap binary responses 0 ↔ 1.
    LabelFlip,
}

impl PerturbationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::CaseDeletion => "case_deletion",
            Self::Additive5Sigma => "additive_5sigma",
            Self::LabelFlip => "label_flip",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseKind {
    Binary,
    Continuous,
}

/// A perturbation applied to a set of observations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationScheme {
    pub kind: PerturbationKind,
    /// Sorted, de-duplicated, 1-based.
    pub indices: Vec<usize>,
}

impl PerturbationScheme {
    pub fn new(kind: PerturbationKind, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut indices: Vec<usize> = indices.into_iter().collect();
        indices.sort_unstable();
        indices.dedup();
        Self { kind, indices }
    }

    pub fn case_deletion(indices: impl IntoIterator<Item = usize>) -> Self {
        Self::new(PerturbationKind::CaseDeletion, indices)
    }

    pub fn additive(indices: impl IntoIterator<Item = usize>) -> Self {
        Self::new(PerturbationKind::Additive5Sigma, indices)
    }

    pub fn label_flip(indices: impl IntoIterator<Item = usize>) -> Self {
        Self::new(PerturbationKind::LabelFlip, indices)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Checks index bounds and that the kind suits the response type.
    pub fn validate(&self, n: usize, response: ResponseKind) -> Result<()> {
        if let Some(&bad) = self.indices.iter().find(|&&i| i == 0 || i > n) {
            return Err(Error::IndexOutOfRange { index: bad, n });
        }
        match (self.kind, response) {
            (PerturbationKind::LabelFlip, ResponseKind::Continuous) => Err(Error::InvalidScheme(
                "label_flip requires a binary response".into(),
            )),
            (PerturbationKind::Additive5Sigma, ResponseKind::Binary) => Err(Error::InvalidScheme(
                "additive_5sigma requires a continuous response".into(),
            )),
            _ => Ok(()),
        }
    }

    /// 0-based membership mask of length `n`.
    pub(crate) fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in &self.indices {
            m[i - 1] = true;
        }
        m
    }
}

/// A posterior whose likelihood factorizes (possibly conditionally) over
/// observations.
pub trait PosteriorModel: TargetDensity {
    fn kind(&self) -> ModelKind;

    fn n_obs(&self) -> usize;

    fn response_kind(&self) -> ResponseKind;

    /// Names of the sampling-scale coordinates.
    fn param_names(&self) -> Vec<String>;

    /// Names of the reporting-scale parameters returned by [`Self::to_natural`].
    fn natural_names(&self) -> Vec<String>;

    fn to_natural(&self, theta: &[f64]) -> Vec<f64>;

    /// A reasonable in-support starting point for sampling.
    fn initial_point(&self) -> Vec<f64>;

    fn log_likelihood(&self, theta: &[f64]) -> f64;

    /// Log prior on the sampling scale, transform Jacobians included.
    fn log_prior(&self, theta: &[f64]) -> f64;

    /// Log of the `i`-th likelihood factor.
    fn obs_log_likelihood(&self, theta: &[f64], i: usize) -> Result<f64>;

    fn perturbed_log_likelihood(&self, theta: &[f64], scheme: &PerturbationScheme)
        -> Result<f64>;

    /// `log f_δ(y|θ) − log f(y|θ)`.
    fn log_perturbation_ratio(&self, theta: &[f64], scheme: &PerturbationScheme) -> Result<f64> {
        Ok(self.perturbed_log_likelihood(theta, scheme)? - self.log_likelihood(theta))
    }

    /// Observations that carry a likelihood term and can be scored.
    fn scored_observations(&self) -> Vec<usize> {
        (1..=self.n_obs()).collect()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n_obs() {
            Err(Error::IndexOutOfRange {
                index: i,
                n: self.n_obs(),
            })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Spatial,
    Garch,
    NormalMean,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Logistic => "logistic",
            Self::Spatial => "spatial",
            Self::Garch => "garch",
            Self::NormalMean => "normal_mean",
        }
    }

    /// The contamination used by simulation studies for this response type.
    pub fn contamination_kind(&self) -> PerturbationKind {
        match self {
            Self::Logistic => PerturbationKind::LabelFlip,
            _ => PerturbationKind::Additive5Sigma,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logistic" => Ok(Self::Logistic),
            "spatial" => Ok(Self::Spatial),
            "garch" => Ok(Self::Garch),
            other => Err(Error::config(
                "model",
                format!("unknown model `{other}`; expected one of logistic, spatial, garch"),
            )),
        }
    }
}

/// Prior presets indexed 1..=3 for each model family.
pub fn logistic_prior_preset(id: u8) -> Result<CoefficientPrior> {
    match id {
        1 => Ok(CoefficientPrior::Normal { scale: 10.0 }),
        2 => Ok(CoefficientPrior::Cauchy { scale: 10.0 }),
        3 => Ok(CoefficientPrior::Cauchy { scale: 2.5 }),
        _ => Err(bad_prior(id)),
    }
}

/// `(coefficient sd, σ² prior)`.
pub fn spatial_prior_preset(id: u8) -> Result<(f64, GammaPrior)> {
    match id {
        1 => Ok((100.0, GammaPrior::new(2.0, 0.1))),
        2 => Ok((10.0, GammaPrior::new(2.0, 0.1))),
        3 => Ok((10.0, GammaPrior::new(0.1, 0.1))),
        _ => Err(bad_prior(id)),
    }
}

pub fn garch_prior_preset(id: u8) -> Result<GarchPrior> {
    let p = |a0, b0, c1, d1, e1, f1| GarchPrior {
        alpha0: GammaPrior::new(a0, b0),
        alpha1: BetaPrior::new(c1, d1),
        beta1: BetaPrior::new(e1, f1),
    };
    match id {
        1 => Ok(p(0.1, 0.1, 2.0, 2.0, 2.0, 2.0)),
        2 => Ok(p(0.1, 0.1, 2.0, 3.0, 3.0, 2.0)),
        3 => Ok(p(0.5, 0.5, 2.0, 3.0, 3.0, 2.0)),
        _ => Err(bad_prior(id)),
    }
}

fn bad_prior(id: u8) -> Error {
    Error::config("prior", format!("unknown prior {id}; expected 1, 2 or 3"))
}

/// Sample standard deviation with divisor n − 1.
pub fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Any of the three shipped models, for runtime dispatch.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Logistic(LogisticModel),
    Spatial(SpatialTrendModel),
    Garch(GarchModel),
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnyModel::Logistic($m) => $e,
            AnyModel::Spatial($m) => $e,
            AnyModel::Garch($m) => $e,
        }
    };
}

impl TargetDensity for AnyModel {
    fn dim(&self) -> usize {
        dispatch!(self, m => m.dim())
    }
    fn log_density(&self, theta: &[f64]) -> f64 {
        dispatch!(self, m => m.log_density(theta))
    }
    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        dispatch!(self, m => m.log_density_and_grad(theta, grad))
    }
}

impl PosteriorModel for AnyModel {
    fn kind(&self) -> ModelKind {
        dispatch!(self, m => m.kind())
    }
    fn n_obs(&self) -> usize {
        dispatch!(self, m => m.n_obs())
    }
    fn response_kind(&self) -> ResponseKind {
        dispatch!(self, m => m.response_kind())
    }
    fn param_names(&self) -> Vec<String> {
        dispatch!(self, m => m.param_names())
    }
    fn natural_names(&self) -> Vec<String> {
        dispatch!(self, m => m.natural_names())
    }
    fn to_natural(&self, theta: &[f64]) -> Vec<f64> {
        dispatch!(self, m => m.to_natural(theta))
    }
    fn initial_point(&self) -> Vec<f64> {
        dispatch!(self, m => m.initial_point())
    }
    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        dispatch!(self, m => m.log_likelihood(theta))
    }
    fn log_prior(&self, theta: &[f64]) -> f64 {
        dispatch!(self, m => m.log_prior(theta))
    }
    fn obs_log_likelihood(&self, theta: &[f64], i: usize) -> Result<f64> {
        dispatch!(self, m => m.obs_log_likelihood(theta, i))
    }
    fn perturbed_log_likelihood(
        &self,
        theta: &[f64],
        scheme: &PerturbationScheme,
    ) -> Result<f64> {
        dispatch!(self, m => m.perturbed_log_likelihood(theta, scheme))
    }
    fn log_perturbation_ratio(&self, theta: &[f64], scheme: &PerturbationScheme) -> Result<f64> {
        dispatch!(self, m => m.log_perturbation_ratio(theta, scheme))
    }
    fn scored_observations(&self) -> Vec<usize> {
        dispatch!(self, m => m.scored_observations())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_validation() {
        let s = PerturbationScheme::label_flip([3, 1, 3]);
        assert_eq!(s.indices, vec![1, 3]);
        assert!(s.validate(3, ResponseKind::Binary).is_ok());
        assert!(s.validate(2, ResponseKind::Binary).is_err());
        assert!(s.validate(3, ResponseKind::Continuous).is_err());
        assert!(PerturbationScheme::additive([1])
            .validate(3, ResponseKind::Binary)
            .is_err());
        assert!(matches!(
            PerturbationScheme::case_deletion([0]).validate(3, ResponseKind::Binary),
            Err(Error::IndexOutOfRange { index: 0, n: 3 })
        ));
    }

    #[test]
    fn model_kind_parsing() {
        assert_eq!("GARCH".parse::<ModelKind>().unwrap(), ModelKind::Garch);
        assert!("poisson".parse::<ModelKind>().is_err());
    }

    #[test]
    fn sample_sd_matches_hand_value() {
        let sd = sample_sd(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((sd - 2.5f64.sqrt()).abs() < 1e-15);
    }
}
