use ndarray::{Array1, Array2, ArrayView1};

use super::prior::{sigmoid, softplus, CoefficientPrior};
use super::{ModelKind, PerturbationKind, PerturbationScheme, PosteriorModel, ResponseKind};
use crate::hmc::TargetDensity;
use crate::{Error, Result};

/// Bayesian logistic regression with the canonical link.
///
/// The Bernoulli log-likelihood is `Σ y_i η_i − log(1 + e^{η_i})` with
/// `η = Xβ`. Coefficients are sampled directly (no transform).
#[derive(Debug, Clone)]
pub struct LogisticModel {
    x: Array2<f64>,
    y: Array1<f64>,
    priors: Vec<CoefficientPrior>,
}

impl LogisticModel {
    /// `x` must already contain the intercept column.
    pub fn new(x: Array2<f64>, y: Array1<f64>, priors: Vec<CoefficientPrior>) -> Result<Self> {
        let (n, k) = x.dim();
        if y.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if priors.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                got: priors.len(),
            });
        }
        if n < k {
            return Err(Error::Domain(format!(
                "need at least as many observations as coefficients ({n} < {k})"
            )));
        }
        if let Some(v) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::Domain(format!("response must be 0 or 1, found {v}")));
        }
        if priors.iter().any(|p| !(p.scale() > 0.0)) {
            return Err(Error::Domain("prior scales must be positive".into()));
        }
        Ok(Self { x, y, priors })
    }

    /// Same prior on every coefficient.
    pub fn with_common_prior(x: Array2<f64>, y: Array1<f64>, prior: CoefficientPrior) -> Result<Self> {
        let k = x.ncols();
        Self::new(x, y, vec![prior; k])
    }

    pub fn design(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn response(&self) -> &Array1<f64> {
        &self.y
    }

    fn linear_predictor(&self, beta: &[f64]) -> Array1<f64> {
        self.x.dot(&ArrayView1::from(beta))
    }

    fn term(y: f64, eta: f64) -> f64 {
        y * eta - softplus(eta)
    }
}

impl TargetDensity for LogisticModel {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        self.log_likelihood(theta) + self.log_prior(theta)
    }

    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let eta = self.linear_predictor(theta);
        let mut ll = 0.0;
        let mut resid = Array1::zeros(eta.len());
        for (i, (&e, &y)) in eta.iter().zip(&self.y).enumerate() {
            ll += Self::term(y, e);
            resid[i] = y - sigmoid(e);
        }
        let g = self.x.t().dot(&resid);
        for (j, gj) in grad.iter_mut().enumerate() {
            *gj = g[j] + self.priors[j].grad(theta[j]);
        }
        ll + self.log_prior(theta)
    }
}

impl PosteriorModel for LogisticModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Logistic
    }

    fn n_obs(&self) -> usize {
        self.y.len()
    }

    fn response_kind(&self) -> ResponseKind {
        ResponseKind::Binary
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|j| format!("beta{j}")).collect()
    }

    fn natural_names(&self) -> Vec<String> {
        self.param_names()
    }

    fn to_natural(&self, theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        self.linear_predictor(theta)
            .iter()
            .zip(&self.y)
            .map(|(&e, &y)| Self::term(y, e))
            .sum()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.priors
            .iter()
            .zip(theta)
            .map(|(p, &b)| p.log_density(b))
            .sum()
    }

    fn obs_log_likelihood(&self, theta: &[f64], i: usize) -> Result<f64> {
        self.check_index(i)?;
        let eta = self.x.row(i - 1).dot(&ArrayView1::from(theta));
        Ok(Self::term(self.y[i - 1], eta))
    }

    fn perturbed_log_likelihood(&self, theta: &[f64], scheme: &PerturbationScheme) -> Result<f64> {
        scheme.validate(self.n_obs(), self.response_kind())?;
        let mask = scheme.mask(self.n_obs());
        let eta = self.linear_predictor(theta);
        let mut ll = 0.0;
        for ((&e, &y), &hit) in eta.iter().zip(&self.y).zip(&mask) {
            ll += match (scheme.kind, hit) {
                (_, false) => Self::term(y, e),
                (PerturbationKind::CaseDeletion, true) => 0.0,
                (PerturbationKind::LabelFlip, true) => Self::term(1.0 - y, e),
                (PerturbationKind::Additive5Sigma, true) => unreachable!("rejected by validate"),
            };
        }
        Ok(ll)
    }

    fn log_perturbation_ratio(&self, theta: &[f64], scheme: &PerturbationScheme) -> Result<f64> {
        scheme.validate(self.n_obs(), self.response_kind())?;
        let beta = ArrayView1::from(theta);
        let mut r = 0.0;
        for &i in &scheme.indices {
            let e = self.x.row(i - 1).dot(&beta);
            let y = self.y[i - 1];
            r += match scheme.kind {
                PerturbationKind::CaseDeletion => -Self::term(y, e),
                PerturbationKind::LabelFlip => (1.0 - 2.0 * y) * e,
                PerturbationKind::Additive5Sigma => unreachable!("rejected by validate"),
            };
        }
        Ok(r)
    }
}
