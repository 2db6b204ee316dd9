use super::prior::LN_2PI;
use super::{ModelKind, PerturbationKind, PerturbationScheme, PosteriorModel, ResponseKind};
use crate::hmc::TargetDensity;
use crate::{Error, Result};

/// Normal observations with known variance and a normal prior on the mean:
/// `y_j ~ N(μ, σ²)`, `μ ~ N(0, τ²)`.
///
/// Everything about this model is available in closed form, which makes it
/// the reference case for checking the Monte Carlo estimators.
#[derive(Debug, Clone)]
pub struct NormalMeanModel {
    y: Vec<f64>,
    sigma2: f64,
    tau2: f64,
    y_sd: f64,
}

impl NormalMeanModel {
    pub fn new(y: Vec<f64>, sigma2: f64, tau2: f64) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::Domain("need at least two observations".into()));
        }
        if !(sigma2 > 0.0 && tau2 > 0.0) {
            return Err(Error::Domain("variances must be positive".into()));
        }
        let y_sd = super::sample_sd(&y);
        Ok(Self { y, sigma2, tau2, y_sd })
    }

    /// `σ² = 1`, `τ² = 100`.
    pub fn standard(y: Vec<f64>) -> Result<Self> {
        Self::new(y, 1.0, 100.0)
    }

    pub fn data(&self) -> &[f64] {
        &self.y
    }

    fn posterior_from(&self, sum: f64, n: usize) -> (f64, f64) {
        let precision = 1.0 / self.tau2 + n as f64 / self.sigma2;
        let var = 1.0 / precision;
        (var * sum / self.sigma2, var)
    }

    /// Posterior `(mean, variance)` of μ.
    pub fn posterior(&self) -> (f64, f64) {
        self.posterior_from(self.y.iter().sum(), self.y.len())
    }

    /// Posterior `(mean, variance)` after deleting the given 1-based indices.
    pub fn deleted_posterior(&self, indices: &[usize]) -> Result<(f64, f64)> {
        let scheme = PerturbationScheme::case_deletion(indices.iter().copied());
        scheme.validate(self.n_obs(), ResponseKind::Continuous)?;
        let mask = scheme.mask(self.n_obs());
        let (sum, n) = self
            .y
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| !m)
            .fold((0.0, 0), |(s, n), (y, _)| (s + y, n + 1));
        Ok(self.posterior_from(sum, n))
    }

    pub fn log_posterior_density(&self, mu: f64) -> f64 {
        let (m, v) = self.posterior();
        -0.5 * (LN_2PI + v.ln()) - 0.5 * (mu - m).powi(2) / v
    }

    /// `log m(y)`; marginally `y ~ N(0, σ² I + τ² 11ᵀ)`.
    pub fn log_marginal(&self) -> f64 {
        let n = self.y.len() as f64;
        let s = self.sigma2;
        let t = self.tau2;
        let sum: f64 = self.y.iter().sum();
        let ss: f64 = self.y.iter().map(|v| v * v).sum();
        let log_det = n * s.ln() + (1.0 + n * t / s).ln();
        let quad = ss / s - t * sum * sum / (s * (s + n * t));
        -0.5 * (n * LN_2PI + log_det + quad)
    }

    /// `KL(p(μ|y) ‖ p(μ|y_{−I}))` for the deletion set `I`.
    pub fn kl_full_vs_deleted(&self, indices: &[usize]) -> Result<f64> {
        let (m1, v1) = self.posterior();
        let (m2, v2) = self.deleted_posterior(indices)?;
        Ok(0.5 * (v2 / v1).ln() + (v1 + (m1 - m2).powi(2)) / (2.0 * v2) - 0.5)
    }

    fn term(&self, y: f64, mu: f64) -> f64 {
        -0.5 * (LN_2PI + self.sigma2.ln()) - 0.5 * (y - mu).powi(2) / self.sigma2
    }
}

impl TargetDensity for NormalMeanModel {
    fn dim(&self) -> usize {
        1
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        self.log_likelihood(theta) + self.log_prior(theta)
    }

    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let mu = theta[0];
        let score: f64 = self.y.iter().map(|y| y - mu).sum::<f64>() / self.sigma2;
        grad[0] = score - mu / self.tau2;
        self.log_density(theta)
    }
}

impl PosteriorModel for NormalMeanModel {
    fn kind(&self) -> ModelKind {
        ModelKind::NormalMean
    }

    fn n_obs(&self) -> usize {
        self.y.len()
    }

    fn response_kind(&self) -> ResponseKind {
        ResponseKind::Continuous
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn natural_names(&self) -> Vec<String> {
        self.param_names()
    }

    fn to_natural(&self, theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![self.y.iter().sum::<f64>() / self.y.len() as f64]
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        self.y.iter().map(|&y| self.term(y, theta[0])).sum()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        -0.5 * (LN_2PI + self.tau2.ln()) - 0.5 * theta[0] * theta[0] / self.tau2
    }

    fn obs_log_likelihood(&self, theta: &[f64], i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.term(self.y[i - 1], theta[0]))
    }

    fn perturbed_log_likelihood(&self, theta: &[f64], scheme: &PerturbationScheme) -> Result<f64> {
        scheme.validate(self.n_obs(), self.response_kind())?;
        let mask = scheme.mask(self.n_obs());
        let shift = 5.0 * self.y_sd;
        Ok(self
            .y
            .iter()
            .zip(&mask)
            .map(|(&y, &hit)| match (hit, scheme.kind) {
                (false, _) => self.term(y, theta[0]),
                (true, PerturbationKind::CaseDeletion) => 0.0,
                (true, _) => self.term(y + shift, theta[0]),
            })
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn model() -> NormalMeanModel {
        NormalMeanModel::standard(vec![0.3, -1.1, 2.4, 0.9, 1.7, -0.2]).unwrap()
    }

    #[test]
    fn log_marginal_matches_dense_gaussian() {
        let m = model();
        let n = m.n_obs();
        let cov = DMatrix::from_fn(n, n, |i, j| 100.0 + if i == j { 1.0 } else { 0.0 });
        let chol = cov.clone().cholesky().unwrap();
        let y = DVector::from_vec(m.data().to_vec());
        let quad = y.dot(&chol.solve(&y));
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let exact = -0.5 * (n as f64 * LN_2PI + log_det + quad);
        assert_abs_diff_eq!(m.log_marginal(), exact, epsilon = 1e-10);
    }

    #[test]
    fn bayes_identity_holds_pointwise() {
        let m = model();
        for mu in [-1.0, 0.0, 0.7, 2.0] {
            let lhs = m.log_likelihood(&[mu]) + m.log_prior(&[mu]) - m.log_marginal();
            assert_abs_diff_eq!(lhs, m.log_posterior_density(mu), epsilon = 1e-10);
        }
    }

    #[test]
    fn kl_is_zero_for_empty_deletion_and_positive_otherwise() {
        let m = model();
        assert_abs_diff_eq!(m.kl_full_vs_deleted(&[]).unwrap(), 0.0, epsilon = 1e-15);
        assert!(m.kl_full_vs_deleted(&[3]).unwrap() > 0.0);
        assert!(m.kl_full_vs_deleted(&[7]).is_err());
    }

    #[test]
    fn gradient_and_perturbations() {
        let m = model();
        let err = crate::hmc::gradient_check(&m, &[vec![-0.4], vec![1.3]]);
        assert!(err < 1e-7);
        let theta = [0.5];
        let r = m
            .log_perturbation_ratio(&theta, &PerturbationScheme::case_deletion([2]))
            .unwrap();
        assert_abs_diff_eq!(r, -m.obs_log_likelihood(&theta, 2).unwrap(), epsilon = 1e-12);
    }
}
