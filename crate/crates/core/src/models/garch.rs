use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::prior::{sigmoid, BetaPrior, GammaPrior, LN_2PI};
use super::{
    sample_sd, ModelKind, PerturbationKind, PerturbationScheme, PosteriorModel, ResponseKind,
};
use crate::hmc::TargetDensity;
use crate::{Error, Result};

/// Conditional variance path `σ²_t = α₀ + α₁ y²_{t−1} + β₁ σ²_{t−1}`, with
/// `σ²_1 = sigma2_init`.
pub fn garch_volatility(alpha0: f64, alpha1: f64, beta1: f64, y: &[f64], sigma2_init: f64) -> Vec<f64> {
    let mut s2 = Vec::with_capacity(y.len());
    if y.is_empty() {
        return s2;
    }
    s2.push(sigma2_init);
    for t in 1..y.len() {
        let prev = s2[t - 1];
        s2.push(alpha0 + alpha1 * y[t - 1] * y[t - 1] + beta1 * prev);
    }
    s2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ErrorFamily {
    Normal,
    /// Student-t innovations rescaled to unit variance; requires `nu > 2`.
    StudentT { nu: f64 },
}

impl ErrorFamily {
    pub const DEFAULT_NU: f64 = 5.0;
}

/// How a deleted observation is treated inside the volatility recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GarchDeletion {
    /// Replace `y_t` by its conditional mean 0 in the recursion and drop its
    /// likelihood term; downstream variances are recomputed.
    #[default]
    ImputeZero,
    /// Keep `y_t` in the recursion and only drop its likelihood term.
    DropTermOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchPrior {
    pub alpha0: GammaPrior,
    pub alpha1: BetaPrior,
    pub beta1: BetaPrior,
}

/// GARCH(1,1) with zero conditional mean.
///
/// Sampling coordinates are `(log α₀, logit α₁, logit β₁)`. The stationarity
/// condition `α₁ + β₁ < 1` is not imposed.
#[derive(Debug, Clone)]
pub struct GarchModel {
    y: Vec<f64>,
    family: ErrorFamily,
    prior: GarchPrior,
    sigma2_init: f64,
    deletion: GarchDeletion,
    y_sd: f64,
    t_const: f64,
}

struct Constrained {
    a0: f64,
    a1: f64,
    b1: f64,
}

fn constrain(theta: &[f64]) -> Constrained {
    Constrained {
        a0: theta[0].exp(),
        a1: sigmoid(theta[1]),
        b1: sigmoid(theta[2]),
    }
}

impl GarchModel {
    /// `sigma2_init` defaults to the sample variance of `returns`.
    pub fn new(
        returns: Vec<f64>,
        family: ErrorFamily,
        prior: GarchPrior,
        sigma2_init: Option<f64>,
    ) -> Result<Self> {
        if returns.len() < 3 {
            return Err(Error::Domain(format!(
                "need at least 3 returns, got {}",
                returns.len()
            )));
        }
        if let Some(v) = returns.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("return value {v}")));
        }
        let t_const = match family {
            ErrorFamily::Normal => -0.5 * LN_2PI,
            ErrorFamily::StudentT { nu } => {
                if !(nu > 2.0) {
                    return Err(Error::Domain(format!("Student-t nu must exceed 2, got {nu}")));
                }
                ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * ((nu - 2.0) * std::f64::consts::PI).ln()
            }
        };
        let y_sd = sample_sd(&returns);
        let sigma2_init = sigma2_init.unwrap_or(y_sd * y_sd);
        if !(sigma2_init > 0.0) {
            return Err(Error::Domain(format!(
                "initial variance must be positive, got {sigma2_init}"
            )));
        }
        Ok(Self {
            y: returns,
            family,
            prior,
            sigma2_init,
            deletion: GarchDeletion::default(),
            y_sd,
            t_const,
        })
    }

    pub fn with_deletion(mut self, deletion: GarchDeletion) -> Self {
        self.deletion = deletion;
        self
    }

    pub fn returns(&self) -> &[f64] {
        &self.y
    }

    pub fn sigma2_init(&self) -> f64 {
        self.sigma2_init
    }

    pub fn family(&self) -> ErrorFamily {
        self.family
    }

    pub fn volatility(&self, theta: &[f64]) -> Vec<f64> {
        let c = constrain(theta);
        garch_volatility(c.a0, c.a1, c.b1, &self.y, self.sigma2_init)
    }

    fn term(&self, y: f64, s2: f64) -> f64 {
        match self.family {
            ErrorFamily::Normal => self.t_const - 0.5 * s2.ln() - 0.5 * y * y / s2,
            ErrorFamily::StudentT { nu } => {
                let q = y * y / ((nu - 2.0) * s2);
                self.t_const - 0.5 * s2.ln() - 0.5 * (nu + 1.0) * q.ln_1p()
            }
        }
    }

    /// ∂ term / ∂σ².
    fn dterm(&self, y: f64, s2: f64) -> f64 {
        match self.family {
            ErrorFamily::Normal => -0.5 / s2 + 0.5 * y * y / (s2 * s2),
            ErrorFamily::StudentT { nu } => {
                let q = y * y / ((nu - 2.0) * s2);
                -0.5 / s2 + 0.5 * (nu + 1.0) * q / ((1.0 + q) * s2)
            }
        }
    }

    /// Sums likelihood terms for `t ≥ 2` with the recursion driven by
    /// `y_rec` and the terms evaluated at `y_obs`, skipping masked terms.
    fn loglik_with(&self, theta: &[f64], y_rec: &[f64], y_obs: &[f64], skip: &[bool]) -> f64 {
        let c = constrain(theta);
        let mut s2 = self.sigma2_init;
        let mut ll = 0.0;
        for t in 1..y_obs.len() {
            s2 = c.a0 + c.a1 * y_rec[t - 1] * y_rec[t - 1] + c.b1 * s2;
            if !skip[t] {
                ll += self.term(y_obs[t], s2);
            }
        }
        ll
    }
}

impl TargetDensity for GarchModel {
    fn dim(&self) -> usize {
        3
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        self.log_likelihood(theta) + self.log_prior(theta)
    }

    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let c = constrain(theta);
        let mut s2 = self.sigma2_init;
        // ∂σ²_t / ∂(α₀, α₁, β₁); zero at t = 1 since σ²_1 is fixed
        let mut ds = [0.0f64; 3];
        let mut g = [0.0f64; 3];
        let mut ll = 0.0;
        for t in 1..self.y.len() {
            let yp = self.y[t - 1];
            let prev = s2;
            s2 = c.a0 + c.a1 * yp * yp + c.b1 * prev;
            ds = [
                1.0 + c.b1 * ds[0],
                yp * yp + c.b1 * ds[1],
                prev + c.b1 * ds[2],
            ];
            ll += self.term(self.y[t], s2);
            let d = self.dterm(self.y[t], s2);
            for k in 0..3 {
                g[k] += d * ds[k];
            }
        }
        grad[0] = g[0] * c.a0 + self.prior.alpha0.grad_log_scale(theta[0]);
        grad[1] = g[1] * c.a1 * (1.0 - c.a1) + self.prior.alpha1.grad_logit_scale(theta[1]);
        grad[2] = g[2] * c.b1 * (1.0 - c.b1) + self.prior.beta1.grad_logit_scale(theta[2]);
        ll + self.log_prior(theta)
    }
}

impl PosteriorModel for GarchModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Garch
    }

    fn n_obs(&self) -> usize {
        self.y.len()
    }

    fn response_kind(&self) -> ResponseKind {
        ResponseKind::Continuous
    }

    fn param_names(&self) -> Vec<String> {
        vec!["log_alpha0".into(), "logit_alpha1".into(), "logit_beta1".into()]
    }

    fn natural_names(&self) -> Vec<String> {
        vec!["alpha0".into(), "alpha1".into(), "beta1".into()]
    }

    fn to_natural(&self, theta: &[f64]) -> Vec<f64> {
        let c = constrain(theta);
        vec![c.a0, c.a1, c.b1]
    }

    fn initial_point(&self) -> Vec<f64> {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        vec![(0.2 * self.y_sd * self.y_sd).max(1e-8).ln(), logit(0.1), logit(0.7)]
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let skip = vec![false; self.y.len()];
        self.loglik_with(theta, &self.y, &self.y, &skip)
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.prior.alpha0.log_density_log_scale(theta[0])
            + self.prior.alpha1.log_density_logit_scale(theta[1])
            + self.prior.beta1.log_density_logit_scale(theta[2])
    }

    fn obs_log_likelihood(&self, theta: &[f64], i: usize) -> Result<f64> {
        self.check_index(i)?;
        if i == 1 {
            return Err(Error::Domain(
                "the first observation carries no conditional likelihood term".into(),
            ));
        }
        let s2 = self.volatility(theta);
        Ok(self.term(self.y[i - 1], s2[i - 1]))
    }

    fn perturbed_log_likelihood(&self, theta: &[f64], scheme: &PerturbationScheme) -> Result<f64> {
        scheme.validate(self.n_obs(), self.response_kind())?;
        let mask = scheme.mask(self.n_obs());
        match scheme.kind {
            PerturbationKind::CaseDeletion => {
                let y_rec: Vec<f64> = match self.deletion {
                    GarchDeletion::ImputeZero => self
                        .y
                        .iter()
                        .zip(&mask)
                        .map(|(&y, &hit)| if hit { 0.0 } else { y })
                        .collect(),
                    GarchDeletion::DropTermOnly => self.y.clone(),
                };
                Ok(self.loglik_with(theta, &y_rec, &self.y, &mask))
            }
            PerturbationKind::Additive5Sigma => {
                let shift = 5.0 * self.y_sd;
                let y: Vec<f64> = self
                    .y
                    .iter()
                    .zip(&mask)
                    .map(|(&y, &hit)| if hit { y + shift } else { y })
                    .collect();
                let skip = vec![false; y.len()];
                Ok(self.loglik_with(theta, &y, &y, &skip))
            }
            PerturbationKind::LabelFlip => unreachable!("rejected by validate"),
        }
    }

    fn scored_observations(&self) -> Vec<usize> {
        (2..=self.n_obs()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmc::gradient_check;
    use crate::seed::stream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn prior() -> GarchPrior {
        crate::models::garch_prior_preset(3).unwrap()
    }

    fn simulate(seed: u64, t: usize, a0: f64, a1: f64, b1: f64) -> Vec<f64> {
        let mut rng = stream(seed);
        let mut s2 = a0 / (1.0 - a1 - b1);
        let mut out = Vec::with_capacity(t);
        for _ in 0..t {
            let y = s2.sqrt() * rng.sample::<f64, _>(StandardNormal);
            out.push(y);
            s2 = a0 + a1 * y * y + b1 * s2;
        }
        out
    }

    fn unconstrained(a0: f64, a1: f64, b1: f64) -> [f64; 3] {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        [a0.ln(), logit(a1), logit(b1)]
    }

    #[test]
    fn recursion_examples() {
        let s = garch_volatility(2.0, 0.2, 0.6, &[1.0, 5.0, -3.0], 10.0);
        assert_abs_diff_eq!(s[0], 10.0);
        assert_abs_diff_eq!(s[1], 8.2, epsilon = 1e-14);
        assert_abs_diff_eq!(s[2], 2.0 + 0.2 * 25.0 + 0.6 * 8.2, epsilon = 1e-14);
        let flat = garch_volatility(1.5, 0.0, 0.0, &[1.0, 2.0, 3.0, 4.0], 7.0);
        assert!(flat[1..].iter().all(|&v| v == 1.5));
    }

    #[test]
    fn long_run_mean_of_volatility() {
        let y = simulate(1, 100_000, 2.0, 0.2, 0.6);
        let s = garch_volatility(2.0, 0.2, 0.6, &y, 10.0);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean / 10.0 - 1.0).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn collapsed_recursion_is_iid_normal() {
        let y = simulate(2, 200, 1.0, 0.1, 0.8);
        let m = GarchModel::new(y.clone(), ErrorFamily::Normal, prior(), None).unwrap();
        let a0: f64 = 1.7;
        let theta = [a0.ln(), -30.0, -30.0];
        let iid: f64 = y[1..]
            .iter()
            .map(|v| -0.5 * (LN_2PI + a0.ln()) - 0.5 * v * v / a0)
            .sum();
        assert_abs_diff_eq!(m.log_likelihood(&theta), iid, epsilon = 1e-8);
    }

    #[test]
    fn student_t_approaches_normal() {
        let y = simulate(3, 100, 2.0, 0.2, 0.6);
        let n = GarchModel::new(y.clone(), ErrorFamily::Normal, prior(), None).unwrap();
        let t = GarchModel::new(y, ErrorFamily::StudentT { nu: 1e6 }, prior(), None).unwrap();
        let theta = unconstrained(2.0, 0.2, 0.6);
        for i in 2..=100 {
            let a = n.obs_log_likelihood(&theta, i).unwrap();
            let b = t.obs_log_likelihood(&theta, i).unwrap();
            assert!((a - b).abs() < 1e-4, "t={i}: {a} vs {b}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let y = simulate(4, 150, 2.0, 0.2, 0.6);
        for family in [ErrorFamily::Normal, ErrorFamily::StudentT { nu: 5.0 }] {
            let m = GarchModel::new(y.clone(), family, prior(), None).unwrap();
            let mut rng = stream(44);
            let mut pts: Vec<Vec<f64>> = (0..20)
                .map(|_| vec![rng.random_range(-1.0..2.0), rng.random_range(-3.0..1.0), rng.random_range(-1.0..2.0)])
                .collect();
            pts.push(unconstrained(2.0, 0.2, 0.6).to_vec());
            let err = gradient_check(&m, &pts);
            assert!(err < 1e-4, "{family:?}: {err}");
        }
    }

    #[test]
    fn observation_one_has_no_term() {
        let y = simulate(5, 20, 2.0, 0.2, 0.6);
        let m = GarchModel::new(y, ErrorFamily::Normal, prior(), None).unwrap();
        let theta = unconstrained(2.0, 0.2, 0.6);
        assert!(m.obs_log_likelihood(&theta, 1).is_err());
        assert!(m.obs_log_likelihood(&theta, 21).is_err());
        let total: f64 = (2..=20).map(|i| m.obs_log_likelihood(&theta, i).unwrap()).sum();
        assert_abs_diff_eq!(total, m.log_likelihood(&theta), epsilon = 1e-10);
        assert_eq!(m.scored_observations(), (2..=20).collect::<Vec<_>>());
    }

    #[test]
    fn deletion_recomputes_downstream_variances() {
        let y = vec![0.5, -1.2, 2.0, 0.3, -0.7];
        let s1 = 1.3;
        let m = GarchModel::new(y.clone(), ErrorFamily::Normal, prior(), Some(s1)).unwrap();
        let (a0, a1, b1) = (0.4, 0.25, 0.5);
        let theta = unconstrained(a0, a1, b1);
        // hand recursion with y₃ := 0 and the t = 3 term dropped
        let s2_2 = a0 + a1 * 0.25 + b1 * s1;
        let s2_3 = a0 + a1 * 1.44 + b1 * s2_2;
        let s2_4 = a0 + a1 * 0.0 + b1 * s2_3;
        let s2_5 = a0 + a1 * 0.09 + b1 * s2_4;
        let term = |y: f64, s2: f64| -0.5 * (LN_2PI + f64::ln(s2)) - 0.5 * y * y / s2;
        let expected = term(-1.2, s2_2) + term(0.3, s2_4) + term(-0.7, s2_5);
        let del = PerturbationScheme::case_deletion([3]);
        let got = m.perturbed_log_likelihood(&theta, &del).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);

        // term-only deletion keeps y₃ in the recursion
        let m2 = m.clone().with_deletion(GarchDeletion::DropTermOnly);
        let got2 = m2.perturbed_log_likelihood(&theta, &del).unwrap();
        let full = m.log_likelihood(&theta);
        let o3 = m.obs_log_likelihood(&theta, 3).unwrap();
        assert_abs_diff_eq!(got2 + o3, full, epsilon = 1e-12);

        let none = PerturbationScheme::case_deletion([]);
        assert_eq!(m.perturbed_log_likelihood(&theta, &none).unwrap(), full);
    }

    #[test]
    fn volatility_positive_for_arbitrary_unconstrained_points() {
        let y = simulate(6, 300, 2.0, 0.2, 0.6);
        let m = GarchModel::new(y, ErrorFamily::Normal, prior(), None).unwrap();
        let mut rng = stream(66);
        for _ in 0..200 {
            let th: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
            assert!(m.volatility(&th).iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn rejects_bad_settings() {
        let y = vec![0.1, 0.2, -0.3];
        assert!(GarchModel::new(y.clone(), ErrorFamily::StudentT { nu: 2.0 }, prior(), None).is_err());
        assert!(GarchModel::new(y.clone(), ErrorFamily::Normal, prior(), Some(0.0)).is_err());
        assert!(GarchModel::new(vec![0.1, 0.2], ErrorFamily::Normal, prior(), None).is_err());
    }
}
