use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::prior::{GammaPrior, LN_2PI};
use super::{
    sample_sd, ModelKind, PerturbationKind, PerturbationScheme, PosteriorModel, ResponseKind,
};
use crate::hmc::TargetDensity;
use crate::{Error, Result};

const N_COEF: usize = 6;

/// Quadratic trend-surface design: `[1, x, y, xy, x², y²]` per row.
pub fn spatial_design(coords: ArrayView2<f64>) -> Array2<f64> {
    let n = coords.nrows();
    let mut d = Array2::zeros((n, N_COEF));
    for (i, c) in coords.rows().into_iter().enumerate() {
        let (x, y) = (c[0], c[1]);
        d.row_mut(i)
            .assign(&ArrayView1::from(&[1.0, x, y, x * y, x * x, y * y]));
    }
    d
}

/// Trend-surface regression with independent `N(0, σ²)` errors.
///
/// Sampling coordinates are `(β₀, …, β₅, log σ²)`.
#[derive(Debug, Clone)]
pub struct SpatialTrendModel {
    coords: Array2<f64>,
    design: Array2<f64>,
    z: Array1<f64>,
    beta_prior_sd: f64,
    sigma2_prior: GammaPrior,
    z_sd: f64,
}

impl SpatialTrendModel {
    pub fn new(
        coords: Array2<f64>,
        z: Array1<f64>,
        beta_prior_sd: f64,
        sigma2_prior: GammaPrior,
    ) -> Result<Self> {
        if coords.ncols() != 2 {
            return Err(Error::LengthMismatch {
                expected: 2,
                got: coords.ncols(),
            });
        }
        if z.len() != coords.nrows() {
            return Err(Error::LengthMismatch {
                expected: coords.nrows(),
                got: z.len(),
            });
        }
        if z.len() < N_COEF + 1 {
            return Err(Error::Domain(format!(
                "need more than {N_COEF} observations, got {}",
                z.len()
            )));
        }
        if !(beta_prior_sd > 0.0) || !(sigma2_prior.shape > 0.0) || !(sigma2_prior.rate > 0.0) {
            return Err(Error::Domain("prior parameters must be positive".into()));
        }
        let design = spatial_design(coords.view());
        let z_sd = sample_sd(z.as_slice().expect("contiguous"));
        Ok(Self {
            coords,
            design,
            z,
            beta_prior_sd,
            sigma2_prior,
            z_sd,
        })
    }

    pub fn coords(&self) -> &Array2<f64> {
        &self.coords
    }

    pub fn response(&self) -> &Array1<f64> {
        &self.z
    }

    pub fn design(&self) -> &Array2<f64> {
        &self.design
    }

    fn residuals(&self, theta: &[f64]) -> Array1<f64> {
        &self.z - &self.design.dot(&ArrayView1::from(&theta[..N_COEF]))
    }

    fn term(resid: f64, log_s2: f64, s2: f64) -> f64 {
        -0.5 * (LN_2PI + log_s2) - 0.5 * resid * resid / s2
    }
}

impl TargetDensity for SpatialTrendModel {
    fn dim(&self) -> usize {
        N_COEF + 1
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        self.log_likelihood(theta) + self.log_prior(theta)
    }

    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let u = theta[N_COEF];
        let s2 = u.exp();
        let r = self.residuals(theta);
        let rss = r.dot(&r);
        let n = self.z.len() as f64;
        let ll = -0.5 * n * (LN_2PI + u) - 0.5 * rss / s2;
        let gb = self.design.t().dot(&r) / s2;
        let v = self.beta_prior_sd * self.beta_prior_sd;
        for j in 0..N_COEF {
            grad[j] = gb[j] - theta[j] / v;
        }
        grad[N_COEF] = -0.5 * n + 0.5 * rss / s2 + self.sigma2_prior.grad_log_scale(u);
        ll + self.log_prior(theta)
    }
}

impl PosteriorModel for SpatialTrendModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Spatial
    }

    fn n_obs(&self) -> usize {
        self.z.len()
    }

    fn response_kind(&self) -> ResponseKind {
        ResponseKind::Continuous
    }

    fn param_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..N_COEF).map(|j| format!("beta{j}")).collect();
        v.push("log_sigma2".into());
        v
    }

    fn natural_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..N_COEF).map(|j| format!("beta{j}")).collect();
        v.push("sigma".into());
        v
    }

    fn to_natural(&self, theta: &[f64]) -> Vec<f64> {
        let mut v = theta[..N_COEF].to_vec();
        v.push((0.5 * theta[N_COEF]).exp());
        v
    }

    fn initial_point(&self) -> Vec<f64> {
        let mut v = vec![0.0; N_COEF + 1];
        v[0] = self.z.mean().unwrap_or(0.0);
        v[N_COEF] = (self.z_sd * self.z_sd).max(1e-8).ln();
        v
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let u = theta[N_COEF];
        let r = self.residuals(theta);
        -0.5 * self.z.len() as f64 * (LN_2PI + u) - 0.5 * r.dot(&r) / u.exp()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let sd = self.beta_prior_sd;
        let beta: f64 = theta[..N_COEF]
            .iter()
            .map(|b| -0.5 * (b / sd).powi(2) - sd.ln() - 0.5 * LN_2PI)
            .sum();
        beta + self.sigma2_prior.log_density_log_scale(theta[N_COEF])
    }

    fn obs_log_likelihood(&self, theta: &[f64], i: usize) -> Result<f64> {
        self.check_index(i)?;
        let u = theta[N_COEF];
        let fit = self.design.row(i - 1).dot(&ArrayView1::from(&theta[..N_COEF]));
        Ok(Self::term(self.z[i - 1] - fit, u, u.exp()))
    }

    fn perturbed_log_likelihood(&self, theta: &[f64], scheme: &PerturbationScheme) -> Result<f64> {
        scheme.validate(self.n_obs(), self.response_kind())?;
        let mask = scheme.mask(self.n_obs());
        let u = theta[N_COEF];
        let s2 = u.exp();
        let shift = 5.0 * self.z_sd;
        let r = self.residuals(theta);
        Ok(r.iter()
            .zip(&mask)
            .map(|(&ri, &hit)| match (scheme.kind, hit) {
                (_, false) => Self::term(ri, u, s2),
                (PerturbationKind::CaseDeletion, true) => 0.0,
                (PerturbationKind::Additive5Sigma, true) => Self::term(ri + shift, u, s2),
                (PerturbationKind::LabelFlip, true) => unreachable!("rejected by validate"),
            })
            .sum())
    }

    fn log_perturbation_ratio(&self, theta: &[f64], scheme: &PerturbationScheme) -> Result<f64> {
        scheme.validate(self.n_obs(), self.response_kind())?;
        let u = theta[N_COEF];
        let s2 = u.exp();
        let beta = ArrayView1::from(&theta[..N_COEF]);
        let shift = 5.0 * self.z_sd;
        let mut acc = 0.0;
        for &i in &scheme.indices {
            let r = self.z[i - 1] - self.design.row(i - 1).dot(&beta);
            acc += match scheme.kind {
                PerturbationKind::CaseDeletion => -Self::term(r, u, s2),
                PerturbationKind::Additive5Sigma => Self::term(r + shift, u, s2) - Self::term(r, u, s2),
                PerturbationKind::LabelFlip => unreachable!("rejected by validate"),
            };
        }
        Ok(acc)
    }
}
