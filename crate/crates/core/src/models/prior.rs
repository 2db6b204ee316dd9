//! Log densities (with normalizing constants) for the priors used by the
//! models, and a few numerically careful scalar helpers.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// log(1 + e^x) without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Prior on a single regression coefficient, centred at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CoefficientPrior {
    Normal { scale: f64 },
    Cauchy { scale: f64 },
}

impl CoefficientPrior {
    pub fn log_density(&self, b: f64) -> f64 {
        match *self {
            Self::Normal { scale } => {
                let z = b / scale;
                -0.5 * z * z - scale.ln() - 0.5 * LN_2PI
            }
            Self::Cauchy { scale } => {
                let z = b / scale;
                -(PI * scale).ln() - (z * z).ln_1p()
            }
        }
    }

    pub fn grad(&self, b: f64) -> f64 {
        match *self {
            Self::Normal { scale } => -b / (scale * scale),
            Self::Cauchy { scale } => -2.0 * b / (scale * scale + b * b),
        }
    }

    pub fn scale(&self) -> f64 {
        match *self {
            Self::Normal { scale } | Self::Cauchy { scale } => scale,
        }
    }
}

/// Gamma(shape, rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln()
            - self.rate * x
    }

    /// Log density of `u = log x` including the Jacobian `x`.
    pub fn log_density_log_scale(&self, u: f64) -> f64 {
        self.shape * self.rate.ln() - ln_gamma(self.shape) + self.shape * u - self.rate * u.exp()
    }

    pub fn grad_log_scale(&self, u: f64) -> f64 {
        self.shape - self.rate * u.exp()
    }
}

/// Beta(a, b).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl BetaPrior {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    fn ln_norm(&self) -> f64 {
        ln_gamma(self.a + self.b) - ln_gamma(self.a) - ln_gamma(self.b)
    }

    pub fn log_density(&self, x: f64) -> f64 {
        self.ln_norm() + (self.a - 1.0) * x.ln() + (self.b - 1.0) * (-x).ln_1p()
    }

    /// Log density of `v = logit x` including the Jacobian `x (1 − x)`.
    pub fn log_density_logit_scale(&self, v: f64) -> f64 {
        // log x = −softplus(−v), log(1 − x) = −softplus(v)
        self.ln_norm() - self.a * softplus(-v) - self.b * softplus(v)
    }

    pub fn grad_logit_scale(&self, v: f64) -> f64 {
        let x = sigmoid(v);
        self.a * (1.0 - x) - self.b * x
    }
}
