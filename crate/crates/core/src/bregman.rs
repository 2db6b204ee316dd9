//! The ψ_α family of convex generators and the functional Bregman divergence
//! they induce.
//!
//! ```text
//! ψ_α(x) = x log x − x + 1                    α = 1  (Kullback-Leibler)
//!        = −log x + x − 1                     α = 0  (Itakura-Saito)
//!        = (x^α − αx + α − 1) / (α² − α)      otherwise
//! ```
//!
//! For densities `f1`, `f2` the divergence is
//! `∫ ψ(f1) − ψ(f2) − ψ'(f2)(f1 − f2) dν`. The quadrature form here is a
//! deterministic oracle for the Monte Carlo estimators in
//! [`crate::influence`].

use crate::{Error, Result};

/// Smallest density value accepted by [`psi_alpha`] and friends.
pub const MIN_DENSITY: f64 = 1e-300;

/// Default exponent: α = 1, the Kullback-Leibler member.
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Exponent selecting a member of the ψ_α family.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConvexFamilyParam {
    pub alpha: f64,
}

impl ConvexFamilyParam {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::Domain(format!("alpha must be finite, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn psi(&self, x: f64) -> Result<f64> {
        psi_alpha(x, self.alpha)
    }

    pub fn psi_prime(&self, x: f64) -> Result<f64> {
        psi_alpha_prime(x, self.alpha)
    }
}

impl Default for ConvexFamilyParam {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// Values of two densities at one point plus the quadrature weight there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityPair {
    pub f1: f64,
    pub f2: f64,
    pub weight: f64,
}

impl DensityPair {
    pub fn new(f1: f64, f2: f64, weight: f64) -> Self {
        Self { f1, f2, weight }
    }
}

fn check_density(x: f64) -> Result<()> {
    if x.is_finite() && x >= MIN_DENSITY {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "density value must be finite and at least {MIN_DENSITY:e}, got {x}"
        )))
    }
}

pub fn psi_alpha(x: f64, alpha: f64) -> Result<f64> {
    check_density(x)?;
    Ok(if alpha == 1.0 {
        x * x.ln() - x + 1.0
    } else if alpha == 0.0 {
        -x.ln() + x - 1.0
    } else if (alpha - 1.0).abs() < alpha.abs() {
        // with a = α − 1 the numerator is x·expm1(a log x) − a(x − 1); dividing
        // through by a first avoids cancellation near α = 1
        let a = alpha - 1.0;
        (x * (a * x.ln()).exp_m1() / a - (x - 1.0)) / alpha
    } else {
        ((alpha * x.ln()).exp_m1() / alpha - (x - 1.0)) / (alpha - 1.0)
    })
}

pub fn psi_alpha_prime(x: f64, alpha: f64) -> Result<f64> {
    check_density(x)?;
    Ok(if alpha == 1.0 {
        x.ln()
    } else if alpha == 0.0 {
        1.0 - 1.0 / x
    } else {
        ((alpha - 1.0) * x.ln()).exp_m1() / (alpha - 1.0)
    })
}

/// Right limit ψ_α(0⁺); finite only for α > 0, where it equals 1/α.
fn psi_at_zero(alpha: f64) -> Option<f64> {
    (alpha > 0.0).then(|| 1.0 / alpha)
}

/// Weighted integrand `w · [ψ(f1) − ψ(f2) − ψ'(f2)(f1 − f2)]` at one point.
///
/// `f1 = 0` is admitted when ψ_α(0⁺) is finite (α > 0).
pub fn bregman_pointwise(pair: DensityPair, alpha: f64) -> Result<f64> {
    let DensityPair { f1, f2, weight } = pair;
    check_density(f2)?;
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::Domain(format!(
            "quadrature weight must be finite and nonnegative, got {weight}"
        )));
    }
    let psi_f1 = if f1 == 0.0 {
        psi_at_zero(alpha).ok_or_else(|| {
            Error::Domain(format!("psi_alpha(0) is infinite for alpha = {alpha}"))
        })?
    } else {
        psi_alpha(f1, alpha)?
    };
    let gap = psi_f1 - psi_alpha(f2, alpha)? - psi_alpha_prime(f2, alpha)? * (f1 - f2);
    Ok(weight * gap)
}

/// Sum of [`bregman_pointwise`] over a grid.
pub fn bregman_quadrature(f1: &[f64], f2: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    if f2.len() != f1.len() {
        return Err(Error::LengthMismatch {
            expected: f1.len(),
            got: f2.len(),
        });
    }
    if weights.len() != f1.len() {
        return Err(Error::LengthMismatch {
            expected: f1.len(),
            got: weights.len(),
        });
    }
    f1.iter()
        .zip(f2)
        .zip(weights)
        .map(|((&a, &b), &w)| bregman_pointwise(DensityPair::new(a, b, w), alpha))
        .sum()
}

/// Trapezoidal weights for an increasing grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = grid[i] - grid[i - 1];
        w[i - 1] += 0.5 * h;
        w[i] += 0.5 * h;
    }
    w
}
