//! Data generators and contamination for simulation studies.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::models::{sample_sd, spatial_design, PerturbationKind, PerturbationScheme};
use crate::{Error, Result};

/// Default number of discarded GARCH warm-up values.
pub const GARCH_BURNIN: usize = 500;

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Logistic data with `x₁..x_{k−1} ~ N(0, 1)` and an intercept column, where
/// `k = beta.len()`.
pub fn generate_logistic<R: Rng + ?Sized>(beta: &[f64], n: usize, rng: &mut R) -> (Array2<f64>, Array1<f64>) {
    let k = beta.len();
    let mut x = Array2::zeros((n, k));
    let mut y = Array1::zeros(n);
    for i in 0..n {
        x[[i, 0]] = 1.0;
        for j in 1..k {
            x[[i, j]] = normal(rng);
        }
        let eta: f64 = (0..k).map(|j| x[[i, j]] * beta[j]).sum();
        let p = crate::models::prior::sigmoid(eta);
        y[i] = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
    }
    (x, y)
}

/// Trend-surface data: coordinates `~ N(0, 1)`, `z = Dβ + N(0, σ²)`.
pub fn generate_spatial<R: Rng + ?Sized>(
    beta: &[f64],
    sigma2: f64,
    n: usize,
    rng: &mut R,
) -> Result<(Array2<f64>, Array1<f64>)> {
    if beta.len() != 6 {
        return Err(Error::LengthMismatch {
            expected: 6,
            got: beta.len(),
        });
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::Domain(format!("sigma2 must be nonnegative, got {sigma2}")));
    }
    let coords = Array2::from_shape_fn((n, 2), |_| normal(rng));
    let mean = spatial_design(coords.view()).dot(&Array1::from(beta.to_vec()));
    let sd = sigma2.sqrt();
    let z = mean.mapv(|m| m + sd * normal(rng));
    Ok((coords, z))
}

/// GARCH(1,1) returns started from the unconditional variance, with the
/// first `burnin` values discarded.
pub fn generate_garch<R: Rng + ?Sized>(
    alpha0: f64,
    alpha1: f64,
    beta1: f64,
    t: usize,
    burnin: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(alpha0 > 0.0 && alpha1 >= 0.0 && beta1 >= 0.0) {
        return Err(Error::Domain(format!(
            "GARCH parameters must satisfy α₀ > 0, α₁ ≥ 0, β₁ ≥ 0; got ({alpha0}, {alpha1}, {beta1})"
        )));
    }
    if alpha1 + beta1 >= 1.0 {
        return Err(Error::Domain(format!(
            "generator requires α₁ + β₁ < 1, got {}",
            alpha1 + beta1
        )));
    }
    let mut s2 = alpha0 / (1.0 - alpha1 - beta1);
    let mut out = Vec::with_capacity(t);
    for step in 0..burnin + t {
        let y = s2.sqrt() * normal(rng);
        if step >= burnin {
            out.push(y);
        }
        s2 = alpha0 + alpha1 * y * y + beta1 * s2;
    }
    Ok(out)
}

/// Applies a contamination to a response vector.
///
/// Additive shifts use the standard deviation of the uncontaminated sample
/// for every index; flips require a 0/1 response.
pub fn contaminate(y: &[f64], scheme: &PerturbationScheme) -> Result<Vec<f64>> {
    let n = y.len();
    if let Some(&bad) = scheme.indices.iter().find(|&&i| i == 0 || i > n) {
        return Err(Error::IndexOutOfRange { index: bad, n });
    }
    let mut out = y.to_vec();
    match scheme.kind {
        PerturbationKind::Additive5Sigma => {
            if scheme.is_empty() {
                return Ok(out);
            }
            let shift = 5.0 * sample_sd(y);
            for &i in &scheme.indices {
                out[i - 1] += shift;
            }
        }
        PerturbationKind::LabelFlip => {
            for &i in &scheme.indices {
                let v = y[i - 1];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidScheme(format!(
                        "label_flip needs a 0/1 response, observation {i} is {v}"
                    )));
                }
                out[i - 1] = 1.0 - v;
            }
        }
        PerturbationKind::CaseDeletion => {
            return Err(Error::InvalidScheme(
                "case deletion is a diagnostic perturbation, not a contamination".into(),
            ))
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream;
    use nalgebra::{DMatrix, DVector};

    fn to_na(x: &Array2<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]])
    }

    /// Newton-Raphson logistic MLE.
    fn irls(x: &Array2<f64>, y: &Array1<f64>) -> Vec<f64> {
        let xm = to_na(x);
        let yv = DVector::from_iterator(y.len(), y.iter().copied());
        let mut b = DVector::zeros(x.ncols());
        for _ in 0..50 {
            let eta = &xm * &b;
            let p = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
            let w = p.map(|v| v * (1.0 - v));
            let grad = xm.transpose() * (&yv - &p);
            let mut h = DMatrix::zeros(x.ncols(), x.ncols());
            for i in 0..x.nrows() {
                let r = xm.row(i);
                h += w[i] * r.transpose() * r;
            }
            let step = h.cholesky().unwrap().solve(&grad);
            b += &step;
            if step.norm() < 1e-12 {
                break;
            }
        }
        b.iter().copied().collect()
    }

    fn ols(d: &Array2<f64>, z: &Array1<f64>) -> (Vec<f64>, Vec<f64>) {
        let xm = to_na(d);
        let zv = DVector::from_iterator(z.len(), z.iter().copied());
        let b = (xm.transpose() * &xm).cholesky().unwrap().solve(&(xm.transpose() * &zv));
        let r = zv - &xm * &b;
        (b.iter().copied().collect(), r.iter().copied().collect())
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn logistic_saturated_and_symmetric() {
        let mut rng = stream(1);
        let (_, y) = generate_logistic(&[1e6, 0.0, 0.0], 10_000, &mut rng);
        assert!(y.mean().unwrap() > 0.999);
        let (_, y) = generate_logistic(&[0.0, 0.0, 0.0], 10_000, &mut rng);
        let m = y.mean().unwrap();
        assert!(m > 0.45 && m < 0.55, "{m}");
    }

    #[test]
    fn logistic_mle_recovers_truth() {
        let beta = [1.3, -0.7, 0.3];
        let (x, y) = generate_logistic(&beta, 100_000, &mut stream(2));
        let b = irls(&x, &y);
        for j in 0..3 {
            assert!((b[j] - beta[j]).abs() < 0.05, "{b:?}");
        }
    }

    #[test]
    fn spatial_noiseless_fit_is_exact() {
        let beta = [3.0, 0.25, 0.65, 0.2, -0.3, -0.2];
        let (c, z) = generate_spatial(&beta, 0.0, 50, &mut stream(3)).unwrap();
        let (b, r) = ols(&spatial_design(c.view()), &z);
        assert!(r.iter().all(|v| v.abs() < 1e-10));
        for j in 0..6 {
            assert!((b[j] - beta[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn spatial_intercept_only_mean() {
        let (_, z) = generate_spatial(&[3.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1.0, 10_000, &mut stream(4)).unwrap();
        assert!((z.mean().unwrap() - 3.0).abs() < 3.0 / 100.0);
    }

    #[test]
    fn spatial_ols_recovers_truth() {
        let beta = [3.0, 0.25, 0.65, 0.2, -0.3, -0.2];
        let (c, z) = generate_spatial(&beta, 1.0, 10_000, &mut stream(5)).unwrap();
        let (b, _) = ols(&spatial_design(c.view()), &z);
        for j in 0..6 {
            assert!((b[j] - beta[j]).abs() < 0.05, "{b:?}");
        }
        assert!(generate_spatial(&beta[..5], 1.0, 10, &mut stream(5)).is_err());
        assert!(generate_spatial(&beta, -1.0, 10, &mut stream(5)).is_err());
    }

    #[test]
    fn garch_collapsed_is_iid() {
        let y = generate_garch(1.7, 0.0, 0.0, 100_000, GARCH_BURNIN, &mut stream(6)).unwrap();
        let v = sample_sd(&y).powi(2);
        assert!((v / 1.7 - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn garch_moments() {
        let y = generate_garch(2.0, 0.2, 0.6, 100_000, GARCH_BURNIN, &mut stream(7)).unwrap();
        assert_eq!(y.len(), 100_000);
        let v = sample_sd(&y).powi(2);
        assert!((v / 10.0 - 1.0).abs() < 0.15, "{v}");
        let acf1 = |s: &[f64]| {
            let m = mean(s);
            let num: f64 = s.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
            let den: f64 = s.iter().map(|v| (v - m).powi(2)).sum();
            num / den
        };
        assert!(acf1(&y).abs() < 0.02);
        let sq: Vec<f64> = y.iter().map(|v| v * v).collect();
        assert!(acf1(&sq) > 0.05);
        assert!(generate_garch(1.0, 0.5, 0.5, 10, 0, &mut stream(7)).is_err());
    }

    #[test]
    fn contamination_examples() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let c = contaminate(&y, &PerturbationScheme::additive([3])).unwrap();
        assert!((c[2] - (3.0 + 5.0 * 2.5f64.sqrt())).abs() < 1e-12);
        assert!((c[2] - 10.9057).abs() < 1e-4);
        assert_eq!(&c[..2], &y[..2]);
        // every index uses the same pre-contamination sd
        let c2 = contaminate(&y, &PerturbationScheme::additive([1, 3])).unwrap();
        assert_eq!(c2[2], c[2]);
        assert_eq!(contaminate(&y, &PerturbationScheme::additive([])).unwrap(), y.to_vec());

        let b = [0.0, 0.0, 0.0, 4.0];
        assert!(contaminate(&b, &PerturbationScheme::label_flip([4])).is_err());
        let f = contaminate(&b, &PerturbationScheme::label_flip([2])).unwrap();
        assert_eq!(f, vec![0.0, 1.0, 0.0, 4.0]);
        assert!(contaminate(&b, &PerturbationScheme::case_deletion([1])).is_err());
        assert!(contaminate(&b, &PerturbationScheme::additive([5])).is_err());
    }
}
