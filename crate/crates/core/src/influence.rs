//! Monte Carlo estimators of observation influence.
//!
//! For a perturbation of the likelihood, `δ(θ) = f_δ(y|θ) / f(y|θ)` is the
//! ratio of unnormalized perturbed and full posteriors. Given draws
//! `θ^1..θ^S` from the full posterior and `δ̄ = S⁻¹ Σ δ(θ^s)`, the
//! divergence between the full and perturbed posteriors under ψ_α is
//! estimated by
//!
//! ```text
//! d = S⁻¹ Σ [1 − α r_s^{α−1} + (α−1) r_s^α] / [α(α−1) p̃(θ^s|y)^{1−α}],   r_s = δ_s / δ̄
//! ```
//!
//! where `p̃` is the posterior density normalized by an importance-weighted
//! marginal likelihood estimate. At α = 1 the density factor disappears and
//! the estimator reduces to `log δ̄ − S⁻¹ Σ log δ_s`, which needs no
//! marginal likelihood at all.
//!
//! All arithmetic on δ and on importance weights is done in log space.

use std::io::Write;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::{PerturbationScheme, PosteriorModel};
use crate::{Error, Result};

/// Raw divergences in `[-NEGATIVE_TOLERANCE, 0)` are rounding noise and are
/// clamped to zero; anything more negative is an error.
pub const NEGATIVE_TOLERANCE: f64 = 1e-6;

/// Largest exponent allowed inside the general-α bracket.
const MAX_EXPONENT: f64 = 700.0;

/// `log Σ exp(x_i)`.
pub fn logsumexp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Perturbation ratios at each posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSamples {
    pub log_delta: Vec<f64>,
    /// `log(S⁻¹ Σ δ_s)`.
    pub log_delta_bar: f64,
}

impl DeltaSamples {
    pub fn from_log_delta(log_delta: Vec<f64>) -> Result<Self> {
        if log_delta.is_empty() {
            return Err(Error::Domain("no draws".into()));
        }
        if let Some(v) = log_delta.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("log perturbation ratio {v}")));
        }
        let log_delta_bar = logsumexp(&log_delta) - (log_delta.len() as f64).ln();
        Ok(Self {
            log_delta,
            log_delta_bar,
        })
    }

    pub fn len(&self) -> usize {
        self.log_delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_delta.is_empty()
    }

    pub fn delta_bar(&self) -> f64 {
        self.log_delta_bar.exp()
    }

    /// `log(δ_s / δ̄)`.
    fn log_ratios(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_delta.iter().map(move |v| v - self.log_delta_bar)
    }
}

/// `log δ(θ^s)` for every draw (rows of `draws`).
pub fn compute_delta<M: PosteriorModel + ?Sized>(
    model: &M,
    draws: &Array2<f64>,
    scheme: &PerturbationScheme,
) -> Result<DeltaSamples> {
    scheme.validate(model.n_obs(), model.response_kind())?;
    let mut log_delta = Vec::with_capacity(draws.nrows());
    for row in draws.rows() {
        let theta = row_slice(&row);
        log_delta.push(model.log_perturbation_ratio(&theta, scheme)?);
    }
    DeltaSamples::from_log_delta(log_delta)
}

fn row_slice(row: &ArrayView1<'_, f64>) -> Vec<f64> {
    row.iter().copied().collect()
}

/// Diagonal Gaussian used as the importance density in the marginal
/// likelihood estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaDensity {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl OmegaDensity {
    pub fn new(mean: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if mean.len() != scale.len() {
            return Err(Error::LengthMismatch {
                expected: mean.len(),
                got: scale.len(),
            });
        }
        if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Domain("omega scales must be positive and finite".into()));
        }
        Ok(Self { mean, scale })
    }

    /// Moment-matched to the draws.
    pub fn fit(draws: &Array2<f64>) -> Result<Self> {
        if draws.nrows() < 2 {
            return Err(Error::Domain("need at least two draws to fit omega".into()));
        }
        let mean = draws.mean_axis(ndarray::Axis(0)).expect("non-empty").to_vec();
        let scale = draws
            .columns()
            .into_iter()
            .map(|c| c.var(1.0).sqrt())
            .collect();
        Self::new(mean, scale)
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.scale)
            .zip(theta)
            .map(|((m, s), t)| {
                let z = (t - m) / s;
                -0.5 * (crate::models::prior::LN_2PI + z * z) - s.ln()
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IwmdeEstimate {
    /// Estimated log marginal likelihood `log m̃(y)`.
    pub log_m_tilde: f64,
    /// `(Σ w)² / Σ w²` for weights `w_s = ω(θ^s) / (f(y|θ^s) p(θ^s))`.
    pub ess_weights: f64,
}

/// Unnormalized log posterior `log f(y|θ) + log p(θ)` at each draw.
pub fn log_joint<M: PosteriorModel + ?Sized>(model: &M, draws: &Array2<f64>) -> Result<Vec<f64>> {
    draws
        .rows()
        .into_iter()
        .map(|row| {
            let theta = row_slice(&row);
            let v = model.log_likelihood(&theta) + model.log_prior(&theta);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite(format!("log posterior at draw {theta:?}")))
            }
        })
        .collect()
}

/// Importance-weighted marginal density estimate
/// `m̃ = [S⁻¹ Σ ω(θ^s) / (f(y|θ^s) p(θ^s))]⁻¹`.
pub fn iwmde<M: PosteriorModel + ?Sized>(
    model: &M,
    draws: &Array2<f64>,
    omega: &OmegaDensity,
) -> Result<IwmdeEstimate> {
    let joint = log_joint(model, draws)?;
    iwmde_from_joint(&joint, draws, omega)
}

fn iwmde_from_joint(joint: &[f64], draws: &Array2<f64>, omega: &OmegaDensity) -> Result<IwmdeEstimate> {
    if omega.mean.len() != draws.ncols() {
        return Err(Error::LengthMismatch {
            expected: draws.ncols(),
            got: omega.mean.len(),
        });
    }
    let log_w: Vec<f64> = draws
        .rows()
        .into_iter()
        .zip(joint)
        .map(|(row, j)| omega.log_density(&row_slice(&row)) - j)
        .collect();
    if let Some(v) = log_w.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("log importance weight {v}")));
    }
    let s = log_w.len() as f64;
    let lse = logsumexp(&log_w);
    let log_m_tilde = -(lse - s.ln());
    let sq: Vec<f64> = log_w.iter().map(|v| 2.0 * v).collect();
    let ess_weights = (2.0 * lse - logsumexp(&sq)).exp();
    if ess_weights < 0.05 * s {
        log::warn!(
            "importance weights are degenerate: ESS {ess_weights:.1} of {s} draws; \
             the marginal likelihood estimate may be unreliable"
        );
    }
    Ok(IwmdeEstimate {
        log_m_tilde,
        ess_weights,
    })
}

/// `log p̃(θ^s|y) = log f(y|θ^s) + log p(θ^s) − log m̃`.
pub fn log_posterior_tilde(joint: &[f64], iw: &IwmdeEstimate) -> Vec<f64> {
    joint.iter().map(|j| j - iw.log_m_tilde).collect()
}

/// Kullback-Leibler estimate `log δ̄ − S⁻¹ Σ log δ_s`.
pub fn divergence_kl(delta: &DeltaSamples) -> f64 {
    -delta.log_ratios().sum::<f64>() / delta.len() as f64
}

/// General-α estimator. `log_post` holds `log p̃(θ^s|y)` for each draw.
///
/// α = 1 reduces to [`divergence_kl`]. At α = 0 the continuous limit
/// `S⁻¹ Σ [r_s⁻¹ − 1 + log r_s] / p̃(θ^s|y)` is used.
pub fn divergence_general_alpha(delta: &DeltaSamples, alpha: f64, log_post: &[f64]) -> Result<f64> {
    if !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha must be finite, got {alpha}")));
    }
    if log_post.len() != delta.len() {
        return Err(Error::LengthMismatch {
            expected: delta.len(),
            got: log_post.len(),
        });
    }
    if let Some(v) = log_post.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "normalized posterior density must be positive and finite, got log value {v}"
        )));
    }
    if alpha == 1.0 {
        return Ok(divergence_kl(delta));
    }
    let mut total = 0.0;
    for (l, lp) in delta.log_ratios().zip(log_post) {
        let term = if alpha == 0.0 {
            ((-l).exp_m1() + l) * (-lp).exp()
        } else {
            for e in [alpha * l, (alpha - 1.0) * l] {
                if e > MAX_EXPONENT {
                    return Err(Error::Overflow(format!(
                        "(δ/δ̄)^α with α = {alpha}, log(δ/δ̄) = {l}"
                    )));
                }
            }
            // 1 − α r^{α−1} + (α−1) r^α written with expm1 so that the
            // bracket stays accurate when r is close to 1
            let bracket = (alpha - 1.0) * (alpha * l).exp_m1() - alpha * ((alpha - 1.0) * l).exp_m1();
            bracket / (alpha * (alpha - 1.0)) * ((alpha - 1.0) * lp).exp()
        };
        if !term.is_finite() {
            return Err(Error::Overflow(format!("divergence term at α = {alpha}")));
        }
        total += term;
    }
    Ok(total / delta.len() as f64)
}

/// Divides by the total so that the result sums to one.
pub fn normalize(raw: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = raw.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Domain(format!(
            "divergences must be finite and nonnegative, got {v}"
        )));
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZero);
    }
    Ok(raw.iter().map(|v| v / total).collect())
}

/// Positions (0-based) whose normalized divergence exceeds `multiplier / n`.
pub fn flag_influential(normalized: &[f64], multiplier: f64) -> Vec<usize> {
    let cut = multiplier / normalized.len() as f64;
    normalized
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > cut)
        .map(|(i, _)| i)
        .collect()
}

/// Clamps small negative rounding noise to zero.
fn clamp_raw(value: f64, index: usize) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -NEGATIVE_TOLERANCE {
        log::warn!("observation {index}: raw divergence {value:e} clamped to 0");
        Ok(0.0)
    } else {
        Err(Error::Domain(format!(
            "observation {index}: raw divergence {value} is negative beyond Monte Carlo noise"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// α = 1 without a marginal likelihood estimate.
    KlFast,
    /// Any α, through the importance-weighted marginal likelihood.
    GeneralAlpha,
}

impl Estimator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::KlFast => "kl_fast",
            Self::GeneralAlpha => "general_alpha",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kl_fast" | "kl" => Ok(Self::KlFast),
            "general_alpha" | "general" => Ok(Self::GeneralAlpha),
            other => Err(Error::config(
                "estimator",
                format!("unknown estimator `{other}`; expected kl_fast or general_alpha"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluenceOptions {
    pub estimator: Estimator,
    pub alpha: f64,
    pub multiplier: f64,
}

impl Default for InfluenceOptions {
    fn default() -> Self {
        Self {
            estimator: Estimator::KlFast,
            alpha: 1.0,
            multiplier: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    /// Observation index (1-based) of each entry; for multi-point schemes,
    /// the first index of the set.
    pub indices: Vec<usize>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    /// `multiplier / n` with `n` the number of scored entries.
    pub threshold: f64,
    /// Observation indices with `normalized > threshold`.
    pub flagged: Vec<usize>,
    pub alpha: f64,
    pub estimator: Estimator,
    pub multiplier: f64,
    pub draws: usize,
    /// Present for the general-α estimator.
    pub iwmde: Option<IwmdeEstimate>,
}

impl DivergenceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Columns `index,raw,normalized,flagged`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Domain(format!("writing report: {e}"));
        out.write_record(["index", "raw", "normalized", "flagged"]).map_err(io)?;
        for k in 0..self.indices.len() {
            let idx = self.indices[k];
            out.write_record([
                idx.to_string(),
                format!("{:e}", self.raw[k]),
                format!("{:e}", self.normalized[k]),
                (self.flagged.contains(&idx) as u8).to_string(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| Error::Domain(format!("writing report: {e}")))?;
        Ok(())
    }

    /// Observation index with the largest normalized divergence.
    pub fn argmax(&self) -> usize {
        let k = self
            .normalized
            .iter()
            .enumerate()
            .fold(0, |best, (k, v)| if *v > self.normalized[best] { k } else { best });
        self.indices[k]
    }
}

/// One case-deletion scheme per scored observation.
pub fn case_deletion_schemes<M: PosteriorModel + ?Sized>(model: &M) -> Vec<PerturbationScheme> {
    model
        .scored_observations()
        .into_iter()
        .map(|i| PerturbationScheme::case_deletion([i]))
        .collect()
}

/// Scores every scheme, normalizes and flags.
pub fn influence_report<M: PosteriorModel + ?Sized>(
    model: &M,
    draws: &Array2<f64>,
    schemes: &[PerturbationScheme],
    opts: &InfluenceOptions,
) -> Result<DivergenceReport> {
    if schemes.is_empty() {
        return Err(Error::Domain("no perturbation schemes given".into()));
    }
    if !(opts.multiplier > 0.0) {
        return Err(Error::Domain(format!(
            "flag multiplier must be positive, got {}",
            opts.multiplier
        )));
    }
    let indices: Vec<usize> = schemes
        .iter()
        .map(|s| {
            s.indices
                .first()
                .copied()
                .ok_or_else(|| Error::InvalidScheme("empty scheme in influence report".into()))
        })
        .collect::<Result<_>>()?;

    let (log_post, iw) = match opts.estimator {
        Estimator::KlFast => (None, None),
        Estimator::GeneralAlpha => {
            let joint = log_joint(model, draws)?;
            let omega = OmegaDensity::fit(draws)?;
            let iw = iwmde_from_joint(&joint, draws, &omega)?;
            (Some(log_posterior_tilde(&joint, &iw)), Some(iw))
        }
    };
    let alpha = match opts.estimator {
        Estimator::KlFast => 1.0,
        Estimator::GeneralAlpha => opts.alpha,
    };

    let raw: Vec<f64> = schemes
        .par_iter()
        .zip(&indices)
        .map(|(scheme, &index)| {
            let wrap = |e: Error| Error::Observation {
                index,
                source: Box::new(e),
            };
            let delta = compute_delta(model, draws, scheme).map_err(wrap)?;
            let d = match &log_post {
                None => divergence_kl(&delta),
                Some(lp) => divergence_general_alpha(&delta, alpha, lp).map_err(wrap)?,
            };
            clamp_raw(d, index)
        })
        .collect::<Result<_>>()?;

    let normalized = normalize(&raw)?;
    let flagged = flag_influential(&normalized, opts.multiplier)
        .into_iter()
        .map(|k| indices[k])
        .collect();
    Ok(DivergenceReport {
        threshold: opts.multiplier / raw.len() as f64,
        indices,
        raw,
        normalized,
        flagged,
        alpha,
        estimator: opts.estimator,
        multiplier: opts.multiplier,
        draws: draws.nrows(),
        iwmde: iw,
    })
}
