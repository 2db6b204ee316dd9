//! Model construction and HMC settings shared by `fit` and `diagnose`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bregdiag::data;
use bregdiag::hmc::{run_chains, HmcConfig, Init, PosteriorSample};
use bregdiag::models::{
    garch_prior_preset, logistic_prior_preset, spatial_prior_preset, AnyModel, ErrorFamily,
    GarchDeletion, GarchModel, LogisticModel, ModelKind, PosteriorModel, SpatialTrendModel,
};
use ndarray::Array2;

use crate::settings::Settings;

pub const MODEL_KEYS: &[&str] = &[
    "model",
    "data",
    "response",
    "log_returns",
    "prior",
    "garch_errors",
    "garch_nu",
    "garch_deletion",
];

pub const HMC_KEYS: &[&str] = &[
    "seed",
    "chains",
    "iterations",
    "warmup",
    "num_leapfrog",
    "step_size",
    "target_accept",
    "rhat_threshold",
];

pub const DEFAULT_RHAT_THRESHOLD: f64 = 1.1;

/// Replaces the `data` setting by its absolute path so that later commands
/// can find it from any working directory.
pub fn canonical_data(settings: &mut Settings) -> Result<PathBuf> {
    let raw = settings.require("data")?.to_string();
    let path = std::fs::canonicalize(&raw).with_context(|| format!("data file {raw}"))?;
    settings.set("data", path.display());
    Ok(path)
}

pub fn model_kind(settings: &Settings) -> Result<ModelKind> {
    let kind: ModelKind = settings.require("model")?.parse()?;
    Ok(kind)
}

pub fn build_model(settings: &Settings) -> Result<AnyModel> {
    let kind = model_kind(settings)?;
    let path = Path::new(settings.require("data")?);
    let default_prior = if kind == ModelKind::Spatial { 2 } else { 3 };
    let prior: u8 = settings.parse_or("prior", default_prior)?;
    let model = match kind {
        ModelKind::Logistic => {
            let response = settings.get("response").unwrap_or("y");
            let d = data::load_logistic(path, response)?;
            AnyModel::Logistic(LogisticModel::with_common_prior(
                d.x,
                d.y,
                logistic_prior_preset(prior)?,
            )?)
        }
        ModelKind::Spatial => {
            let d = data::load_spatial(path)?;
            let (sd, s2) = spatial_prior_preset(prior)?;
            AnyModel::Spatial(SpatialTrendModel::new(d.coords, d.z, sd, s2)?)
        }
        ModelKind::Garch => {
            let returns = data::load_returns(path, settings.bool_or("log_returns", false)?)?;
            let family = match settings.get("garch_errors").unwrap_or("normal") {
                "normal" => ErrorFamily::Normal,
                "student_t" => ErrorFamily::StudentT {
                    nu: settings.parse_or("garch_nu", ErrorFamily::DEFAULT_NU)?,
                },
                other => bail!("unknown garch_errors `{other}`; expected normal or student_t"),
            };
            let deletion = match settings.get("garch_deletion").unwrap_or("impute_zero") {
                "impute_zero" => GarchDeletion::ImputeZero,
                "drop_term_only" => GarchDeletion::DropTermOnly,
                other => bail!("unknown garch_deletion `{other}`; expected impute_zero or drop_term_only"),
            };
            AnyModel::Garch(
                GarchModel::new(returns, family, garch_prior_preset(prior)?, None)?
                    .with_deletion(deletion),
            )
        }
        ModelKind::NormalMean => bail!("normal_mean is not available from the command line"),
    };
    Ok(model)
}

pub fn hmc_config(settings: &Settings) -> Result<HmcConfig> {
    let base = HmcConfig::default();
    Ok(HmcConfig {
        seed: settings.parse_or("seed", 1)?,
        chains: settings.parse_or("chains", base.chains)?,
        iterations: settings.parse_or("iterations", base.iterations)?,
        warmup: settings.parse_or("warmup", base.warmup)?,
        num_leapfrog: settings.parse_or("num_leapfrog", base.num_leapfrog)?,
        step_size: settings.parse_or("step_size", base.step_size)?,
        target_accept: settings.parse_or("target_accept", base.target_accept)?,
        ..base
    })
}

pub fn sample(model: &AnyModel, cfg: &HmcConfig) -> Result<PosteriorSample> {
    let init = Init::Jittered {
        point: model.initial_point(),
        radius: 0.5,
    };
    Ok(run_chains(model, cfg, &init)?)
}

/// The sample mapped to the reporting scale, chain by chain.
pub fn natural_sample(model: &AnyModel, sample: &PosteriorSample) -> Result<PosteriorSample> {
    let d = model.natural_names().len();
    let chains = (0..sample.chains)
        .map(|c| {
            let view = sample.chain(c);
            let mut out = Array2::zeros((view.nrows(), d));
            for (i, row) in view.rows().into_iter().enumerate() {
                let theta: Vec<f64> = row.to_vec();
                for (j, v) in model.to_natural(&theta).into_iter().enumerate() {
                    out[[i, j]] = v;
                }
            }
            out
        })
        .collect();
    Ok(PosteriorSample::from_chains(chains)?)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Columns `parameter,mean,sd,q2.5,q97.5,rhat,ess` on the reporting scale.
pub fn summary_csv(model: &AnyModel, natural: &PosteriorSample) -> String {
    let names = model.natural_names();
    let mut s = String::from("parameter,mean,sd,q2.5,q97.5,rhat,ess\n");
    for (j, name) in names.iter().enumerate() {
        let col = natural.draws.column(j);
        let mean = col.mean().unwrap_or(f64::NAN);
        let sd = col.var(1.0).sqrt();
        let mut sorted = col.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rhat = natural.rhat.as_ref().map_or(f64::NAN, |r| r[j]);
        s.push_str(&format!(
            "{name},{mean},{sd},{},{},{rhat},{}\n",
            quantile(&sorted, 0.025),
            quantile(&sorted, 0.975),
            natural.ess[j]
        ));
    }
    s
}

pub fn draws_file(chain: usize) -> String {
    format!("draws_chain{}.csv", chain + 1)
}

/// Reads the per-chain draws of a `fit` run and checks them against the
/// model's parameters.
pub fn read_draws(dir: &Path, model: &AnyModel, chains: usize) -> Result<PosteriorSample> {
    let expected = model.param_names();
    let mut out = Vec::with_capacity(chains);
    for c in 0..chains {
        let path = dir.join(draws_file(c));
        let file = std::fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let (names, draws) = bregdiag::hmc::read_chain_csv(file, &path)?;
        if names != expected {
            bail!(
                "{}: draws have parameters [{}] but the {} model expects [{}]",
                path.display(),
                names.join(", "),
                model.kind().as_str(),
                expected.join(", ")
            );
        }
        out.push(draws);
    }
    Ok(PosteriorSample::from_chains(out)?)
}
