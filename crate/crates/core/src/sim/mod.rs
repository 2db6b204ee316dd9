//! Replication studies on simulated data.
//!
//! A study repeats, for `m` replications: generate a data set, optionally
//! contaminate some observations, fit by HMC and record either the posterior
//! mean (bias studies) or the normalized divergences at a few watched
//! observations (influence studies).
//!
//! Every replication draws from streams derived from the master seed and the
//! replication counter, and results are reduced in replication order, so
//! tables are identical for any number of worker threads.

mod config;
mod generate;
mod table;

pub use config::{parse_kv, GarchOptions, Scenario, ScenarioConfig, StudyKind, KEYS, PRESETS};
pub use generate::{contaminate, generate_garch, generate_logistic, generate_spatial, GARCH_BURNIN};
pub use table::{bias_smse, BiasSmseTable, InfluenceCell, InfluenceRow, InfluenceStudyTable};

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::hmc::{run_chains, HmcConfig, Init};
use crate::influence::{case_deletion_schemes, influence_report};
use crate::models::{
    garch_prior_preset, logistic_prior_preset, spatial_prior_preset, AnyModel, GarchModel,
    LogisticModel, ModelKind, PerturbationScheme, PosteriorModel, SpatialTrendModel,
};
use crate::seed::{derive_seed, stream, tags};
use crate::{Error, Result};

/// Largest tolerated fraction of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// One simulated data set.
#[derive(Debug, Clone)]
pub enum SimData {
    Logistic { x: Array2<f64>, y: Array1<f64> },
    Spatial { coords: Array2<f64>, z: Array1<f64> },
    Garch { y: Vec<f64> },
}

impl SimData {
    pub fn response(&self) -> Vec<f64> {
        match self {
            Self::Logistic { y, .. } => y.to_vec(),
            Self::Spatial { z, .. } => z.to_vec(),
            Self::Garch { y } => y.clone(),
        }
    }

    pub fn with_response(&self, r: Vec<f64>) -> Self {
        match self {
            Self::Logistic { x, .. } => Self::Logistic {
                x: x.clone(),
                y: Array1::from(r),
            },
            Self::Spatial { coords, .. } => Self::Spatial {
                coords: coords.clone(),
                z: Array1::from(r),
            },
            Self::Garch { .. } => Self::Garch { y: r },
        }
    }
}

pub fn simulate_data(cfg: &ScenarioConfig, seed: u64) -> Result<SimData> {
    let mut rng = stream(seed);
    let p = &cfg.true_params;
    match cfg.model_kind {
        ModelKind::Logistic => {
            let (x, y) = generate_logistic(p, cfg.n, &mut rng);
            Ok(SimData::Logistic { x, y })
        }
        ModelKind::Spatial => {
            let (coords, z) = generate_spatial(&p[..6], p[6], cfg.n, &mut rng)?;
            Ok(SimData::Spatial { coords, z })
        }
        ModelKind::Garch => Ok(SimData::Garch {
            y: generate_garch(p[0], p[1], p[2], cfg.n, cfg.garch.burnin, &mut rng)?,
        }),
        ModelKind::NormalMean => Err(Error::config("model", "normal_mean has no generator")),
    }
}

pub fn build_model(cfg: &ScenarioConfig, data: SimData) -> Result<AnyModel> {
    Ok(match data {
        SimData::Logistic { x, y } => AnyModel::Logistic(LogisticModel::with_common_prior(
            x,
            y,
            logistic_prior_preset(cfg.prior_id)?,
        )?),
        SimData::Spatial { coords, z } => {
            let (sd, s2) = spatial_prior_preset(cfg.prior_id)?;
            AnyModel::Spatial(SpatialTrendModel::new(coords, z, sd, s2)?)
        }
        SimData::Garch { y } => AnyModel::Garch(
            GarchModel::new(y, cfg.garch.family, garch_prior_preset(cfg.prior_id)?, None)?
                .with_deletion(cfg.garch.deletion),
        ),
    })
}

/// True parameters on the reporting scale of [`PosteriorModel::to_natural`].
pub fn natural_truth(cfg: &ScenarioConfig) -> Vec<f64> {
    let mut t = cfg.true_params.clone();
    if cfg.model_kind == ModelKind::Spatial {
        t[6] = t[6].sqrt();
    }
    t
}

fn natural_names(kind: ModelKind) -> Vec<String> {
    let names: &[&str] = match kind {
        ModelKind::Spatial => &["beta0", "beta1", "beta2", "beta3", "beta4", "beta5", "sigma"],
        ModelKind::Garch => &["alpha0", "alpha1", "beta1"],
        _ => &["beta0", "beta1", "beta2"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

/// Data for replication `r`; shared by every scenario of that replication.
fn replication_data(cfg: &ScenarioConfig, r: usize) -> Result<SimData> {
    simulate_data(cfg, derive_seed(cfg.master_seed, tags::DATA, r as u64))
}

fn fit(cfg: &ScenarioConfig, model: &AnyModel, r: usize, scenario: Scenario) -> Result<crate::hmc::PosteriorSample> {
    let hmc = HmcConfig {
        seed: derive_seed(cfg.master_seed, tags::FIT, (r * 4 + scenario as usize) as u64),
        ..cfg.hmc.clone()
    };
    let init = Init::Jittered {
        point: model.initial_point(),
        radius: 0.5,
    };
    run_chains(model, &hmc, &init)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_RATE * total as f64 {
        Err(Error::StudyFailed { failed, total })
    } else {
        Ok(())
    }
}

/// Posterior-mean bias and SMSE over replications of uncontaminated data.
/// `workers = 0` uses one thread per core.
pub fn run_bias_study(cfg: &ScenarioConfig, workers: usize) -> Result<BiasSmseTable> {
    cfg.validate()?;
    if cfg.study != StudyKind::Bias {
        return Err(Error::config("study", "run_bias_study needs study = bias"));
    }
    let results: Vec<Result<Vec<f64>>> = pool(workers)?.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| {
                let model = build_model(cfg, replication_data(cfg, r)?)?;
                let sample = fit(cfg, &model, r, Scenario::I)?;
                let mut mean = vec![0.0; natural_names(cfg.model_kind).len()];
                for row in sample.draws.rows() {
                    let nat = model.to_natural(row.as_slice().expect("row-major draws"));
                    for (m, v) in mean.iter_mut().zip(nat) {
                        *m += v;
                    }
                }
                Ok(mean.into_iter().map(|m| m / sample.len() as f64).collect())
            })
            .collect()
    });
    let mut estimates = Vec::new();
    let mut failed = 0;
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(e) => estimates.push(e),
            Err(e) => {
                log::warn!("replication {r} failed: {e}");
                failed += 1;
            }
        }
    }
    check_failures(failed, cfg.replications)?;
    let mut table = bias_smse(&estimates, &natural_truth(cfg))?;
    table.model = cfg.model_kind.as_str().to_string();
    table.params = natural_names(cfg.model_kind);
    table.failed = failed;
    Ok(table)
}

/// Normalized divergences at the watched observations, one fit per
/// replication and scenario. `workers = 0` uses one thread per core.
pub fn run_influence_study(cfg: &ScenarioConfig, workers: usize) -> Result<InfluenceStudyTable> {
    cfg.validate()?;
    if cfg.study != StudyKind::Influence {
        return Err(Error::config("study", "run_influence_study needs study = influence"));
    }
    let jobs: Vec<(usize, Scenario)> = cfg
        .scenarios
        .iter()
        .flat_map(|&s| (0..cfg.replications).map(move |r| (r, s)))
        .collect();
    let results: Vec<Result<Vec<f64>>> = pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(r, s)| watched_divergences(cfg, r, s))
            .collect()
    });

    let mut rows = Vec::new();
    for (k, &scenario) in cfg.scenarios.iter().enumerate() {
        let chunk = &results[k * cfg.replications..(k + 1) * cfg.replications];
        let mut ok = Vec::new();
        let mut failed = 0;
        for (r, res) in chunk.iter().enumerate() {
            match res {
                Ok(d) => ok.push(d.clone()),
                Err(e) => {
                    log::warn!("scenario {} replication {r} failed: {e}", scenario.label());
                    failed += 1;
                }
            }
        }
        check_failures(failed, cfg.replications)?;
        rows.push(InfluenceRow::from_replications(
            scenario,
            &cfg.watched_indices,
            &cfg.contaminated(scenario),
            &ok,
            failed,
        ));
    }
    Ok(InfluenceStudyTable {
        model: cfg.model_kind.as_str().to_string(),
        watched: cfg.watched_indices.clone(),
        rows,
    })
}

/// Normalized divergence at each watched index for one replication.
fn watched_divergences(cfg: &ScenarioConfig, r: usize, scenario: Scenario) -> Result<Vec<f64>> {
    let clean = replication_data(cfg, r)?;
    let scheme = PerturbationScheme::new(cfg.model_kind.contamination_kind(), cfg.contaminated(scenario));
    let data = clean.with_response(contaminate(&clean.response(), &scheme)?);
    let model = build_model(cfg, data)?;
    let sample = fit(cfg, &model, r, scenario)?;
    let report = influence_report(&model, &sample.draws, &case_deletion_schemes(&model), &cfg.influence)?;
    cfg.watched_indices
        .iter()
        .map(|&i| {
            report
                .indices
                .iter()
                .position(|&j| j == i)
                .map(|k| report.normalized[k])
                .ok_or(Error::IndexOutOfRange { index: i, n: model.n_obs() })
        })
        .collect()
}
