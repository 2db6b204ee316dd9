use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bregdiag::influence::{influence_report, Estimator, InfluenceOptions};
use bregdiag::models::{PerturbationKind, PerturbationScheme, PosteriorModel};
use clap::Args;

use crate::model::{self, HMC_KEYS, MODEL_KEYS};
use crate::output::{OutDir, RunManifest};
use crate::settings::Settings;
use crate::{init_workers, HmcArgs, ModelArgs};

const DIAG_KEYS: &[&str] = &["alpha", "estimator", "multiplier", "perturbation", "draws"];

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    /// Output directory of a previous `fit` run; without it the model is
    /// refit from --data.
    #[arg(long, conflicts_with = "data")]
    pub draws: Option<PathBuf>,
    /// key = value settings file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub hmc: HmcArgs,
    /// Exponent of the ψ_α divergence; any value other than 1 selects the
    /// general estimator.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// kl (fast α = 1 path) or alpha (general α with a marginal likelihood
    /// estimate).
    #[arg(long)]
    pub estimator: Option<String>,
    /// Flag observations whose normalized divergence exceeds multiplier/n.
    #[arg(long)]
    pub multiplier: Option<f64>,
    /// deletion, additive or flip.
    #[arg(long)]
    pub perturbation: Option<String>,
    /// Number of observations printed.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn influence_options(settings: &Settings) -> Result<InfluenceOptions> {
    let alpha: f64 = settings.parse_or("alpha", 1.0)?;
    let estimator = match settings.get("estimator") {
        None if alpha == 1.0 => Estimator::KlFast,
        None => Estimator::GeneralAlpha,
        Some("alpha") => Estimator::GeneralAlpha,
        Some(s) => s.parse()?,
    };
    if estimator == Estimator::KlFast && alpha != 1.0 {
        bail!("the kl estimator is the α = 1 case; use --estimator alpha for α = {alpha}");
    }
    Ok(InfluenceOptions {
        estimator,
        alpha,
        multiplier: settings.parse_or("multiplier", 1.0)?,
    })
}

fn perturbation(settings: &Settings) -> Result<PerturbationKind> {
    Ok(match settings.get("perturbation").unwrap_or("deletion") {
        "deletion" => PerturbationKind::CaseDeletion,
        "additive" => PerturbationKind::Additive5Sigma,
        "flip" => PerturbationKind::LabelFlip,
        other => bail!("unknown perturbation `{other}`; expected deletion, additive or flip"),
    })
}

pub fn run(args: DiagnoseArgs) -> Result<u8> {
    let started = Instant::now();
    init_workers(args.workers);
    let mut settings = Settings::load(args.config.as_deref())?;
    let from_fit = args.draws.is_some() || settings.get("draws").is_some();
    if let Some(dir) = &args.draws {
        settings.set("draws", dir.display());
    }
    if from_fit {
        let dir = PathBuf::from(settings.require("draws")?);
        let fit = crate::output::RunManifest::read(&dir)?;
        if fit.command != "fit" {
            bail!("{} is a `{}` run, not a `fit` run", dir.display(), fit.command);
        }
        for (k, v) in &fit.settings {
            if settings.get(k).is_none() {
                settings.set(k, v);
            }
        }
        let dir = std::fs::canonicalize(&dir).with_context(|| format!("draws directory {}", dir.display()))?;
        settings.set("draws", dir.display());
    }
    args.model.apply(&mut settings);
    args.hmc.apply(&mut settings);
    settings.flag("alpha", args.alpha);
    settings.flag("estimator", args.estimator.as_ref());
    settings.flag("multiplier", args.multiplier);
    settings.flag("perturbation", args.perturbation.as_ref());
    let keys: Vec<&str> = MODEL_KEYS.iter().chain(HMC_KEYS).chain(DIAG_KEYS).copied().collect();
    settings.check_known(&keys)?;
    model::canonical_data(&mut settings)?;

    let m = model::build_model(&settings)?;
    let cfg = model::hmc_config(&settings)?;
    let threshold = settings.parse_or("rhat_threshold", model::DEFAULT_RHAT_THRESHOLD)?;
    let sample = if from_fit {
        model::read_draws(std::path::Path::new(settings.require("draws")?), &m, cfg.chains)?
    } else {
        model::sample(&m, &cfg)?
    };

    let opts = influence_options(&settings)?;
    let kind = perturbation(&settings)?;
    let schemes: Vec<PerturbationScheme> = m
        .scored_observations()
        .into_iter()
        .map(|i| PerturbationScheme::new(kind, [i]))
        .collect();
    let report = influence_report(&m, &sample.draws, &schemes, &opts)?;

    let mut out = OutDir::create(&args.out)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    out.write("divergence.csv", &csv)?;
    out.write("divergence.json", report.to_json().as_bytes())?;
    let mut manifest = RunManifest::new("diagnose", &settings, cfg.seed, started);
    manifest.max_rhat = sample.max_rhat();
    out.finish(manifest)?;

    let mut order: Vec<usize> = (0..report.raw.len()).collect();
    order.sort_by(|&a, &b| report.normalized[b].total_cmp(&report.normalized[a]).then(a.cmp(&b)));
    println!(
        "estimator {} (alpha = {}), {} draws, threshold {:.5} ({} x 1/{})",
        report.estimator.as_str(),
        report.alpha,
        report.draws,
        report.threshold,
        report.multiplier,
        report.raw.len()
    );
    println!("{:>6} {:>12} {:>12}  flag", "index", "D", "raw");
    for &k in order.iter().take(args.top) {
        let idx = report.indices[k];
        println!(
            "{:>6} {:>12.6} {:>12.4e}  {}",
            idx,
            report.normalized[k],
            report.raw[k],
            if report.flagged.contains(&idx) { "*" } else { "" }
        );
    }
    println!("{} observation(s) flagged", report.flagged.len());

    match sample.max_rhat() {
        Some(r) if !from_fit && !(r <= threshold) => {
            eprintln!("warning: max R-hat {r:.3} exceeds {threshold}; chains may not have converged");
            Ok(2)
        }
        _ => Ok(0),
    }
}
