use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::Args;

use crate::model::{self, HMC_KEYS, MODEL_KEYS};
use crate::output::{OutDir, RunManifest};
use crate::settings::Settings;
use crate::{init_workers, HmcArgs, ModelArgs};

#[derive(Args, Debug)]
pub struct FitArgs {
    /// key = value settings file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub hmc: HmcArgs,
    /// Worker threads (default: one per core).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: FitArgs) -> Result<u8> {
    let started = Instant::now();
    init_workers(args.workers);
    let mut settings = Settings::load(args.config.as_deref())?;
    args.model.apply(&mut settings);
    args.hmc.apply(&mut settings);
    let keys: Vec<&str> = MODEL_KEYS.iter().chain(HMC_KEYS).copied().collect();
    settings.check_known(&keys)?;
    model::canonical_data(&mut settings)?;

    let m = model::build_model(&settings)?;
    let cfg = model::hmc_config(&settings)?;
    let threshold = settings.parse_or("rhat_threshold", model::DEFAULT_RHAT_THRESHOLD)?;
    let sample = model::sample(&m, &cfg)?;
    let natural = model::natural_sample(&m, &sample)?;

    let mut out = OutDir::create(&args.out)?;
    let names = bregdiag::models::PosteriorModel::param_names(&m);
    for c in 0..sample.chains {
        let mut buf = Vec::new();
        sample.write_chain_csv(c, &names, &mut buf)?;
        out.write(&model::draws_file(c), &buf)?;
    }
    let summary = model::summary_csv(&m, &natural);
    out.write("summary.csv", summary.as_bytes())?;

    let mut manifest = RunManifest::new("fit", &settings, cfg.seed, started);
    manifest.max_rhat = natural.max_rhat();
    out.finish(manifest)?;

    print!("{summary}");
    let divergent: usize = sample.divergent_count.iter().sum();
    if divergent > 0 {
        log::warn!("{divergent} divergent transitions after warmup");
    }
    match natural.max_rhat() {
        Some(r) if !(r <= threshold) => {
            eprintln!("warning: max R-hat {r:.3} exceeds {threshold}; chains may not have converged");
            Ok(2)
        }
        _ => Ok(0),
    }
}
