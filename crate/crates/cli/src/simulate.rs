use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bregdiag::sim::{run_bias_study, run_influence_study, ScenarioConfig, StudyKind};
use clap::Args;

use crate::output::{OutDir, RunManifest};
use crate::settings::Settings;

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Study config (key = value).
    #[arg(long, required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Bundled study instead of a config file: table1_desk, table5_desk,
    /// table5_model1, table6_desk or table7_desk.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Comma-separated scenarios, e.g. I,II.
    #[arg(long)]
    pub scenarios: Option<String>,
    /// Any other config key, as key=value; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads for replications (default: one per core).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: SimulateArgs) -> Result<u8> {
    let started = Instant::now();
    let mut settings = match (&args.config, &args.preset) {
        (Some(path), _) => Settings::load(Some(path))?,
        (None, Some(name)) => {
            let text = bregdiag::sim::PRESETS
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| *t)
                .with_context(|| {
                    let names: Vec<&str> = bregdiag::sim::PRESETS.iter().map(|(n, _)| *n).collect();
                    format!("unknown preset `{name}`; expected one of {}", names.join(", "))
                })?;
            Settings::from_map(bregdiag::sim::parse_kv(text)?)
        }
        (None, None) => bail!("either --config or --preset is required"),
    };
    settings.flag("seed", args.seed);
    settings.flag("replications", args.replications);
    settings.flag("chains", args.chains);
    settings.flag("iterations", args.iters);
    settings.flag("warmup", args.warmup);
    settings.flag("scenarios", args.scenarios.as_ref());
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        settings.set(k.trim(), v.trim());
    }
    let cfg = ScenarioConfig::from_map(settings.map()).context("invalid study config")?;
    // the manifest records every resolved value, defaults included
    let resolved = Settings::from_map(cfg.to_pairs());

    let mut out = OutDir::create(&args.out)?;
    match cfg.study {
        StudyKind::Bias => {
            let t = run_bias_study(&cfg, args.workers)?;
            out.write("bias_table.csv", t.to_csv().as_bytes())?;
            let text = t.render_text();
            out.write("bias_table.txt", text.as_bytes())?;
            print!("{text}");
        }
        StudyKind::Influence => {
            let t = run_influence_study(&cfg, args.workers)?;
            out.write("influence_table.csv", t.to_csv().as_bytes())?;
            let text = t.render_text();
            out.write("influence_table.txt", text.as_bytes())?;
            print!("{text}");
        }
    }
    out.finish(RunManifest::new("simulate", &resolved, cfg.master_seed, started))?;
    Ok(0)
}
