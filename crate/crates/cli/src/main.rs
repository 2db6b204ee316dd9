use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod diagnose;
mod fit;
mod model;
mod output;
mod report;
mod settings;
mod simulate;

const DATA_HELP: &str = "\
Input CSV files have a header row and numeric cells:
  logistic  a 0/1 response column (name set by --response, default y) plus
            covariate columns; an intercept is added automatically
  spatial   columns x, y (coordinates) and z (response), any order
  garch     returns in the first column, or prices with --log-returns

See FORMATS.md for every file the tool reads and writes.";

#[derive(Parser)]
#[command(name = "bregdiag", version, about = "Bayesian case-influence diagnostics with Bregman divergences")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model by HMC and write draws, a summary and a manifest.
    #[command(after_help = DATA_HELP)]
    Fit(fit::FitArgs),
    /// Score every observation's influence on the posterior.
    #[command(after_help = DATA_HELP)]
    Diagnose(diagnose::DiagnoseArgs),
    /// Run a replication study from a config file.
    Simulate(simulate::SimulateArgs),
    /// Merge completed runs into a markdown report.
    Report(report::ReportArgs),
}

/// Model and data selection shared by `fit` and `diagnose`.
#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    /// Input CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// logistic, spatial or garch.
    #[arg(long)]
    pub model: Option<String>,
    /// Prior preset 1, 2 or 3.
    #[arg(long)]
    pub prior: Option<u8>,
    /// Response column for logistic data.
    #[arg(long)]
    pub response: Option<String>,
    /// Treat the garch input column as prices and convert to log returns.
    #[arg(long)]
    pub log_returns: bool,
    /// GARCH innovations: normal or student_t.
    #[arg(long)]
    pub garch_errors: Option<String>,
    /// Student-t degrees of freedom.
    #[arg(long)]
    pub nu: Option<f64>,
    /// GARCH deletion: impute_zero or drop_term_only.
    #[arg(long)]
    pub garch_deletion: Option<String>,
}

/// Sampler flags shared by `fit` and `diagnose`.
#[derive(Args, Debug, Default)]
pub struct HmcArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Iterations per chain, warmup included.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Leapfrog steps per iteration.
    #[arg(long)]
    pub leapfrog: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub target_accept: Option<f64>,
    /// Exit with status 2 when any R-hat exceeds this value.
    #[arg(long)]
    pub rhat_threshold: Option<f64>,
}

impl ModelArgs {
    fn apply(&self, s: &mut settings::Settings) {
        s.flag("data", self.data.as_ref().map(|p| p.display()));
        s.flag("model", self.model.as_ref());
        s.flag("prior", self.prior);
        s.flag("response", self.response.as_ref());
        if self.log_returns {
            s.set("log_returns", true);
        }
        s.flag("garch_errors", self.garch_errors.as_ref());
        s.flag("garch_nu", self.nu);
        s.flag("garch_deletion", self.garch_deletion.as_ref());
    }
}

impl HmcArgs {
    fn apply(&self, s: &mut settings::Settings) {
        s.flag("seed", self.seed);
        s.flag("chains", self.chains);
        s.flag("iterations", self.iters);
        s.flag("warmup", self.warmup);
        s.flag("num_leapfrog", self.leapfrog);
        s.flag("step_size", self.step_size);
        s.flag("target_accept", self.target_accept);
        s.flag("rhat_threshold", self.rhat_threshold);
    }
}

/// Sizes the global thread pool used by chains and per-observation work.
pub fn init_workers(workers: Option<usize>) {
    if let Some(n) = workers {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("global thread pool already initialized");
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Diagnose(a) => diagnose::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Report(a) => report::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
