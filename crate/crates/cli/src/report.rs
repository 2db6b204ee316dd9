use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use crate::output::{write_atomic, RunManifest};

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directories of completed runs.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Write the markdown here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Highest-divergence observations listed per diagnose run.
    #[arg(long, default_value_t = 5)]
    pub top: usize,
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))
}

/// `index -> normalized divergence` from a diagnose run.
fn divergences(dir: &Path) -> Result<BTreeMap<usize, f64>> {
    let text = read(dir, "divergence.csv")?;
    let mut out = BTreeMap::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let parse = || -> Option<(usize, f64)> { Some((cells.first()?.parse().ok()?, cells.get(2)?.parse().ok()?)) };
        let (i, d) = parse().with_context(|| format!("{}: malformed line {}", dir.join("divergence.csv").display(), k + 1))?;
        out.insert(i, d);
    }
    Ok(out)
}

fn fenced(s: &mut String, body: &str) {
    let _ = writeln!(s, "```");
    s.push_str(body);
    if !body.ends_with('\n') {
        s.push('\n');
    }
    let _ = writeln!(s, "```\n");
}

pub fn render(runs: &[PathBuf], top: usize) -> Result<String> {
    let mut s = String::from("# bregdiag report\n\n");
    let mut diag: Vec<(String, BTreeMap<usize, f64>)> = Vec::new();
    for (k, dir) in runs.iter().enumerate() {
        let m = RunManifest::read(dir)?;
        let label = format!("run {} ({})", k + 1, m.command);
        let _ = writeln!(s, "## Run {}: `{}`\n", k + 1, dir.display());
        let _ = writeln!(s, "- command: {}", m.command);
        let _ = writeln!(s, "- seed: {}", m.seed);
        let _ = writeln!(s, "- config digest: {}", m.config_digest);
        let _ = writeln!(s, "- tool version: {}", m.tool_version);
        if let Some(model) = m.settings.get("model") {
            let _ = writeln!(s, "- model: {model}");
        }
        if let Some(r) = m.max_rhat {
            let _ = writeln!(s, "- max R-hat: {r:.4}");
        }
        let _ = writeln!(s, "- wall time: {:.1} s\n", m.timing_seconds);
        match m.command.as_str() {
            "fit" => {
                let _ = writeln!(s, "Posterior summary:\n");
                fenced(&mut s, &read(dir, "summary.csv")?);
            }
            "diagnose" => {
                for key in ["estimator", "alpha", "multiplier", "perturbation"] {
                    if let Some(v) = m.settings.get(key) {
                        let _ = writeln!(s, "- {key}: {v}");
                    }
                }
                let d = divergences(dir)?;
                let mut ranked: Vec<(usize, f64)> = d.iter().map(|(i, v)| (*i, *v)).collect();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                let _ = writeln!(s, "\nHighest normalized divergences:\n");
                let _ = writeln!(s, "| index | D |\n|---:|---:|");
                for (i, v) in ranked.iter().take(top) {
                    let _ = writeln!(s, "| {i} | {v:.6} |");
                }
                let _ = writeln!(s);
                diag.push((label, d));
            }
            "simulate" => {
                for name in ["influence_table.txt", "bias_table.txt"] {
                    if dir.join(name).exists() {
                        fenced(&mut s, &read(dir, name)?);
                    }
                }
            }
            other => bail!("{}: unknown command `{other}` in manifest", dir.display()),
        }
    }

    if diag.len() >= 2 {
        let (first_label, first) = &diag[0];
        for (label, d) in &diag[1..] {
            if d.keys().ne(first.keys()) {
                let only_a: Vec<String> = first.keys().filter(|i| !d.contains_key(i)).map(|i| i.to_string()).collect();
                let only_b: Vec<String> = d.keys().filter(|i| !first.contains_key(i)).map(|i| i.to_string()).collect();
                bail!(
                    "observation indices differ between {first_label} and {label}: only in the first [{}], only in the second [{}]",
                    only_a.join(", "),
                    only_b.join(", ")
                );
            }
        }
        let _ = writeln!(s, "## Comparison of normalized divergences\n");
        let _ = write!(s, "| index |");
        for (label, _) in &diag {
            let _ = write!(s, " D {label} |");
        }
        let _ = write!(s, "\n|---:|");
        for _ in &diag {
            let _ = write!(s, "---:|");
        }
        let _ = writeln!(s);
        for i in first.keys() {
            let _ = write!(s, "| {i} |");
            for (_, d) in &diag {
                let _ = write!(s, " {:.6} |", d[i]);
            }
            let _ = writeln!(s);
        }
    }
    Ok(s)
}

pub fn run(args: ReportArgs) -> Result<u8> {
    let md = render(&args.runs, args.top)?;
    match &args.out {
        Some(path) => write_atomic(path, md.as_bytes())?,
        None => print!("{md}"),
    }
    Ok(0)
}
