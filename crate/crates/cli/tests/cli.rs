use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bregdiag::seed::stream;
use bregdiag::sim::generate_logistic;
use tempfile::TempDir;

const SMALL: &[&str] = &["--chains", "2", "--iters", "400", "--warmup", "200", "--leapfrog", "8"];

fn bregdiag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bregdiag"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn logistic_csv(dir: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let (x, y) = generate_logistic(&[1.3, -0.7, 0.3], n, &mut stream(seed));
    let mut text = String::from("x1,x2,y\n");
    for i in 0..n {
        text.push_str(&format!("{},{},{}\n", x[[i, 1]], x[[i, 2]], y[i]));
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fit(data: &Path, out: &Path, seed: &str) -> Output {
    let mut args = vec!["fit", "--data", s(data), "--model", "logistic", "--seed", seed, "--out", s(out)];
    args.extend_from_slice(SMALL);
    bregdiag(&args)
}

#[test]
fn repeated_seed_gives_identical_draws() {
    let tmp = TempDir::new().unwrap();
    let data = logistic_csv(tmp.path(), "d.csv", 80, 1);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = fit(&data, out, "17");
        assert!(o.status.code() == Some(0) || o.status.code() == Some(2), "{}", stderr(&o));
    }
    for f in ["draws_chain1.csv", "draws_chain2.csv", "summary.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["seed"], 17);
}

#[test]
fn rhat_threshold_sets_exit_code_two() {
    let tmp = TempDir::new().unwrap();
    let data = logistic_csv(tmp.path(), "d.csv", 60, 2);
    let out = tmp.path().join("fit");
    let mut args = vec!["fit", "--data", s(&data), "--model", "logistic", "--rhat-threshold", "1.0", "--out", s(&out)];
    args.extend_from_slice(SMALL);
    let o = bregdiag(&args);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn empty_csv_names_the_file() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("nothing_here.csv");
    std::fs::write(&data, "").unwrap();
    let o = fit(&data, &tmp.path().join("out"), "1");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nothing_here.csv"), "{}", stderr(&o));
}

#[test]
fn unknown_scenario_lists_valid_labels() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sim");
    let o = bregdiag(&["simulate", "--preset", "table5_desk", "--scenarios", "I,V", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("I, II, III, IV"), "{}", stderr(&o));
}

#[test]
fn diagnose_and_report() {
    let tmp = TempDir::new().unwrap();
    let data = logistic_csv(tmp.path(), "d.csv", 60, 3);
    let fit_dir = tmp.path().join("fit");
    let o = fit(&data, &fit_dir, "5");
    assert!(o.status.code() != Some(1), "{}", stderr(&o));

    let kl_dir = tmp.path().join("kl");
    let o = bregdiag(&["diagnose", "--draws", s(&fit_dir), "--out", s(&kl_dir)]);
    assert!(o.status.code() != Some(1), "{}", stderr(&o));
    let csv = std::fs::read_to_string(kl_dir.join("divergence.csv")).unwrap();
    assert!(csv.starts_with("index,raw,normalized,flagged\n"));
    assert_eq!(csv.lines().count(), 61);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(kl_dir.join("divergence.json")).unwrap()).unwrap();
    assert_eq!(json["indices"].as_array().unwrap().len(), 60);

    let a2_dir = tmp.path().join("a2");
    let o = bregdiag(&["diagnose", "--draws", s(&fit_dir), "--alpha", "2", "--out", s(&a2_dir)]);
    assert!(o.status.code() != Some(1), "{}", stderr(&o));

    let o = bregdiag(&["report", s(&fit_dir)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let md = String::from_utf8(o.stdout).unwrap();
    let summary = std::fs::read_to_string(fit_dir.join("summary.csv")).unwrap();
    assert!(md.contains(&summary), "{md}");

    let o = bregdiag(&["report", s(&kl_dir), s(&a2_dir)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let md = String::from_utf8(o.stdout).unwrap();
    assert!(md.contains("## Comparison of normalized divergences"), "{md}");
    assert!(md.contains("| index | D run 1 (diagnose) | D run 2 (diagnose) |"), "{md}");

    // a diagnose run on a data set of another size cannot be joined
    let other = logistic_csv(tmp.path(), "other.csv", 50, 4);
    let other_dir = tmp.path().join("other");
    let mut args = vec!["diagnose", "--data", s(&other), "--model", "logistic", "--out", s(&other_dir)];
    args.extend_from_slice(SMALL);
    let o = bregdiag(&args);
    assert!(o.status.code() != Some(1), "{}", stderr(&o));
    let o = bregdiag(&["report", s(&kl_dir), s(&other_dir)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("observation indices differ"), "{}", stderr(&o));

    let o = bregdiag(&["report", s(&tmp.path().join("missing"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn draws_with_wrong_parameter_count_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let data = logistic_csv(tmp.path(), "d.csv", 60, 6);
    let fit_dir = tmp.path().join("fit");
    assert!(fit(&data, &fit_dir, "8").status.code() != Some(1));
    for c in 1..=2 {
        let path = fit_dir.join(format!("draws_chain{c}.csv"));
        let text = std::fs::read_to_string(&path).unwrap();
        let trimmed: String = text
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
            .collect();
        std::fs::write(&path, trimmed).unwrap();
    }
    let o = bregdiag(&["diagnose", "--draws", s(&fit_dir), "--out", s(&tmp.path().join("d"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!tmp.path().join("d").join("divergence.csv").exists());
}
