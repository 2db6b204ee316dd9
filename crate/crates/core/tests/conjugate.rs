use bregdiag::hmc::{run_chains, HmcConfig, Init};
use bregdiag::influence::{
    case_deletion_schemes, compute_delta, divergence_kl, flag_influential, influence_report, normalize,
    InfluenceOptions,
};
use bregdiag::models::{NormalMeanModel, PerturbationScheme};
use bregdiag::seed::stream;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

fn model(seed: u64) -> NormalMeanModel {
    let mut rng = stream(seed);
    let y = (0..20).map(|_| 1.5 + rng.sample::<f64, _>(StandardNormal)).collect();
    NormalMeanModel::standard(y).unwrap()
}

fn exact_draws(m: &NormalMeanModel, s: usize, seed: u64) -> Array2<f64> {
    let (mean, var) = m.posterior();
    let mut rng = stream(seed);
    Array2::from_shape_fn((s, 1), |_| mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal))
}

fn kl_relative_error(m: &NormalMeanModel, draws: &Array2<f64>, i: usize) -> f64 {
    let exact = m.kl_full_vs_deleted(&[i]).unwrap();
    let d = compute_delta(m, draws, &PerturbationScheme::case_deletion([i])).unwrap();
    (divergence_kl(&d) / exact - 1.0).abs()
}

#[test]
fn kl_estimate_improves_with_more_draws() {
    let (mut small, mut large) = (0.0, 0.0);
    for seed in 0..20 {
        let m = model(100 + seed);
        let few = exact_draws(&m, 1000, 200 + seed);
        let many = exact_draws(&m, 16_000, 300 + seed);
        for i in [1, 10, 20] {
            small += kl_relative_error(&m, &few, i);
            large += kl_relative_error(&m, &many, i);
        }
    }
    assert!(large < small, "S = 16000 error {large} not below S = 1000 error {small}");
}

#[test]
fn hmc_recovers_conjugate_posterior() {
    let m = model(42);
    let cfg = HmcConfig {
        chains: 2,
        warmup: 1000,
        iterations: 3000,
        num_leapfrog: 8,
        seed: 9,
        ..Default::default()
    };
    let sample = run_chains(&m, &cfg, &Init::Random).unwrap();
    let (mean, var) = m.posterior();
    let draws = sample.draws.column(0);
    let s = draws.len() as f64;
    let est_mean = draws.sum() / s;
    let est_var = draws.iter().map(|v| (v - est_mean).powi(2)).sum::<f64>() / (s - 1.0);
    let mcse = (var / sample.ess[0]).sqrt();
    assert!((est_mean - mean).abs() < 4.0 * mcse, "{est_mean} vs {mean}");
    assert!((est_var / var - 1.0).abs() < 0.15, "{est_var} vs {var}");
    assert!(sample.max_rhat().unwrap() < 1.05);
    for i in [1, 20] {
        assert!(kl_relative_error(&m, &sample.draws, i) < 0.1);
    }
}

#[test]
fn estimated_flags_match_exact_flags() {
    // normalized exact KL is (y_i − ȳ)²-driven, so with n = 100 some
    // observation almost always exceeds 3/n even on clean data
    let (mut agree, mut exact_clean) = (0, 0);
    for seed in 0..20 {
        let mut rng = stream(700 + seed);
        let y = (0..100).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let m = NormalMeanModel::standard(y).unwrap();
        let exact: Vec<f64> = (1..=100).map(|i| m.kl_full_vs_deleted(&[i]).unwrap()).collect();
        let exact_flags = flag_influential(&normalize(&exact).unwrap(), 3.0);
        let report = influence_report(
            &m,
            &exact_draws(&m, 4000, 800 + seed),
            &case_deletion_schemes(&m),
            &InfluenceOptions {
                multiplier: 3.0,
                ..Default::default()
            },
        )
        .unwrap();
        let estimated: Vec<usize> = report.flagged.iter().map(|i| i - 1).collect();
        agree += (estimated == exact_flags) as usize;
        exact_clean += exact_flags.is_empty() as usize;
    }
    assert!(agree >= 18, "flags agree in {agree} of 20");
    assert!(exact_clean <= 2, "exact divergences unflagged in {exact_clean} of 20");
}
