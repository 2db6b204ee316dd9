//! End-to-end influence checks on simulated logistic data.

use bregdiag::hmc::{run_chains, HmcConfig, Init};
use bregdiag::influence::{case_deletion_schemes, influence_report, Estimator, InfluenceOptions};
use bregdiag::models::{AnyModel, PerturbationScheme, PosteriorModel};
use bregdiag::sim::{build_model, contaminate, natural_truth, simulate_data, ScenarioConfig};
use ndarray::Array2;

fn config() -> ScenarioConfig {
    ScenarioConfig::preset("table5_desk").unwrap()
}

fn data_model(cfg: &ScenarioConfig, seed: u64, flip: &[usize]) -> AnyModel {
    let data = simulate_data(cfg, seed).unwrap();
    let y = contaminate(&data.response(), &PerturbationScheme::label_flip(flip.iter().copied())).unwrap();
    build_model(cfg, data.with_response(y)).unwrap()
}

fn draws(model: &AnyModel, seed: u64, iterations: usize) -> Array2<f64> {
    let cfg = HmcConfig {
        chains: 2,
        warmup: 500,
        iterations,
        seed,
        ..Default::default()
    };
    let init = Init::Jittered {
        point: model.initial_point(),
        radius: 0.5,
    };
    run_chains(model, &cfg, &init).unwrap().draws
}

fn kl(multiplier: f64) -> InfluenceOptions {
    InfluenceOptions {
        multiplier,
        ..Default::default()
    }
}

#[test]
fn clean_data_flags_a_small_share() {
    let cfg = ScenarioConfig::preset("table5_model1").unwrap();
    let mut flagged = 0;
    for seed in 0..20 {
        let m = data_model(&cfg, 1000 + seed, &[]);
        let r = influence_report(&m, &draws(&m, seed, 1500), &case_deletion_schemes(&m), &kl(3.0)).unwrap();
        assert!((r.normalized.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        flagged += r.flagged.len();
    }
    // for a normal mean the flagged share is P(χ²₁ > 3) ≈ 0.083; logistic
    // influence has somewhat heavier tails
    let share = flagged as f64 / 2000.0;
    assert!(share < 0.15, "{share}");
}

#[test]
fn flipped_label_is_flagged_and_estimators_agree() {
    let cfg = config();
    let alpha2 = InfluenceOptions {
        estimator: Estimator::GeneralAlpha,
        alpha: 2.0,
        multiplier: 2.0,
    };
    let (mut flagged, mut agree) = (0, 0);
    let reps = 10;
    for seed in 0..reps {
        let m = data_model(&cfg, 2000 + seed, &[64]);
        let d = draws(&m, 50 + seed, 1500);
        let schemes = case_deletion_schemes(&m);
        let r1 = influence_report(&m, &d, &schemes, &kl(2.0)).unwrap();
        let r2 = influence_report(&m, &d, &schemes, &alpha2).unwrap();
        flagged += r1.flagged.contains(&64) as usize;
        agree += (r1.argmax() == r2.argmax()) as usize;
    }
    assert!(flagged >= 9, "index 64 flagged in {flagged} of {reps}");
    assert!(agree >= 9, "KL and alpha = 2 argmax agree in {agree} of {reps}");
}

#[test]
fn model_one_fit_recovers_truth() {
    let mut cfg = ScenarioConfig::preset("table1_desk").unwrap();
    cfg.n = 300;
    let m = data_model(&cfg, 77, &[]);
    let d = draws(&m, 3, 2500);
    let means: Vec<f64> = (0..3).map(|j| d.column(j).mean().unwrap()).collect();
    for (est, truth) in means.iter().zip(natural_truth(&cfg)) {
        assert!((est - truth).abs() < 0.3, "{means:?}");
    }
}
