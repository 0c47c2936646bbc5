//! Quantile regression on target-policy samples against the exact
//! conditional quantiles of the synthetic environment.

use pacopp::quantile::{fit_quantile, fit_quantile_pair};
use pacopp::synthenv::SynthEnvSpec;
use pacopp::{Context, PacParams, QuantileTrainConfig, Rng};

fn params() -> PacParams {
    PacParams::symmetric(0.2, 0.1, 0.5).unwrap()
}

#[test]
fn affine_fit_matches_oracle_quantiles_at_zero() {
    let env = SynthEnvSpec::default();
    let mut rng = Rng::new(11);
    let train = env.sample_target(5000, &mut rng);
    let model =
        fit_quantile_pair(&train, &QuantileTrainConfig::default(), &params(), &mut rng).unwrap();
    let zero = Context::scalar(0.0);
    let (lo, up) = model.eval(&zero);
    let (oracle_lo, oracle_up) = (
        env.oracle_quantile(&zero, 0.1),
        env.oracle_quantile(&zero, 0.9),
    );
    assert!((oracle_lo + 4.745).abs() < 0.01 && (oracle_up - 4.745).abs() < 0.01);
    assert!((lo - oracle_lo).abs() < 0.4, "q_lo(0) = {lo}");
    assert!((up - oracle_up).abs() < 0.4, "q_up(0) = {up}");
}

#[test]
fn held_out_exceedance_rates_match_levels() {
    let env = SynthEnvSpec::default();
    let mut rng = Rng::new(12);
    let train = env.sample_target(5000, &mut rng);
    let model =
        fit_quantile_pair(&train, &QuantileTrainConfig::default(), &params(), &mut rng).unwrap();
    let held = env.sample_target(20_000, &mut rng);
    let n = held.len() as f64;
    let below = held
        .iter()
        .filter(|t| t.reward < model.eval(&t.context).0)
        .count() as f64
        / n;
    let above = held
        .iter()
        .filter(|t| t.reward > model.eval(&t.context).1)
        .count() as f64
        / n;
    assert!((below - 0.1).abs() < 0.03, "below {below}");
    assert!((above - 0.1).abs() < 0.03, "above {above}");
}

fn assert_no_crossing(cfg: &QuantileTrainConfig, seed: u64) {
    let env = SynthEnvSpec::default();
    let mut rng = Rng::new(seed);
    let train = env.sample_target(2000, &mut rng);
    let model = fit_quantile_pair(&train, cfg, &params(), &mut rng).unwrap();
    for i in 0..1000 {
        let s = Context::scalar(-10.0 + 20.0 * i as f64 / 999.0);
        let (lo, up) = model.eval(&s);
        assert!(lo <= up, "crossing at s = {}: {lo} > {up}", s.first());
    }
}

#[test]
fn affine_pair_does_not_cross() {
    assert_no_crossing(&QuantileTrainConfig::default(), 13);
}

#[test]
fn mlp_pair_does_not_cross() {
    assert_no_crossing(&QuantileTrainConfig::mlp(), 14);
}

#[test]
fn mlp_training_loss_never_increases() {
    let env = SynthEnvSpec::default();
    let mut rng = Rng::new(15);
    let train = env.sample_target(1000, &mut rng);
    let fit = fit_quantile(&train, 0.1, &QuantileTrainConfig::mlp(), &mut rng).unwrap();
    assert!(fit.loss_history.len() > 1);
    assert!(fit.loss_history.windows(2).all(|w| w[1] <= w[0]));
    assert!(fit.loss_history.last().unwrap() < fit.loss_history.first().unwrap());
}

#[test]
fn saved_model_round_trips() {
    let env = SynthEnvSpec::default();
    let mut rng = Rng::new(16);
    let train = env.sample_target(500, &mut rng);
    for cfg in [QuantileTrainConfig::default(), QuantileTrainConfig::mlp()] {
        let model = fit_quantile_pair(&train, &cfg, &params(), &mut rng).unwrap();
        let back = pacopp::QuantilePairModel::from_text(&model.to_text()).unwrap();
        for s in [-3.0, 0.0, 2.5] {
            assert_eq!(
                model.eval(&Context::scalar(s)),
                back.eval(&Context::scalar(s))
            );
        }
    }
}

#[test]
fn too_little_data_is_rejected() {
    let env = SynthEnvSpec::default();
    let mut rng = Rng::new(17);
    let one = env.sample_target(1, &mut rng);
    assert!(fit_quantile_pair(&one, &QuantileTrainConfig::default(), &params(), &mut rng).is_err());
}
