//! Rejection sampling reproduces the target-policy joint law and accepts
//! about `n/B` samples.

use pacopp::stats::{ks_one_sample, ks_two_sample};
use pacopp::synthenv::SynthEnvSpec;
use pacopp::{rejection_sample, Rng, WeightFunction};

fn weight(env: &SynthEnvSpec) -> WeightFunction<'_> {
    WeightFunction::new(&env.target, &env.behavior, 2.0).unwrap()
}

#[test]
fn closed_form_bound_is_two() {
    let env = SynthEnvSpec::default();
    let mut rng = Rng::new(3);
    let d = env.sample_logged(200, &mut rng);
    let probe: Vec<_> = d.contexts().cloned().collect();
    let w = WeightFunction::for_policies(&env.target, &env.behavior, &probe).unwrap();
    assert!((w.bound() - 2.0).abs() < 1e-12);
}

#[test]
fn accepted_rewards_follow_the_target_law() {
    let env = SynthEnvSpec::default();
    let mut passes = 0;
    for seed in 0..10 {
        let mut rng = Rng::new(seed);
        let d = env.sample_logged(20_000, &mut rng);
        let rs = rejection_sample(&d, &weight(&env), &mut rng.child(1));
        assert_eq!(rs.violations, 0);
        let accepted: Vec<f64> = rs.samples.iter().map(|t| t.reward).collect();
        let direct: Vec<f64> = env
            .sample_target(50_000, &mut rng.child(2))
            .iter()
            .map(|t| t.reward)
            .collect();
        if ks_two_sample(&accepted, &direct).p_value > 0.01 {
            passes += 1;
        }
    }
    assert!(passes >= 9, "only {passes}/10 seeds passed");
}

#[test]
fn accepted_contexts_keep_their_marginal() {
    // Under the target policy the context law is unchanged.
    let env = SynthEnvSpec::default();
    let mut rng = Rng::new(77);
    let d = env.sample_logged(20_000, &mut rng);
    let rs = rejection_sample(&d, &weight(&env), &mut rng);
    let ctx: Vec<f64> = rs.samples.iter().map(|t| t.context.first()).collect();
    let ks = ks_one_sample(&ctx, |x| {
        pacopp::stats::normal_cdf(x, 0.0, env.context_variance)
    });
    assert!(ks.p_value > 0.001, "p = {}", ks.p_value);
}

#[test]
fn mean_accepted_count_is_n_over_bound() {
    let env = SynthEnvSpec::default();
    let runs = 2000;
    let counts: Vec<f64> = (0..runs)
        .map(|seed| {
            let mut rng = Rng::new(seed);
            let d = env.sample_logged(1000, &mut rng);
            rejection_sample(&d, &weight(&env), &mut rng).accepted_count() as f64
        })
        .collect();
    let mean = pacopp::stats::mean(&counts);
    let se = (pacopp::stats::variance(&counts) / runs as f64).sqrt();
    assert!((mean - 500.0).abs() <= 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn accepted_count_at_default_size_is_near_half() {
    let env = SynthEnvSpec::default();
    for seed in 0..20 {
        let mut rng = Rng::new(seed);
        let d = env.sample_logged(2000, &mut rng);
        let rs = rejection_sample(&d, &weight(&env), &mut rng);
        assert!(
            (900..=1100).contains(&rs.accepted_count()),
            "seed {seed}: {}",
            rs.accepted_count()
        );
        assert!(rs.indices.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn same_seed_gives_same_acceptances() {
    let env = SynthEnvSpec::default();
    let d = env.sample_logged(500, &mut Rng::new(1));
    let a = rejection_sample(&d, &weight(&env), &mut Rng::new(9));
    let b = rejection_sample(&d, &weight(&env), &mut Rng::new(9));
    assert_eq!(a.indices, b.indices);
}
