//! Behavior-policy estimation: Gaussian MLE, finite-class MLE and the
//! Monte Carlo weight error.

use pacopp::behavior::{estimate_weight_error, fit_gaussian_policy, mle_policy, FinitePolicyClass};
use pacopp::stats::normal_pdf;
use pacopp::synthenv::SynthEnvSpec;
use pacopp::{Context, GaussianLinearPolicy, LoggedDataset, Rng};

/// Ordinary least squares of action on a scalar context, with the MLE
/// (divide-by-n) residual variance.
fn least_squares(d: &LoggedDataset) -> (f64, f64, f64) {
    let n = d.len() as f64;
    let xs: Vec<f64> = d.iter().map(|x| x.context.first()).collect();
    let ys: Vec<f64> = d.iter().map(|x| x.action).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let var = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n;
    (intercept, slope, var)
}

#[test]
fn gaussian_mle_recovers_the_behavior_policy() {
    let env = SynthEnvSpec::default();
    let d = env.sample_logged(5000, &mut Rng::new(31));
    let fit = fit_gaussian_policy(&d, 0.05, 1.0).unwrap();
    let (intercept, slope, var) = least_squares(&d);
    assert!((fit.policy.intercept() - intercept).abs() < 1e-8);
    assert!((fit.policy.slopes()[0] - slope).abs() < 1e-8);
    assert!((fit.raw_variance - var).abs() < 1e-8);
    assert!((fit.policy.slopes()[0] - 0.25).abs() < 0.03);
    assert!((fit.policy.variance() - 4.0).abs() < 0.3);
    assert!(!fit.clamped);
}

#[test]
fn variance_clamp_engages_below_the_target_variance() {
    let env = SynthEnvSpec {
        behavior: GaussianLinearPolicy::new(0.0, vec![0.25], 0.5).unwrap(),
        ..Default::default()
    };
    let d = env.sample_logged(2000, &mut Rng::new(32));
    let fit = fit_gaussian_policy(&d, 0.05, 1.0).unwrap();
    assert!(fit.clamped);
    assert!((fit.policy.variance() - 1.05).abs() < 1e-12);
}

#[test]
fn finite_class_mle_prefers_the_true_policy() {
    let env = SynthEnvSpec::default();
    let probe: Vec<Context> = (0..=40)
        .map(|i| Context::scalar(-10.0 + 0.5 * i as f64))
        .collect();
    let impostor = env.behavior.shifted(3.0);
    let class =
        FinitePolicyClass::new(vec![impostor, env.behavior.clone()], &env.target, &probe).unwrap();
    let wins = (0..100)
        .filter(|seed| {
            let d = env.sample_logged(200, &mut Rng::new(*seed));
            mle_policy(&class, &d).unwrap() == 1
        })
        .count();
    assert!(wins >= 99, "{wins}/100");
}

/// `∫ f` over `[lo, hi]` by composite Simpson with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut total = f(lo) + f(hi);
    for i in 1..n {
        total += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    total * h / 3.0
}

#[test]
fn weight_error_matches_quadrature() {
    // All three policies have mean s/4, so with u = a − s/4 the error is a
    // one-dimensional integral over u ~ N(0, 4).
    let env = SynthEnvSpec::default();
    let pbhat = GaussianLinearPolicy::new(0.0, vec![0.25], 5.0).unwrap();
    let exact = simpson(
        |u| {
            let e = normal_pdf(u, 0.0, 1.0);
            (e / normal_pdf(u, 0.0, 5.0) - e / normal_pdf(u, 0.0, 4.0)).abs()
                * normal_pdf(u, 0.0, 4.0)
        },
        -40.0,
        40.0,
        20_000,
    );
    let sample_context = |rng: &mut Rng| env.sample_context(rng);
    let report = estimate_weight_error(
        &pbhat,
        &env.behavior,
        &env.target,
        &sample_context,
        1_000_000,
        &mut Rng::new(33),
    );
    assert!(
        (report.delta_w_hat - exact).abs() <= 3.0 * report.std_error,
        "mc {} ± {}, quadrature {exact}",
        report.delta_w_hat,
        report.std_error
    );
}

#[test]
fn weight_error_vanishes_for_the_true_policy() {
    let env = SynthEnvSpec::default();
    let sample_context = |rng: &mut Rng| env.sample_context(rng);
    let report = estimate_weight_error(
        &env.behavior,
        &env.behavior,
        &env.target,
        &sample_context,
        1000,
        &mut Rng::new(34),
    );
    assert_eq!(report.delta_w_hat, 0.0);
}
