//! Monte Carlo identities for the Greek weights and the classical baselines.

use greeks_dk::baselines::{
    finite_difference_greek, likelihood_ratio_greek, pathwise_greek, weight_variance_experiment, BaselineConfig,
    FdScheme,
};
use greeks_dk::models::{
    bs_true_greek, BlackScholesModel, EulerDiffusionModel, Model, Payoff, PayoffKind,
};
use greeks_dk::rng::{normal, stream};
use greeks_dk::Error;

fn bs() -> BlackScholesModel {
    BlackScholesModel::new(0.05, 0.2, 1.0).unwrap()
}

fn discounted_put() -> Payoff {
    Payoff::put(100.0).with_scale((-0.05f64).exp())
}

fn smooth_put() -> Payoff {
    Payoff::new(PayoffKind::SmoothPut { strike: 100.0, width: 5.0 }).with_scale((-0.05f64).exp())
}

const DELTA: f64 = -0.3631693;

#[test]
fn likelihood_ratio_identity_at_a_million_draws() {
    let m = bs();
    let p = discounted_put();
    let truth = bs_true_greek(&m, &p, 100.0).unwrap();
    assert!((truth - DELTA).abs() < 5e-4);
    let r = likelihood_ratio_greek(&m, &p, &[100.0], 1_000_000, 3).unwrap();
    assert!((r.beta_hat[0] - truth).abs() < 4.0 * r.std_error(0), "{r:?}");
}

#[test]
fn scores_have_zero_mean() {
    let m = bs();
    let mut rng = stream(41, 0);
    let n = 1_000_000;
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let z = m.simulate(&[100.0], &mut rng).unwrap();
        let s = m.score(&[100.0], &z).unwrap()[0];
        s1 += s;
        s2 += s * s;
    }
    let mean = s1 / n as f64;
    let sd = (s2 / n as f64 - mean * mean).sqrt();
    assert!(mean.abs() < 3.0 * sd / (n as f64).sqrt(), "mean {mean}, sd {sd}");

    // a constant payoff turns the likelihood-ratio estimator into the score mean
    let one = Payoff::new(PayoffKind::Constant { value: 1.0 });
    let r = likelihood_ratio_greek(&m, &one, &[100.0], 200_000, 42).unwrap();
    assert!(r.beta_hat[0].abs() < 4.0 * r.std_error(0));
}

#[test]
fn central_difference_on_the_put() {
    let cfg = BaselineConfig::new(0.5, true, FdScheme::Central).unwrap();
    let r = finite_difference_greek(&bs(), &discounted_put(), &[100.0], &cfg, 1_000_000, 5).unwrap();
    assert!((r.beta_hat[0] - DELTA).abs() < 4.0 * r.std_error(0) + 1e-3, "{r:?}");
}

#[test]
fn pathwise_on_put_and_linear_payoffs() {
    let r = pathwise_greek(&bs(), &discounted_put(), &[100.0], 1_000_000, 6).unwrap();
    assert!((r.beta_hat[0] - DELTA).abs() < 4.0 * r.std_error(0));

    let lin = pathwise_greek(&bs(), &Payoff::new(PayoffKind::Linear), &[100.0], 200_000, 7).unwrap();
    let growth = 0.05f64.exp();
    assert!((lin.beta_hat[0] - growth).abs() < 4.0 * lin.std_error(0) + 1e-12);

    let err = pathwise_greek(&bs(), &Payoff::digital(100.0), &[100.0], 10, 8).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn finite_differences_approach_pathwise_on_shared_streams() {
    let (m, p) = (bs(), smooth_put());
    let pw = pathwise_greek(&m, &p, &[100.0], 20_000, 9).unwrap().beta_hat[0];
    let gaps: Vec<f64> = [1.0, 0.1, 0.01]
        .iter()
        .map(|&eps| {
            let cfg = BaselineConfig::new(eps, true, FdScheme::Central).unwrap();
            let fd = finite_difference_greek(&m, &p, &[100.0], &cfg, 20_000, 9).unwrap();
            (fd.beta_hat[0] - pw).abs()
        })
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    assert!(gaps[2] < 1e-5, "{gaps:?}");
}

#[test]
fn likelihood_ratio_and_pathwise_agree_on_a_smooth_payoff() {
    let (m, p) = (bs(), smooth_put());
    let lr = likelihood_ratio_greek(&m, &p, &[100.0], 400_000, 10).unwrap();
    let pw = pathwise_greek(&m, &p, &[100.0], 400_000, 11).unwrap();
    let joint = (lr.std_error(0).powi(2) + pw.std_error(0).powi(2)).sqrt();
    assert!((lr.beta_hat[0] - pw.beta_hat[0]).abs() < 4.0 * joint);
}

#[test]
fn perturbed_weight_is_unbiased_but_noisier() {
    let r = weight_variance_experiment(&bs(), &discounted_put(), &[100.0], 100_000, 1.0, 12).unwrap();
    assert!(r.trace_diff > 4.0 * r.trace_diff_se);
    assert!((r.mean_perturbed[0] - r.mean_optimal[0]).abs() < 4.0 * r.mean_diff_se[0]);
}

#[test]
fn euler_gbm_matches_black_scholes_on_shared_increments() {
    let steps = 512;
    let euler = EulerDiffusionModel::gbm(0.05, 0.2, 1.0, steps).unwrap();
    let m = bs();
    let p = discounted_put();
    let n = 100_000;
    let mut rng = stream(13, 0);
    let mut inc = vec![0.0; steps];
    let (mut se, mut sb, mut sdiff2) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        inc.iter_mut().for_each(|g| *g = normal(&mut rng));
        let ze = euler.simulate_with_increments(&[100.0], &inc).unwrap();
        let g = inc.iter().sum::<f64>() / (steps as f64).sqrt();
        let zb = m.terminal(100.0, g);
        let (a, b) = (p.evaluate(&ze), p.evaluate(&[zb]));
        se += a;
        sb += b;
        sdiff2 += (a - b) * (a - b);
    }
    let nf = n as f64;
    let diff = (se - sb) / nf;
    let sd = (sdiff2 / nf - diff * diff).sqrt();
    // weak error of the scheme is O(Δt) on a price of order 10
    let weak_bias = 5.0 / steps as f64;
    assert!(diff.abs() < 3.0 * sd / nf.sqrt() + weak_bias, "diff {diff}, sd {sd}");
}

#[test]
fn euler_model_reports_no_score() {
    let e = EulerDiffusionModel::gbm(0.05, 0.2, 1.0, 8).unwrap();
    assert!(!e.capabilities().has_score);
    let err = likelihood_ratio_greek(&e, &discounted_put(), &[100.0], 10, 1).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}
