//! Properties of the leave-one-out density, the estimated score and the
//! kernel estimators.

use greeks_dk::estimator::{
    beta_bar_oracle, beta_tilde, loo_density, score_hat, BinningConfig, EstimatorConfig, LooEvaluator,
};
use greeks_dk::harness::Experiment;
use greeks_dk::config::RunConfig;
use greeks_dk::kernel::{make_high_order_kernel, standard_kernel, KernelFamily, UnivariateKernel};
use greeks_dk::models::{bs_score, BlackScholesModel, Payoff};
use greeks_dk::randomization::{draw_sample, Profile, RandomizedSample, RandomizingDensity};
use greeks_dk::rng::{open_unit, stream};
use greeks_dk::Result;
use proptest::prelude::*;

fn config(h: f64, delta: f64, family: KernelFamily, d: usize, n: usize, binning: bool) -> EstimatorConfig {
    EstimatorConfig::new(
        h,
        delta,
        standard_kernel(family, d).unwrap(),
        standard_kernel(family, n).unwrap(),
        BinningConfig { enabled: binning, cell_size: None },
    )
    .unwrap()
}

fn cloud(seed: u64, rows: usize, d: usize, n: usize, spread: f64) -> RandomizedSample {
    let mut rng = stream(seed, 0);
    let mut u = || spread * (2.0 * open_unit(&mut rng) - 1.0);
    let lambdas: Vec<Vec<f64>> = (0..rows).map(|_| (0..d).map(|_| u()).collect()).collect();
    let zs: Vec<Vec<f64>> = (0..rows).map(|_| (0..n).map(|_| u()).collect()).collect();
    RandomizedSample::from_rows(vec![0.0; d], lambdas, zs).unwrap()
}

fn family(i: usize) -> KernelFamily {
    KernelFamily::ALL[i % 3]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binned_and_naive_sums_agree(
        seed in any::<u64>(),
        rows in 2usize..5000,
        d in 1usize..3,
        n in 1usize..3,
        h in 0.05f64..1.5,
        fam in 0usize..3,
        cell in prop::option::of(0.05f64..2.0),
    ) {
        let sample = cloud(seed, rows, d, n, 2.0);
        let naive = config(h, 1e-6, family(fam), d, n, false);
        let binned = naive.with_binning(BinningConfig { enabled: true, cell_size: cell }).unwrap();
        let (a, b) = (LooEvaluator::new(&sample, &naive).unwrap(), LooEvaluator::new(&sample, &binned).unwrap());
        let (mut sa, mut sb) = (a.scratch(), b.scratch());
        let mut rng = stream(seed, 1);
        for _ in 0..20 {
            let i = (open_unit(&mut rng) * rows as f64) as usize % rows;
            let (l, z) = (sample.lambda(i).to_vec(), sample.z(i).to_vec());
            let (ea, eb) = (a.evaluate(i, &l, &z, &mut sa).unwrap(), b.evaluate(i, &l, &z, &mut sb).unwrap());
            prop_assert!((ea.value - eb.value).abs() <= 1e-12 * ea.value.abs());
            for (x, y) in ea.grad.iter().zip(&eb.grad) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn floor_and_exclusion_hold(
        seed in any::<u64>(),
        rows in 2usize..60,
        h in 0.1f64..2.0,
        delta in 1e-5f64..1.0,
        fam in 0usize..3,
        binning in any::<bool>(),
    ) {
        let mut sample = cloud(seed, rows, 1, 1, 2.0);
        let cfg = config(h, delta, family(fam), 1, 1, binning);
        let i = (seed as usize) % rows;
        let (l, z) = (sample.lambda(i).to_vec(), sample.z(i).to_vec());
        let before = loo_density(&sample, &cfg, i, &l, &z).unwrap();
        prop_assert!(before.truncated_value >= delta / 3.0);
        prop_assert_eq!(before.was_truncated, before.value.abs() < delta / 3.0);
        sample.set_row(i, &[l[0] + 0.37], &[z[0] - 1.3]);
        let after = loo_density(&sample, &cfg, i, &l, &z).unwrap();
        prop_assert!((after.value - before.value).abs() <= 1e-12 * before.value.abs());
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), h in 0.3f64..1.5, fam in 0usize..3) {
        let sample = cloud(seed, 500, 1, 1, 2.0);
        let cfg = config(h, 1e-9, family(fam), 1, 1, true);
        let ev = LooEvaluator::new(&sample, &cfg).unwrap();
        let mut s = ev.scratch();
        let mut rng = stream(seed, 2);
        let step = 1e-6 * h;
        for _ in 0..5 {
            let l = 2.0 * open_unit(&mut rng) - 1.0;
            let z = 2.0 * open_unit(&mut rng) - 1.0;
            let g = ev.evaluate(0, &[l], &[z], &mut s).unwrap().grad[0];
            let up = ev.evaluate(0, &[l + step], &[z], &mut s).unwrap().value;
            let dn = ev.evaluate(0, &[l - step], &[z], &mut s).unwrap().value;
            prop_assert!((g - (up - dn) / (2.0 * step)).abs() < 1e-4 * h.powi(-3));
        }
    }
}

#[test]
fn leave_one_out_density_integrates_to_one() {
    let sample = cloud(8, 50, 1, 1, 1.0);
    let h = 0.3;
    let cfg = config(h, 1e-9, KernelFamily::Epanechnikov, 1, 1, true);
    let ev = LooEvaluator::new(&sample, &cfg).unwrap();
    let mut s = ev.scratch();
    // Monte Carlo quadrature over the box holding every kernel support
    let (lo, hi) = (-1.0 - h, 1.0 + h);
    let area = (hi - lo) * (hi - lo);
    let m = 4_000_000;
    let mut rng = stream(8, 1);
    let (mut total, mut total_sq) = (0.0, 0.0);
    for _ in 0..m {
        let l = lo + (hi - lo) * open_unit(&mut rng);
        let z = lo + (hi - lo) * open_unit(&mut rng);
        let v = ev.evaluate(3, &[l], &[z], &mut s).unwrap().value * area;
        total += v;
        total_sq += v * v;
    }
    let integral = total / m as f64;
    let se = ((total_sq / m as f64 - integral * integral) / m as f64).sqrt();
    assert!((integral - 1.0).abs() < 2e-3 && (integral - 1.0).abs() < 4.0 * se, "{integral} ± {se}");

    // the same integral by a fine midpoint grid is exact up to discretization
    let g = 1000;
    let step = (hi - lo) / g as f64;
    let mut grid = 0.0;
    for a in 0..g {
        for b in 0..g {
            let l = lo + (a as f64 + 0.5) * step;
            let z = lo + (b as f64 + 0.5) * step;
            grid += ev.evaluate(3, &[l], &[z], &mut s).unwrap().value * step * step;
        }
    }
    assert!((grid - 1.0).abs() < 2e-3, "{grid}");
}

#[test]
fn score_edge_cases() {
    let sample = cloud(9, 30, 1, 1, 1.0);
    let cfg = config(0.2, 1e-3, KernelFamily::Quartic, 1, 1, false);
    let ell = RandomizingDensity::new(1, 2.0, Profile::Epanechnikov).unwrap();
    // far from the data only the randomization term survives
    let far = score_hat(&sample, &cfg, &ell, &[0.0], 0, &[0.5], &[50.0]).unwrap();
    let u: f64 = 0.0 - 0.5;
    let expect = -2.0 * u / (4.0 - u * u);
    assert!((far[0] - expect).abs() < 1e-12, "{far:?}");
    // at λ⁰ the randomization term vanishes
    let at0 = score_hat(&sample, &cfg, &ell, &[0.0], 0, &[0.0], &[0.1]).unwrap();
    let ev = loo_density(&sample, &cfg, 0, &[0.0], &[0.1]).unwrap();
    assert!((at0[0] - ev.grad[0] / ev.truncated_value).abs() < 1e-12);
}

#[test]
fn zero_payoff_gives_exact_zero() {
    let model = BlackScholesModel::new(0.05, 0.2, 1.0).unwrap();
    let ell = RandomizingDensity::new(1, 25.0, Profile::Epanechnikov).unwrap();
    let sample = draw_sample(&model, &ell, &[100.0], 2000, 4).unwrap();
    let cfg = config(5.0, 1e-6, KernelFamily::Epanechnikov, 1, 1, true);
    let r = beta_tilde(&sample, &cfg, &ell, &[100.0], &Payoff::zero()).unwrap();
    assert_eq!(r.beta_hat, vec![0.0]);
    let score = |l: &[f64], z: &[f64]| -> Result<Vec<f64>> { Ok(vec![bs_score(&model, l[0], z[0])?]) };
    let r = beta_bar_oracle(&sample, &cfg, &ell, &[100.0], &Payoff::zero(), &score).unwrap();
    assert_eq!(r.beta_hat, vec![0.0]);
}

#[test]
fn estimated_score_converges_to_the_analytic_score() {
    let exp = Experiment::build(&RunConfig::reference()).unwrap();
    let model = BlackScholesModel::new(0.05, 0.2, 1.0).unwrap();
    let sup_error = |n: usize| {
        let h = exp.optimal_plan(n).unwrap().h_star;
        let sample = exp.randomized_sample(n, h, 55).unwrap();
        let cfg = exp.resolve_delta(&sample, &exp.estimator_config(h).unwrap()).unwrap();
        let ell = exp.ell_for(h).unwrap();
        let ev = LooEvaluator::new(&sample, &cfg).unwrap();
        let mut s = ev.scratch();
        let mut worst: f64 = 0.0;
        for a in 0..20 {
            for b in 0..20 {
                // interior of V(λ⁰) × C_φ, away from the zero-density tails
                let l = 95.0 + 10.0 * a as f64 / 19.0;
                let z = 85.0 + 15.0 * b as f64 / 19.0;
                let e = ev.evaluate(0, &[l], &[z], &mut s).unwrap();
                let lg = greeks_dk::randomization::log_grad_ell(&ell, &[l], &[100.0]).unwrap()[0];
                let est = e.grad[0] / e.truncated_value + lg;
                worst = worst.max((est - bs_score(&model, l, z).unwrap()).abs());
            }
        }
        worst
    };
    let (coarse, fine) = (sup_error(20_000), sup_error(80_000));
    assert!(fine < coarse, "sup error {coarse} -> {fine}");
}

#[test]
fn oracle_and_estimated_score_agree_on_one_sample() {
    let exp = Experiment::build(&RunConfig::reference()).unwrap();
    let n = 100_000;
    let h = exp.optimal_plan(n).unwrap().h_star;
    let sample = exp.randomized_sample(n, h, 66).unwrap();
    let tilde = exp.beta_tilde_on(&sample, h).unwrap();
    let bar = exp.beta_bar_on(&sample, h).unwrap();
    let half_width = 2.5758 * tilde.std_error(0);
    assert!((tilde.beta_hat[0] - bar.beta_hat[0]).abs() < 3.0 * half_width);
}

#[test]
fn high_order_kernels_run_through_the_estimator() {
    let model = BlackScholesModel::new(0.05, 0.2, 1.0).unwrap();
    let ell = RandomizingDensity::new(1, 25.0, Profile::Epanechnikov).unwrap();
    let sample = draw_sample(&model, &ell, &[100.0], 20_000, 5).unwrap();
    let k4 = make_high_order_kernel(&UnivariateKernel::standard(KernelFamily::Epanechnikov), 4, 1).unwrap();
    let cfg = EstimatorConfig::new(8.0, 1e-6, k4.clone(), k4, BinningConfig::default()).unwrap();
    let r = beta_tilde(&sample, &cfg, &ell, &[100.0], &Payoff::put(100.0)).unwrap();
    assert!(r.beta_hat[0].is_finite());
    assert!(r.asym_var[0][0] > 0.0);
}
