//! Distributional checks of the parameter randomization.

use greeks_dk::models::BlackScholesModel;
use greeks_dk::randomization::{draw_sample, Profile, RandomizingDensity};

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn offsets_follow_the_profile_cdf() {
    let model = BlackScholesModel::new(0.05, 0.2, 1.0).unwrap();
    let n = 100_000;
    for profile in [Profile::Epanechnikov, Profile::Quartic, Profile::Triweight] {
        let ell = RandomizingDensity::new(1, 25.0, profile).unwrap();
        let s = draw_sample(&model, &ell, &[100.0], n, 17).unwrap();
        let offsets: Vec<f64> = s.lambdas.iter().map(|l| (100.0 - l) / 25.0).collect();
        let mean = offsets.iter().sum::<f64>() / n as f64;
        let sd = (offsets.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sd / (n as f64).sqrt(), "{profile:?} mean {mean}");
        let d = ks_statistic(offsets, |x| profile.cdf(x));
        // asymptotic 1% critical value
        assert!(d < 1.628 / (n as f64).sqrt(), "{profile:?} KS {d}");
    }
}

#[test]
fn compact_support_holds() {
    let model = BlackScholesModel::new(0.05, 0.2, 1.0).unwrap();
    let ell = RandomizingDensity::new(1, 0.1, Profile::Epanechnikov).unwrap();
    let s = draw_sample(&model, &ell, &[1.0], 20_000, 3).unwrap();
    assert!(s.lambdas.iter().all(|l| (0.9..=1.1).contains(l)));
}

#[test]
fn sampling_ignores_thread_count() {
    let model = BlackScholesModel::new(0.05, 0.2, 1.0).unwrap();
    let ell = RandomizingDensity::new(1, 25.0, Profile::Quartic).unwrap();
    let draw = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| draw_sample(&model, &ell, &[100.0], 5_000, 99).unwrap())
    };
    assert_eq!(draw(1), draw(4));
}

#[test]
fn two_dimensional_density_integrates_to_one() {
    let ell = RandomizingDensity::new(2, 0.5, Profile::Quartic).unwrap();
    let m = 800;
    let step = 1.0 / m as f64;
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            let u = [-0.5 + (i as f64 + 0.5) * step, -0.5 + (j as f64 + 0.5) * step];
            total += ell.evaluate(&u) * step * step;
        }
    }
    assert!((total - 1.0).abs() < 1e-5, "{total}");
}
