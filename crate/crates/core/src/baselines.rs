//! Classical Greek estimators: finite differences, likelihood ratio and
//! pathwise differentiation, plus the weight-variance comparison.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimateReport;
use crate::models::{Model, Payoff};
use crate::rng::{derive_seed, normal, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdScheme {
    Forward,
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub epsilon: f64,
    pub use_common_randoms: bool,
    pub scheme: FdScheme,
}

impl BaselineConfig {
    pub fn new(epsilon: f64, use_common_randoms: bool, scheme: FdScheme) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Config(format!("bump size must be positive, got {epsilon}")));
        }
        Ok(Self {
            epsilon,
            use_common_randoms,
            scheme,
        })
    }

    /// Central differences with common randoms and a bump of 1% of `|λ⁰|`.
    pub fn default_for(lambda0: &[f64]) -> Self {
        let scale = lambda0.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        Self {
            epsilon: if scale > 0.0 { 0.01 * scale } else { 0.01 },
            use_common_randoms: true,
            scheme: FdScheme::Central,
        }
    }
}

/// Sample mean and the covariance of the mean (`cov / N`) of row-major
/// `N × d` values.
pub fn mean_and_cov_of_mean(values: &[f64], d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = values.len() / d;
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for row in values.chunks_exact(d) {
        for k in 0..d {
            mean[k] += row[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut cov = vec![vec![0.0; d]; d];
    for row in values.chunks_exact(d) {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (row[a] - mean[a]) * (row[b] - mean[b]);
            }
        }
    }
    let denom = (nf - 1.0).max(1.0) * nf;
    cov.iter_mut().flatten().for_each(|c| *c /= denom);
    (mean, cov)
}

fn simulate_payoffs(model: &dyn Model, payoff: &Payoff, lambda: &[f64], n_draws: usize, seed: u64) -> Result<Vec<f64>> {
    (0..n_draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            Ok(payoff.evaluate(&model.simulate(lambda, &mut rng)?))
        })
        .collect()
}

fn require_draws(n_draws: usize) -> Result<()> {
    if n_draws < 2 {
        return Err(Error::Argument("baseline estimators need at least 2 draws".into()));
    }
    Ok(())
}

/// Finite-difference Greek from Monte Carlo price estimates.
pub fn finite_difference_greek(
    model: &dyn Model,
    payoff: &Payoff,
    lambda0: &[f64],
    cfg: &BaselineConfig,
    n_draws: usize,
    seed: u64,
) -> Result<EstimateReport> {
    let started = Instant::now();
    require_draws(n_draws)?;
    let d = model.param_dim();
    if lambda0.len() != d {
        return Err(Error::Argument(format!("lambda0 has {} entries, model expects {d}", lambda0.len())));
    }
    let eps = cfg.epsilon;
    // each bumped point gets its own seed unless randoms are shared
    let seed_for = |label: u64| if cfg.use_common_randoms { seed } else { derive_seed(seed, 0xfd, label) };
    let bumped = |k: usize, sign: f64| -> Result<Vec<f64>> {
        let mut l = lambda0.to_vec();
        l[k] += sign * eps;
        if !model.admissible(&l) {
            return Err(Error::Argument(format!(
                "bumped parameter {l:?} leaves the admissible domain; reduce epsilon"
            )));
        }
        Ok(l)
    };
    let base = match cfg.scheme {
        FdScheme::Forward => Some(simulate_payoffs(model, payoff, lambda0, n_draws, seed_for(0))?),
        FdScheme::Central => None,
    };
    let mut diffs = vec![0.0; n_draws * d];
    let mut var_sum = vec![0.0; d];
    for k in 0..d {
        let up = simulate_payoffs(model, payoff, &bumped(k, 1.0)?, n_draws, seed_for(2 * k as u64 + 1))?;
        let (down, width) = match &base {
            Some(b) => (b.clone(), eps),
            None => (
                simulate_payoffs(model, payoff, &bumped(k, -1.0)?, n_draws, seed_for(2 * k as u64 + 2))?,
                2.0 * eps,
            ),
        };
        for i in 0..n_draws {
            diffs[i * d + k] = (up[i] - down[i]) / width;
        }
        if !cfg.use_common_randoms {
            let var = |v: &[f64]| mean_and_cov_of_mean(v, 1).1[0][0];
            var_sum[k] = (var(&up) + var(&down)) / (width * width);
        }
    }
    let (mean, mut cov) = mean_and_cov_of_mean(&diffs, d);
    if !cfg.use_common_randoms {
        // independent legs: the covariance of the difference is the sum of leg variances
        for a in 0..d {
            for b in 0..d {
                cov[a][b] = if a == b { var_sum[a] } else { 0.0 };
            }
        }
    }
    Ok(EstimateReport::finish(
        "fd",
        mean,
        cov,
        n_draws,
        started,
        serde_json::json!({ "baseline": cfg }),
    ))
}

fn capability_error(what: &str, model: &dyn Model) -> Error {
    Error::Config(format!("{what} is not available for model {}", model.name()))
}

/// Likelihood-ratio estimator `mean(φ(Z_i) s(λ⁰, Z_i))`.
pub fn likelihood_ratio_greek(
    model: &dyn Model,
    payoff: &Payoff,
    lambda0: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<EstimateReport> {
    let started = Instant::now();
    require_draws(n_draws)?;
    if !model.capabilities().has_score {
        return Err(capability_error("the analytic score", model));
    }
    let d = model.param_dim();
    let rows: Vec<Vec<f64>> = (0..n_draws)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut rng = stream(seed, i as u64);
            let z = model.simulate(lambda0, &mut rng)?;
            let phi = payoff.evaluate(&z);
            if phi == 0.0 {
                return Ok(vec![0.0; d]);
            }
            let s = model
                .score(lambda0, &z)
                .ok_or_else(|| Error::Domain(format!("score undefined at z = {z:?}")))?;
            Ok(s.into_iter().map(|v| phi * v).collect())
        })
        .collect::<Result<_>>()?;
    let (mean, cov) = mean_and_cov_of_mean(&rows.concat(), d);
    Ok(EstimateReport::finish("lr", mean, cov, n_draws, started, serde_json::json!({})))
}

/// Pathwise estimator `mean(∇φ(Z_i) · ∂Z_i/∂λ)`.
pub fn pathwise_greek(
    model: &dyn Model,
    payoff: &Payoff,
    lambda0: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<EstimateReport> {
    let started = Instant::now();
    require_draws(n_draws)?;
    if !model.capabilities().has_tangent {
        return Err(capability_error("the pathwise tangent", model));
    }
    if !payoff.continuous() {
        return Err(Error::Config(format!(
            "pathwise differentiation is invalid for the discontinuous payoff {payoff}"
        )));
    }
    let d = model.param_dim();
    let n = model.state_dim();
    let rows: Vec<Vec<f64>> = (0..n_draws)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut rng = stream(seed, i as u64);
            let z = model.simulate(lambda0, &mut rng)?;
            let dphi = payoff
                .derivative(&z)
                .ok_or_else(|| Error::Config(format!("payoff {payoff} has no derivative")))?;
            let tangent = model
                .tangent(lambda0, &z)
                .ok_or_else(|| Error::Domain(format!("tangent undefined at z = {z:?}")))?;
            Ok((0..d)
                .map(|k| (0..n).map(|m| dphi[m] * tangent[m * d + k]).sum())
                .collect())
        })
        .collect::<Result<_>>()?;
    let (mean, cov) = mean_and_cov_of_mean(&rows.concat(), d);
    Ok(EstimateReport::finish("pathwise", mean, cov, n_draws, started, serde_json::json!({})))
}

/// Outcome of comparing the score weight with a noisy but still unbiased weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVarianceResult {
    pub var_optimal: Vec<Vec<f64>>,
    pub var_perturbed: Vec<Vec<f64>>,
    pub mean_optimal: Vec<f64>,
    pub mean_perturbed: Vec<f64>,
    /// `tr(var_perturbed) − tr(var_optimal)`.
    pub trace_diff: f64,
    /// Monte Carlo standard error of `trace_diff`.
    pub trace_diff_se: f64,
    /// Standard error of `mean_perturbed − mean_optimal`.
    pub mean_diff_se: Vec<f64>,
}

/// Per-draw covariances of `φ s` and `φ (s + η)` with `η` independent
/// Gaussian noise of the given scale, on shared draws.
pub fn weight_variance_experiment(
    model: &dyn Model,
    payoff: &Payoff,
    lambda0: &[f64],
    n_draws: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<WeightVarianceResult> {
    require_draws(n_draws)?;
    if !(noise_scale >= 0.0) {
        return Err(Error::Argument(format!("noise scale must be nonnegative, got {noise_scale}")));
    }
    if !model.capabilities().has_score {
        return Err(capability_error("the analytic score", model));
    }
    let d = model.param_dim();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_draws)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut rng = stream(seed, i as u64);
            let z = model.simulate(lambda0, &mut rng)?;
            let phi = payoff.evaluate(&z);
            let s = if phi == 0.0 {
                vec![0.0; d]
            } else {
                model
                    .score(lambda0, &z)
                    .ok_or_else(|| Error::Domain(format!("score undefined at z = {z:?}")))?
            };
            let opt: Vec<f64> = s.iter().map(|v| phi * v).collect();
            let pert: Vec<f64> = s.iter().map(|v| phi * (v + noise_scale * normal(&mut rng))).collect();
            Ok((opt, pert))
        })
        .collect::<Result<_>>()?;
    let opt: Vec<f64> = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
    let pert: Vec<f64> = rows.iter().flat_map(|r| r.1.iter().copied()).collect();
    let nf = n_draws as f64;
    let (mean_optimal, cov_o) = mean_and_cov_of_mean(&opt, d);
    let (mean_perturbed, cov_p) = mean_and_cov_of_mean(&pert, d);
    let var_optimal: Vec<Vec<f64>> = cov_o.iter().map(|r| r.iter().map(|c| c * nf).collect()).collect();
    let var_perturbed: Vec<Vec<f64>> = cov_p.iter().map(|r| r.iter().map(|c| c * nf).collect()).collect();
    let trace_diff = (0..d).map(|k| var_perturbed[k][k] - var_optimal[k][k]).sum();
    // per-draw contributions to the trace difference
    let w: Vec<f64> = opt
        .chunks_exact(d)
        .zip(pert.chunks_exact(d))
        .map(|(a, b)| {
            (0..d)
                .map(|k| (b[k] - mean_perturbed[k]).powi(2) - (a[k] - mean_optimal[k]).powi(2))
                .sum()
        })
        .collect();
    let (_, w_cov) = mean_and_cov_of_mean(&w, 1);
    let diffs: Vec<f64> = pert.iter().zip(&opt).map(|(b, a)| b - a).collect();
    let (_, diff_cov) = mean_and_cov_of_mean(&diffs, d);
    Ok(WeightVarianceResult {
        var_optimal,
        var_perturbed,
        mean_optimal,
        mean_perturbed,
        trace_diff,
        trace_diff_se: w_cov[0][0].sqrt(),
        mean_diff_se: (0..d).map(|k| diff_cov[k][k].sqrt()).collect(),
    })
}
