//! Experiment driver: convergence sweeps, aggregates, the CLT screen and
//! report files.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::bandwidth::{
    analytic_rate_constants, fixed_bandwidth, optimal_bandwidth, pilot_rate_constants, rule_of_thumb_bandwidth,
    AnalyticOptions, BandwidthPlan, RateConstants,
};
use crate::baselines::{finite_difference_greek, likelihood_ratio_greek, pathwise_greek, BaselineConfig};
use crate::config::{DeltaSetting, RunConfig, ESTIMATORS};
use crate::error::{Error, Result};
use crate::estimator::{auto_delta, beta_bar_oracle, beta_tilde, BinningConfig, EstimateReport, EstimatorConfig};
use crate::kernel::{compute_kernel_constants, kernel_from_spec, KernelConstants, ProductKernel};
use crate::models::{BlackScholesModel, DeterministicModel, EulerDiffusionModel, Model, Payoff, PayoffKind};
use crate::randomization::{draw_sample, Profile, RandomizedSample, RandomizingDensity};
use crate::rng::derive_seed;

/// Fraction of failed cells above which a sweep is rejected.
pub const MAX_FAILED_FRACTION: f64 = 0.10;

/// Everything built from a [`RunConfig`] that stays fixed across cells.
pub struct Experiment {
    pub config: RunConfig,
    pub model: Arc<dyn Model>,
    pub payoff: Payoff,
    pub ell: Option<RandomizingDensity>,
    pub profile: Profile,
    pub lambda0: Vec<f64>,
    pub kernel_k: ProductKernel,
    pub kernel_h: ProductKernel,
    pub kernel_constants: Arc<KernelConstants>,
    pub rate_constants: Option<RateConstants>,
    pub true_greek: Option<Vec<f64>>,
    pub baseline: BaselineConfig,
    /// Requested estimators this model and payoff can run.
    pub estimators: Vec<String>,
    /// Requested estimators that were dropped, with the reason.
    pub skipped: Vec<(String, String)>,
}

fn build_model(cfg: &RunConfig) -> Result<Arc<dyn Model>> {
    let m = &cfg.model;
    let model: Arc<dyn Model> = match m.kind.as_str() {
        "black_scholes" => Arc::new(BlackScholesModel::new(m.r, m.sigma, m.maturity)?),
        "euler_gbm" | "euler_custom" => {
            let mut e = if m.kind == "euler_gbm" {
                EulerDiffusionModel::gbm(m.r, m.sigma, m.maturity, m.steps)?
            } else {
                EulerDiffusionModel::affine(m.a, m.b, m.c, m.e, m.maturity, m.steps)?
            };
            if let Some(c) = m.ellipticity_c {
                e = e.with_ellipticity(c)?;
            }
            Arc::new(e)
        }
        "identity" => Arc::new(DeterministicModel),
        other => return Err(Error::Config(format!("unknown model.type '{other}'"))),
    };
    if model.param_dim() != m.lambda0.len() {
        return Err(Error::Config(format!(
            "model.lambda0 has {} entries but the model has {} parameters",
            m.lambda0.len(),
            model.param_dim()
        )));
    }
    if !model.admissible(&m.lambda0) {
        return Err(Error::Config(format!("lambda0 {:?} is not admissible", m.lambda0)));
    }
    Ok(model)
}

fn build_payoff(cfg: &RunConfig) -> Result<Payoff> {
    let p = &cfg.payoff;
    let strike = p.strike;
    let needs_strike = |name: &str| -> Result<()> {
        if !(strike > 0.0) {
            return Err(Error::Config(format!("payoff '{name}' needs a positive strike")));
        }
        Ok(())
    };
    let kind = match p.kind.as_str() {
        "put" => {
            needs_strike("put")?;
            PayoffKind::Put { strike }
        }
        "smooth_put" => {
            needs_strike("smooth_put")?;
            PayoffKind::SmoothPut { strike, width: p.width }
        }
        "digital" => {
            needs_strike("digital")?;
            PayoffKind::Digital { strike }
        }
        "truncated_call" => {
            needs_strike("truncated_call")?;
            if !(p.cap > 1.0) {
                return Err(Error::Config("truncated_call cap must exceed 1".into()));
            }
            PayoffKind::TruncatedCall { strike, cap: p.cap * strike }
        }
        "linear" => PayoffKind::Linear,
        "constant" => PayoffKind::Constant { value: p.value },
        other => return Err(Error::Config(format!("unknown payoff.type '{other}'"))),
    };
    let mut payoff = Payoff::new(kind);
    if p.discounted && cfg.model.kind != "identity" {
        payoff = payoff.with_scale((-cfg.model.r * cfg.model.maturity).exp());
    }
    if let Some(zmin) = p.zmin {
        payoff = payoff.with_zmin(zmin);
    }
    Ok(payoff)
}

impl Experiment {
    pub fn build(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let model = build_model(config)?;
        let payoff = build_payoff(config)?;
        let d = model.param_dim();
        let n = model.state_dim();
        let kernel_k = kernel_from_spec(&config.kernel_k.name, config.kernel_k.order, d)?;
        let kernel_h = kernel_from_spec(&config.kernel_h.name, config.kernel_h.order, n)?;
        let kernel_constants = Arc::new(compute_kernel_constants(&kernel_k, &kernel_h)?);
        let profile = if config.ell.match_kernel {
            Profile::matching(kernel_k.factors()[0].family())
        } else {
            config.ell.profile.parse()?
        };
        let ell = match config.ell.radius {
            Some(r) => Some(RandomizingDensity::new(d, r, profile)?),
            None => None,
        };
        let lambda0 = config.model.lambda0.clone();
        let (p, q) = (kernel_k.order(), kernel_h.order());
        let fixed = config.estimator.h.is_some() || config.bandwidth.method == "fixed";
        let rate_constants = if fixed || config.bandwidth.method == "rule_of_thumb" {
            None
        } else {
            let ell = ell.as_ref().ok_or_else(|| {
                Error::Config("bias and variance constants need ell.radius".into())
            })?;
            Some(match config.bandwidth.method.as_str() {
                "analytic" => analytic_rate_constants(
                    model.as_ref(),
                    &payoff,
                    ell,
                    &lambda0,
                    &kernel_constants,
                    p,
                    q,
                    &AnalyticOptions {
                        fd_rel_step: config.bandwidth.fd_rel_step,
                        ..AnalyticOptions::default()
                    },
                )?,
                _ => pilot_rate_constants(
                    model.as_ref(),
                    &payoff,
                    ell,
                    &lambda0,
                    &kernel_constants,
                    p,
                    q,
                    config.bandwidth.pilot_draws,
                    config.bandwidth.c0,
                    derive_seed(config.sweep.seed, 0x9170, 0),
                )?,
            })
        };
        let true_greek = model.true_greek(&payoff, &lambda0);
        let baseline = match config.baseline.epsilon {
            Some(eps) => BaselineConfig::new(eps, config.baseline.common_randoms, config.baseline.scheme)?,
            None => BaselineConfig {
                use_common_randoms: config.baseline.common_randoms,
                scheme: config.baseline.scheme,
                ..BaselineConfig::default_for(&lambda0)
            },
        };
        let caps = model.capabilities();
        let mut estimators = Vec::new();
        let mut skipped = Vec::new();
        for name in ESTIMATORS {
            if !config.sweep.estimators.iter().any(|e| e == name) {
                continue;
            }
            let reason = match name {
                "beta_bar" | "lr" if !caps.has_score => Some("model has no analytic score"),
                "pathwise" if !caps.has_tangent => Some("model has no pathwise tangent"),
                "pathwise" if !payoff.continuous() || payoff.derivative(&vec![1.0; n]).is_none() => {
                    Some("payoff is not differentiable")
                }
                _ => None,
            };
            match reason {
                Some(r) => skipped.push((name.to_string(), r.to_string())),
                None => estimators.push(name.to_string()),
            }
        }
        Ok(Self {
            config: config.clone(),
            model,
            payoff,
            ell,
            profile,
            lambda0,
            kernel_k,
            kernel_h,
            kernel_constants,
            rate_constants,
            true_greek,
            baseline,
            estimators,
            skipped,
        })
    }

    pub fn d(&self) -> usize {
        self.model.param_dim()
    }

    pub fn n(&self) -> usize {
        self.model.state_dim()
    }

    /// MSE-optimal (or fixed / rule-of-thumb) plan at sample size `n_samples`.
    pub fn optimal_plan(&self, n_samples: usize) -> Result<BandwidthPlan> {
        let (p, q, d, n) = (self.kernel_k.order(), self.kernel_h.order(), self.d(), self.n());
        if let Some(h) = self.config.estimator.h {
            return fixed_bandwidth(h, n_samples, p, q, d, n);
        }
        match self.config.bandwidth.method.as_str() {
            "fixed" => fixed_bandwidth(self.config.bandwidth.h.unwrap_or(f64::NAN), n_samples, p, q, d, n),
            "rule_of_thumb" => {
                let ell = self
                    .ell
                    .as_ref()
                    .ok_or_else(|| Error::Config("the rule of thumb needs ell.radius".into()))?;
                rule_of_thumb_bandwidth(ell, self.config.bandwidth.c0, n_samples, p, q, d, n)
            }
            _ => {
                let c = self.rate_constants.as_ref().expect("constants are built for this method");
                optimal_bandwidth(c, n_samples, p, q, d, n)
            }
        }
    }

    /// Plan with the configured undersmoothing applied.
    pub fn plan(&self, n_samples: usize) -> Result<BandwidthPlan> {
        let plan = self.optimal_plan(n_samples)?;
        if self.config.bandwidth.gamma > 0.0 {
            plan.undersmoothed(self.config.bandwidth.gamma)
        } else {
            Ok(plan)
        }
    }

    /// Randomizing density in force at bandwidth `h`.
    pub fn ell_for(&self, h: f64) -> Result<RandomizingDensity> {
        if self.config.ell.couple_radius_to_h {
            return RandomizingDensity::new(self.d(), h, self.profile);
        }
        Ok(self.ell.clone().expect("radius is validated when not coupled"))
    }

    pub fn estimator_config(&self, h: f64) -> Result<EstimatorConfig> {
        let delta = match self.config.estimator.delta {
            DeltaSetting::Fixed(v) => v,
            DeltaSetting::Named(_) => 1.0,
        };
        let mut cfg = EstimatorConfig::with_constants(
            h,
            delta,
            self.kernel_k.clone(),
            self.kernel_h.clone(),
            BinningConfig {
                enabled: self.config.estimator.binning,
                cell_size: self.config.estimator.cell_size,
            },
            Arc::clone(&self.kernel_constants),
        )?;
        if let Some(hi) = self.config.estimator.h_inner {
            cfg = cfg.with_h_inner(hi)?;
        }
        Ok(cfg)
    }

    /// Draws the randomized sample for a kernel cell.
    pub fn randomized_sample(&self, n_samples: usize, h: f64, seed: u64) -> Result<RandomizedSample> {
        let ell = self.ell_for(h)?;
        draw_sample(self.model.as_ref(), &ell, &self.lambda0, n_samples, seed)
    }

    /// Resolves `δ` for a given sample.
    pub fn resolve_delta(&self, sample: &RandomizedSample, cfg: &EstimatorConfig) -> Result<EstimatorConfig> {
        match self.config.estimator.delta {
            DeltaSetting::Fixed(_) => Ok(cfg.clone()),
            DeltaSetting::Named(_) => {
                let delta = auto_delta(sample, cfg, &self.payoff, &self.lambda0)?;
                cfg.with_delta(delta)
            }
        }
    }

    pub fn beta_tilde_on(&self, sample: &RandomizedSample, h: f64) -> Result<EstimateReport> {
        let cfg = self.resolve_delta(sample, &self.estimator_config(h)?)?;
        beta_tilde(sample, &cfg, &self.ell_for(h)?, &self.lambda0, &self.payoff)
    }

    pub fn beta_bar_on(&self, sample: &RandomizedSample, h: f64) -> Result<EstimateReport> {
        let cfg = self.estimator_config(h)?;
        let model = Arc::clone(&self.model);
        let score = move |l: &[f64], z: &[f64]| -> Result<Vec<f64>> {
            model
                .score(l, z)
                .ok_or_else(|| Error::Domain(format!("score undefined at lambda {l:?}, z {z:?}")))
        };
        beta_bar_oracle(sample, &cfg, &self.ell_for(h)?, &self.lambda0, &self.payoff, &score)
    }

    /// One estimator on one cell; kernel estimators draw their own sample.
    pub fn run_estimator(&self, name: &str, n_samples: usize, h: f64, seed: u64) -> Result<EstimateReport> {
        match name {
            "beta_tilde" => self.beta_tilde_on(&self.randomized_sample(n_samples, h, seed)?, h),
            "beta_bar" => self.beta_bar_on(&self.randomized_sample(n_samples, h, seed)?, h),
            "fd" => finite_difference_greek(
                self.model.as_ref(),
                &self.payoff,
                &self.lambda0,
                &self.baseline,
                n_samples,
                derive_seed(seed, 2, 0),
            ),
            "lr" => likelihood_ratio_greek(self.model.as_ref(), &self.payoff, &self.lambda0, n_samples, derive_seed(seed, 1, 0)),
            "pathwise" => pathwise_greek(self.model.as_ref(), &self.payoff, &self.lambda0, n_samples, derive_seed(seed, 1, 0)),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

/// One estimator on one `(N, replication)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub estimator: String,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub h: Option<f64>,
    pub delta: Option<f64>,
    pub beta: Vec<f64>,
    pub std_error: Vec<f64>,
    pub truncation_rate: Option<f64>,
    pub n_used: usize,
    pub error: Option<String>,
    /// Wall seconds; never written to CSV.
    #[serde(skip)]
    pub timing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub estimator: String,
    pub n: usize,
    pub h: Option<f64>,
    pub count: usize,
    pub failures: usize,
    pub mean: Vec<f64>,
    /// Mean error against the true Greek (property-only runs leave it empty).
    pub bias: Option<Vec<f64>>,
    pub bias_sq: Option<f64>,
    /// Population variance summed over components.
    pub variance: f64,
    pub mse: Option<f64>,
    pub mse_se: Option<f64>,
    /// `variance · N · h^{d+2}` for kernel estimators.
    pub var_scaled: Option<f64>,
    pub mean_truncation_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    pub variance_scaling_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub records: Vec<CellRecord>,
    pub aggregates: Vec<AggregateRow>,
    pub summaries: Vec<EstimatorSummary>,
    pub plans: Vec<BandwidthPlan>,
    pub true_greek: Option<Vec<f64>>,
    pub failed_fraction: f64,
    pub d: usize,
}

/// Seed of cell `(N, rep)`.
pub fn cell_seed(base: u64, n: usize, rep: usize) -> u64 {
    derive_seed(base, n as u64, rep as u64)
}

fn record_from(name: &str, n: usize, rep: usize, seed: u64, h: Option<f64>, res: Result<EstimateReport>, d: usize) -> CellRecord {
    match res {
        Ok(r) => CellRecord {
            estimator: name.to_string(),
            n,
            rep,
            seed,
            h,
            delta: r.config_echo.get("delta").and_then(|v| v.as_f64()),
            std_error: (0..r.beta_hat.len()).map(|k| r.std_error(k)).collect(),
            beta: r.beta_hat,
            truncation_rate: (name == "beta_tilde").then_some(r.truncation_rate),
            n_used: r.n_used,
            error: None,
            timing: r.timing,
        },
        Err(e) => CellRecord {
            estimator: name.to_string(),
            n,
            rep,
            seed,
            h,
            delta: None,
            beta: vec![f64::NAN; d],
            std_error: vec![f64::NAN; d],
            truncation_rate: None,
            n_used: 0,
            error: Some(e.to_string()),
            timing: 0.0,
        },
    }
}

fn run_cell(exp: &Experiment, n: usize, rep: usize, h: f64) -> Vec<CellRecord> {
    let seed = cell_seed(exp.config.sweep.seed, n, rep);
    let d = exp.d();
    let mut out = Vec::new();
    let kernel_wanted = exp.estimators.iter().any(|e| e == "beta_tilde" || e == "beta_bar");
    let sample = if kernel_wanted {
        Some(exp.randomized_sample(n, h, seed))
    } else {
        None
    };
    for name in &exp.estimators {
        let res = match (name.as_str(), &sample) {
            ("beta_tilde", Some(Ok(s))) => exp.beta_tilde_on(s, h),
            ("beta_bar", Some(Ok(s))) => exp.beta_bar_on(s, h),
            ("beta_tilde" | "beta_bar", Some(Err(e))) => Err(Error::Simulation {
                step: 0,
                message: e.to_string(),
            }),
            _ => exp.run_estimator(name, n, h, seed),
        };
        let kernel = name == "beta_tilde" || name == "beta_bar";
        out.push(record_from(name, n, rep, seed, kernel.then_some(h), res, d));
    }
    out
}

/// Population moments over the successful records of one `(estimator, N)` group.
fn aggregate(
    estimator: &str,
    n: usize,
    h: Option<f64>,
    group: &[&CellRecord],
    truth: Option<&[f64]>,
    d: usize,
) -> AggregateRow {
    let ok: Vec<&CellRecord> = group.iter().copied().filter(|r| r.error.is_none()).collect();
    let count = ok.len();
    let failures = group.len() - count;
    let cf = count as f64;
    let mut mean = vec![f64::NAN; d];
    let mut variance = f64::NAN;
    let (mut bias, mut bias_sq, mut mse, mut mse_se) = (None, None, None, None);
    if count > 0 {
        for k in 0..d {
            mean[k] = ok.iter().map(|r| r.beta[k]).sum::<f64>() / cf;
        }
        variance = (0..d)
            .map(|k| ok.iter().map(|r| (r.beta[k] - mean[k]).powi(2)).sum::<f64>() / cf)
            .sum();
        if let Some(t) = truth {
            let b: Vec<f64> = (0..d).map(|k| mean[k] - t[k]).collect();
            bias_sq = Some(b.iter().map(|x| x * x).sum());
            bias = Some(b);
            let sq: Vec<f64> = ok
                .iter()
                .map(|r| (0..d).map(|k| (r.beta[k] - t[k]).powi(2)).sum())
                .collect();
            let m = sq.iter().sum::<f64>() / cf;
            mse = Some(m);
            mse_se = Some(if count > 1 {
                (sq.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (cf - 1.0)).sqrt() / cf.sqrt()
            } else {
                f64::NAN
            });
        }
    }
    let var_scaled = h.map(|h| variance * n as f64 * h.powi(d as i32 + 2));
    let truncs: Vec<f64> = ok.iter().filter_map(|r| r.truncation_rate).collect();
    AggregateRow {
        estimator: estimator.to_string(),
        n,
        h,
        count,
        failures,
        mean,
        bias,
        bias_sq,
        variance,
        mse,
        mse_se,
        var_scaled,
        mean_truncation_rate: (!truncs.is_empty()).then(|| truncs.iter().sum::<f64>() / truncs.len() as f64),
    }
}

/// Weighted least-squares slope of `ln y` on `ln x`; the weights are inverse
/// variances of `ln y`, i.e. `(y / se)²`. Falls back to ordinary least squares
/// when a standard error is unavailable. Needs at least 4 points.
pub fn loglog_slope(x: &[f64], y: &[f64], se: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 4 || x.len() != y.len() || y.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let weighted = se.len() == y.len() && se.iter().all(|s| *s > 0.0 && s.is_finite());
    let w: Vec<f64> = if weighted {
        y.iter().zip(se).map(|(v, s)| (v / s).powi(2)).collect()
    } else {
        vec![1.0; y.len()]
    };
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(&lx).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = w.iter().zip(&ly).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&lx).map(|(a, b)| a * (b - mx).powi(2)).sum();
    let sxy: f64 = (0..lx.len()).map(|i| w[i] * (lx[i] - mx) * (ly[i] - my)).sum();
    let slope = sxy / sxx;
    let se_slope = if weighted {
        (1.0 / sxx).sqrt()
    } else {
        let resid: f64 = (0..lx.len())
            .map(|i| (ly[i] - my - slope * (lx[i] - mx)).powi(2))
            .sum();
        (resid / (lx.len() as f64 - 2.0) / sxx).sqrt()
    };
    Some((slope, se_slope))
}

/// Runs every `(N, replication)` cell and aggregates.
pub fn run_sweep(exp: &Experiment) -> Result<SweepResult> {
    let sweep = &exp.config.sweep;
    let plans: Vec<BandwidthPlan> = sweep.ns.iter().map(|&n| exp.plan(n)).collect::<Result<_>>()?;
    let cells: Vec<(usize, usize, f64)> = sweep
        .ns
        .iter()
        .zip(&plans)
        .flat_map(|(&n, p)| (0..sweep.replications).map(move |rep| (n, rep, p.h_star)))
        .collect();
    let mut records: Vec<CellRecord> = cells
        .par_iter()
        .flat_map_iter(|&(n, rep, h)| run_cell(exp, n, rep, h))
        .collect();
    let order = |name: &str| ESTIMATORS.iter().position(|e| *e == name).unwrap_or(usize::MAX);
    records.sort_by(|a, b| (order(&a.estimator), a.n, a.rep).cmp(&(order(&b.estimator), b.n, b.rep)));

    let failed = records.iter().filter(|r| r.error.is_some()).count();
    let failed_fraction = if records.is_empty() {
        0.0
    } else {
        failed as f64 / records.len() as f64
    };
    if failed_fraction > MAX_FAILED_FRACTION {
        let first = records.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(Error::Estimation(format!(
            "{failed} of {} sweep cells failed (first error: {first})",
            records.len()
        )));
    }

    let d = exp.d();
    let truth = exp.true_greek.as_deref();
    let mut aggregates = Vec::new();
    let mut summaries = Vec::new();
    for name in &exp.estimators {
        let kernel = name == "beta_tilde" || name == "beta_bar";
        let mut rows = Vec::new();
        for (&n, plan) in sweep.ns.iter().zip(&plans) {
            let group: Vec<&CellRecord> = records.iter().filter(|r| &r.estimator == name && r.n == n).collect();
            rows.push(aggregate(name, n, kernel.then_some(plan.h_star), &group, truth, d));
        }
        let x: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let fit = match rows.iter().map(|r| r.mse).collect::<Option<Vec<f64>>>() {
            Some(y) => {
                let se: Vec<f64> = rows.iter().map(|r| r.mse_se.unwrap_or(f64::NAN)).collect();
                loglog_slope(&x, &y, &se)
            }
            None => None,
        };
        let scaled: Vec<f64> = rows.iter().filter_map(|r| r.var_scaled).filter(|v| *v > 0.0).collect();
        let ratio = (scaled.len() >= 2).then(|| {
            scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min)
        });
        summaries.push(EstimatorSummary {
            estimator: name.clone(),
            slope: fit.map(|f| f.0),
            slope_se: fit.map(|f| f.1),
            variance_scaling_ratio: ratio,
        });
        aggregates.extend(rows);
    }
    Ok(SweepResult {
        records,
        aggregates,
        summaries,
        plans,
        true_greek: exp.true_greek.clone(),
        failed_fraction,
        d,
    })
}

/// Moment screen of standardized pivots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltResult {
    pub estimator: String,
    pub n: usize,
    pub h: f64,
    pub replications: usize,
    pub failures: usize,
    pub pivot_mean: f64,
    pub pivot_var: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub pass: bool,
    pub mean_ok: bool,
    pub var_ok: bool,
    pub skew_ok: bool,
    pub kurt_ok: bool,
    pub pivots: Vec<f64>,
}

/// Sample moments and the pass bands of the screen.
pub fn screen_pivots(estimator: &str, n: usize, h: f64, pivots: Vec<f64>, failures: usize) -> CltResult {
    let r = pivots.len() as f64;
    let mean = pivots.iter().sum::<f64>() / r;
    let m2 = pivots.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / r;
    let m3 = pivots.iter().map(|p| (p - mean).powi(3)).sum::<f64>() / r;
    let m4 = pivots.iter().map(|p| (p - mean).powi(4)).sum::<f64>() / r;
    let var = m2 * r / (r - 1.0);
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let mean_ok = mean.abs() < 4.0 / r.sqrt();
    let var_ok = (var - 1.0).abs() < 0.35;
    let skew_ok = skewness.abs() < 0.5;
    let kurt_ok = excess_kurtosis.abs() < 1.0;
    CltResult {
        estimator: estimator.to_string(),
        n,
        h,
        replications: pivots.len(),
        failures,
        pivot_mean: mean,
        pivot_var: var,
        skewness,
        excess_kurtosis,
        pass: mean_ok && var_ok && skew_ok && kurt_ok,
        mean_ok,
        var_ok,
        skew_ok,
        kurt_ok,
        pivots,
    }
}

/// Replicates a kernel estimator at `(N, h)` and screens
/// `(β̂ − β⁰)/√asym_var` for normality.
pub fn clt_check(exp: &Experiment, estimator: &str, n: usize, h: f64, replications: usize) -> Result<CltResult> {
    if replications < 200 {
        return Err(Error::Argument(format!(
            "the normality screen needs at least 200 replications, got {replications}"
        )));
    }
    if estimator != "beta_tilde" && estimator != "beta_bar" {
        return Err(Error::Argument(format!("CLT screen applies to kernel estimators, not '{estimator}'")));
    }
    let truth = exp
        .true_greek
        .as_ref()
        .ok_or_else(|| Error::Config("the CLT screen needs a model with a known Greek".into()))?[0];
    let base = derive_seed(exp.config.sweep.seed, 0xc17, 0);
    let results: Vec<Result<f64>> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let r = exp.run_estimator(estimator, n, h, cell_seed(base, n, rep))?;
            Ok((r.beta_hat[0] - truth) / r.std_error(0))
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_err()).count();
    if failures as f64 > MAX_FAILED_FRACTION * replications as f64 {
        return Err(Error::Estimation(format!("{failures} of {replications} CLT replications failed")));
    }
    let pivots: Vec<f64> = results.into_iter().filter_map(|r| r.ok()).collect();
    Ok(screen_pivots(estimator, n, h, pivots, failures))
}

/// The undersmoothed screen, its oversmoothed control and the oracle sanity run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub optimal_h: f64,
    pub undersmoothed: CltResult,
    pub oversmoothed: CltResult,
    pub oracle: Option<CltResult>,
}

pub fn clt_screen(exp: &Experiment, replications: usize) -> Result<CltReport> {
    let c = &exp.config.clt;
    let optimal = exp.optimal_plan(c.n)?;
    let under = optimal.undersmoothed(c.gamma)?;
    let over_h = optimal.h_star * c.oversmooth_factor;
    let oracle = if exp.model.capabilities().has_score {
        Some(clt_check(exp, "beta_bar", c.n, under.h_star, replications)?)
    } else {
        None
    };
    Ok(CltReport {
        optimal_h: optimal.h_star,
        undersmoothed: clt_check(exp, "beta_tilde", c.n, under.h_star, replications)?,
        oversmoothed: clt_check(exp, "beta_tilde", c.n, over_h, replications)?,
        oracle,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Serialization(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `sweep.csv` (one row per estimator, N, replication).
pub fn write_sweep_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let d = result.d;
    let mut header: Vec<String> = ["estimator", "N", "rep", "seed", "h", "delta"].iter().map(|s| s.to_string()).collect();
    for k in 0..d {
        header.push(format!("beta_{k}"));
    }
    for k in 0..d {
        header.push(format!("se_{k}"));
    }
    header.extend(["truncation_rate", "n_used", "error"].iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in &result.records {
        let mut row = vec![
            r.estimator.clone(),
            r.n.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            fmt_opt(r.h),
            fmt_opt(r.delta),
        ];
        row.extend(r.beta.iter().map(|v| v.to_string()));
        row.extend(r.std_error.iter().map(|v| v.to_string()));
        row.push(fmt_opt(r.truncation_rate));
        row.push(r.n_used.to_string());
        row.push(r.error.clone().unwrap_or_default());
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `aggregate.csv` (one row per estimator and N).
pub fn write_aggregate_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "estimator",
        "N",
        "h",
        "count",
        "failures",
        "mean",
        "bias",
        "bias_sq",
        "variance",
        "mse",
        "mse_se",
        "var_scaled",
        "mean_truncation_rate",
        "slope",
        "slope_se",
        "variance_scaling_ratio",
    ])
    .map_err(|e| csv_err(path, e))?;
    for a in &result.aggregates {
        let s = result.summaries.iter().find(|s| s.estimator == a.estimator);
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        w.write_record([
            a.estimator.clone(),
            a.n.to_string(),
            fmt_opt(a.h),
            a.count.to_string(),
            a.failures.to_string(),
            join(&a.mean),
            a.bias.as_deref().map(join).unwrap_or_default(),
            fmt_opt(a.bias_sq),
            a.variance.to_string(),
            fmt_opt(a.mse),
            fmt_opt(a.mse_se),
            fmt_opt(a.var_scaled),
            fmt_opt(a.mean_truncation_rate),
            fmt_opt(s.and_then(|s| s.slope)),
            fmt_opt(s.and_then(|s| s.slope_se)),
            fmt_opt(s.and_then(|s| s.variance_scaling_ratio)),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `sweep.csv`, `aggregate.csv`, `run.json` and one gnuplot `.dat`
/// file of MSE against N per estimator. Returns the paths written.
pub fn emit_reports(exp: &Experiment, result: &SweepResult, dir: &Path, wall_seconds: f64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let sweep = dir.join("sweep.csv");
    write_sweep_csv(result, &sweep)?;
    written.push(sweep);
    let agg = dir.join("aggregate.csv");
    write_aggregate_csv(result, &agg)?;
    written.push(agg);
    for name in &exp.estimators {
        let mut text = String::from("# N mse mse_se h\n");
        for a in result.aggregates.iter().filter(|a| &a.estimator == name) {
            if let Some(m) = a.mse {
                text.push_str(&format!(
                    "{} {} {} {}\n",
                    a.n,
                    m,
                    fmt_opt(a.mse_se),
                    a.h.map(|h| h.to_string()).unwrap_or_else(|| "nan".into())
                ));
            }
        }
        let path = dir.join(format!("mse_{name}.dat"));
        write_text(&path, &text)?;
        written.push(path);
    }
    let run = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": exp.config,
        "seed": {
            "base": exp.config.sweep.seed,
            "cell_rule": "derive_seed(base, N, rep)",
        },
        "true_greek": exp.true_greek,
        "rate_constants": exp.rate_constants,
        "kernel_constants": *exp.kernel_constants,
        "plans": result.plans,
        "summaries": result.summaries,
        "skipped_estimators": exp.skipped,
        "failed_fraction": result.failed_fraction,
        "wall_seconds": wall_seconds,
    });
    let path = dir.join("run.json");
    let text = serde_json::to_string_pretty(&run).map_err(|e| Error::Serialization(e.to_string()))?;
    write_text(&path, &text)?;
    written.push(path);
    Ok(written)
}

/// Runs a sweep and writes its reports.
pub fn sweep_and_report(exp: &Experiment, dir: &Path) -> Result<(SweepResult, Vec<PathBuf>)> {
    let started = Instant::now();
    let result = run_sweep(exp)?;
    let files = emit_reports(exp, &result, dir, started.elapsed().as_secs_f64())?;
    Ok((result, files))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_law() {
        let x = [1e3, 2e3, 4e3, 8e3];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.6)).collect();
        let (s, _) = loglog_slope(&x, &y, &[0.1, 0.1, 0.1, 0.1]).unwrap();
        assert!((s + 0.6).abs() < 1e-12);
        assert!(loglog_slope(&x[..3], &y[..3], &[]).is_none());
    }

    #[test]
    fn screen_flags_a_shifted_sample() {
        // normal quantiles at evenly spaced levels, by bisection on the cdf
        let probit: Vec<f64> = (0..400)
            .map(|i| {
                let u = (i as f64 + 0.5) / 400.0;
                let (mut lo, mut hi) = (-8.0, 8.0);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if crate::models::norm_cdf(mid) < u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect();
        assert!(screen_pivots("x", 1, 1.0, probit.clone(), 0).pass);
        let shifted: Vec<f64> = probit.iter().map(|p| p + 1.0).collect();
        let r = screen_pivots("x", 1, 1.0, shifted, 0);
        assert!(!r.pass && !r.mean_ok && r.var_ok);
    }
}
