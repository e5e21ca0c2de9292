//! Double-kernel Greek estimator and its score-oracle counterpart.
//!
//! The joint density of `(Λ, Z)` and its λ-gradient are estimated with
//! leave-one-out product-kernel sums, the ratio is floored at `δ/3`, and the
//! resulting score estimate is plugged into a kernel regression at `λ⁰`.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{compute_kernel_constants, KernelConstants, ProductKernel};
use crate::models::Payoff;
use crate::neighbors::{Candidates, CellGrid};
use crate::randomization::{log_grad_ell, RandomizedSample, RandomizingDensity};

/// Window indices per parallel work unit. Partial sums are combined in
/// chunk order, so results do not depend on the thread count.
pub const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinningConfig {
    pub enabled: bool,
    /// Cell edge; `None` picks a fraction of the inner support radius that
    /// shrinks with the joint dimension.
    pub cell_size: Option<f64>,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            cell_size: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    /// Outer bandwidth of the regression at `λ⁰`.
    pub h: f64,
    /// Bandwidth of the density estimates; equals `h` unless overridden.
    pub h_inner: f64,
    pub delta: f64,
    pub kernel_k: ProductKernel,
    pub kernel_h: ProductKernel,
    pub binning: BinningConfig,
    constants: Arc<KernelConstants>,
}

impl EstimatorConfig {
    pub fn new(
        h: f64,
        delta: f64,
        kernel_k: ProductKernel,
        kernel_h: ProductKernel,
        binning: BinningConfig,
    ) -> Result<Self> {
        let constants = Arc::new(compute_kernel_constants(&kernel_k, &kernel_h)?);
        Self::with_constants(h, delta, kernel_k, kernel_h, binning, constants)
    }

    /// Reuses precomputed kernel constants (they depend only on K and H).
    pub fn with_constants(
        h: f64,
        delta: f64,
        kernel_k: ProductKernel,
        kernel_h: ProductKernel,
        binning: BinningConfig,
        constants: Arc<KernelConstants>,
    ) -> Result<Self> {
        let cfg = Self {
            h,
            h_inner: h,
            delta,
            kernel_k,
            kernel_h,
            binning,
            constants,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::Config(format!("bandwidth must be positive, got {}", self.h)));
        }
        if !(self.h_inner > 0.0) || !self.h_inner.is_finite() {
            return Err(Error::Config(format!("inner bandwidth must be positive, got {}", self.h_inner)));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if let Some(c) = self.binning.cell_size {
            if !(c > 0.0) {
                return Err(Error::Config(format!("binning cell size must be positive, got {c}")));
            }
        }
        Ok(())
    }

    pub fn with_h(&self, h: f64) -> Result<Self> {
        let mut c = self.clone();
        c.h = h;
        c.h_inner = h;
        c.validate()?;
        Ok(c)
    }

    pub fn with_h_inner(&self, h_inner: f64) -> Result<Self> {
        let mut c = self.clone();
        c.h_inner = h_inner;
        c.validate()?;
        Ok(c)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let mut c = self.clone();
        c.delta = delta;
        c.validate()?;
        Ok(c)
    }

    pub fn with_binning(&self, binning: BinningConfig) -> Result<Self> {
        let mut c = self.clone();
        c.binning = binning;
        c.validate()?;
        Ok(c)
    }

    pub fn constants(&self) -> &KernelConstants {
        &self.constants
    }

    pub fn shared_constants(&self) -> Arc<KernelConstants> {
        Arc::clone(&self.constants)
    }

    pub fn p(&self) -> usize {
        self.kernel_k.order()
    }

    pub fn q(&self) -> usize {
        self.kernel_h.order()
    }

    /// `n < (p∧q) + 1`; without it the density-estimation bias cannot be
    /// made negligible.
    pub fn order_feasible(&self) -> bool {
        self.kernel_h.dimension() < self.p().min(self.q()) + 1
    }

    pub fn diagnostics(&self, n_samples: usize) -> Diagnostics {
        Diagnostics::evaluate(
            n_samples,
            self.h_inner,
            self.kernel_k.dimension(),
            self.kernel_h.dimension(),
            self.order_feasible(),
        )
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "h": self.h,
            "h_inner": self.h_inner,
            "delta": self.delta,
            "kernel_K": self.kernel_k.label(),
            "kernel_H": self.kernel_h.label(),
            "p": self.p(),
            "q": self.q(),
            "binning": self.binning,
        })
    }
}

/// Bandwidth-condition diagnostics, reported and never enforced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    /// `(ln N)⁴ / (N h^{d+n+n√2})`, the stricter variant with an extra `n√2`.
    pub log_rate_sqrt2: f64,
    /// `(ln N)⁴ / (N h^{d+n})`.
    pub log_rate: f64,
    pub order_feasible: bool,
}

impl Diagnostics {
    pub fn evaluate(n_samples: usize, h: f64, d: usize, n: usize, order_feasible: bool) -> Self {
        let big_n = n_samples as f64;
        let log4 = big_n.ln().powi(4);
        let (d, n) = (d as f64, n as f64);
        Self {
            log_rate_sqrt2: log4 / (big_n * h.powf(d + n + n * std::f64::consts::SQRT_2)),
            log_rate: log4 / (big_n * h.powf(d + n)),
            order_feasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LooDensityEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub truncated_value: f64,
    pub was_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub beta_hat: Vec<f64>,
    pub n_draws: usize,
    /// Points with a nonzero outer kernel weight.
    pub n_used: usize,
    /// Points whose score was actually estimated.
    pub n_evaluated: usize,
    pub truncation_rate: f64,
    pub asym_var: Vec<Vec<f64>>,
    pub ci_95: Vec<(f64, f64)>,
    /// Wall-clock seconds; excluded from deterministic outputs.
    pub timing: f64,
    pub config_echo: serde_json::Value,
    pub diagnostics: Option<Diagnostics>,
}

impl EstimateReport {
    pub(crate) fn finish(
        estimator: &str,
        beta_hat: Vec<f64>,
        asym_var: Vec<Vec<f64>>,
        n_draws: usize,
        started: Instant,
        config_echo: serde_json::Value,
    ) -> Self {
        let ci_95 = beta_hat
            .iter()
            .enumerate()
            .map(|(k, &b)| {
                let half = 1.96 * asym_var[k][k].max(0.0).sqrt();
                (b - half, b + half)
            })
            .collect();
        Self {
            estimator: estimator.to_string(),
            beta_hat,
            n_draws,
            n_used: n_draws,
            n_evaluated: n_draws,
            truncation_rate: 0.0,
            asym_var,
            ci_95,
            timing: started.elapsed().as_secs_f64(),
            config_echo,
            diagnostics: None,
        }
    }

    /// Standard error of component `k`.
    pub fn std_error(&self, k: usize) -> f64 {
        self.asym_var[k][k].max(0.0).sqrt()
    }

    /// Whether `target` lies in the symmetric normal interval at `z` standard errors.
    pub fn covers(&self, k: usize, target: f64, z: f64) -> bool {
        (self.beta_hat[k] - target).abs() <= z * self.std_error(k)
    }
}

/// Leave-one-out kernel sums over a fixed sample, with optional binning.
pub struct LooEvaluator<'a> {
    sample: &'a RandomizedSample,
    cfg: &'a EstimatorConfig,
    grid: Option<CellGrid>,
    half_width: Vec<f64>,
}

/// Per-thread scratch space for [`LooEvaluator`].
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    ids: Candidates,
    u: Vec<f64>,
    g: Vec<f64>,
    center: Vec<f64>,
}

impl<'a> LooEvaluator<'a> {
    pub fn new(sample: &'a RandomizedSample, cfg: &'a EstimatorConfig) -> Result<Self> {
        let d = sample.param_dim;
        let n = sample.state_dim;
        if cfg.kernel_k.dimension() != d || cfg.kernel_h.dimension() != n {
            return Err(Error::Config(format!(
                "kernel dimensions (K: {}, H: {}) do not match the sample (d = {d}, n = {n})",
                cfg.kernel_k.dimension(),
                cfg.kernel_h.dimension()
            )));
        }
        let rk = cfg.kernel_k.support_radius() * cfg.h_inner;
        let rh = cfg.kernel_h.support_radius() * cfg.h_inner;
        let mut half_width = vec![rk; d];
        half_width.extend(std::iter::repeat(rh).take(n));
        let grid = if cfg.binning.enabled {
            // finer cells waste fewer candidates but cost more lookups per query
            let fraction = match d + n {
                0..=2 => 0.25,
                3..=4 => 0.5,
                _ => 1.0,
            };
            let size = cfg.binning.cell_size.unwrap_or(fraction * rk.max(rh));
            let mut joint = Vec::with_capacity(sample.len() * (d + n));
            for j in 0..sample.len() {
                joint.extend_from_slice(sample.lambda(j));
                joint.extend_from_slice(sample.z(j));
            }
            Some(CellGrid::build(&joint, d + n, vec![size; d + n])?)
        } else {
            None
        };
        Ok(Self {
            sample,
            cfg,
            grid,
            half_width,
        })
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            ids: Candidates::default(),
            u: vec![0.0; self.sample.param_dim],
            g: vec![0.0; self.sample.param_dim],
            center: vec![0.0; self.sample.param_dim + self.sample.state_dim],
        }
    }

    /// Raw sums `Σ_{j≠skip} K H` and `Σ_{j≠skip} ∇K H` (unscaled).
    pub fn raw_sums(
        &self,
        skip: Option<usize>,
        lambda: &[f64],
        z: &[f64],
        scratch: &mut Scratch,
        grad: &mut [f64],
    ) -> f64 {
        let d = self.sample.param_dim;
        let hi = self.cfg.h_inner;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        let mut term = |j: usize, s: &mut Scratch, grad: &mut [f64]| {
            if Some(j) == skip {
                return;
            }
            let zj = self.sample.z(j);
            // H is evaluated coordinate by coordinate without allocation
            let mut hv = 1.0;
            for (k, f) in self.cfg.kernel_h.factors().iter().enumerate() {
                hv *= f.evaluate((z[k] - zj[k]) / hi);
                if hv == 0.0 {
                    return;
                }
            }
            let lj = self.sample.lambda(j);
            for k in 0..d {
                s.u[k] = (lambda[k] - lj[k]) / hi;
            }
            let kv = self.cfg.kernel_k.value_and_gradient(&s.u, &mut s.g);
            value += kv * hv;
            for k in 0..d {
                grad[k] += s.g[k] * hv;
            }
        };
        match &self.grid {
            Some(grid) => {
                scratch.center[..d].copy_from_slice(lambda);
                scratch.center[d..].copy_from_slice(z);
                let mut ids = std::mem::take(&mut scratch.ids);
                grid.candidates(&scratch.center, &self.half_width, &mut ids);
                for &j in &ids.ids {
                    term(j as usize, scratch, grad);
                }
                scratch.ids = ids;
            }
            None => {
                for j in 0..self.sample.len() {
                    term(j, scratch, grad);
                }
            }
        }
        value
    }

    /// `φ̂^{−i}`, `φ̂_λ^{−i}` and the floored value at `(λ, z)`.
    pub fn evaluate(&self, i: usize, lambda: &[f64], z: &[f64], scratch: &mut Scratch) -> Result<LooDensityEval> {
        let big_n = self.sample.len();
        if big_n < 2 {
            return Err(Error::Argument("leave-one-out estimates need at least 2 draws".into()));
        }
        if i >= big_n {
            return Err(Error::Argument(format!("index {i} out of range for {big_n} draws")));
        }
        let mut grad = vec![0.0; self.sample.param_dim];
        let raw = self.raw_sums(Some(i), lambda, z, scratch, &mut grad);
        Ok(self.scale(raw, grad, big_n - 1))
    }

    /// Full-sample density estimate (no exclusion), used for pilots.
    pub fn evaluate_all(&self, lambda: &[f64], z: &[f64], scratch: &mut Scratch) -> LooDensityEval {
        let mut grad = vec![0.0; self.sample.param_dim];
        let raw = self.raw_sums(None, lambda, z, scratch, &mut grad);
        self.scale(raw, grad, self.sample.len())
    }

    fn scale(&self, raw: f64, mut grad: Vec<f64>, count: usize) -> LooDensityEval {
        let d = self.sample.param_dim as i32;
        let n = self.sample.state_dim as i32;
        let hi = self.cfg.h_inner;
        let norm = hi.powi(-(d + n)) / count as f64;
        let value = raw * norm;
        let gnorm = norm / hi;
        grad.iter_mut().for_each(|g| *g *= gnorm);
        let floor = self.cfg.delta / 3.0;
        let was_truncated = value.abs() < floor;
        LooDensityEval {
            value,
            grad,
            truncated_value: if was_truncated { floor } else { value },
            was_truncated,
        }
    }
}

/// Leave-one-out density and gradient estimates at `(λ, z)`, excluding row `i` (0-based).
pub fn loo_density(
    sample: &RandomizedSample,
    cfg: &EstimatorConfig,
    i: usize,
    lambda: &[f64],
    z: &[f64],
) -> Result<LooDensityEval> {
    let ev = LooEvaluator::new(sample, cfg)?;
    let mut s = ev.scratch();
    ev.evaluate(i, lambda, z, &mut s)
}

fn score_from_eval(
    eval: &LooDensityEval,
    ell: &RandomizingDensity,
    lambda0: &[f64],
    lambda: &[f64],
) -> Result<Vec<f64>> {
    let lg = log_grad_ell(ell, lambda, lambda0)?;
    Ok(eval
        .grad
        .iter()
        .zip(lg)
        .map(|(g, l)| g / eval.truncated_value + l)
        .collect())
}

/// Estimated score `ŝ^{−i}(λ, z)`.
pub fn score_hat(
    sample: &RandomizedSample,
    cfg: &EstimatorConfig,
    ell: &RandomizingDensity,
    lambda0: &[f64],
    i: usize,
    lambda: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    let eval = loo_density(sample, cfg, i, lambda, z)?;
    score_from_eval(&eval, ell, lambda0, lambda)
}

#[derive(Debug, Clone, Default)]
struct Partial {
    sum: Vec<f64>,
    evaluated: usize,
    truncated: usize,
}

/// Indices with a nonzero outer kernel weight, with those weights.
fn window(sample: &RandomizedSample, k: &ProductKernel, h: f64, lambda0: &[f64]) -> Vec<(usize, f64)> {
    let d = sample.param_dim;
    let mut u = vec![0.0; d];
    (0..sample.len())
        .filter_map(|i| {
            let li = sample.lambda(i);
            for c in 0..d {
                u[c] = (lambda0[c] - li[c]) / h;
            }
            let w = k.evaluate(&u);
            (w != 0.0).then_some((i, w))
        })
        .collect()
}

/// Kernel-weighted average of `φ²(Z_i)` over the window.
fn weighted_phi_sq(sample: &RandomizedSample, payoff: &Payoff, win: &[(usize, f64)]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &(i, w) in win {
        let p = payoff.evaluate(sample.z(i));
        num += w * p * p;
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        // signed high-order weights can cancel; fall back to the plain mean
        win.iter()
            .map(|&(i, _)| payoff.evaluate(sample.z(i)).powi(2))
            .sum::<f64>()
            / win.len() as f64
    }
}

fn check_inputs(sample: &RandomizedSample, ell: &RandomizingDensity, lambda0: &[f64]) -> Result<()> {
    if sample.len() < 2 {
        return Err(Error::Argument("estimation needs at least 2 draws".into()));
    }
    if lambda0.len() != sample.param_dim || ell.dimension() != sample.param_dim {
        return Err(Error::Argument(format!(
            "parameter dimension mismatch: sample d = {}, lambda0 {}, ell {}",
            sample.param_dim,
            lambda0.len(),
            ell.dimension()
        )));
    }
    Ok(())
}

/// The double-kernel estimator `β̃_N`.
pub fn beta_tilde(
    sample: &RandomizedSample,
    cfg: &EstimatorConfig,
    ell: &RandomizingDensity,
    lambda0: &[f64],
    payoff: &Payoff,
) -> Result<EstimateReport> {
    let started = Instant::now();
    check_inputs(sample, ell, lambda0)?;
    let d = sample.param_dim;
    let big_n = sample.len();
    let win = window(sample, &cfg.kernel_k, cfg.h, lambda0);
    if win.is_empty() {
        return Err(Error::Estimation(format!(
            "no draw within the kernel window at h = {}; increase h or N",
            cfg.h
        )));
    }
    let ev = LooEvaluator::new(sample, cfg)?;
    let partials: Vec<Partial> = win
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<Partial> {
            let mut s = ev.scratch();
            let mut part = Partial {
                sum: vec![0.0; d],
                ..Partial::default()
            };
            for &(i, w) in chunk {
                let phi = payoff.evaluate(sample.z(i));
                if phi == 0.0 {
                    continue;
                }
                let li = sample.lambda(i);
                let eval = ev.evaluate(i, li, sample.z(i), &mut s)?;
                part.evaluated += 1;
                part.truncated += eval.was_truncated as usize;
                let score = score_from_eval(&eval, ell, lambda0, li)?;
                for k in 0..d {
                    part.sum[k] += phi * score[k] * w;
                }
            }
            Ok(part)
        })
        .collect::<Result<_>>()?;
    let mut sum = vec![0.0; d];
    let (mut evaluated, mut truncated) = (0, 0);
    for p in &partials {
        for k in 0..d {
            sum[k] += p.sum[k];
        }
        evaluated += p.evaluated;
        truncated += p.truncated;
    }
    let ell0 = ell.at_origin();
    let norm = 1.0 / (ell0 * big_n as f64 * cfg.h.powi(d as i32));
    let beta: Vec<f64> = sum.iter().map(|s| s * norm).collect();

    let phi_sq = weighted_phi_sq(sample, payoff, &win);
    let var_scale = phi_sq / ell0 / (big_n as f64 * cfg.h.powi(d as i32 + 2));
    let asym_var = cfg
        .constants()
        .sigma_factor
        .iter()
        .map(|row| row.iter().map(|s| s * var_scale).collect())
        .collect();

    let mut report = EstimateReport::finish("beta_tilde", beta, asym_var, big_n, started, cfg.echo());
    report.n_used = win.len();
    report.n_evaluated = evaluated;
    report.truncation_rate = if evaluated > 0 {
        truncated as f64 / evaluated as f64
    } else {
        0.0
    };
    report.diagnostics = Some(cfg.diagnostics(big_n));
    Ok(report)
}

/// Kernel regression at `λ⁰` with the true score: `β̄_N`.
pub fn beta_bar_oracle(
    sample: &RandomizedSample,
    cfg: &EstimatorConfig,
    ell: &RandomizingDensity,
    lambda0: &[f64],
    payoff: &Payoff,
    score: &(dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Sync),
) -> Result<EstimateReport> {
    let started = Instant::now();
    check_inputs(sample, ell, lambda0)?;
    let d = sample.param_dim;
    let big_n = sample.len();
    let win = window(sample, &cfg.kernel_k, cfg.h, lambda0);
    if win.is_empty() {
        return Err(Error::Estimation(format!(
            "no draw within the kernel window at h = {}; increase h or N",
            cfg.h
        )));
    }
    let ell0 = ell.at_origin();
    let unit = 1.0 / (ell0 * cfg.h.powi(d as i32));
    // per-chunk sums of t_i and t_i t_iᵀ
    let partials: Vec<(Vec<f64>, Vec<f64>)> = win
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut s1 = vec![0.0; d];
            let mut s2 = vec![0.0; d * d];
            for &(i, w) in chunk {
                let phi = payoff.evaluate(sample.z(i));
                if phi == 0.0 {
                    continue;
                }
                let sc = score(sample.lambda(i), sample.z(i))?;
                let t: Vec<f64> = sc.iter().map(|s| phi * s * w * unit).collect();
                for a in 0..d {
                    s1[a] += t[a];
                    for b in 0..d {
                        s2[a * d + b] += t[a] * t[b];
                    }
                }
            }
            Ok((s1, s2))
        })
        .collect::<Result<_>>()?;
    let mut s1 = vec![0.0; d];
    let mut s2 = vec![0.0; d * d];
    for (a, b) in &partials {
        s1.iter_mut().zip(a).for_each(|(x, y)| *x += y);
        s2.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
    let nf = big_n as f64;
    let mean: Vec<f64> = s1.iter().map(|s| s / nf).collect();
    // summands outside the window are zero and still count towards N
    let asym_var = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| (s2[a * d + b] / nf - mean[a] * mean[b]) / (nf - 1.0).max(1.0))
                .collect()
        })
        .collect();
    let mut report = EstimateReport::finish("beta_bar", mean, asym_var, big_n, started, cfg.echo());
    report.n_used = win.len();
    report.n_evaluated = win.len();
    Ok(report)
}

/// Floor `δ` from a pilot density estimate at `λ⁰` over the payoff's
/// compact set: half the smallest estimate on a grid, but never below
/// `1e-3` times the largest one, which keeps single
/// near-empty cells from dominating the variance.
pub fn auto_delta(
    sample: &RandomizedSample,
    cfg: &EstimatorConfig,
    payoff: &Payoff,
    lambda0: &[f64],
) -> Result<f64> {
    let n = sample.state_dim;
    let ev = LooEvaluator::new(sample, cfg)?;
    let mut s = ev.scratch();
    // clip unbounded edges to the observed range
    let mut ranges = payoff.floor_box(n);
    for (k, r) in ranges.iter_mut().enumerate() {
        let (lo, hi) = (0..sample.len())
            .map(|j| sample.z(j)[k])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        r.0 = r.0.max(lo);
        r.1 = r.1.min(hi);
    }
    if ranges.iter().any(|r| !(r.1 > r.0)) {
        return Err(Error::Estimation(
            "payoff support does not intersect the simulated states; cannot pick delta".into(),
        ));
    }
    let per_axis: usize = match n {
        1 => 64,
        2 => 24,
        _ => 8,
    };
    let total = per_axis.pow(n as u32);
    let mut z = vec![0.0; n];
    let (mut min, mut max) = (f64::INFINITY, 0.0f64);
    for flat in 0..total {
        let mut rem = flat;
        for (k, r) in ranges.iter().enumerate() {
            let t = (rem % per_axis) as f64 / (per_axis - 1) as f64;
            rem /= per_axis;
            z[k] = r.0 + t * (r.1 - r.0);
        }
        let v = ev.evaluate_all(lambda0, &z, &mut s).value;
        min = min.min(v);
        max = max.max(v);
    }
    if !(max > 0.0) {
        return Err(Error::Estimation(
            "pilot density estimate vanishes on the payoff support; increase h or N".into(),
        ));
    }
    Ok((0.5 * min).max(1e-3 * max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_standard_kernel;
    use crate::randomization::Profile;

    fn epan_cfg(h: f64, delta: f64, binning: bool) -> EstimatorConfig {
        let k = make_standard_kernel("epanechnikov", 1).unwrap();
        EstimatorConfig::new(
            h,
            delta,
            k.clone(),
            k,
            BinningConfig {
                enabled: binning,
                cell_size: None,
            },
        )
        .unwrap()
    }

    #[test]
    fn two_point_hand_value() {
        let sample = RandomizedSample::from_rows(vec![1.0], vec![vec![0.9], vec![1.2]], vec![vec![3.0], vec![4.0]]).unwrap();
        let h = 0.5;
        let e = loo_density(&sample, &epan_cfg(h, 1e-3, false), 0, &[1.2], &[4.0]).unwrap();
        assert!((e.value - 0.5625 / (h * h)).abs() < 1e-15);
        assert_eq!(e.grad, vec![0.0]);
        assert!(!e.was_truncated);
    }

    #[test]
    fn far_query_is_truncated() {
        let sample = RandomizedSample::from_rows(vec![1.0], vec![vec![0.9], vec![1.2]], vec![vec![3.0], vec![4.0]]).unwrap();
        let cfg = epan_cfg(0.1, 3e-3, true);
        let e = loo_density(&sample, &cfg, 0, &[5.0], &[5.0]).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.truncated_value, 1e-3);
        assert!(e.was_truncated);
        let ell = RandomizingDensity::new(1, 10.0, Profile::Epanechnikov).unwrap();
        let s = score_hat(&sample, &cfg, &ell, &[1.0], 0, &[5.0], &[5.0]).unwrap();
        let lg = log_grad_ell(&ell, &[5.0], &[1.0]).unwrap();
        assert_eq!(s, lg);
    }

    #[test]
    fn config_rejects_bad_values() {
        let k = make_standard_kernel("epanechnikov", 1).unwrap();
        assert!(EstimatorConfig::new(0.0, 1.0, k.clone(), k.clone(), BinningConfig::default()).is_err());
        assert!(EstimatorConfig::new(1.0, -1.0, k.clone(), k, BinningConfig::default()).is_err());
    }

    #[test]
    fn needs_two_draws() {
        let sample = RandomizedSample::from_rows(vec![1.0], vec![vec![0.9]], vec![vec![3.0]]).unwrap();
        assert!(loo_density(&sample, &epan_cfg(0.5, 1e-3, false), 0, &[1.0], &[3.0]).is_err());
    }

    #[test]
    fn diagnostics_shapes() {
        let d = Diagnostics::evaluate(1000, 0.5, 1, 1, true);
        let log4 = 1000f64.ln().powi(4);
        assert!((d.log_rate - log4 / (1000.0 * 0.25)).abs() < 1e-9);
        assert!(d.log_rate_sqrt2 > d.log_rate);
    }
}
