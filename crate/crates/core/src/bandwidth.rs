//! Bias and variance constants and the bandwidth plan derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Diagnostics;
use crate::kernel::KernelConstants;
use crate::models::{Model, Payoff};
use crate::quadrature::{adaptive, GaussLegendre};
use crate::randomization::RandomizingDensity;
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantsSource {
    AnalyticQuadrature,
    PilotMc,
    RuleOfThumb,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateConstants {
    /// Leading bias coefficient of the λ-smoothing (order p).
    pub c1: Vec<f64>,
    /// Leading bias coefficient of the z-smoothing (order q).
    pub c2: Vec<f64>,
    pub sigma_tilde: Vec<Vec<f64>>,
    /// `E[φ²(Z(λ⁰))]`.
    pub phi_sq_mean: f64,
    pub source: ConstantsSource,
}

impl RateConstants {
    pub fn trace_sigma(&self) -> f64 {
        (0..self.sigma_tilde.len()).map(|i| self.sigma_tilde[i][i]).sum()
    }

    /// `C₁ 1{p≤q} + C₂ 1{q≤p}`.
    pub fn dominant(&self, p: usize, q: usize) -> Vec<f64> {
        self.c1
            .iter()
            .zip(&self.c2)
            .map(|(a, b)| if p <= q { *a } else { 0.0 } + if q <= p { *b } else { 0.0 })
            .collect()
    }
}

/// Numerical-derivative settings for the analytic constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticOptions {
    /// Step relative to the λ scale `max(|λ⁰|, ρ)` and to `z` itself.
    pub fd_rel_step: f64,
    /// Gauss–Legendre panels across the payoff support.
    pub panels: usize,
}

impl Default for AnalyticOptions {
    fn default() -> Self {
        Self {
            fd_rel_step: 0.01,
            panels: 200,
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Central difference of order `p` with step `e`, error `O(e²)`.
fn central_difference(f: &dyn Fn(f64) -> f64, x: f64, p: usize, e: f64) -> f64 {
    if p == 0 {
        return f(x);
    }
    let half = p as f64 / 2.0;
    let mut acc = 0.0;
    for j in 0..=p {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binomial(p, j) * f(x + (half - j as f64) * e);
    }
    acc / e.powi(p as i32)
}

/// Richardson-extrapolated `p`-th derivative.
pub fn richardson_derivative(f: &dyn Fn(f64) -> f64, x: f64, p: usize, e: f64) -> f64 {
    let coarse = central_difference(f, x, p, e);
    let fine = central_difference(f, x, p, 0.5 * e);
    (4.0 * fine - coarse) / 3.0
}

fn factorial(p: usize) -> f64 {
    (1..=p).map(|k| k as f64).product()
}

/// Bias and variance constants for `d = n = 1` models with a density, by
/// numerical differentiation and quadrature.
pub fn analytic_rate_constants(
    model: &dyn Model,
    payoff: &Payoff,
    ell: &RandomizingDensity,
    lambda0: &[f64],
    kc: &KernelConstants,
    p: usize,
    q: usize,
    opts: &AnalyticOptions,
) -> Result<RateConstants> {
    if model.param_dim() != 1 || model.state_dim() != 1 || !model.capabilities().has_density {
        return Err(Error::Config(
            "analytic constants need a one-dimensional model with a density".into(),
        ));
    }
    let l0 = lambda0[0];
    let ell0 = ell.at_origin();
    let density = |l: f64, z: f64| model.density(&[l], &[z]).unwrap_or(0.0);
    let ell_at = |l: f64| ell.evaluate(&[l0 - l]);
    let e_l = opts.fd_rel_step * l0.abs().max(ell.radius());
    let phi = |l: f64, z: f64| ell_at(l) * density(l, z);
    let phi_l = |l: f64, z: f64| richardson_derivative(&|x| phi(x, z), l, 1, 0.1 * e_l);
    let f_l = |l: f64, z: f64| richardson_derivative(&|x| density(x, z), l, 1, 0.1 * e_l);

    let xi_k = |g: &dyn Fn(f64) -> f64| {
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        sign / factorial(p) * kc.k_axis_moment(0) * richardson_derivative(g, l0, p, e_l)
    };
    let xi_h = |g: &dyn Fn(f64) -> f64, z: f64| {
        let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
        let e_z = opts.fd_rel_step * z.abs().max(1e-12);
        sign / factorial(q) * kc.h_axis_moment(0) * richardson_derivative(g, z, q, e_z)
    };

    let (lo, hi) = payoff.support_interval();
    if payoff.evaluate(&[0.5 * (lo + hi)]) == 0.0 && lo == hi {
        return Ok(zero_constants(ConstantsSource::AnalyticQuadrature));
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config(format!(
            "analytic constants need a payoff with bounded support, got {payoff}"
        )));
    }
    // the lognormal-type densities vanish at the origin; start just above it
    let lo = lo.max(1e-9 * hi.abs().max(1.0));
    let rule = GaussLegendre::new(10);
    let mut c1 = 0.0;
    let mut c2 = 0.0;
    let mut bad = false;
    let mut integrand = |z: f64, which: u8| -> f64 {
        let pay = payoff.evaluate(&[z]);
        if pay == 0.0 {
            return 0.0;
        }
        let base = phi(l0, z);
        if !(base > 1e-300) {
            return 0.0;
        }
        let grad = phi_l(l0, z);
        let v = match which {
            1 => {
                xi_k(&|l| ell_at(l) * f_l(l, z)) + xi_k(&|l| phi_l(l, z)) - grad / base * xi_k(&|l| phi(l, z))
            }
            _ => xi_h(&|y| phi_l(l0, y), z) - grad / base * xi_h(&|y| phi(l0, y), z),
        };
        if !v.is_finite() {
            bad = true;
            return 0.0;
        }
        v * pay
    };
    let panels = opts.panels.max(1);
    c1 += rule.composite(lo, hi, panels, |z| integrand(z, 1));
    c2 += rule.composite(lo, hi, panels, |z| integrand(z, 2));
    if bad {
        return Err(Error::Numerical("non-finite bias integrand".into()));
    }
    c1 /= ell0;
    c2 /= ell0;

    let phi_sq_mean = adaptive(lo, hi, 1e-14, 1e-10, |z| payoff.evaluate(&[z]).powi(2) * density(l0, z))?;
    Ok(RateConstants {
        c1: vec![c1],
        c2: vec![c2],
        sigma_tilde: scaled_sigma(kc, phi_sq_mean / ell0),
        phi_sq_mean,
        source: ConstantsSource::AnalyticQuadrature,
    })
}

fn zero_constants(source: ConstantsSource) -> RateConstants {
    RateConstants {
        c1: vec![0.0],
        c2: vec![0.0],
        sigma_tilde: vec![vec![0.0]],
        phi_sq_mean: 0.0,
        source,
    }
}

fn scaled_sigma(kc: &KernelConstants, factor: f64) -> Vec<Vec<f64>> {
    kc.sigma_factor
        .iter()
        .map(|r| r.iter().map(|s| s * factor).collect())
        .collect()
}

/// Constants from a pilot simulation at `λ⁰`. Bias constants cannot be
/// estimated without density derivatives, so their magnitude is set such
/// that the optimal bandwidth equals `c0` standard deviations of `ℓ` times
/// `N^{−1/(d+2m+2)}`.
#[allow(clippy::too_many_arguments)]
pub fn pilot_rate_constants(
    model: &dyn Model,
    payoff: &Payoff,
    ell: &RandomizingDensity,
    lambda0: &[f64],
    kc: &KernelConstants,
    p: usize,
    q: usize,
    pilot_draws: usize,
    c0: f64,
    seed: u64,
) -> Result<RateConstants> {
    if pilot_draws < 2 {
        return Err(Error::Argument("pilot needs at least 2 draws".into()));
    }
    let d = model.param_dim();
    let mut acc = 0.0;
    for i in 0..pilot_draws {
        let mut rng = stream(seed, i as u64);
        acc += payoff.evaluate(&model.simulate(lambda0, &mut rng)?).powi(2);
    }
    let phi_sq_mean = acc / pilot_draws as f64;
    let sigma_tilde = scaled_sigma(kc, phi_sq_mean / ell.at_origin());
    let trace: f64 = (0..d).map(|i| sigma_tilde[i][i]).sum();
    let m = p.min(q);
    let expo = (d + 2 * m + 2) as f64;
    let c_sq = (d + 2) as f64 * trace / (2.0 * m as f64 * (c0 * ell.coordinate_std()).powf(expo));
    let per_axis = (c_sq / d as f64).sqrt();
    let (c1, c2) = if p <= q {
        (vec![per_axis; d], vec![0.0; d])
    } else {
        (vec![0.0; d], vec![per_axis; d])
    };
    Ok(RateConstants {
        c1,
        c2,
        sigma_tilde,
        phi_sq_mean,
        source: ConstantsSource::PilotMc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanDiagnostics {
    pub log_rate_sqrt2: f64,
    pub log_rate: f64,
    pub undersmooth_flag: bool,
    /// `N h^{d+2m+2} |C|² / Tr Σ̃`, the squared bias-to-variance scale.
    pub bias_variance_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthPlan {
    pub h_star: f64,
    pub rate_exponent: f64,
    pub feasible: bool,
    pub diagnostics: PlanDiagnostics,
    pub n_samples: usize,
    pub d: usize,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    /// `|C|² / Tr Σ̃`; zero for rule-of-thumb plans.
    pub bias_variance_constant: f64,
}

/// MSE exponent `−2m/(d+2m+2)`.
pub fn rate_exponent(d: usize, m: usize) -> f64 {
    -2.0 * m as f64 / (d + 2 * m + 2) as f64
}

fn plan(h: f64, n_samples: usize, p: usize, q: usize, d: usize, n: usize, ratio_const: f64) -> BandwidthPlan {
    let m = p.min(q);
    let diag = Diagnostics::evaluate(n_samples, h, d, n, n < m + 1);
    BandwidthPlan {
        h_star: h,
        rate_exponent: rate_exponent(d, m),
        feasible: n < m + 1,
        diagnostics: PlanDiagnostics {
            log_rate_sqrt2: diag.log_rate_sqrt2,
            log_rate: diag.log_rate,
            undersmooth_flag: false,
            bias_variance_ratio: n_samples as f64 * h.powi((d + 2 * m + 2) as i32) * ratio_const,
        },
        n_samples,
        d,
        n,
        p,
        q,
        bias_variance_constant: ratio_const,
    }
}

/// MSE-optimal bandwidth `((d+2) Tr Σ̃ / (2m |C|² N))^{1/(d+2m+2)}`.
pub fn optimal_bandwidth(
    constants: &RateConstants,
    n_samples: usize,
    p: usize,
    q: usize,
    d: usize,
    n: usize,
) -> Result<BandwidthPlan> {
    if n_samples < 2 {
        return Err(Error::Argument("bandwidth selection needs N >= 2".into()));
    }
    let m = p.min(q);
    let c_sq: f64 = constants.dominant(p, q).iter().map(|c| c * c).sum();
    let trace = constants.trace_sigma();
    if !(c_sq > 0.0) || !c_sq.is_finite() {
        return Err(Error::DegeneratePlan(
            "dominant bias constant is zero; fall back to the rule-of-thumb bandwidth".into(),
        ));
    }
    if !(trace > 0.0) {
        return Err(Error::DegeneratePlan(
            "variance constant is zero; fall back to the rule-of-thumb bandwidth".into(),
        ));
    }
    let expo = (d + 2 * m + 2) as f64;
    let h = ((d + 2) as f64 * trace / (2.0 * m as f64 * c_sq * n_samples as f64)).powf(1.0 / expo);
    Ok(plan(h, n_samples, p, q, d, n, c_sq / trace))
}

/// `h = c0 · sd(ℓ) · N^{−1/(d+2m+2)}`.
pub fn rule_of_thumb_bandwidth(
    ell: &RandomizingDensity,
    c0: f64,
    n_samples: usize,
    p: usize,
    q: usize,
    d: usize,
    n: usize,
) -> Result<BandwidthPlan> {
    if n_samples < 2 || !(c0 > 0.0) {
        return Err(Error::Argument("rule of thumb needs N >= 2 and c0 > 0".into()));
    }
    let m = p.min(q);
    let h = c0 * ell.coordinate_std() * (n_samples as f64).powf(-1.0 / (d + 2 * m + 2) as f64);
    Ok(plan(h, n_samples, p, q, d, n, 0.0))
}

/// A fixed, user-chosen bandwidth wrapped as a plan.
pub fn fixed_bandwidth(h: f64, n_samples: usize, p: usize, q: usize, d: usize, n: usize) -> Result<BandwidthPlan> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("fixed bandwidth must be positive, got {h}")));
    }
    Ok(plan(h, n_samples.max(2), p, q, d, n, 0.0))
}

impl BandwidthPlan {
    /// Shrinks the bandwidth to `h* N^{−γ/(d+2m+2)}`, i.e. `h ∝ N^{−(1+γ)/(d+2m+2)}`,
    /// so the smoothing bias is negligible against the standard deviation.
    pub fn undersmoothed(&self, gamma: f64) -> Result<BandwidthPlan> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Argument(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if gamma == 0.0 {
            return Ok(self.clone());
        }
        let m = self.p.min(self.q);
        let expo = (self.d + 2 * m + 2) as f64;
        let h = self.h_star * (self.n_samples as f64).powf(-gamma / expo);
        let mut out = plan(h, self.n_samples, self.p, self.q, self.d, self.n, self.bias_variance_constant);
        if self.bias_variance_constant > 0.0 && !(out.diagnostics.bias_variance_ratio < 1.0) {
            return Err(Error::Argument(format!(
                "gamma = {gamma} leaves N h^{{d+2m+2}} |C|²/Tr Σ̃ = {} >= 1",
                out.diagnostics.bias_variance_ratio
            )));
        }
        out.diagnostics.undersmooth_flag = true;
        Ok(out)
    }

    /// Same constants at another sample size.
    pub fn rescaled(&self, n_samples: usize) -> BandwidthPlan {
        let m = self.p.min(self.q);
        let expo = (self.d + 2 * m + 2) as f64;
        let h = self.h_star * (self.n_samples as f64 / n_samples as f64).powf(1.0 / expo);
        let mut out = plan(h, n_samples, self.p, self.q, self.d, self.n, self.bias_variance_constant);
        out.diagnostics.undersmooth_flag = self.diagnostics.undersmooth_flag;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constants(c: f64, trace: f64) -> RateConstants {
        RateConstants {
            c1: vec![c],
            c2: vec![0.5 * c],
            sigma_tilde: vec![vec![trace]],
            phi_sq_mean: 1.0,
            source: ConstantsSource::AnalyticQuadrature,
        }
    }

    #[test]
    fn rate_exponents() {
        assert!((rate_exponent(1, 2) + 4.0 / 7.0).abs() < 1e-15);
        assert!((rate_exponent(1, 4) + 8.0 / 11.0).abs() < 1e-15);
        assert!((rate_exponent(2, 2) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn quadrupling_n_scales_by_a_seventh_root() {
        let c = constants(1e-3, 10.0);
        let a = optimal_bandwidth(&c, 1000, 2, 2, 1, 1).unwrap();
        let b = optimal_bandwidth(&c, 4000, 2, 2, 1, 1).unwrap();
        assert!((b.h_star / a.h_star - 4f64.powf(-1.0 / 7.0)).abs() < 1e-14);
        assert!((a.rescaled(4000).h_star - b.h_star).abs() < 1e-12 * b.h_star);
    }

    #[test]
    fn homogeneity() {
        let a = optimal_bandwidth(&constants(1e-3, 10.0), 5000, 2, 2, 1, 1).unwrap();
        let b = optimal_bandwidth(&constants(1e-3 * 3f64.sqrt(), 30.0), 5000, 2, 2, 1, 1).unwrap();
        assert!((a.h_star - b.h_star).abs() < 1e-12 * a.h_star);
    }

    #[test]
    fn tie_uses_the_sum_of_both_constants() {
        let c = constants(2.0, 1.0);
        assert_eq!(c.dominant(2, 2), vec![3.0]);
        assert_eq!(c.dominant(2, 4), vec![2.0]);
        assert_eq!(c.dominant(4, 2), vec![1.0]);
    }

    #[test]
    fn feasibility() {
        let c = constants(1e-3, 10.0);
        assert!(optimal_bandwidth(&c, 1000, 2, 2, 1, 1).unwrap().feasible);
        assert!(!optimal_bandwidth(&c, 1000, 2, 2, 1, 3).unwrap().feasible);
    }

    #[test]
    fn degenerate_and_gamma_errors() {
        assert!(matches!(
            optimal_bandwidth(&constants(0.0, 1.0), 100, 2, 2, 1, 1),
            Err(Error::DegeneratePlan(_))
        ));
        let p = optimal_bandwidth(&constants(1e-3, 10.0), 1000, 2, 2, 1, 1).unwrap();
        assert_eq!(p.undersmoothed(0.0).unwrap(), p);
        assert!(p.undersmoothed(1.0).is_err());
        assert!(p.undersmoothed(-0.1).is_err());
        let u = p.undersmoothed(0.3).unwrap();
        assert!(u.diagnostics.undersmooth_flag && u.h_star < p.h_star);
        assert!(u.diagnostics.bias_variance_ratio < 1.0);
    }

    #[test]
    fn richardson_recovers_polynomial_derivatives() {
        let f = |x: f64| x.powi(5) - 2.0 * x.powi(3);
        for p in 1..=4 {
            let exact = match p {
                1 => 5.0 * 16.0 - 6.0 * 4.0,
                2 => 20.0 * 8.0 - 12.0 * 2.0,
                3 => 60.0 * 4.0 - 12.0,
                _ => 120.0 * 2.0,
            };
            let v = richardson_derivative(&f, 2.0, p, 0.01);
            assert!((v - exact).abs() < 1e-5 * exact.abs(), "p = {p}: {v} vs {exact}");
        }
    }
}
