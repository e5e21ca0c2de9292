//! Parameterized random variables `Z(λ)` and payoffs.
//!
//! Payoff amounts are expressed in units of the non-risky asset: a cash flow
//! paid at maturity is multiplied by the payoff's `scale`, which the run
//! configuration sets to the numéraire conversion `e^{−rT}` for Black–Scholes
//! models. No other discounting happens anywhere in the engine.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive;
use crate::rng::{normal, StreamRng};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// What a model can provide beyond simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Capabilities {
    pub has_density: bool,
    pub has_score: bool,
    pub has_true_greek: bool,
    pub has_tangent: bool,
}

/// A simulator of `Z(λ) ∈ ℝⁿ` for `λ ∈ ℝᵈ`.
pub trait Model: Send + Sync {
    fn name(&self) -> String;
    fn param_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn capabilities(&self) -> Capabilities;

    /// One draw of `Z(λ)`, a deterministic function of `λ` and the stream state.
    fn simulate(&self, lambda: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>>;

    /// Whether `λ` lies in the admissible parameter domain.
    fn admissible(&self, _lambda: &[f64]) -> bool {
        true
    }

    fn density(&self, _lambda: &[f64], _z: &[f64]) -> Option<f64> {
        None
    }

    /// `∇_λ ln f(λ, z)`.
    fn score(&self, _lambda: &[f64], _z: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Tangent `∂Z/∂λ` along the path that produced `z`, row-major n×d.
    fn tangent(&self, _lambda: &[f64], _z: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// `E[payoff(Z(λ))]` when known in closed form or by quadrature.
    fn true_value(&self, _payoff: &Payoff, _lambda: &[f64]) -> Option<f64> {
        None
    }

    /// `∇_λ E[payoff(Z(λ))]` when known.
    fn true_greek(&self, _payoff: &Payoff, _lambda: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Shape of a payoff; multi-dimensional states are aggregated by their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PayoffKind {
    /// `(K − z)⁺`, supported on `[0, K]`.
    Put { strike: f64 },
    /// Put with its kink replaced by a quadratic on `[K − w, K + w]`.
    SmoothPut { strike: f64, width: f64 },
    /// `1{z > K}`; discontinuous, used as a stress case.
    Digital { strike: f64 },
    /// `(z − K)⁺ 1{z < cap}`.
    TruncatedCall { strike: f64, cap: f64 },
    /// `z`; unbounded, test-only.
    Linear,
    /// A constant; test-only.
    Constant { value: f64 },
}

/// A payoff in numéraire units with its compact set for the density floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Payoff {
    pub kind: PayoffKind,
    /// Multiplier applied to the cash amount.
    pub scale: f64,
    /// Lower edge of the compact set used for the density floor.
    pub zmin: f64,
}

impl Payoff {
    pub fn new(kind: PayoffKind) -> Self {
        let zmin = match kind {
            PayoffKind::Put { strike } | PayoffKind::SmoothPut { strike, .. } => 1e-3 * strike,
            PayoffKind::Digital { strike } | PayoffKind::TruncatedCall { strike, .. } => strike,
            PayoffKind::Linear | PayoffKind::Constant { .. } => f64::NEG_INFINITY,
        };
        Self {
            kind,
            scale: 1.0,
            zmin,
        }
    }

    pub fn put(strike: f64) -> Self {
        Self::new(PayoffKind::Put { strike })
    }

    pub fn digital(strike: f64) -> Self {
        Self::new(PayoffKind::Digital { strike })
    }

    pub fn zero() -> Self {
        Self::new(PayoffKind::Constant { value: 0.0 })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_zmin(mut self, zmin: f64) -> Self {
        self.zmin = zmin;
        self
    }

    #[inline]
    fn aggregate(z: &[f64]) -> f64 {
        if z.len() == 1 {
            z[0]
        } else {
            z.iter().sum::<f64>() / z.len() as f64
        }
    }

    #[inline]
    fn raw(&self, x: f64) -> f64 {
        match self.kind {
            PayoffKind::Put { strike } => {
                if x < strike {
                    strike - x
                } else {
                    0.0
                }
            }
            PayoffKind::SmoothPut { strike, width } => {
                if x <= strike - width {
                    strike - x
                } else if x < strike + width {
                    (strike + width - x).powi(2) / (4.0 * width)
                } else {
                    0.0
                }
            }
            PayoffKind::Digital { strike } => {
                if x > strike {
                    1.0
                } else {
                    0.0
                }
            }
            PayoffKind::TruncatedCall { strike, cap } => {
                if x > strike && x < cap {
                    x - strike
                } else {
                    0.0
                }
            }
            PayoffKind::Linear => x,
            PayoffKind::Constant { value } => value,
        }
    }

    fn raw_derivative(&self, x: f64) -> Option<f64> {
        Some(match self.kind {
            // the kink itself gets derivative 0
            PayoffKind::Put { strike } => {
                if x < strike {
                    -1.0
                } else {
                    0.0
                }
            }
            PayoffKind::SmoothPut { strike, width } => {
                if x <= strike - width {
                    -1.0
                } else if x < strike + width {
                    -(strike + width - x) / (2.0 * width)
                } else {
                    0.0
                }
            }
            PayoffKind::Digital { .. } => return None,
            PayoffKind::TruncatedCall { strike, cap } => {
                if x > strike && x < cap {
                    1.0
                } else {
                    0.0
                }
            }
            PayoffKind::Linear => 1.0,
            PayoffKind::Constant { .. } => 0.0,
        })
    }

    #[inline]
    pub fn evaluate(&self, z: &[f64]) -> f64 {
        self.scale * self.raw(Self::aggregate(z))
    }

    /// Gradient in z, when the payoff is a.e. differentiable with a
    /// meaningful derivative.
    pub fn derivative(&self, z: &[f64]) -> Option<Vec<f64>> {
        let g = self.raw_derivative(Self::aggregate(z))? * self.scale / z.len() as f64;
        Some(vec![g; z.len()])
    }

    pub fn continuous(&self) -> bool {
        !matches!(
            self.kind,
            PayoffKind::Digital { .. } | PayoffKind::TruncatedCall { .. }
        )
    }

    /// Interval of the aggregated state outside which the payoff vanishes.
    pub fn support_interval(&self) -> (f64, f64) {
        match self.kind {
            PayoffKind::Put { strike } => (0.0, strike),
            PayoffKind::SmoothPut { strike, width } => (0.0, strike + width),
            PayoffKind::Digital { strike } => (strike, f64::INFINITY),
            PayoffKind::TruncatedCall { strike, cap } => (strike, cap),
            PayoffKind::Linear => (f64::NEG_INFINITY, f64::INFINITY),
            PayoffKind::Constant { value } => {
                if value == 0.0 {
                    (0.0, 0.0)
                } else {
                    (f64::NEG_INFINITY, f64::INFINITY)
                }
            }
        }
    }

    /// n-dimensional box containing the support (for mean-aggregated
    /// payoffs on nonnegative states each coordinate is bounded by n·hi).
    pub fn support_box(&self, n: usize) -> Vec<(f64, f64)> {
        let (lo, hi) = self.support_interval();
        if n == 1 {
            vec![(lo, hi)]
        } else {
            vec![(lo.min(0.0), hi * n as f64); n]
        }
    }

    /// Compact set `C_φ` used for the density floor: the support box with
    /// its lower edge raised to `zmin`.
    pub fn floor_box(&self, n: usize) -> Vec<(f64, f64)> {
        self.support_box(n)
            .into_iter()
            .map(|(lo, hi)| (lo.max(self.zmin), hi))
            .collect()
    }

    /// Points where the aggregated payoff has a kink or jump.
    fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            PayoffKind::Put { strike } | PayoffKind::Digital { strike } => vec![strike],
            PayoffKind::SmoothPut { strike, width } => vec![strike - width, strike + width],
            PayoffKind::TruncatedCall { strike, cap } => vec![strike, cap],
            PayoffKind::Linear | PayoffKind::Constant { .. } => vec![],
        }
    }
}

impl fmt::Display for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PayoffKind::Put { strike } => write!(f, "put(K={strike})"),
            PayoffKind::SmoothPut { strike, width } => write!(f, "smooth_put(K={strike},w={width})"),
            PayoffKind::Digital { strike } => write!(f, "digital(K={strike})"),
            PayoffKind::TruncatedCall { strike, cap } => write!(f, "truncated_call(K={strike},cap={cap})"),
            PayoffKind::Linear => write!(f, "linear"),
            PayoffKind::Constant { value } => write!(f, "constant({value})"),
        }
    }
}

/// Black–Scholes terminal value parameterized by spot: `λ = S₀`, `d = n = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlackScholesModel {
    pub r: f64,
    pub sigma: f64,
    pub maturity: f64,
}

impl BlackScholesModel {
    pub fn new(r: f64, sigma: f64, maturity: f64) -> Result<Self> {
        if !(sigma > 0.0) || !(maturity > 0.0) || !r.is_finite() {
            return Err(Error::Config(format!(
                "Black-Scholes needs sigma > 0 and T > 0 (got sigma={sigma}, T={maturity})"
            )));
        }
        Ok(Self { r, sigma, maturity })
    }

    /// Numéraire conversion `e^{−rT}`.
    pub fn discount_factor(&self) -> f64 {
        (-self.r * self.maturity).exp()
    }

    fn log_drift(&self) -> f64 {
        (self.r - 0.5 * self.sigma * self.sigma) * self.maturity
    }

    fn log_vol(&self) -> f64 {
        self.sigma * self.maturity.sqrt()
    }

    /// Terminal value for a given standard normal draw.
    pub fn terminal(&self, spot: f64, gaussian: f64) -> f64 {
        spot * (self.log_drift() + self.log_vol() * gaussian).exp()
    }

    pub fn lognormal_density(&self, spot: f64, z: f64) -> f64 {
        if z <= 0.0 || spot <= 0.0 {
            return 0.0;
        }
        let v = self.log_vol();
        let x = ((z / spot).ln() - self.log_drift()) / v;
        norm_pdf(x) / (z * v)
    }

    fn d1(&self, spot: f64, strike: f64) -> f64 {
        ((spot / strike).ln() + (self.r + 0.5 * self.sigma * self.sigma) * self.maturity) / self.log_vol()
    }

    /// `E[g(Z(spot))]` by adaptive quadrature in the Gaussian variable.
    fn expectation(&self, spot: f64, g: impl Fn(f64) -> f64, kinks: &[f64]) -> Result<f64> {
        let (m, v) = (self.log_drift(), self.log_vol());
        let to_x = |z: f64| ((z / spot).ln() - m) / v;
        let mut cuts = vec![-12.0];
        for &k in kinks {
            if k > 0.0 && k.is_finite() {
                let x = to_x(k);
                if x > -12.0 && x < 12.0 {
                    cuts.push(x);
                }
            }
        }
        cuts.push(12.0);
        cuts.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += adaptive(w[0], w[1], 1e-14, 1e-12, |x| {
                g(spot * (m + v * x).exp()) * norm_pdf(x)
            })?;
        }
        Ok(total)
    }
}

impl Model for BlackScholesModel {
    fn name(&self) -> String {
        format!("black_scholes(r={},sigma={},T={})", self.r, self.sigma, self.maturity)
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_density: true,
            has_score: true,
            has_true_greek: true,
            has_tangent: true,
        }
    }

    fn simulate(&self, lambda: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        Ok(vec![self.terminal(lambda[0], normal(rng))])
    }

    fn admissible(&self, lambda: &[f64]) -> bool {
        lambda[0] > 0.0 && lambda[0].is_finite()
    }

    fn density(&self, lambda: &[f64], z: &[f64]) -> Option<f64> {
        Some(self.lognormal_density(lambda[0], z[0]))
    }

    fn score(&self, lambda: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        bs_score(self, lambda[0], z[0]).ok().map(|s| vec![s])
    }

    fn tangent(&self, lambda: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        Some(vec![z[0] / lambda[0]])
    }

    fn true_value(&self, payoff: &Payoff, lambda: &[f64]) -> Option<f64> {
        bs_true_value(self, payoff, lambda[0]).ok()
    }

    fn true_greek(&self, payoff: &Payoff, lambda: &[f64]) -> Option<Vec<f64>> {
        bs_true_greek(self, payoff, lambda[0]).ok().map(|g| vec![g])
    }
}

/// `E[payoff(Z(λ))]` under Black–Scholes: closed form for puts, linear and
/// constant payoffs, quadrature against the lognormal density otherwise.
pub fn bs_true_value(model: &BlackScholesModel, payoff: &Payoff, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Argument(format!("spot must be positive, got {lambda}")));
    }
    let growth = (model.r * model.maturity).exp();
    let raw = match payoff.kind {
        PayoffKind::Put { strike } => {
            if strike < 0.0 {
                return Err(Error::Argument(format!("strike must be nonnegative, got {strike}")));
            }
            if strike == 0.0 {
                0.0
            } else {
                let d1 = model.d1(lambda, strike);
                let d2 = d1 - model.log_vol();
                // undiscounted E[(K − S_T)⁺]
                strike * norm_cdf(-d2) - lambda * growth * norm_cdf(-d1)
            }
        }
        PayoffKind::Linear => lambda * growth,
        PayoffKind::Constant { value } => value,
        _ => model.expectation(lambda, |z| payoff.raw(z), &payoff.breakpoints())?,
    };
    Ok(payoff.scale * raw)
}

/// `d/dλ E[payoff(Z(λ))]`: closed form for puts, Richardson-extrapolated
/// central differences of [`bs_true_value`] otherwise.
pub fn bs_true_greek(model: &BlackScholesModel, payoff: &Payoff, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Argument(format!("spot must be positive, got {lambda}")));
    }
    let growth = (model.r * model.maturity).exp();
    match payoff.kind {
        PayoffKind::Put { strike } if strike > 0.0 => {
            Ok(payoff.scale * growth * (norm_cdf(model.d1(lambda, strike)) - 1.0))
        }
        PayoffKind::Put { .. } | PayoffKind::Constant { .. } => Ok(0.0),
        PayoffKind::Linear => Ok(payoff.scale * growth),
        _ => {
            let step = 1e-5 * lambda;
            let central = |e: f64| -> Result<f64> {
                Ok((bs_true_value(model, payoff, lambda + e)?
                    - bs_true_value(model, payoff, lambda - e)?)
                    / (2.0 * e))
            };
            let coarse = central(step)?;
            let fine = central(0.5 * step)?;
            Ok((4.0 * fine - coarse) / 3.0)
        }
    }
}

/// Black–Scholes score `∂_λ ln f(λ, z)`.
pub fn bs_score(model: &BlackScholesModel, lambda: f64, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("score needs z > 0, got {z}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("score needs lambda > 0, got {lambda}")));
    }
    let var = model.sigma * model.sigma * model.maturity;
    Ok(((z / lambda).ln() - model.log_drift()) / (lambda * var))
}

pub type InitialFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type DriftFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// Returns the n×m diffusion matrix, row-major.
pub type DiffusionFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Euler–Maruyama discretization of `dX = μ(t,λ,X)dt + σ(t,λ,X)dW`,
/// `X₀ = x(λ)`, returning `X_T`.
#[derive(Clone)]
pub struct EulerDiffusionModel {
    label: String,
    param_dim: usize,
    state_dim: usize,
    noise_dim: usize,
    x0: InitialFn,
    mu: DriftFn,
    sigma: DiffusionFn,
    pub maturity: f64,
    pub steps: usize,
    pub ellipticity_c: Option<f64>,
}

impl fmt::Debug for EulerDiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EulerDiffusionModel")
            .field("label", &self.label)
            .field("param_dim", &self.param_dim)
            .field("state_dim", &self.state_dim)
            .field("noise_dim", &self.noise_dim)
            .field("maturity", &self.maturity)
            .field("steps", &self.steps)
            .field("ellipticity_c", &self.ellipticity_c)
            .finish()
    }
}

impl EulerDiffusionModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        label: impl Into<String>,
        param_dim: usize,
        state_dim: usize,
        noise_dim: usize,
        x0: InitialFn,
        mu: DriftFn,
        sigma: DiffusionFn,
        maturity: f64,
        steps: usize,
    ) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("Euler scheme needs at least one step".into()));
        }
        if !(maturity > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {maturity}")));
        }
        if param_dim == 0 || state_dim == 0 || noise_dim == 0 {
            return Err(Error::Config("Euler model dimensions must be positive".into()));
        }
        Ok(Self {
            label: label.into(),
            param_dim,
            state_dim,
            noise_dim,
            x0,
            mu,
            sigma,
            maturity,
            steps,
            ellipticity_c: None,
        })
    }

    /// Requires `(1/c)I ≼ σσᵀ ≼ cI` at every visited grid point.
    pub fn with_ellipticity(mut self, c: f64) -> Result<Self> {
        if !(c > 1.0) {
            return Err(Error::Config(format!("ellipticity constant must exceed 1, got {c}")));
        }
        self.ellipticity_c = Some(c);
        Ok(self)
    }

    /// Geometric Brownian motion started at `λ`.
    pub fn gbm(r: f64, sigma: f64, maturity: f64, steps: usize) -> Result<Self> {
        Self::affine(0.0, r, 0.0, sigma, maturity, steps).map(|mut m| {
            m.label = format!("euler_gbm(r={r},sigma={sigma},T={maturity},steps={steps})");
            m
        })
    }

    /// `dX = (a + bX)dt + (c + eX)dW`, `X₀ = λ`.
    pub fn affine(a: f64, b: f64, c: f64, e: f64, maturity: f64, steps: usize) -> Result<Self> {
        Self::new(
            format!("euler_affine(a={a},b={b},c={c},e={e},T={maturity},steps={steps})"),
            1,
            1,
            1,
            Arc::new(|l: &[f64]| l.to_vec()),
            Arc::new(move |_t, _l, x: &[f64]| vec![a + b * x[0]]),
            Arc::new(move |_t, _l, x: &[f64]| vec![c + e * x[0]]),
            maturity,
            steps,
        )
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// Checks the two-sided bound on `σσᵀ(t, λ, x)`.
    pub fn check_ellipticity(&self, t: f64, lambda: &[f64], x: &[f64], c: f64) -> Result<()> {
        let n = self.state_dim;
        let m = self.noise_dim;
        let s = (self.sigma)(t, lambda, x);
        let sm = DMatrix::from_row_slice(n, m, &s);
        let a = &sm * sm.transpose();
        let eig = a.symmetric_eigen().eigenvalues;
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        if lo < 1.0 / c || hi > c {
            return Err(Error::Domain(format!(
                "ellipticity violated at t={t}: eigenvalues in [{lo}, {hi}], bound c={c}"
            )));
        }
        Ok(())
    }

    /// Runs the scheme with explicit standard normal increments
    /// (`steps × m`, row-major).
    pub fn simulate_with_increments(&self, lambda: &[f64], increments: &[f64]) -> Result<Vec<f64>> {
        let m = self.noise_dim;
        let n = self.state_dim;
        if increments.len() != self.steps * m {
            return Err(Error::Argument(format!(
                "expected {} increments, got {}",
                self.steps * m,
                increments.len()
            )));
        }
        let dt = self.maturity / self.steps as f64;
        let sqrt_dt = dt.sqrt();
        let mut x = (self.x0)(lambda);
        for k in 0..self.steps {
            let t = k as f64 * dt;
            if let Some(c) = self.ellipticity_c {
                self.check_ellipticity(t, lambda, &x, c)
                    .map_err(|e| Error::Simulation {
                        step: k,
                        message: e.to_string(),
                    })?;
            }
            let drift = (self.mu)(t, lambda, &x);
            let vol = (self.sigma)(t, lambda, &x);
            let g = &increments[k * m..(k + 1) * m];
            for i in 0..n {
                let mut noise = 0.0;
                for j in 0..m {
                    noise += vol[i * m + j] * g[j];
                }
                x[i] += drift[i] * dt + noise * sqrt_dt;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Simulation {
                    step: k + 1,
                    message: "non-finite state".into(),
                });
            }
        }
        Ok(x)
    }
}

/// One Euler path from the given stream.
pub fn euler_simulate(model: &EulerDiffusionModel, lambda: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
    let increments: Vec<f64> = (0..model.steps * model.noise_dim).map(|_| normal(rng)).collect();
    model.simulate_with_increments(lambda, &increments)
}

impl Model for EulerDiffusionModel {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }

    fn simulate(&self, lambda: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        euler_simulate(self, lambda, rng)
    }
}

/// `Z(λ) = λ`: a degenerate model for smoke tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicModel;

impl Model for DeterministicModel {
    fn name(&self) -> String {
        "identity".into()
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_true_greek: true,
            has_tangent: true,
            ..Capabilities::default()
        }
    }

    fn simulate(&self, lambda: &[f64], _rng: &mut StreamRng) -> Result<Vec<f64>> {
        Ok(lambda.to_vec())
    }

    fn tangent(&self, _lambda: &[f64], _z: &[f64]) -> Option<Vec<f64>> {
        Some(vec![1.0])
    }

    fn true_value(&self, payoff: &Payoff, lambda: &[f64]) -> Option<f64> {
        Some(payoff.evaluate(lambda))
    }

    fn true_greek(&self, payoff: &Payoff, lambda: &[f64]) -> Option<Vec<f64>> {
        let (lo, hi) = payoff.support_interval();
        if lambda[0] > lo && lambda[0] < hi {
            payoff.derivative(lambda)
        } else {
            None
        }
    }
}
