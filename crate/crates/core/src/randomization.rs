//! Randomization of the parameter of interest.
//!
//! The parameter is drawn as `Λ = λ⁰ − L` with `L ~ ℓ`, a product density of
//! radius `ρ`, and the model is simulated at `Λ`. The pair `(Λ, Z)` then has
//! joint density `ℓ(λ⁰ − λ) f(λ, z)`.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelFamily;
use crate::models::Model;
use crate::rng::{open_unit, stream, StreamRng};

/// Densities at or below this value are treated as outside the support.
pub const ELL_FLOOR: f64 = 1e-300;

/// Univariate shape of each factor of ℓ, on [-1, 1] before scaling by ρ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Epanechnikov,
    Cosine,
    Quartic,
    Triweight,
}

impl Profile {
    /// The profile sharing the shape of a kernel family.
    pub fn matching(family: KernelFamily) -> Self {
        match family {
            KernelFamily::Epanechnikov => Profile::Epanechnikov,
            KernelFamily::Quartic => Profile::Quartic,
            KernelFamily::Triweight => Profile::Triweight,
        }
    }

    fn family(self) -> Option<KernelFamily> {
        match self {
            Profile::Epanechnikov => Some(KernelFamily::Epanechnikov),
            Profile::Quartic => Some(KernelFamily::Quartic),
            Profile::Triweight => Some(KernelFamily::Triweight),
            Profile::Cosine => None,
        }
    }

    #[inline]
    pub fn value(self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        match self {
            Profile::Epanechnikov => 0.75 * (1.0 - x * x),
            Profile::Cosine => std::f64::consts::FRAC_PI_4 * (std::f64::consts::FRAC_PI_2 * x).cos(),
            Profile::Quartic => 15.0 / 16.0 * (1.0 - x * x).powi(2),
            Profile::Triweight => 35.0 / 32.0 * (1.0 - x * x).powi(3),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        match self {
            Profile::Epanechnikov => -1.5 * x,
            Profile::Cosine => {
                -std::f64::consts::PI.powi(2) / 8.0 * (std::f64::consts::FRAC_PI_2 * x).sin()
            }
            Profile::Quartic => -15.0 / 4.0 * x * (1.0 - x * x),
            Profile::Triweight => -105.0 / 16.0 * x * (1.0 - x * x).powi(2),
        }
    }

    /// `g'(x)/g(x)` in closed form, finite on the open support.
    #[inline]
    pub fn log_derivative(self, x: f64) -> f64 {
        match self {
            Profile::Epanechnikov => -2.0 * x / (1.0 - x * x),
            Profile::Cosine => -std::f64::consts::FRAC_PI_2 * (std::f64::consts::FRAC_PI_2 * x).tan(),
            Profile::Quartic => -4.0 * x / (1.0 - x * x),
            Profile::Triweight => -6.0 * x / (1.0 - x * x),
        }
    }

    pub fn cdf(self, x: f64) -> f64 {
        if x <= -1.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        match self {
            Profile::Epanechnikov => (2.0 + 3.0 * x - x.powi(3)) / 4.0,
            Profile::Cosine => 0.5 * (1.0 + (std::f64::consts::FRAC_PI_2 * x).sin()),
            Profile::Quartic => 0.5 + 15.0 / 16.0 * (x - 2.0 * x.powi(3) / 3.0 + x.powi(5) / 5.0),
            Profile::Triweight => {
                0.5 + 35.0 / 32.0 * (x - x.powi(3) + 0.6 * x.powi(5) - x.powi(7) / 7.0)
            }
        }
    }

    /// Inverse CDF on (0, 1).
    pub fn quantile(self, u: f64) -> f64 {
        match self {
            Profile::Epanechnikov => 2.0 * ((2.0 * u - 1.0).asin() / 3.0).sin(),
            Profile::Cosine => (2.0 * u - 1.0).asin() / std::f64::consts::FRAC_PI_2,
            Profile::Quartic | Profile::Triweight => self.invert_cdf(u),
        }
    }

    fn invert_cdf(self, u: f64) -> f64 {
        // safeguarded Newton on the monotone CDF
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        let mut x = 2.0 * ((2.0 * u - 1.0).asin() / 3.0).sin();
        for _ in 0..100 {
            let f = self.cdf(x) - u;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let g = self.value(x);
            let mut next = if g > 0.0 { x - f / g } else { 0.5 * (lo + hi) };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() < 1e-15 || hi - lo < 1e-15 {
                return next;
            }
            x = next;
        }
        x
    }

    /// Variance of the unit-radius profile.
    pub fn unit_variance(self) -> f64 {
        match self.family() {
            Some(f) => f.std_dev().powi(2),
            None => 1.0 - 8.0 / std::f64::consts::PI.powi(2),
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "epanechnikov" | "epanechnikov_product" => Ok(Profile::Epanechnikov),
            "cosine" | "cosine_product" => Ok(Profile::Cosine),
            "quartic" | "quartic_product" => Ok(Profile::Quartic),
            "triweight" | "triweight_product" => Ok(Profile::Triweight),
            other => Err(Error::Config(format!("unknown randomizing profile `{other}`"))),
        }
    }
}

/// The randomizing density ℓ: a product of scaled profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizingDensity {
    dimension: usize,
    radius: f64,
    profile: Profile,
}

impl RandomizingDensity {
    pub fn new(dimension: usize, radius: f64, profile: Profile) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Argument("randomizing density needs dimension ≥ 1".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Argument(format!("radius must be positive, got {radius}")));
        }
        Ok(Self {
            dimension,
            radius,
            profile,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    /// Same profile, different radius.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.dimension, radius, self.profile)
    }

    /// Standard deviation of each coordinate of L.
    pub fn coordinate_std(&self) -> f64 {
        self.radius * self.profile.unit_variance().sqrt()
    }

    pub fn evaluate(&self, u: &[f64]) -> f64 {
        let inv = 1.0 / self.radius;
        u.iter()
            .map(|&x| inv * self.profile.value(x * inv))
            .product()
    }

    pub fn at_origin(&self) -> f64 {
        (self.profile.value(0.0) / self.radius).powi(self.dimension as i32)
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let inv = 1.0 / self.radius;
        let vals: Vec<f64> = u.iter().map(|&x| inv * self.profile.value(x * inv)).collect();
        (0..u.len())
            .map(|k| {
                let mut g = inv * inv * self.profile.derivative(u[k] * inv);
                for (m, v) in vals.iter().enumerate() {
                    if m != k {
                        g *= v;
                    }
                }
                g
            })
            .collect()
    }

    /// `∇ℓ(u)/ℓ(u)`; errors when ℓ(u) is at or below the floor.
    pub fn log_gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        let value = self.evaluate(u);
        if value <= ELL_FLOOR {
            return Err(Error::Domain(format!(
                "randomizing density vanishes at {u:?}; score term undefined"
            )));
        }
        let inv = 1.0 / self.radius;
        Ok(u.iter()
            .map(|&x| inv * self.profile.log_derivative(x * inv))
            .collect())
    }

    /// Draws one L by per-coordinate inverse CDF.
    pub fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        (0..self.dimension)
            .map(|_| self.radius * self.profile.quantile(open_unit(rng)))
            .collect()
    }
}

/// `∇ℓ(λ⁰−λ)/ℓ(λ⁰−λ)`.
pub fn log_grad_ell(ell: &RandomizingDensity, lambda: &[f64], lambda0: &[f64]) -> Result<Vec<f64>> {
    let u: Vec<f64> = lambda0.iter().zip(lambda).map(|(a, b)| a - b).collect();
    ell.log_gradient(&u)
}

/// I.i.d. draws `(Λ_i, Z_i)` from the randomized joint density.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedSample {
    pub lambda0: Vec<f64>,
    /// Row-major N×d.
    pub lambdas: Vec<f64>,
    /// Row-major N×n.
    pub zs: Vec<f64>,
    pub seed: u64,
    pub param_dim: usize,
    pub state_dim: usize,
}

impl RandomizedSample {
    /// Assembles a sample from explicit rows, e.g. for hand-built test cases.
    pub fn from_rows(lambda0: Vec<f64>, lambdas: Vec<Vec<f64>>, zs: Vec<Vec<f64>>) -> Result<Self> {
        if lambdas.len() != zs.len() || lambdas.is_empty() {
            return Err(Error::Argument("sample rows must be non-empty and aligned".into()));
        }
        let d = lambda0.len();
        let n = zs[0].len();
        if lambdas.iter().any(|r| r.len() != d) || zs.iter().any(|r| r.len() != n) {
            return Err(Error::Argument("ragged sample rows".into()));
        }
        Ok(Self {
            lambda0,
            lambdas: lambdas.concat(),
            zs: zs.concat(),
            seed: 0,
            param_dim: d,
            state_dim: n,
        })
    }

    pub fn len(&self) -> usize {
        self.lambdas.len() / self.param_dim
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    #[inline]
    pub fn lambda(&self, i: usize) -> &[f64] {
        &self.lambdas[i * self.param_dim..(i + 1) * self.param_dim]
    }

    #[inline]
    pub fn z(&self, i: usize) -> &[f64] {
        &self.zs[i * self.state_dim..(i + 1) * self.state_dim]
    }

    /// Overwrites row `i`.
    pub fn set_row(&mut self, i: usize, lambda: &[f64], z: &[f64]) {
        let (d, n) = (self.param_dim, self.state_dim);
        self.lambdas[i * d..(i + 1) * d].copy_from_slice(lambda);
        self.zs[i * n..(i + 1) * n].copy_from_slice(z);
    }
}

/// Draws `n_draws` rows: `L_i ~ ℓ`, `Λ_i = λ⁰ − L_i`, `Z_i = simulate(Λ_i)`,
/// all from the stream owned by index `i`.
pub fn draw_sample(
    model: &dyn Model,
    ell: &RandomizingDensity,
    lambda0: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<RandomizedSample> {
    if n_draws == 0 {
        return Err(Error::Argument("n_draws must be positive".into()));
    }
    let d = model.param_dim();
    if lambda0.len() != d || ell.dimension() != d {
        return Err(Error::Argument(format!(
            "parameter dimension mismatch: model {d}, lambda0 {}, ell {}",
            lambda0.len(),
            ell.dimension()
        )));
    }
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let offset = ell.sample(&mut rng);
            let lambda: Vec<f64> = lambda0.iter().zip(&offset).map(|(a, l)| a - l).collect();
            let z = model.simulate(&lambda, &mut rng)?;
            Ok((lambda, z))
        })
        .collect::<Result<_>>()?;
    let n = model.state_dim();
    let mut lambdas = Vec::with_capacity(n_draws * d);
    let mut zs = Vec::with_capacity(n_draws * n);
    for (l, z) in rows {
        lambdas.extend_from_slice(&l);
        zs.extend_from_slice(&z);
    }
    Ok(RandomizedSample {
        lambda0: lambda0.to_vec(),
        lambdas,
        zs,
        seed,
        param_dim: d,
        state_dim: n,
    })
}
