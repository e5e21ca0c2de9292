//! Compactly supported product kernels of prescribed order.
//!
//! Every univariate factor has the form `P(x²)·B(x)` on `|x| < 1` where `B` is
//! one of the classical polynomial kernels and `P` is a polynomial multiplier
//! (identically one for the standard order-2 kernels). The multiplier is what
//! turns a base kernel into a higher-order one: its coefficients are solved so
//! that the even moments `2, 4, …, order−2` vanish.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Moments below this magnitude count as zero when verifying the order.
pub const MOMENT_ZERO_TOL: f64 = 1e-8;
/// Moments above this magnitude count as nonzero when verifying the order.
pub const MOMENT_NONZERO_TOL: f64 = 1e-6;

const CONSTANT_REL_TOL: f64 = 1e-6;
const MAX_REFINEMENTS: usize = 4;

/// The classical base shapes, all supported on [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Epanechnikov,
    Quartic,
    Triweight,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 3] = [
        KernelFamily::Epanechnikov,
        KernelFamily::Quartic,
        KernelFamily::Triweight,
    ];

    /// Power of `(1 − x²)` in the base shape.
    fn power(self) -> i32 {
        match self {
            KernelFamily::Epanechnikov => 1,
            KernelFamily::Quartic => 2,
            KernelFamily::Triweight => 3,
        }
    }

    fn normalizer(self) -> f64 {
        match self {
            KernelFamily::Epanechnikov => 0.75,
            KernelFamily::Quartic => 15.0 / 16.0,
            KernelFamily::Triweight => 35.0 / 32.0,
        }
    }

    /// Standard deviation of the base density on [-1, 1].
    pub fn std_dev(self) -> f64 {
        match self {
            KernelFamily::Epanechnikov => (1.0f64 / 5.0).sqrt(),
            KernelFamily::Quartic => (1.0f64 / 7.0).sqrt(),
            KernelFamily::Triweight => 1.0 / 3.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Quartic => "quartic",
            KernelFamily::Triweight => "triweight",
        }
    }

    #[inline]
    fn base(self, x: f64) -> f64 {
        let t = 1.0 - x * x;
        self.normalizer() * t.powi(self.power())
    }

    #[inline]
    fn base_derivative(self, x: f64) -> f64 {
        let k = self.power();
        let t = 1.0 - x * x;
        -2.0 * x * self.normalizer() * k as f64 * t.powi(k - 1)
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(KernelFamily::Epanechnikov),
            "quartic" | "biweight" => Ok(KernelFamily::Quartic),
            "triweight" => Ok(KernelFamily::Triweight),
            other => Err(Error::Config(format!("unknown kernel name `{other}`"))),
        }
    }
}

/// A univariate kernel `x ↦ P((x−shift)²)·B(x−shift)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateKernel {
    family: KernelFamily,
    /// Coefficients of `P` in powers of `x²`.
    poly: Vec<f64>,
    shift: f64,
    declared_order: usize,
}

impl UnivariateKernel {
    pub fn standard(family: KernelFamily) -> Self {
        Self {
            family,
            poly: vec![1.0],
            shift: 0.0,
            declared_order: 2,
        }
    }

    /// The same shape translated by `shift`. Only useful to exercise order
    /// verification: a shifted kernel has a nonzero first moment.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut k = self.clone();
        k.shift += shift;
        k.declared_order = 1;
        k
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn declared_order(&self) -> usize {
        self.declared_order
    }

    pub fn poly_coefficients(&self) -> &[f64] {
        &self.poly
    }

    /// Half-width of the support around its center.
    pub fn support_radius(&self) -> f64 {
        1.0
    }

    /// Support interval `[lo, hi]`.
    pub fn support(&self) -> (f64, f64) {
        (self.shift - 1.0, self.shift + 1.0)
    }

    pub fn is_even(&self) -> bool {
        self.shift == 0.0
    }

    #[inline]
    fn multiplier(&self, x2: f64) -> (f64, f64) {
        // value and d/d(x²) via Horner
        let mut v = 0.0;
        let mut d = 0.0;
        for &c in self.poly.iter().rev() {
            d = d * x2 + v;
            v = v * x2 + c;
        }
        (v, d)
    }

    #[inline]
    pub fn evaluate(&self, u: f64) -> f64 {
        let x = u - self.shift;
        if x.abs() >= 1.0 {
            return 0.0;
        }
        if self.poly.len() == 1 {
            return self.poly[0] * self.family.base(x);
        }
        self.multiplier(x * x).0 * self.family.base(x)
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        let x = u - self.shift;
        if x.abs() >= 1.0 {
            return 0.0;
        }
        let (p, dp) = self.multiplier(x * x);
        dp * 2.0 * x * self.family.base(x) + p * self.family.base_derivative(x)
    }

    /// `∫ u^r K(u) du`, exact up to rounding (the integrand is polynomial on
    /// the support).
    pub fn moment(&self, r: usize) -> f64 {
        let rule = GaussLegendre::new(24);
        let (lo, hi) = self.support();
        rule.integrate(lo, hi, |u| u.powi(r as i32) * self.evaluate(u))
    }

    /// Largest observed slope on a fine grid of the support.
    pub fn lipschitz_estimate(&self) -> f64 {
        let (lo, hi) = self.support();
        let n = 20_000;
        let step = (hi - lo) / n as f64;
        (0..=n)
            .map(|k| self.derivative(lo + step * k as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// A d-dimensional product of univariate kernels with a declared order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductKernel {
    factors: Vec<UnivariateKernel>,
    order: usize,
}

impl ProductKernel {
    pub fn from_factors(factors: Vec<UnivariateKernel>, order: usize) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Argument("product kernel needs at least one factor".into()));
        }
        Ok(Self { factors, order })
    }

    pub fn dimension(&self) -> usize {
        self.factors.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn factors(&self) -> &[UnivariateKernel] {
        &self.factors
    }

    /// Name of the underlying family, `<family>` or `<family>-o<order>`.
    pub fn label(&self) -> String {
        let fam = self.factors[0].family();
        if self.order == 2 {
            fam.to_string()
        } else {
            format!("{fam}-o{}", self.order)
        }
    }

    /// Largest distance from the origin at which any factor is nonzero.
    pub fn support_radius(&self) -> f64 {
        self.factors
            .iter()
            .map(|f| f.shift.abs() + f.support_radius())
            .fold(0.0, f64::max)
    }

    #[inline]
    pub fn evaluate(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.factors.len());
        let mut v = 1.0;
        for (f, &x) in self.factors.iter().zip(u) {
            v *= f.evaluate(x);
            if v == 0.0 {
                return 0.0;
            }
        }
        v
    }

    /// Writes `∇K(u)` into `grad` and returns `K(u)`.
    #[inline]
    pub fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.factors.len();
        if d == 1 {
            grad[0] = self.factors[0].derivative(u[0]);
            return self.factors[0].evaluate(u[0]);
        }
        let mut vals = [0.0f64; 8];
        let mut ders = [0.0f64; 8];
        assert!(d <= 8, "product kernels are limited to 8 dimensions");
        for k in 0..d {
            vals[k] = self.factors[k].evaluate(u[k]);
            ders[k] = self.factors[k].derivative(u[k]);
        }
        for k in 0..d {
            let mut g = ders[k];
            for m in 0..d {
                if m != k {
                    g *= vals[m];
                }
            }
            grad[k] = g;
        }
        vals[..d].iter().product()
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dimension()];
        self.value_and_gradient(u, &mut g);
        g
    }

    /// Mixed moment `∫ Π l_k^{alpha_k} K(l) dl`.
    pub fn moment(&self, alpha: &[usize]) -> f64 {
        self.factors
            .iter()
            .zip(alpha)
            .map(|(f, &a)| f.moment(a))
            .product()
    }

    pub fn integral(&self) -> f64 {
        self.moment(&vec![0; self.dimension()])
    }

    /// Normalization and moment conditions at the declared order.
    pub fn check_invariants(&self) -> Result<()> {
        let total = self.integral();
        if (total - 1.0).abs() >= MOMENT_ZERO_TOL {
            return Err(Error::Verification(format!(
                "kernel integrates to {total}, not 1"
            )));
        }
        let found = verify_order(self, self.order.max(2).min(8))?;
        if found != self.order {
            return Err(Error::Verification(format!(
                "declared order {} but moments give {found}",
                self.order
            )));
        }
        Ok(())
    }
}

/// All multi-indices of length `dim` with entries summing to `degree`.
pub fn multi_indices(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() + 1 == dim {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for a in (0..=left).rev() {
            cur.push(a);
            rec(dim, left - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, degree, &mut Vec::with_capacity(dim), &mut out);
    out
}

/// Builds a product of identical standard kernels (order 2).
pub fn make_standard_kernel(name: &str, dimension: usize) -> Result<ProductKernel> {
    let family: KernelFamily = name.parse()?;
    standard_kernel(family, dimension)
}

pub fn standard_kernel(family: KernelFamily, dimension: usize) -> Result<ProductKernel> {
    if dimension == 0 {
        return Err(Error::Argument("kernel dimension must be at least 1".into()));
    }
    ProductKernel::from_factors(vec![UnivariateKernel::standard(family); dimension], 2)
}

/// Polynomial-modified version of an even base kernel whose moments
/// `1..order−1` vanish.
pub fn make_high_order_kernel(
    base: &UnivariateKernel,
    order: usize,
    dimension: usize,
) -> Result<ProductKernel> {
    if !matches!(order, 2 | 4 | 6) {
        return Err(Error::Argument(format!(
            "high-order construction supports orders 2, 4, 6; got {order}"
        )));
    }
    if dimension == 0 {
        return Err(Error::Argument("kernel dimension must be at least 1".into()));
    }
    if !base.is_even() || base.poly.len() != 1 {
        return Err(Error::Argument(
            "high-order construction needs an unmodified even base kernel".into(),
        ));
    }
    let plain = UnivariateKernel::standard(base.family);
    let m = order / 2;
    let mu: Vec<f64> = (0..2 * m).map(|j| plain.moment(2 * j)).collect();
    // Σ_k a_k μ_{2j+2k} = [j == 0]
    let a = DMatrix::from_fn(m, m, |j, k| mu[j + k]);
    let mut rhs = DVector::zeros(m);
    rhs[0] = 1.0;
    let coeffs = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular moment system in kernel construction".into()))?;
    let factor = UnivariateKernel {
        family: base.family,
        poly: coeffs.iter().copied().collect(),
        shift: 0.0,
        declared_order: order,
    };
    ProductKernel::from_factors(vec![factor; dimension], order)
}

/// Builds the kernel named in a run configuration.
pub fn kernel_from_spec(name: &str, order: usize, dimension: usize) -> Result<ProductKernel> {
    let family: KernelFamily = name.parse()?;
    if order == 2 {
        standard_kernel(family, dimension)
    } else {
        make_high_order_kernel(&UnivariateKernel::standard(family), order, dimension)
    }
}

/// Smallest degree `r ≤ max_order` with a moment above `MOMENT_NONZERO_TOL`.
pub fn verify_order(k: &ProductKernel, max_order: usize) -> Result<usize> {
    if max_order == 0 || max_order > 8 {
        return Err(Error::Argument(format!(
            "max_order must be in 1..=8, got {max_order}"
        )));
    }
    let d = k.dimension();
    for r in 1..=max_order {
        let largest = multi_indices(d, r)
            .iter()
            .map(|alpha| k.moment(alpha).abs())
            .fold(0.0, f64::max);
        if largest > MOMENT_NONZERO_TOL {
            return Ok(r);
        }
        if largest >= MOMENT_ZERO_TOL {
            return Err(Error::Verification(format!(
                "degree-{r} moment {largest:e} is neither zero nor clearly nonzero"
            )));
        }
    }
    Err(Error::Verification(format!(
        "no nonzero moment up to degree {max_order}; kernel order exceeds it"
    )))
}

/// One entry of a moment tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub exponents: Vec<usize>,
    pub value: f64,
}

/// Kernel-only factors of the bias and variance constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    /// `∫ {∫ K(l₂−l₁) ∇K(l₁) dl₁}^{⊗} dl₂`, a d×d matrix.
    pub sigma_factor: Vec<Vec<f64>>,
    /// `∫∫ K(l₂−l₁) K(l₁) ∇K(l₁) dl₁ dl₂`.
    pub c3_factor: Vec<f64>,
    /// `∫ H²`.
    pub h_sq_norm: f64,
    /// `∫ K²`.
    pub k_sq_norm: f64,
    /// Nonzero moments of K at its order.
    pub k_moments: Vec<MomentEntry>,
    /// Nonzero moments of H at its order.
    pub h_moments: Vec<MomentEntry>,
}

impl KernelConstants {
    /// Sum of the moment entries whose exponents put the whole degree on one
    /// coordinate. For product kernels these are the only nonzero ones.
    pub fn k_axis_moment(&self, axis: usize) -> f64 {
        axis_moment(&self.k_moments, axis)
    }

    pub fn h_axis_moment(&self, axis: usize) -> f64 {
        axis_moment(&self.h_moments, axis)
    }

    pub fn sigma_trace(&self) -> f64 {
        (0..self.sigma_factor.len()).map(|i| self.sigma_factor[i][i]).sum()
    }
}

fn axis_moment(entries: &[MomentEntry], axis: usize) -> f64 {
    entries
        .iter()
        .find(|e| {
            e.exponents
                .iter()
                .enumerate()
                .all(|(k, &a)| (k == axis) == (a > 0))
        })
        .map(|e| e.value)
        .unwrap_or(0.0)
}

fn nonzero_moments(k: &ProductKernel) -> Vec<MomentEntry> {
    multi_indices(k.dimension(), k.order())
        .into_iter()
        .filter_map(|alpha| {
            let value = k.moment(&alpha);
            (value.abs() > MOMENT_NONZERO_TOL).then_some(MomentEntry {
                exponents: alpha,
                value,
            })
        })
        .collect()
}

/// `∫ (∫ a(x−y) b(y) dy) (∫ c(x−y) e(y) dy) dx` for univariate factors,
/// with panel doubling until the relative change drops below tolerance.
fn convolution_product(
    kern: &UnivariateKernel,
    left: impl Fn(f64) -> f64,
    right: impl Fn(f64) -> f64,
) -> Result<f64> {
    let (a, b) = kern.support();
    let inner = GaussLegendre::new(24);
    let outer = GaussLegendre::new(24);
    let conv = |x: f64, g: &dyn Fn(f64) -> f64| -> f64 {
        let lo = a.max(x - b);
        let hi = b.min(x - a);
        if hi <= lo {
            return 0.0;
        }
        inner.integrate(lo, hi, |y| kern.evaluate(x - y) * g(y))
    };
    let integrand = |x: f64| conv(x, &left) * conv(x, &right);
    let mut panels = 2;
    let mut previous = outer.composite(2.0 * a, 2.0 * b, panels, integrand);
    for _ in 0..MAX_REFINEMENTS {
        panels *= 2;
        let current = outer.composite(2.0 * a, 2.0 * b, panels, integrand);
        let scale = current.abs().max(previous.abs()).max(1e-300);
        if (current - previous).abs() <= CONSTANT_REL_TOL * scale || (current - previous).abs() < 1e-13 {
            return Ok(current);
        }
        previous = current;
    }
    Err(Error::Numerical(
        "kernel constant quadrature did not converge after refinement".into(),
    ))
}

/// `∫∫ K(x−y) g(y) dy dx`, which factorizes as `∫K · ∫g`.
fn convolution_mass(kern: &UnivariateKernel, g: impl Fn(f64) -> f64) -> Result<f64> {
    let (a, b) = kern.support();
    let rule = GaussLegendre::new(24);
    // split at the origin so kinks of derivative-based integrands sit on panel edges
    let breaks = [a, a.max(0.0).min(b), b];
    Ok(rule.integrate(a, b, |u| kern.evaluate(u)) * rule.piecewise(&breaks, g))
}

/// Computes the kernel-only constants for the pair (K, H).
pub fn compute_kernel_constants(k: &ProductKernel, h: &ProductKernel) -> Result<KernelConstants> {
    let d = k.dimension();
    // per-factor pieces: A = ∫(K*K)², B = ∫(K*K')², D = ∫(K*K)(K*K')
    let mut conv_sq = Vec::with_capacity(d);
    let mut grad_sq = Vec::with_capacity(d);
    let mut cross = Vec::with_capacity(d);
    let mut sq_mass = Vec::with_capacity(d);
    let mut grad_mass = Vec::with_capacity(d);
    for f in k.factors() {
        let val = |y: f64| f.evaluate(y);
        let der = |y: f64| f.derivative(y);
        conv_sq.push(convolution_product(f, val, val)?);
        grad_sq.push(convolution_product(f, der, der)?);
        cross.push(convolution_product(f, val, der)?);
        sq_mass.push(convolution_mass(f, |y| f.evaluate(y) * f.evaluate(y))?);
        grad_mass.push(convolution_mass(f, |y| f.evaluate(y) * f.derivative(y))?);
    }
    let mut sigma = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut v = 1.0;
            for m in 0..d {
                v *= if i == j {
                    if m == i {
                        grad_sq[m]
                    } else {
                        conv_sq[m]
                    }
                } else if m == i || m == j {
                    cross[m]
                } else {
                    conv_sq[m]
                };
            }
            sigma[i][j] = v;
        }
    }
    let c3_factor = (0..d)
        .map(|i| {
            (0..d)
                .map(|m| if m == i { grad_mass[m] } else { sq_mass[m] })
                .product()
        })
        .collect();
    let rule = GaussLegendre::new(24);
    let sq_norm = |kern: &ProductKernel| -> f64 {
        kern.factors()
            .iter()
            .map(|f| {
                let (lo, hi) = f.support();
                rule.integrate(lo, hi, |u| f.evaluate(u).powi(2))
            })
            .product()
    };
    Ok(KernelConstants {
        sigma_factor: sigma,
        c3_factor,
        h_sq_norm: sq_norm(h),
        k_sq_norm: sq_norm(k),
        k_moments: nonzero_moments(k),
        h_moments: nonzero_moments(h),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn epan() -> UnivariateKernel {
        UnivariateKernel::standard(KernelFamily::Epanechnikov)
    }

    #[test]
    fn epanechnikov_closed_form() {
        let k = make_standard_kernel("epanechnikov", 1).unwrap();
        assert_abs_diff_eq!(k.evaluate(&[0.0]), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(k.evaluate(&[0.5]), 0.75 * 0.75, epsilon = 1e-15);
        assert_eq!(k.evaluate(&[1.5]), 0.0);
        assert_abs_diff_eq!(k.integral(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.moment(&[1]), 0.0, epsilon = 1e-14);
        // 0.75 (2/3 − 2/5)
        assert_abs_diff_eq!(k.moment(&[2]), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn unknown_name_is_a_config_error() {
        assert!(matches!(
            make_standard_kernel("gaussian", 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn standard_kernels_are_order_two() {
        for fam in KernelFamily::ALL {
            for d in 1..=3 {
                let k = standard_kernel(fam, d).unwrap();
                assert_eq!(verify_order(&k, 8).unwrap(), 2);
                k.check_invariants().unwrap();
            }
        }
    }

    #[test]
    fn order_two_construction_is_the_identity() {
        let k = make_high_order_kernel(&epan(), 2, 1).unwrap();
        let s = make_standard_kernel("epanechnikov", 1).unwrap();
        for u in [-0.9, -0.3, 0.0, 0.4, 0.99] {
            assert_abs_diff_eq!(k.evaluate(&[u]), s.evaluate(&[u]), epsilon = 1e-14);
        }
    }

    #[test]
    fn order_four_epanechnikov_matches_hand_solution() {
        // (a + b u²)·0.75(1−u²) with ∫ = 1 and ∫u² = 0:
        // a + b/5 = 1, a/5 + 3b/35 = 0 → a = 15/8, b = −35/8
        let k = make_high_order_kernel(&epan(), 4, 1).unwrap();
        let c = k.factors()[0].poly_coefficients();
        assert_abs_diff_eq!(c[0], 15.0 / 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], -35.0 / 8.0, epsilon = 1e-12);
        assert!(k.moment(&[2]).abs() < MOMENT_ZERO_TOL);
        assert!(k.moment(&[4]).abs() > MOMENT_NONZERO_TOL);
        assert_eq!(verify_order(&k, 8).unwrap(), 4);
    }

    #[test]
    fn high_order_constructions_verify() {
        for fam in KernelFamily::ALL {
            for order in [2, 4, 6] {
                for d in [1, 2] {
                    let k = make_high_order_kernel(&UnivariateKernel::standard(fam), order, d).unwrap();
                    assert_eq!(verify_order(&k, 8).unwrap(), order, "{fam} order {order} d {d}");
                    assert!((k.integral() - 1.0).abs() < MOMENT_ZERO_TOL);
                }
            }
        }
    }

    #[test]
    fn two_dimensional_mixed_moment_vanishes() {
        let k = make_high_order_kernel(&epan(), 4, 2).unwrap();
        assert!(k.moment(&[1, 1]).abs() < 1e-14);
    }

    #[test]
    fn shifted_kernel_has_order_one() {
        let k = ProductKernel::from_factors(vec![epan().shifted(0.1)], 1).unwrap();
        assert_eq!(verify_order(&k, 8).unwrap(), 1);
        assert_abs_diff_eq!(k.moment(&[1]), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn order_beyond_limit_is_a_verification_failure() {
        let k = make_high_order_kernel(&epan(), 6, 1).unwrap();
        assert!(matches!(verify_order(&k, 4), Err(Error::Verification(_))));
        assert!(matches!(verify_order(&k, 9), Err(Error::Argument(_))));
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for fam in KernelFamily::ALL {
            for order in [2, 4] {
                let k = make_high_order_kernel(&UnivariateKernel::standard(fam), order, 1).unwrap();
                let f = &k.factors()[0];
                for _ in 0..100 {
                    let u: f64 = rng.random_range(-0.999..0.999);
                    let step = 1e-6;
                    let fd = (f.evaluate(u + step) - f.evaluate(u - step)) / (2.0 * step);
                    assert!((fd - f.derivative(u)).abs() < 1e-6, "{fam} {order} at {u}");
                }
            }
        }
    }

    #[test]
    fn product_gradient_matches_finite_differences() {
        let k = make_high_order_kernel(&UnivariateKernel::standard(KernelFamily::Quartic), 4, 2).unwrap();
        let u = [0.31, -0.52];
        let g = k.gradient(&u);
        for axis in 0..2 {
            let mut up = u;
            let mut dn = u;
            up[axis] += 1e-6;
            dn[axis] -= 1e-6;
            let fd = (k.evaluate(&up) - k.evaluate(&dn)) / 2e-6;
            assert_abs_diff_eq!(fd, g[axis], epsilon = 1e-6);
        }
    }

    #[test]
    fn lipschitz_constant_is_finite() {
        // Epanechnikov slope peaks at |K'(±1)| = 1.5
        assert_abs_diff_eq!(epan().lipschitz_estimate(), 1.5, epsilon = 1e-3);
    }

    #[test]
    fn h_squared_norm_for_epanechnikov() {
        let k = make_standard_kernel("epanechnikov", 1).unwrap();
        let c = compute_kernel_constants(&k, &k).unwrap();
        assert_abs_diff_eq!(c.h_sq_norm, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(c.k_sq_norm, 0.6, epsilon = 1e-12);
        assert!(c.sigma_factor[0][0] > 0.0);
        assert!(c.c3_factor[0].abs() < 1e-12);
        assert_eq!(c.k_moments.len(), 1);
        assert_abs_diff_eq!(c.k_axis_moment(0), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn sigma_factor_matches_brute_force_grid() {
        let k = make_standard_kernel("epanechnikov", 1).unwrap();
        let c = compute_kernel_constants(&k, &k).unwrap();
        // midpoint inner sum (K' jumps at the support edge), trapezoid outer
        let step = 1e-3;
        let l1: Vec<f64> = (0..2000).map(|i| -1.0 + step * (i as f64 + 0.5)).collect();
        let mut total = 0.0;
        for j in 0..=4000 {
            let l2 = -2.0 + step * j as f64;
            let mut g = 0.0;
            for &x in &l1 {
                g += k.evaluate(&[l2 - x]) * k.gradient(&[x])[0];
            }
            g *= step;
            let w = if j == 0 || j == 4000 { 0.5 } else { 1.0 };
            total += w * g * g;
        }
        total *= step;
        assert!((c.sigma_factor[0][0] - total).abs() < 1e-4 * total, "{} vs {total}", c.sigma_factor[0][0]);
    }

    #[test]
    fn sigma_factor_is_symmetric_psd_in_two_dimensions() {
        let k = make_high_order_kernel(&UnivariateKernel::standard(KernelFamily::Triweight), 4, 2).unwrap();
        let c = compute_kernel_constants(&k, &k).unwrap();
        let m = nalgebra::DMatrix::from_fn(2, 2, |i, j| c.sigma_factor[i][j]);
        assert!((m.clone() - m.transpose()).abs().max() < 1e-10);
        let eig = m.symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn multi_indices_enumerate_compositions() {
        let idx = multi_indices(3, 2);
        assert_eq!(idx.len(), 6);
        assert!(idx.iter().all(|a| a.iter().sum::<usize>() == 2));
    }
}
