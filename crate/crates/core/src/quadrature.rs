//! Gauss–Legendre rules and adaptive integration.

use crate::error::{Error, Result};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, refined by Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Composite rule over `panels` equal sub-intervals of [a, b].
    pub fn composite<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        let step = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let lo = a + step * k as f64;
                self.integrate(lo, lo + step, &mut f)
            })
            .sum()
    }

    /// Composite rule over the pieces delimited by sorted `breaks`.
    pub fn piecewise<F: FnMut(f64) -> f64>(&self, breaks: &[f64], mut f: F) -> f64 {
        breaks
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| self.integrate(w[0], w[1], &mut f))
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive Gauss–Legendre integration by interval bisection.
///
/// Each interval is accepted when the 10-point and 20-point rules agree to
/// `abs_tol + rel_tol * |estimate|`.
pub fn adaptive<F: FnMut(f64) -> f64>(a: f64, b: f64, abs_tol: f64, rel_tol: f64, mut f: F) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let coarse = GaussLegendre::new(10);
    let fine = GaussLegendre::new(20);
    let mut stack = vec![(a, b, 0usize)];
    let mut total = 0.0;
    let max_depth = 40;
    let mut evaluations = 0usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        let c = coarse.integrate(lo, hi, &mut f);
        let g = fine.integrate(lo, hi, &mut f);
        evaluations += 30;
        let scale = ((hi - lo) / (b - a)).abs();
        if (c - g).abs() <= abs_tol * scale + rel_tol * g.abs() {
            total += g;
        } else if depth >= max_depth || evaluations > 5_000_000 {
            return Err(Error::Numerical(format!(
                "adaptive quadrature did not converge on [{lo}, {hi}]"
            )));
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    if !total.is_finite() {
        return Err(Error::Numerical("non-finite quadrature result".into()));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(6);
        // degree 11 is the exactness limit for six nodes
        let v = rule.integrate(-1.0, 2.0, |x| x.powi(11) - 3.0 * x.powi(4));
        let exact = (2f64.powi(12) - 1.0) / 12.0 - 3.0 * (32.0 + 1.0) / 5.0;
        assert_relative_eq!(v, exact, max_relative = 1e-13);
    }

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 16, 40] {
            let rule = GaussLegendre::new(n);
            assert_relative_eq!(rule.integrate(-1.0, 1.0, |_| 1.0), 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn adaptive_handles_a_gaussian() {
        let v = adaptive(-12.0, 12.0, 1e-13, 1e-12, |x| (-0.5 * x * x).exp()).unwrap();
        assert_relative_eq!(v, (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-11);
    }

    #[test]
    fn adaptive_reports_divergence() {
        let r = adaptive(0.0, 1.0, 1e-14, 0.0, |x| 1.0 / x.sqrt() + x.sin() / x.powi(3));
        assert!(r.is_err());
    }
}
