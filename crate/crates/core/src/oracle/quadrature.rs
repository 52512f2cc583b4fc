//! Gauss-Legendre rules and the discretized threshold-noise measures used by
//! the exact distribution computations.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::noise::{geo_pmf, GeometricParam};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
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
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Points per Gauss-Legendre panel.
pub const PANEL_POINTS: usize = 64;

/// Target for every truncated tail.
pub const TAIL_TARGET: f64 = 1e-12;

/// A discretization of the threshold-noise law: `E[g(k)] ~ sum w_n g(k_n)`,
/// with `tail_bound` bounding the probability mass left out.
#[derive(Debug, Clone)]
pub struct NoiseMeasure {
    pub points: Vec<(f64, f64)>,
    pub tail_bound: f64,
}

impl NoiseMeasure {
    /// `Geo(e^{-eps'})` truncated at `k_max`; the tail is `e^{-eps'(k_max+1)}`.
    pub fn geometric(eps_prime: f64, k_max: Option<u64>) -> Result<Self> {
        let p = GeometricParam::from_epsilon(eps_prime)?;
        let k_max = k_max.unwrap_or_else(|| geometric_k_max(eps_prime));
        let points = (0..=k_max)
            .map(|k| (k as f64, geo_pmf(p, k as i64)))
            .collect();
        Ok(Self {
            points,
            tail_bound: (-eps_prime * (k_max as f64 + 1.0)).exp(),
        })
    }

    /// `Exp(eps')` on `[0, X]` with `e^{-eps' X} < 1e-12`, by composite
    /// Gauss-Legendre panels. `fastest_rate` is the largest decay rate of the
    /// integrand other than the density itself; panels are narrowed so each
    /// covers at most one e-fold of it.
    pub fn exponential(eps_prime: f64, fastest_rate: f64) -> Result<Self> {
        if !(eps_prime > 0.0 && eps_prime.is_finite()) {
            return Err(invalid(
                "eps_prime",
                format!("must be positive, got {eps_prime}"),
            ));
        }
        let horizon = (-TAIL_TARGET.ln() + HORIZON_MARGIN) / eps_prime;
        let width = 1.0 / (eps_prime + fastest_rate.max(0.0));
        let panels = (horizon / width).ceil() as usize;
        let width = horizon / panels as f64;
        let (nodes, weights) = gauss_legendre(PANEL_POINTS);
        let mut points = Vec::with_capacity(panels * PANEL_POINTS);
        for p in 0..panels {
            let lo = p as f64 * width;
            for (x, w) in nodes.iter().zip(&weights) {
                let t = lo + 0.5 * width * (x + 1.0);
                let density = eps_prime * (-eps_prime * t).exp();
                points.push((t, 0.5 * width * w * density));
            }
        }
        Ok(Self {
            points,
            tail_bound: (-eps_prime * horizon).exp(),
        })
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|(_, w)| w).sum()
    }
}

/// Smallest `k_max` with `e^{-eps'(k_max+1)} < 1e-12`.
pub fn geometric_k_max(eps_prime: f64) -> u64 {
    let needed = -TAIL_TARGET.ln() / eps_prime;
    needed.floor() as u64
}

// keeps the quadrature tail strictly under the target despite rounding
const HORIZON_MARGIN: f64 = 1e-6;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_rules_match_tables() {
        let (x, w) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert!(x[1].abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-14);
        assert!((x[2] - 0.6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sixty_four_points_integrate_polynomials_and_weights_sum_to_two() {
        let (x, w) = gauss_legendre(64);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        // exact up to degree 127
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(126)).sum();
        assert!((integral - 2.0 / 127.0).abs() < 1e-13);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn exponential_measure_reproduces_moments() {
        let m = NoiseMeasure::exponential(0.05, 1.0).unwrap();
        assert!((m.total_weight() - 1.0).abs() < 1e-11);
        // E[e^{-x}] = eps' / (eps' + 1)
        let v: f64 = m.points.iter().map(|(t, w)| w * (-t).exp()).sum();
        assert!((v - 0.05 / 1.05).abs() < 1e-12);
        assert!(m.tail_bound < 1e-12);
    }

    #[test]
    fn geometric_measure_mass() {
        let m = NoiseMeasure::geometric(0.1, None).unwrap();
        assert!(m.tail_bound < 1e-12);
        assert!((m.total_weight() + m.tail_bound - 1.0).abs() < 1e-12);
    }
}
