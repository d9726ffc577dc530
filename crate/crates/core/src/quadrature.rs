//! Gauss rules and the collapsed-coordinate rule on the standard simplex.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes per axis for simplex quadrature unless overridden.
pub const DEFAULT_SIMPLEX_NODES: usize = 16;

/// Nodes per Gaussian coordinate.
pub const DEFAULT_HERMITE_NODES: usize = 24;

/// Gauss–Legendre rule on `[0, 1]`; weights sum to one.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..(m + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[m - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[m - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if m == 0 { 1.0 } else { p1 };
    let d = m as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Gauss–Hermite rule for the standard normal law: `E g(γ) ≈ Σ w_i g(x_i)`.
pub fn gauss_hermite_normal(m: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut z = 0.0f64;
    for i in 0..(m + 1) / 2 {
        z = match i {
            0 => (2.0 * m as f64 + 1.0).sqrt() - 1.85575 * (2.0 * m as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (m as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..m {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * m as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[m - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[m - 1 - i] = w[i];
    }
    let scale = PI.sqrt();
    let nodes = x.iter().rev().map(|v| v * 2f64.sqrt()).collect();
    let weights = w.iter().rev().map(|v| v / scale).collect();
    (nodes, weights)
}

/// Tensor Gauss–Hermite rule over `k` independent standard normals.
pub fn gauss_hermite_tensor(k: usize, m: usize) -> Vec<(Vec<f64>, f64)> {
    let (x, w) = gauss_hermite_normal(m);
    let mut out = vec![(Vec::new(), 1.0)];
    for _ in 0..k {
        let mut next = Vec::with_capacity(out.len() * m);
        for (pt, wt) in &out {
            for (xi, wi) in x.iter().zip(&w) {
                let mut p = pt.clone();
                p.push(*xi);
                next.push((p, wt * wi));
            }
        }
        out = next;
    }
    out
}

/// Quadrature on `T_k = {τ ∈ R^{k+1}_+ : Σ τ = 1}` with respect to Lebesgue measure on the
/// first `k` coordinates, so weights sum to `vol T_k = 1/k!`.
#[derive(Clone, Debug)]
pub struct SimplexQuadrature {
    pub order: usize,
    pub nodes_per_axis: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SimplexQuadrature {
    /// Duffy (collapsed coordinate) transform of the tensor Gauss–Legendre rule.
    pub fn new(order: usize, nodes_per_axis: usize) -> Result<Self> {
        if order == 0 || order > 3 {
            return Err(Error::OrderTooHigh(order));
        }
        let (g, gw) = gauss_legendre(nodes_per_axis);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut idx = vec![0usize; order];
        loop {
            let mut remaining = 1.0;
            let mut jac = 1.0;
            let mut weight = 1.0;
            let mut tau = Vec::with_capacity(order + 1);
            for &i in idx.iter() {
                let u = g[i];
                weight *= gw[i];
                tau.push(remaining * u);
                jac *= remaining;
                remaining *= 1.0 - u;
            }
            let first = 1.0 - tau.iter().sum::<f64>();
            let mut full = vec![first];
            full.extend(tau);
            points.push(full);
            weights.push(weight * jac);
            let mut a = 0;
            loop {
                idx[a] += 1;
                if idx[a] < nodes_per_axis {
                    break;
                }
                idx[a] = 0;
                a += 1;
                if a == order {
                    return Ok(Self { order, nodes_per_axis, points, weights });
                }
            }
        }
    }

    /// Shared default rule for `order` in `1..=3`.
    pub fn default_for(order: usize) -> Result<&'static SimplexQuadrature> {
        static RULES: [OnceLock<SimplexQuadrature>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        if order == 0 || order > 3 {
            return Err(Error::OrderTooHigh(order));
        }
        Ok(RULES[order - 1].get_or_init(|| {
            SimplexQuadrature::new(order, DEFAULT_SIMPLEX_NODES).expect("order checked above")
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        for k in 0..16 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn hermite_matches_normal_moments() {
        let (x, w) = gauss_hermite_normal(24);
        let expected = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0, 0.0, 105.0];
        for (k, e) in expected.iter().enumerate() {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
            assert!((q - e).abs() < 1e-11 * e.max(1.0), "k={k} q={q}");
        }
    }

    #[test]
    fn simplex_volumes() {
        for (k, vol) in [(1, 1.0), (2, 0.5), (3, 1.0 / 6.0)] {
            let q = SimplexQuadrature::new(k, 16).unwrap();
            let s: f64 = q.weights.iter().sum();
            assert!((s - vol).abs() < 1e-14);
            for p in &q.points {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                assert!(p.iter().all(|t| *t >= -1e-15));
            }
        }
    }

    #[test]
    fn simplex_integrates_monomials() {
        // Dirichlet integral: Γ(2)^3 / Γ(6).
        let q = SimplexQuadrature::new(2, 16).unwrap();
        let s: f64 = q.points.iter().zip(&q.weights).map(|(p, w)| w * p[0] * p[1] * p[2]).sum();
        assert!((s - 1.0 / 120.0).abs() < 1e-15);
    }
}
