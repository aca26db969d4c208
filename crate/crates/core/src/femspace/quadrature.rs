//! Gauss rules on the unit interval and on the reference triangle
//! `(0,0), (1,0), (0,1)`.

use super::FemError;
use crate::mesh::Point;

pub const MAX_ORDER: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Reference coordinates: `(xi, eta)` on the triangle (the barycentric
    /// weights of the second and third vertex), `(s, 0)` on the interval.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Highest total degree integrated exactly.
    pub order: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Physical points and weights on the triangle `tri`.
    pub fn on_triangle(&self, tri: &[Point; 3]) -> Vec<(Point, f64)> {
        let [a, b, c] = *tri;
        let jac = ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(q, w)| {
                let p = [a[0] + (b[0] - a[0]) * q[0] + (c[0] - a[0]) * q[1], a[1] + (b[1] - a[1]) * q[0] + (c[1] - a[1]) * q[1]];
                (p, w * jac)
            })
            .collect()
    }

    /// Parameter, physical point and arc-length weight on the segment `a -> b`.
    pub fn on_segment(&self, a: Point, b: Point) -> Vec<(f64, Point, f64)> {
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(q, w)| {
                let s = q[0];
                (s, [a[0] + (b[0] - a[0]) * s, a[1] + (b[1] - a[1]) * s], w * len)
            })
            .collect()
    }
}

/// `n`-point Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d.is_finite() { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        // map [-1, 1] -> [0, 1]
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

fn check_order(order: usize) -> Result<(), FemError> {
    if (1..=MAX_ORDER).contains(&order) {
        Ok(())
    } else {
        Err(FemError::QuadratureOrder(order))
    }
}

/// Gauss rule on `[0, 1]` exact up to degree `order`.
pub fn edge_rule(order: usize) -> Result<QuadratureRule, FemError> {
    check_order(order)?;
    let (x, w) = gauss_legendre(order / 2 + 1);
    Ok(QuadratureRule { points: x.iter().map(|&s| [s, 0.0]).collect(), weights: w, order })
}

/// Collapsed (Duffy) Gauss product rule on the reference triangle, exact up to
/// total degree `order`. All points lie strictly inside and all weights are
/// positive.
pub fn triangle_rule(order: usize) -> Result<QuadratureRule, FemError> {
    check_order(order)?;
    let n = (order + 3) / 2;
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (u, wu) in x.iter().zip(&w) {
        for (v, wv) in x.iter().zip(&w) {
            points.push([*u, v * (1.0 - u)]);
            weights.push(wu * wv * (1.0 - u));
        }
    }
    Ok(QuadratureRule { points, weights, order })
}
