use nalgebra::DMatrix;

use super::quadrature::QuadratureRule;
use crate::mesh::Point;

/// Dimension of the scalar polynomials of total degree at most `d` in 2-D.
pub const fn dim_p(d: usize) -> usize {
    (d + 1) * (d + 2) / 2
}

/// Exponents `(a, b)` of `x^a y^b`, ordered by total degree and then by
/// decreasing `a`, so the first `dim_p(d)` entries span degree `d`.
pub fn monomial_exponents(degree: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(dim_p(degree));
    for d in 0..=degree as u32 {
        for a in (0..=d).rev() {
            out.push((a, d - a));
        }
    }
    out
}

/// Hierarchical scalar basis on one triangle, expressed over the scaled
/// monomials `((x - xc) / h)^a ((y - yc) / h)^b`.
///
/// Function `i` only uses monomials `0..=i`, so the first `dim_p(d)` functions
/// span the polynomials of degree `d` for every `d <= degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementBasis {
    pub element: usize,
    pub degree: usize,
    pub center: Point,
    pub scale: f64,
    /// Row-major lower-triangular coefficients, one row per function.
    coeffs: Vec<f64>,
    exponents: Vec<(u32, u32)>,
    orthonormal: bool,
}

impl ElementBasis {
    /// Basis orthonormal in `L2(T)`, built by modified Gram–Schmidt (two passes)
    /// under `rule`, which must integrate degree `2 * degree` exactly.
    pub fn orthonormal(element: usize, tri: &[Point; 3], diameter: f64, degree: usize, rule: &QuadratureRule) -> Self {
        let mut basis = Self::monomial(element, tri, diameter, degree);
        let dim = basis.dim();
        let qp = rule.on_triangle(tri);
        let mut vals = vec![0.0; dim];
        // monomial values per quadrature point, column-major by function
        let mut table = vec![0.0; dim * qp.len()];
        for (q, (p, _)) in qp.iter().enumerate() {
            basis.eval(*p, &mut vals);
            for i in 0..dim {
                table[i * qp.len() + q] = vals[i];
            }
        }
        let nq = qp.len();
        let weights: Vec<f64> = qp.iter().map(|x| x.1).collect();
        let mut coeffs = vec![0.0; dim * dim];
        for i in 0..dim {
            coeffs[i * dim + i] = 1.0;
            let (done, rest) = table.split_at_mut(i * nq);
            let v = &mut rest[..nq];
            for _pass in 0..2 {
                for jj in 0..i {
                    let phi = &done[jj * nq..(jj + 1) * nq];
                    let proj: f64 = (0..nq).map(|q| weights[q] * v[q] * phi[q]).sum();
                    for q in 0..nq {
                        v[q] -= proj * phi[q];
                    }
                    for c in 0..=jj {
                        coeffs[i * dim + c] -= proj * coeffs[jj * dim + c];
                    }
                }
            }
            let norm = (0..nq).map(|q| weights[q] * v[q] * v[q]).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= norm;
            }
            for c in 0..=i {
                coeffs[i * dim + c] /= norm;
            }
        }
        basis.coeffs = coeffs;
        basis.orthonormal = true;
        basis
    }

    /// Plain scaled monomials (not orthonormal).
    pub fn monomial(element: usize, tri: &[Point; 3], diameter: f64, degree: usize) -> Self {
        let dim = dim_p(degree);
        let mut coeffs = vec![0.0; dim * dim];
        for i in 0..dim {
            coeffs[i * dim + i] = 1.0;
        }
        let center = [(tri[0][0] + tri[1][0] + tri[2][0]) / 3.0, (tri[0][1] + tri[1][1] + tri[2][1]) / 3.0];
        ElementBasis {
            element,
            degree,
            center,
            scale: diameter,
            coeffs,
            exponents: monomial_exponents(degree),
            orthonormal: false,
        }
    }

    pub fn dim(&self) -> usize {
        dim_p(self.degree)
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// Coefficient of scaled monomial `c` in function `i`.
    pub fn coefficient(&self, i: usize, c: usize) -> f64 {
        self.coeffs[i * self.dim() + c]
    }

    fn powers(&self, p: Point) -> ([f64; 12], [f64; 12]) {
        let x = (p[0] - self.center[0]) / self.scale;
        let y = (p[1] - self.center[1]) / self.scale;
        let mut px = [1.0; 12];
        let mut py = [1.0; 12];
        for d in 1..=self.degree {
            px[d] = px[d - 1] * x;
            py[d] = py[d - 1] * y;
        }
        (px, py)
    }

    /// Values of all basis functions at `p`; `out.len()` selects how many.
    pub fn eval(&self, p: Point, out: &mut [f64]) {
        let n = out.len().min(self.dim());
        let (px, py) = self.powers(p);
        let dim = self.dim();
        for i in 0..n {
            let row = &self.coeffs[i * dim..i * dim + i + 1];
            out[i] = row.iter().zip(&self.exponents).map(|(c, &(a, b))| c * px[a as usize] * py[b as usize]).sum();
        }
    }

    /// Gradients of the basis functions at `p`.
    pub fn eval_grad(&self, p: Point, out: &mut [[f64; 2]]) {
        let n = out.len().min(self.dim());
        let (px, py) = self.powers(p);
        let dim = self.dim();
        let inv = 1.0 / self.scale;
        for i in 0..n {
            let mut g = [0.0; 2];
            for (c, &(a, b)) in self.coeffs[i * dim..i * dim + i + 1].iter().zip(&self.exponents) {
                let (a, b) = (a as usize, b as usize);
                if a > 0 {
                    g[0] += c * a as f64 * px[a - 1] * py[b] * inv;
                }
                if b > 0 {
                    g[1] += c * b as f64 * px[a] * py[b - 1] * inv;
                }
            }
            out[i] = g;
        }
    }

    /// Gram matrix of the first `n` functions under `rule`.
    pub fn mass_matrix(&self, tri: &[Point; 3], rule: &QuadratureRule, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        let mut v = vec![0.0; n];
        for (p, w) in rule.on_triangle(tri) {
            self.eval(p, &mut v);
            for a in 0..n {
                for b in 0..n {
                    m[(a, b)] += w * v[a] * v[b];
                }
            }
        }
        m
    }
}

/// Orthonormal Legendre basis on an edge in the arc-length parameter
/// `s in [0, 1]`, measured from the edge's first vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeBasis {
    pub edge: usize,
    pub degree: usize,
    pub start: Point,
    pub end: Point,
    pub length: f64,
}

impl EdgeBasis {
    pub fn new(edge: usize, start: Point, end: Point, degree: usize) -> Self {
        let length = (end[0] - start[0]).hypot(end[1] - start[1]);
        EdgeBasis { edge, degree, start, end, length }
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn point(&self, s: f64) -> Point {
        [self.start[0] + (self.end[0] - self.start[0]) * s, self.start[1] + (self.end[1] - self.start[1]) * s]
    }

    /// Values at parameter `s`, normalized so `int_e psi_a psi_b ds = delta_ab`.
    pub fn eval(&self, s: f64, out: &mut [f64]) {
        let n = out.len().min(self.dim());
        let t = 2.0 * s - 1.0;
        let (mut p0, mut p1) = (1.0, t);
        for i in 0..n {
            let p = match i {
                0 => 1.0,
                1 => t,
                _ => {
                    let p2 = ((2 * i - 1) as f64 * t * p1 - (i - 1) as f64 * p0) / i as f64;
                    p0 = p1;
                    p1 = p2;
                    p2
                }
            };
            out[i] = p * ((2 * i + 1) as f64 / self.length).sqrt();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::femspace::{edge_rule, triangle_rule};
    use proptest::prelude::*;

    fn gram_is_identity(b: &ElementBasis, tri: &[Point; 3], tol: f64) {
        let rule = triangle_rule(2 * b.degree + 2).unwrap();
        let m = b.mass_matrix(tri, &rule, b.dim());
        for i in 0..b.dim() {
            for j in 0..b.dim() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((m[(i, j)] - e).abs() < tol, "({i},{j}) = {}", m[(i, j)]);
            }
        }
    }

    #[test]
    fn exponent_order() {
        assert_eq!(monomial_exponents(2), vec![(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);
        assert_eq!(dim_p(3), 10);
    }

    #[test]
    fn orthonormal_on_reference_and_small_elements() {
        for degree in 0..=6 {
            for tri in [
                [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
                [[0.3, 0.2], [0.3 + 1.0 / 128.0, 0.2], [0.3, 0.2 + 1.0 / 128.0]],
                [[2.0, 1.0], [2.4, 1.1], [2.1, 1.7]],
            ] {
                let diam = crate::mesh::dist(tri[0], tri[1])
                    .max(crate::mesh::dist(tri[1], tri[2]))
                    .max(crate::mesh::dist(tri[0], tri[2]));
                let rule = triangle_rule(2 * degree + 2).unwrap();
                let b = ElementBasis::orthonormal(0, &tri, diam, degree, &rule);
                assert_eq!(b.dim(), dim_p(degree));
                gram_is_identity(&b, &tri, 1e-10);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let tri = [[0.0, 0.0], [0.5, 0.1], [0.2, 0.4]];
        let rule = triangle_rule(8).unwrap();
        let b = ElementBasis::orthonormal(0, &tri, 0.5, 3, &rule);
        let p = [0.2, 0.15];
        let mut g = vec![[0.0; 2]; b.dim()];
        b.eval_grad(p, &mut g);
        let eps = 1e-6;
        let (mut vp, mut vm) = (vec![0.0; b.dim()], vec![0.0; b.dim()]);
        for d in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[d] += eps;
            pm[d] -= eps;
            b.eval(pp, &mut vp);
            b.eval(pm, &mut vm);
            for i in 0..b.dim() {
                let fd = (vp[i] - vm[i]) / (2.0 * eps);
                assert!((fd - g[i][d]).abs() < 1e-5 * (1.0 + fd.abs()), "fn {i} dir {d}");
            }
        }
    }

    #[test]
    fn edge_basis_orthonormal() {
        let b = EdgeBasis::new(0, [0.1, 0.2], [0.4, 0.6], 5);
        let rule = edge_rule(12).unwrap();
        let mut v = vec![0.0; 6];
        let mut m = [[0.0; 6]; 6];
        for (s, _, w) in rule.on_segment(b.start, b.end) {
            b.eval(s, &mut v);
            for i in 0..6 {
                for j in 0..6 {
                    m[i][j] += w * v[i] * v[j];
                }
            }
        }
        for (i, row) in m.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                assert!((x - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn gram_identity_on_random_triangles(
            ax in -5.0..5.0f64, ay in -5.0..5.0f64,
            bx in 0.05..1.0f64, by in -0.3..0.3f64,
            cx in -0.3..0.3f64, cy in 0.05..1.0f64,
            degree in 0usize..5,
        ) {
            let tri = [[ax, ay], [ax + bx, ay + by], [ax + cx, ay + cy]];
            let area = crate::mesh::signed_area(tri[0], tri[1], tri[2]);
            let diam = crate::mesh::dist(tri[0], tri[1]).max(crate::mesh::dist(tri[1], tri[2])).max(crate::mesh::dist(tri[0], tri[2]));
            // shape-regular elements only
            prop_assume!(area > 0.1 * diam * diam);
            let rule = triangle_rule(2 * degree + 2).unwrap();
            let b = ElementBasis::orthonormal(0, &tri, diam, degree, &rule);
            gram_is_identity(&b, &tri, 1e-10);
        }
    }
}
