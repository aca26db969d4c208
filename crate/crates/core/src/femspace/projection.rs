use nalgebra::{DMatrix, DVector};

use super::basis::{dim_p, EdgeBasis, ElementBasis};
use super::quadrature::QuadratureRule;
use crate::mesh::{Mesh, Point};

/// Solves with the Gram matrix when the basis is not orthonormal.
fn apply_inverse_mass(basis: &ElementBasis, tri: &[Point; 3], rule: &QuadratureRule, rhs: Vec<f64>) -> Vec<f64> {
    if basis.is_orthonormal() {
        return rhs;
    }
    let n = rhs.len();
    let m: DMatrix<f64> = basis.mass_matrix(tri, rule, n);
    let x = m.cholesky().expect("element Gram matrix is positive definite").solve(&DVector::from_vec(rhs));
    x.iter().copied().collect()
}

/// L2 projection of a scalar field onto the degree-`degree` polynomials of one
/// element, as coefficients in `basis`. `rule` must resolve the integrand.
pub fn project_q0(
    f: impl Fn(Point) -> f64,
    basis: &ElementBasis,
    tri: &[Point; 3],
    degree: usize,
    rule: &QuadratureRule,
) -> Vec<f64> {
    let n = dim_p(degree);
    let mut rhs = vec![0.0; n];
    let mut v = vec![0.0; n];
    for (p, w) in rule.on_triangle(tri) {
        basis.eval(p, &mut v);
        let fw = f(p) * w;
        for (r, vi) in rhs.iter_mut().zip(&v) {
            *r += fw * vi;
        }
    }
    apply_inverse_mass(basis, tri, rule, rhs)
}

/// Componentwise [`project_q0`] of a vector field.
pub fn project_q0_vector(
    f: impl Fn(Point) -> [f64; 2],
    basis: &ElementBasis,
    tri: &[Point; 3],
    degree: usize,
    rule: &QuadratureRule,
) -> [Vec<f64>; 2] {
    let n = dim_p(degree);
    let mut rhs = [vec![0.0; n], vec![0.0; n]];
    let mut v = vec![0.0; n];
    for (p, w) in rule.on_triangle(tri) {
        basis.eval(p, &mut v);
        let fv = f(p);
        for c in 0..2 {
            for (r, vi) in rhs[c].iter_mut().zip(&v) {
                *r += fv[c] * w * vi;
            }
        }
    }
    let [a, b] = rhs;
    [apply_inverse_mass(basis, tri, rule, a), apply_inverse_mass(basis, tri, rule, b)]
}

/// L2 projection onto the polynomials of degree `basis.degree` on one edge.
pub fn project_qb(f: impl Fn(Point) -> f64, basis: &EdgeBasis, rule: &QuadratureRule) -> Vec<f64> {
    let n = basis.dim();
    let mut out = vec![0.0; n];
    let mut v = vec![0.0; n];
    for (s, p, w) in rule.on_segment(basis.start, basis.end) {
        basis.eval(s, &mut v);
        let fw = f(p) * w;
        for (o, vi) in out.iter_mut().zip(&v) {
            *o += fw * vi;
        }
    }
    out
}

/// Componentwise [`project_qb`].
pub fn project_qb_vector(f: impl Fn(Point) -> [f64; 2], basis: &EdgeBasis, rule: &QuadratureRule) -> [Vec<f64>; 2] {
    let n = basis.dim();
    let mut out = [vec![0.0; n], vec![0.0; n]];
    let mut v = vec![0.0; n];
    for (s, p, w) in rule.on_segment(basis.start, basis.end) {
        basis.eval(s, &mut v);
        let fv = f(p);
        for c in 0..2 {
            for (o, vi) in out[c].iter_mut().zip(&v) {
                *o += fv[c] * w * vi;
            }
        }
    }
    out
}

/// Componentwise projection of a 2x2 tensor field; entry `2 * i + j` of the
/// result holds component `(i, j)`.
pub fn project_qs(
    g: impl Fn(Point) -> [[f64; 2]; 2],
    basis: &ElementBasis,
    tri: &[Point; 3],
    degree: usize,
    rule: &QuadratureRule,
) -> [Vec<f64>; 4] {
    let n = dim_p(degree);
    let mut rhs: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    let mut v = vec![0.0; n];
    for (p, w) in rule.on_triangle(tri) {
        basis.eval(p, &mut v);
        let gv = g(p);
        for c in 0..4 {
            let gw = gv[c / 2][c % 2] * w;
            for (r, vi) in rhs[c].iter_mut().zip(&v) {
                *r += gw * vi;
            }
        }
    }
    rhs.map(|r| apply_inverse_mass(basis, tri, rule, r))
}

/// Elementwise L2 projection of a scalar field over a whole mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct QhpProjection {
    pub coeffs: Vec<Vec<f64>>,
}

impl QhpProjection {
    /// Integral of the projected field over the mesh.
    pub fn integral(&self, mesh: &Mesh, bases: &[ElementBasis], rule: &QuadratureRule) -> f64 {
        let mut total = 0.0;
        for (t, c) in self.coeffs.iter().enumerate() {
            let mut v = vec![0.0; c.len()];
            for (p, w) in rule.on_triangle(&mesh.triangle_points(t)) {
                bases[t].eval(p, &mut v);
                total += w * c.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        total
    }
}

pub fn project_qhp(
    f: impl Fn(Point) -> f64 + Sync,
    mesh: &Mesh,
    bases: &[ElementBasis],
    degree: usize,
    rule: &QuadratureRule,
) -> QhpProjection {
    use rayon::prelude::*;
    let coeffs = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| project_q0(&f, &bases[t], &mesh.triangle_points(t), degree, rule))
        .collect();
    QhpProjection { coeffs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::femspace::{edge_rule, triangle_rule};
    use crate::mesh::{uniform_triangulation, Rect};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const REF: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

    fn eval_poly(basis: &ElementBasis, c: &[f64], p: Point) -> f64 {
        let mut v = vec![0.0; c.len()];
        basis.eval(p, &mut v);
        c.iter().zip(&v).map(|(a, b)| a * b).sum()
    }

    fn ref_basis(degree: usize) -> ElementBasis {
        ElementBasis::orthonormal(0, &REF, 2f64.sqrt(), degree, &triangle_rule(2 * degree + 2).unwrap())
    }

    #[test]
    fn x_squared_onto_constants_is_one_sixth() {
        let b = ref_basis(2);
        let rule = triangle_rule(6).unwrap();
        let c = project_q0(|p| p[0] * p[0], &b, &REF, 0, &rule);
        let val = eval_poly(&b, &c, [0.3, 0.3]);
        assert!((val - 1.0 / 6.0).abs() < 1e-14);
        let zero = project_q0(|_| 0.0, &b, &REF, 2, &rule);
        assert!(zero.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn members_are_reproduced_and_projection_is_idempotent() {
        let b = ref_basis(3);
        let rule = triangle_rule(10).unwrap();
        let f = |p: Point| 1.0 - 2.0 * p[0] + 3.0 * p[0] * p[1] - p[1] * p[1] * p[1];
        let c = project_q0(f, &b, &REF, 3, &rule);
        for p in [[0.1, 0.2], [0.5, 0.25], [0.0, 0.9]] {
            assert!((eval_poly(&b, &c, p) - f(p)).abs() < 1e-12);
        }
        let c2 = project_q0(|p| p[0].sin() + p[1], &b, &REF, 2, &rule);
        let c3 = project_q0(|p| eval_poly(&b, &c2, p), &b, &REF, 2, &rule);
        for (a, d) in c2.iter().zip(&c3) {
            assert!((a - d).abs() < 1e-13);
        }
    }

    #[test]
    fn projection_residual_is_orthogonal() {
        let tri = [[0.2, 0.1], [0.9, 0.3], [0.4, 0.8]];
        let rule = triangle_rule(12).unwrap();
        let b = ElementBasis::orthonormal(0, &tri, 0.8, 2, &rule);
        let f = |p: Point| (3.0 * p[0]).exp() * p[1].cos();
        let c = project_q0(f, &b, &tri, 2, &rule);
        let mut v = vec![0.0; 6];
        let mut res = [0.0; 6];
        for (p, w) in rule.on_triangle(&tri) {
            b.eval(p, &mut v);
            let r = f(p) - eval_poly(&b, &c, p);
            for i in 0..6 {
                res[i] += w * r * v[i];
            }
        }
        assert!(res.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn monomial_basis_path_agrees_with_orthonormal_path() {
        let tri = [[0.2, 0.1], [0.9, 0.3], [0.4, 0.8]];
        let rule = triangle_rule(12).unwrap();
        let ortho = ElementBasis::orthonormal(0, &tri, 0.8, 3, &rule);
        let mono = ElementBasis::monomial(0, &tri, 0.8, 3);
        let f = |p: Point| (p[0] * p[1]).sin() + p[0];
        let co = project_q0(f, &ortho, &tri, 3, &rule);
        let cm = project_q0(f, &mono, &tri, 3, &rule);
        for p in [[0.4, 0.4], [0.5, 0.3]] {
            assert!((eval_poly(&ortho, &co, p) - eval_poly(&mono, &cm, p)).abs() < 1e-10);
        }
    }

    #[test]
    fn edge_projection() {
        let e = EdgeBasis::new(0, [0.0, 0.0], [1.0, 0.0], 0);
        let rule = edge_rule(4).unwrap();
        let c = project_qb(|p| p[0], &e, &rule);
        let mut v = [0.0];
        e.eval(0.7, &mut v);
        assert!((c[0] * v[0] - 0.5).abs() < 1e-15);
        let k = project_qb(|_| 3.5, &EdgeBasis::new(0, [0.0, 1.0], [2.0, 3.0], 2), &rule);
        let mut v = [0.0; 3];
        EdgeBasis::new(0, [0.0, 1.0], [2.0, 3.0], 2).eval(0.2, &mut v);
        assert!((k.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() - 3.5).abs() < 1e-13);
        // member of P_2 reproduced
        let eb = EdgeBasis::new(0, [0.0, 1.0], [2.0, 3.0], 2);
        let c = project_qb(|p| p[0] * p[0] - p[1], &eb, &rule);
        let c2 = project_qb(
            |p| {
                let s = p[0] / 2.0;
                let mut v = [0.0; 3];
                eb.eval(s, &mut v);
                c.iter().zip(&v).map(|(a, b)| a * b).sum()
            },
            &eb,
            &rule,
        );
        for (a, b) in c.iter().zip(&c2) {
            assert!((a - b).abs() < 1e-13);
        }
        for s in [0.1, 0.6] {
            eb.eval(s, &mut v);
            let p = eb.point(s);
            assert!((c.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() - (p[0] * p[0] - p[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn tensor_projection_of_test_case_gradient() {
        // elementwise mean of grad (x^2 y, -x y^2) on the reference triangle
        let b = ref_basis(1);
        let rule = triangle_rule(6).unwrap();
        let g = |p: Point| {
            let (x, y) = (p[0], p[1]);
            [[2.0 * x * y, x * x], [-y * y, -2.0 * x * y]]
        };
        let c = project_qs(g, &b, &REF, 0, &rule);
        // int xy = 1/24, int x^2 = int y^2 = 1/12 over area 1/2
        let expected = [2.0 / 24.0 * 2.0, 1.0 / 12.0 * 2.0, -1.0 / 12.0 * 2.0, -2.0 / 24.0 * 2.0];
        for (comp, e) in c.iter().zip(expected) {
            assert!((eval_poly(&b, comp, [0.2, 0.2]) - e).abs() < 1e-14);
        }
        let z = project_qs(|_| [[0.0; 2]; 2], &b, &REF, 1, &rule);
        assert!(z.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn qhp_preserves_mean_and_matches_local_oracle() {
        let mesh = uniform_triangulation(4, Rect::UNIT).unwrap();
        let rule = triangle_rule(8).unwrap();
        let bases: Vec<_> = (0..mesh.num_triangles())
            .map(|t| ElementBasis::orthonormal(t, &mesh.triangle_points(t), mesh.triangles[t].diameter, 1, &rule))
            .collect();
        let p = |q: Point| 10.0 * (2.0 * q[0] - 1.0) * (2.0 * q[1] - 1.0);
        let proj = project_qhp(p, &mesh, &bases, 1, &rule);
        assert!(proj.integral(&mesh, &bases, &rule).abs() < 1e-12);
        // a linear L2 fit takes the element mean at the centroid
        for t in 0..mesh.num_triangles() {
            let tri = mesh.triangle_points(t);
            let mean_xy: f64 = rule.on_triangle(&tri).iter().map(|(q, w)| w * q[0] * q[1]).sum::<f64>() / mesh.triangles[t].area;
            let c = mesh.triangles[t].centroid;
            let expect = 10.0 * (4.0 * mean_xy - 2.0 * c[0] - 2.0 * c[1] + 1.0);
            assert!((eval_poly(&bases[t], &proj.coeffs[t], c) - expect).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn projection_beats_random_competitors(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tri = [[0.0, 0.0], [1.0, 0.2], [0.3, 0.9]];
            let rule = triangle_rule(12).unwrap();
            let b = ElementBasis::orthonormal(0, &tri, 1.1, 4, &rule);
            let fc: Vec<f64> = (0..dim_p(4)).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = |p: Point| eval_poly(&b, &fc, p);
            let k = 2;
            let c = project_q0(f, &b, &tri, k, &rule);
            let err = |q: &[f64]| rule.on_triangle(&tri).iter().map(|(p, w)| w * (f(*p) - eval_poly(&b, q, *p)).powi(2)).sum::<f64>();
            let best = err(&c);
            for _ in 0..50 {
                let q: Vec<f64> = c.iter().map(|x| x + rng.random_range(-0.1..0.1)).collect();
                prop_assert!(best <= err(&q) + 1e-14);
            }
        }
    }
}
