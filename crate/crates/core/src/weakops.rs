//! Per-element discrete operators acting on local coefficient vectors: the
//! weak gradient correction, the full weak gradient and the weak divergence,
//! plus the local bilinear forms built from them.
//!
//! Local velocity layout: interior component 0 (`dk` coefficients), interior
//! component 1, then for each local edge `e` its component 0 and component 1
//! (`dj` coefficients each). Tensor coefficient vectors store component
//! `(i, j)` in block `2 * i + j`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::femspace::{
    dim_p, edge_rule, project_q0_vector, project_qb_vector, triangle_rule, EdgeBasis, ElementBasis, ElementConfig, FemError,
    QuadratureRule,
};
use crate::mesh::{Mesh, Point};

pub type Tensor = [[f64; 2]; 2];

/// Viscosity coefficient `A`, applied to each velocity component:
/// `(A grad u)_ij = sum_k A_jk d_k u_i`.
#[derive(Clone, Default)]
pub enum Viscosity {
    #[default]
    Identity,
    Constant(Tensor),
    Field(Arc<dyn Fn(Point) -> Tensor + Send + Sync>),
}

impl Viscosity {
    pub fn at(&self, p: Point) -> Tensor {
        match self {
            Viscosity::Identity => [[1.0, 0.0], [0.0, 1.0]],
            Viscosity::Constant(a) => *a,
            Viscosity::Field(f) => f(p),
        }
    }
}

impl std::fmt::Debug for Viscosity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Viscosity::Identity => write!(f, "Identity"),
            Viscosity::Constant(a) => write!(f, "Constant({a:?})"),
            Viscosity::Field(_) => write!(f, "Field(..)"),
        }
    }
}

/// Quadrature rules shared by all elements of one discretization.
#[derive(Debug, Clone)]
pub struct QuadratureSet {
    /// Exact for products of two element basis functions.
    pub element: QuadratureRule,
    /// Exact for products of two traces.
    pub edge: QuadratureRule,
    /// For integrands with non-polynomial data.
    pub data_element: QuadratureRule,
    pub data_edge: QuadratureRule,
}

impl QuadratureSet {
    pub fn new(cfg: &ElementConfig) -> Result<Self, FemError> {
        Ok(QuadratureSet {
            element: triangle_rule(cfg.element_quad_order())?,
            edge: edge_rule(cfg.edge_quad_order())?,
            data_element: triangle_rule(cfg.data_quad_order())?,
            data_edge: edge_rule(cfg.data_quad_order())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalDofLayout {
    /// Interior velocity degree.
    pub k: usize,
    /// Scalar dimensions of the interior, edge, weak gradient (full), weak
    /// gradient correction, weak divergence and pressure spaces.
    pub dk: usize,
    pub dj: usize,
    pub dr: usize,
    pub dl: usize,
    pub dm: usize,
    pub dn: usize,
}

impl LocalDofLayout {
    pub fn new(cfg: &ElementConfig) -> Self {
        LocalDofLayout {
            k: cfg.k,
            dk: dim_p(cfg.k),
            dj: cfg.j + 1,
            dr: dim_p(cfg.gradient_degree()),
            dl: dim_p(cfg.l),
            dm: dim_p(cfg.m),
            dn: dim_p(cfg.n),
        }
    }

    pub fn interior(&self, comp: usize, a: usize) -> usize {
        comp * self.dk + a
    }

    pub fn edge(&self, e: usize, comp: usize, c: usize) -> usize {
        2 * self.dk + e * 2 * self.dj + comp * self.dj + c
    }

    pub fn edge_offset(&self, e: usize) -> usize {
        2 * self.dk + e * 2 * self.dj
    }

    pub fn velocity_len(&self) -> usize {
        2 * self.dk + 6 * self.dj
    }
}

/// Geometry, bases and basis moments of one triangle.
#[derive(Debug, Clone)]
pub struct LocalElement {
    pub id: usize,
    pub tri: [Point; 3],
    pub diameter: f64,
    pub area: f64,
    pub basis: ElementBasis,
    pub edges: [EdgeBasis; 3],
    /// Outward unit normals of the local edges.
    pub normals: [[f64; 2]; 3],
    pub layout: LocalDofLayout,
    /// `edge_moments[e][(c, b)] = <psi_c, phi_b>_e` for edge basis `psi` and
    /// element basis `phi`.
    edge_moments: [DMatrix<f64>; 3],
    /// `grad_moments[i][(a, b)] = (phi_a, d_i phi_b)_T`.
    grad_moments: [DMatrix<f64>; 2],
    mass: DMatrix<f64>,
}

impl LocalElement {
    pub fn new(mesh: &Mesh, t: usize, cfg: &ElementConfig, rules: &QuadratureSet) -> Self {
        Self::build(mesh, t, cfg, rules, true)
    }

    /// Uses raw scaled monomials; every operator then goes through local mass
    /// matrix solves.
    pub fn new_monomial(mesh: &Mesh, t: usize, cfg: &ElementConfig, rules: &QuadratureSet) -> Self {
        Self::build(mesh, t, cfg, rules, false)
    }

    fn build(mesh: &Mesh, t: usize, cfg: &ElementConfig, rules: &QuadratureSet, orthonormal: bool) -> Self {
        let tri = mesh.triangle_points(t);
        let info = &mesh.triangles[t];
        let degree = cfg.basis_degree();
        let basis = if orthonormal {
            ElementBasis::orthonormal(t, &tri, info.diameter, degree, &rules.element)
        } else {
            ElementBasis::monomial(t, &tri, info.diameter, degree)
        };
        let edges: [EdgeBasis; 3] = std::array::from_fn(|i| {
            let e = info.edges[i];
            let [a, b] = mesh.edge_points(e);
            EdgeBasis::new(e, a, b, cfg.j)
        });
        let normals = std::array::from_fn(|i| mesh.outward_normal(t, i));
        Self::from_parts(t, tri, info.diameter, info.area, basis, edges, normals, cfg, rules)
    }

    /// Assembles a local element from explicit geometry, e.g. a standalone
    /// triangle with counter-clockwise vertices.
    pub fn standalone(tri: [Point; 3], cfg: &ElementConfig, rules: &QuadratureSet) -> Self {
        let d = |a: Point, b: Point| (a[0] - b[0]).hypot(a[1] - b[1]);
        let diameter = d(tri[0], tri[1]).max(d(tri[1], tri[2])).max(d(tri[2], tri[0]));
        let area = 0.5 * ((tri[1][0] - tri[0][0]) * (tri[2][1] - tri[0][1]) - (tri[2][0] - tri[0][0]) * (tri[1][1] - tri[0][1]));
        assert!(area > 0.0, "standalone triangle must be counter-clockwise");
        let basis = ElementBasis::orthonormal(0, &tri, diameter, cfg.basis_degree(), &rules.element);
        let edges = std::array::from_fn(|i| EdgeBasis::new(i, tri[i], tri[(i + 1) % 3], cfg.j));
        let normals = std::array::from_fn(|i| {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            let len = d(a, b);
            [(b[1] - a[1]) / len, -(b[0] - a[0]) / len]
        });
        Self::from_parts(0, tri, diameter, area, basis, edges, normals, cfg, rules)
    }

    #[allow(clippy::too_many_arguments)]
    fn from_parts(
        id: usize,
        tri: [Point; 3],
        diameter: f64,
        area: f64,
        basis: ElementBasis,
        edges: [EdgeBasis; 3],
        normals: [[f64; 2]; 3],
        cfg: &ElementConfig,
        rules: &QuadratureSet,
    ) -> Self {
        let nb = basis.dim();
        let dj = cfg.j + 1;
        let mut psi = vec![0.0; dj];
        let mut phi = vec![0.0; nb];
        let edge_moments = std::array::from_fn(|i| {
            let eb = &edges[i];
            let mut m = DMatrix::zeros(dj, nb);
            for (s, p, w) in rules.edge.on_segment(eb.start, eb.end) {
                eb.eval(s, &mut psi);
                basis.eval(p, &mut phi);
                for c in 0..dj {
                    for b in 0..nb {
                        m[(c, b)] += w * psi[c] * phi[b];
                    }
                }
            }
            m
        });
        let mut grad_moments = [DMatrix::zeros(nb, nb), DMatrix::zeros(nb, nb)];
        let mut grads = vec![[0.0; 2]; nb];
        for (p, w) in rules.element.on_triangle(&tri) {
            basis.eval(p, &mut phi);
            basis.eval_grad(p, &mut grads);
            for a in 0..nb {
                let wa = w * phi[a];
                for b in 0..nb {
                    grad_moments[0][(a, b)] += wa * grads[b][0];
                    grad_moments[1][(a, b)] += wa * grads[b][1];
                }
            }
        }
        let mass = if basis.is_orthonormal() { DMatrix::identity(nb, nb) } else { basis.mass_matrix(&tri, &rules.element, nb) };
        LocalElement {
            id,
            tri,
            diameter,
            area,
            basis,
            edges,
            normals,
            layout: LocalDofLayout::new(cfg),
            edge_moments,
            grad_moments,
            mass,
        }
    }

    /// `<psi_c, phi_b>_e`.
    pub fn edge_moment(&self, e: usize, c: usize, b: usize) -> f64 {
        self.edge_moments[e][(c, b)]
    }

    /// Mass matrix of the first `n` element basis functions.
    pub fn mass(&self, n: usize) -> DMatrix<f64> {
        self.mass.view((0, 0), (n, n)).into_owned()
    }

    /// Multiplies each of `blocks` consecutive row blocks of height `n` by the
    /// inverse of the degree-`n` mass matrix (no-op for orthonormal bases).
    fn solve_mass_blocks(&self, m: &mut DMatrix<f64>, n: usize, blocks: usize) {
        if self.basis.is_orthonormal() {
            return;
        }
        let chol = self.mass(n).cholesky().expect("element Gram matrix is positive definite");
        for blk in 0..blocks {
            let mut rows = m.rows_mut(blk * n, n);
            let solved = chol.solve(&rows.clone_owned());
            rows.copy_from(&solved);
        }
    }

    /// Value of the interior velocity at `p`.
    pub fn eval_interior(&self, coeffs: &[f64], p: Point) -> [f64; 2] {
        let dk = self.layout.dk;
        let mut v = vec![0.0; dk];
        self.basis.eval(p, &mut v);
        let dot = |c: &[f64]| c.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        [dot(&coeffs[..dk]), dot(&coeffs[dk..2 * dk])]
    }

    /// Value of the edge velocity on local edge `e` at parameter `s`.
    pub fn eval_edge(&self, coeffs: &[f64], e: usize, s: f64) -> [f64; 2] {
        let dj = self.layout.dj;
        let mut v = vec![0.0; dj];
        self.edges[e].eval(s, &mut v);
        let off = self.layout.edge_offset(e);
        let dot = |c: &[f64]| c.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        [dot(&coeffs[off..off + dj]), dot(&coeffs[off + dj..off + 2 * dj])]
    }

    /// Value at `p` of a scalar polynomial given by its leading coefficients.
    pub fn eval_scalar(&self, coeffs: &[f64], p: Point) -> f64 {
        let mut v = vec![0.0; coeffs.len()];
        self.basis.eval(p, &mut v);
        coeffs.iter().zip(&v).map(|(a, b)| a * b).sum()
    }

    /// Value at `p` of a tensor polynomial stored as four blocks of `n`.
    pub fn eval_tensor(&self, coeffs: &[f64], n: usize, p: Point) -> Tensor {
        let mut v = vec![0.0; n];
        self.basis.eval(p, &mut v);
        let mut out = [[0.0; 2]; 2];
        for c in 0..4 {
            out[c / 2][c % 2] = coeffs[c * n..(c + 1) * n].iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// Divergence `(sum_j d_j T_ij)_i` at `p` of a tensor polynomial.
    pub fn eval_tensor_divergence(&self, coeffs: &[f64], n: usize, p: Point) -> [f64; 2] {
        let mut g = vec![[0.0; 2]; n];
        self.basis.eval_grad(p, &mut g);
        let mut out = [0.0; 2];
        for i in 0..2 {
            for j in 0..2 {
                let c = &coeffs[(2 * i + j) * n..(2 * i + j + 1) * n];
                out[i] += c.iter().zip(&g).map(|(a, b)| a * b[j]).sum::<f64>();
            }
        }
        out
    }

    /// Local interpolant `(Q0 u, Qb u)` of a vector field.
    pub fn interpolate(&self, u: &dyn Fn(Point) -> [f64; 2], rules: &QuadratureSet) -> Vec<f64> {
        let lay = &self.layout;
        let mut out = vec![0.0; lay.velocity_len()];
        let [c0, c1] = project_q0_vector(u, &self.basis, &self.tri, lay.k, &rules.data_element);
        out[..lay.dk].copy_from_slice(&c0);
        out[lay.dk..2 * lay.dk].copy_from_slice(&c1);
        for e in 0..3 {
            let [b0, b1] = project_qb_vector(u, &self.edges[e], &rules.data_edge);
            let off = lay.edge_offset(e);
            out[off..off + lay.dj].copy_from_slice(&b0);
            out[off + lay.dj..off + 2 * lay.dj].copy_from_slice(&b1);
        }
        out
    }
}

/// The three operator matrices of one element and the local blocks built from
/// them.
#[derive(Debug, Clone)]
pub struct LocalOperatorSet {
    /// Weak gradient correction, `4 * dl` rows.
    pub delta: DMatrix<f64>,
    /// Full weak gradient, `4 * dr` rows.
    pub gradient: DMatrix<f64>,
    /// Weak divergence, `dm` rows.
    pub divergence: DMatrix<f64>,
    /// Trace mismatch `vb - Qb v0` per local edge, `2 * dj` rows each.
    pub mismatch: [DMatrix<f64>; 3],
}

impl LocalOperatorSet {
    pub fn build(local: &LocalElement, cfg: &ElementConfig) -> Self {
        let delta = build_delta_w(local, cfg);
        let gradient = build_weak_gradient(local, cfg, &delta);
        let divergence = build_weak_divergence(local, cfg);
        let mismatch = std::array::from_fn(|e| trace_mismatch(local, e));
        LocalOperatorSet { delta, gradient, divergence, mismatch }
    }

    /// `(A grad_w phi_c, grad_w phi_r)_T`.
    pub fn stiffness(&self, local: &LocalElement, viscosity: &Viscosity, rules: &QuadratureSet) -> DMatrix<f64> {
        let dr = local.layout.dr;
        match viscosity {
            Viscosity::Identity if local.basis.is_orthonormal() => self.gradient.tr_mul(&self.gradient),
            _ => {
                let weighted = viscosity_mass(local, viscosity, dr, rules);
                self.gradient.tr_mul(&(weighted * &self.gradient))
            }
        }
    }

    /// `h_T^-gamma <vb - Qb v0, wb - Qb w0>_{boundary of T}`.
    pub fn stabilizer(&self, local: &LocalElement, cfg: &ElementConfig) -> DMatrix<f64> {
        let n = local.layout.velocity_len();
        let mut s = DMatrix::zeros(n, n);
        for m in &self.mismatch {
            s += m.tr_mul(m);
        }
        s * local.diameter.powf(-cfg.gamma)
    }

    /// `(grad_w . phi_c, q_r)_T` for the `dn` pressure basis functions.
    pub fn divergence_coupling(&self, local: &LocalElement) -> DMatrix<f64> {
        let (dn, dm) = (local.layout.dn, local.layout.dm);
        let cross = local.mass.view((0, 0), (dn, dm)).into_owned();
        cross * &self.divergence
    }
}

/// `(f, v0)_T` for a body force `f`.
pub fn local_load(local: &LocalElement, f: &dyn Fn(Point) -> [f64; 2], rules: &QuadratureSet) -> Vec<f64> {
    let lay = &local.layout;
    let mut out = vec![0.0; lay.velocity_len()];
    let mut v = vec![0.0; lay.dk];
    for (p, w) in rules.data_element.on_triangle(&local.tri) {
        local.basis.eval(p, &mut v);
        let fv = f(p);
        for a in 0..lay.dk {
            out[lay.interior(0, a)] += w * fv[0] * v[a];
            out[lay.interior(1, a)] += w * fv[1] * v[a];
        }
    }
    out
}

fn viscosity_mass(local: &LocalElement, viscosity: &Viscosity, dr: usize, rules: &QuadratureSet) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(4 * dr, 4 * dr);
    let mut v = vec![0.0; dr];
    let rule = match viscosity {
        Viscosity::Field(_) => &rules.data_element,
        _ => &rules.element,
    };
    for (p, w) in rule.on_triangle(&local.tri) {
        local.basis.eval(p, &mut v);
        let a = viscosity.at(p);
        for i in 0..2 {
            for j in 0..2 {
                for jp in 0..2 {
                    let wa = w * a[j][jp];
                    if wa == 0.0 {
                        continue;
                    }
                    for x in 0..dr {
                        for y in 0..dr {
                            m[((2 * i + j) * dr + x, (2 * i + jp) * dr + y)] += wa * v[x] * v[y];
                        }
                    }
                }
            }
        }
    }
    m
}

/// Maps local velocity coefficients to the edge coefficients of
/// `vb - Qb v0` on local edge `e` (both components).
pub fn trace_mismatch(local: &LocalElement, e: usize) -> DMatrix<f64> {
    let lay = &local.layout;
    let mut m = DMatrix::zeros(2 * lay.dj, lay.velocity_len());
    for i in 0..2 {
        for c in 0..lay.dj {
            m[(i * lay.dj + c, lay.edge(e, i, c))] = 1.0;
            for a in 0..lay.dk {
                m[(i * lay.dj + c, lay.interior(i, a))] = -local.edge_moment(e, c, a);
            }
        }
    }
    m
}

/// Coefficients in `[P_l]^{2x2}` of the correction solving
/// `(delta v, phi)_T = <vb - Qb v0, phi n>_{boundary of T}`.
pub fn build_delta_w(local: &LocalElement, _cfg: &ElementConfig) -> DMatrix<f64> {
    let lay = &local.layout;
    let mut d = DMatrix::zeros(4 * lay.dl, lay.velocity_len());
    for e in 0..3 {
        let n = local.normals[e];
        let mm = trace_mismatch(local, e);
        for i in 0..2 {
            for j in 0..2 {
                for a in 0..lay.dl {
                    let row = (2 * i + j) * lay.dl + a;
                    for c in 0..lay.dj {
                        let coef = n[j] * local.edge_moment(e, c, a);
                        if coef == 0.0 {
                            continue;
                        }
                        for col in 0..lay.velocity_len() {
                            d[(row, col)] += coef * mm[(i * lay.dj + c, col)];
                        }
                    }
                }
            }
        }
    }
    local.solve_mass_blocks(&mut d, lay.dl, 4);
    d
}

/// Coefficients in `[P_r]^{2x2}`, `r = max(k - 1, l)`, of
/// `grad v0 + delta v`, where `delta` is the output of [`build_delta_w`].
pub fn build_weak_gradient(local: &LocalElement, _cfg: &ElementConfig, delta: &DMatrix<f64>) -> DMatrix<f64> {
    let lay = &local.layout;
    let mut g = DMatrix::zeros(4 * lay.dr, lay.velocity_len());
    for i in 0..2 {
        for j in 0..2 {
            for b in 0..lay.dr {
                for a in 0..lay.dk {
                    g[((2 * i + j) * lay.dr + b, lay.interior(i, a))] = local.grad_moments[j][(b, a)];
                }
            }
        }
    }
    local.solve_mass_blocks(&mut g, lay.dr, 4);
    for c in 0..4 {
        for a in 0..lay.dl {
            for col in 0..lay.velocity_len() {
                g[(c * lay.dr + a, col)] += delta[(c * lay.dl + a, col)];
            }
        }
    }
    g
}

/// Coefficients in `P_m` of the weak divergence
/// `(div_w v, z)_T = -(v0, grad z)_T + <vb . n, z>_{boundary of T}`.
pub fn build_weak_divergence(local: &LocalElement, _cfg: &ElementConfig) -> DMatrix<f64> {
    let lay = &local.layout;
    let mut dv = DMatrix::zeros(lay.dm, lay.velocity_len());
    for a in 0..lay.dm {
        for i in 0..2 {
            for al in 0..lay.dk {
                dv[(a, lay.interior(i, al))] = -local.grad_moments[i][(al, a)];
            }
            for e in 0..3 {
                let n = local.normals[e][i];
                for c in 0..lay.dj {
                    dv[(a, lay.edge(e, i, c))] = n * local.edge_moment(e, c, a);
                }
            }
        }
    }
    local.solve_mass_blocks(&mut dv, lay.dm, 1);
    dv
}

/// Residuals of `(grad_w Qh u, phi)_T - (grad u, phi)_T - ((I - Q0) u, div phi)_T`
/// for every basis tensor `phi` of `[P_s]^{2x2}`, all terms by quadrature.
pub fn commuting_check(
    u: &dyn Fn(Point) -> [f64; 2],
    grad_u: &dyn Fn(Point) -> Tensor,
    local: &LocalElement,
    ops: &LocalOperatorSet,
    cfg: &ElementConfig,
    rules: &QuadratureSet,
) -> Vec<f64> {
    let lay = &local.layout;
    let ds = dim_p(cfg.s());
    let interp = local.interpolate(u, rules);
    let gw = &ops.gradient * DVector::from_column_slice(&interp);
    let mut res = vec![0.0; 4 * ds];
    let mut v = vec![0.0; ds];
    let mut g = vec![[0.0; 2]; ds];
    for (p, w) in rules.data_element.on_triangle(&local.tri) {
        local.basis.eval(p, &mut v);
        local.basis.eval_grad(p, &mut g);
        let gwp = local.eval_tensor(gw.as_slice(), lay.dr, p);
        let gu = grad_u(p);
        let uv = u(p);
        let q0 = local.eval_interior(&interp, p);
        let rem = [uv[0] - q0[0], uv[1] - q0[1]];
        for i in 0..2 {
            for j in 0..2 {
                for a in 0..ds {
                    // phi = chi_a E_ij, (div phi)_i = d_j chi_a
                    let lhs = gwp[i][j] * v[a];
                    let rhs = gu[i][j] * v[a] + rem[i] * g[a][j];
                    res[(2 * i + j) * ds + a] += w * (lhs - rhs);
                }
            }
        }
    }
    res
}

/// `(G v, phi)_T + (v0, div phi)_T - <vb, phi n>_{boundary of T}` for a weak
/// gradient matrix `gradient` (rows in `[P_r]^{2x2}`), local velocity
/// coefficients `v` and tensor coefficients `phi` in `[P_s]^{2x2}`. Zero for
/// the true weak gradient whenever `s <= min(j, l)`.
pub fn weak_gradient_identity_residual(
    local: &LocalElement,
    gradient: &DMatrix<f64>,
    s: usize,
    rules: &QuadratureSet,
    v: &[f64],
    phi: &[f64],
) -> f64 {
    let lay = &local.layout;
    let ds = dim_p(s);
    let g: Vec<f64> = (gradient * DVector::from_column_slice(v)).iter().copied().collect();
    let mut res = 0.0;
    for (p, w) in rules.data_element.on_triangle(&local.tri) {
        let gt = local.eval_tensor(&g, lay.dr, p);
        let ph = local.eval_tensor(phi, ds, p);
        let dph = local.eval_tensor_divergence(phi, ds, p);
        let v0 = local.eval_interior(v, p);
        for i in 0..2 {
            for j in 0..2 {
                res += w * gt[i][j] * ph[i][j];
            }
            res += w * v0[i] * dph[i];
        }
    }
    for e in 0..3 {
        let n = local.normals[e];
        for (t, p, w) in rules.data_edge.on_segment(local.edges[e].start, local.edges[e].end) {
            let vb = local.eval_edge(v, e, t);
            let ph = local.eval_tensor(phi, ds, p);
            for i in 0..2 {
                res -= w * vb[i] * (ph[i][0] * n[0] + ph[i][1] * n[1]);
            }
        }
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{uniform_triangulation, Rect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TRI: [Point; 3] = [[0.1, 0.05], [0.6, 0.2], [0.25, 0.7]];

    fn setup(cfg: ElementConfig) -> (LocalElement, LocalOperatorSet, QuadratureSet) {
        let rules = QuadratureSet::new(&cfg).unwrap();
        let local = LocalElement::standalone(TRI, &cfg, &rules);
        let ops = LocalOperatorSet::build(&local, &cfg);
        (local, ops, rules)
    }

    fn apply(m: &DMatrix<f64>, c: &[f64]) -> Vec<f64> {
        (m * DVector::from_column_slice(c)).iter().copied().collect()
    }

    #[test]
    fn correction_vanishes_on_matching_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for cfg in [ElementConfig::new(2, 1, 1, 1, 1), ElementConfig::new(1, 0, 1, 0, 0), ElementConfig::new(3, 2, 2, 2, 2)] {
            let (local, ops, _) = setup(cfg);
            let lay = local.layout;
            for _ in 0..100 {
                let mut c = vec![0.0; lay.velocity_len()];
                for x in c[..2 * lay.dk].iter_mut() {
                    *x = rng.random_range(-1.0..1.0);
                }
                for e in 0..3 {
                    for i in 0..2 {
                        for cc in 0..lay.dj {
                            c[lay.edge(e, i, cc)] =
                                (0..lay.dk).map(|a| local.edge_moment(e, cc, a) * c[lay.interior(i, a)]).sum();
                        }
                    }
                }
                let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                let d = apply(&ops.delta, &c);
                assert!(d.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-12 * norm.max(1.0));
            }
        }
    }

    #[test]
    fn linear_interior_with_zero_traces_has_zero_weak_gradient() {
        let cfg = ElementConfig::new(1, 0, 0, 0, 0);
        let (local, ops, rules) = setup(cfg);
        let c = {
            let mut full = local.interpolate(&|p| [p[0], 0.0], &rules);
            let off = 2 * local.layout.dk;
            for x in full[off..].iter_mut() {
                *x = 0.0;
            }
            full
        };
        let d = apply(&ops.delta, &c);
        // delta = -e1 (x) e1: constant -1 in component (0,0), coefficient -sqrt|T|
        let p = [0.3, 0.3];
        let dt = local.eval_tensor(&d, local.layout.dl, p);
        assert!((dt[0][0] + 1.0).abs() < 1e-12);
        assert!(dt[0][1].abs() < 1e-12 && dt[1][0].abs() < 1e-12 && dt[1][1].abs() < 1e-12);
        let g = apply(&ops.gradient, &c);
        assert!(g.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn constant_traces_give_zero_correction() {
        let cfg = ElementConfig::new(1, 0, 0, 0, 0);
        let (local, ops, _) = setup(cfg);
        let lay = local.layout;
        let mut c = vec![0.0; lay.velocity_len()];
        for e in 0..3 {
            let mut v = [0.0];
            local.edges[e].eval(0.5, &mut v);
            c[lay.edge(e, 0, 0)] = 1.0 / v[0];
        }
        assert!(apply(&ops.delta, &c).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn weak_gradient_of_exact_linear_traces_is_classical() {
        let cfg = ElementConfig::new(2, 1, 1, 1, 1);
        let (local, ops, rules) = setup(cfg);
        let u = |p: Point| [2.0 * p[0] - p[1] + 0.5, 3.0 * p[1] + p[0]];
        let c = local.interpolate(&u, &rules);
        let g = apply(&ops.gradient, &c);
        for p in [[0.2, 0.2], [0.4, 0.3]] {
            let t = local.eval_tensor(&g, local.layout.dr, p);
            let expect = [[2.0, -1.0], [1.0, 3.0]];
            for i in 0..2 {
                for j in 0..2 {
                    assert!((t[i][j] - expect[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn weak_divergence_of_identity_field_is_two() {
        for cfg in [ElementConfig::new(1, 1, 0, 0, 0), ElementConfig::new(2, 1, 1, 1, 1)] {
            let (local, ops, rules) = setup(cfg);
            let c = local.interpolate(&|p| [p[0], p[1]], &rules);
            let dv = apply(&ops.divergence, &c);
            assert!((local.eval_scalar(&dv, [0.3, 0.3]) - 2.0).abs() < 1e-12);
            let k = local.interpolate(&|_| [1.5, -0.5], &rules);
            assert!(apply(&ops.divergence, &k).iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn identity_one_holds_for_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for cfg in [
            ElementConfig::new(1, 0, 1, 0, 0),
            ElementConfig::new(2, 1, 1, 1, 1),
            ElementConfig::new(2, 1, 0, 1, 1),
            ElementConfig::new(2, 1, 0, 2, 2),
            ElementConfig::new(3, 2, 3, 1, 2),
        ] {
            let (local, ops, rules) = setup(cfg);
            let lay = local.layout;
            let ds = dim_p(cfg.s());
            for _ in 0..20 {
                let c: Vec<f64> = (0..lay.velocity_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let phi: Vec<f64> = (0..4 * ds).map(|_| rng.random_range(-1.0..1.0)).collect();
                let g = apply(&ops.gradient, &c);
                let mut lhs = 0.0;
                let mut rhs = 0.0;
                for (p, w) in rules.data_element.on_triangle(&local.tri) {
                    let gt = local.eval_tensor(&g, lay.dr, p);
                    let ph = local.eval_tensor(&phi, ds, p);
                    let dph = local.eval_tensor_divergence(&phi, ds, p);
                    let v0 = local.eval_interior(&c, p);
                    for i in 0..2 {
                        for j in 0..2 {
                            lhs += w * gt[i][j] * ph[i][j];
                        }
                        rhs -= w * v0[i] * dph[i];
                    }
                }
                for e in 0..3 {
                    let n = local.normals[e];
                    for (s, p, w) in rules.data_edge.on_segment(local.edges[e].start, local.edges[e].end) {
                        let vb = local.eval_edge(&c, e, s);
                        let ph = local.eval_tensor(&phi, ds, p);
                        for i in 0..2 {
                            rhs += w * vb[i] * (ph[i][0] * n[0] + ph[i][1] * n[1]);
                        }
                    }
                }
                assert!((lhs - rhs).abs() < 1e-10, "{cfg}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn commuting_identity_for_polynomial_and_smooth_fields() {
        let cfg = ElementConfig::new(2, 1, 1, 1, 1);
        let (local, ops, rules) = setup(cfg);
        let u = |p: Point| [p[0] * p[0] * p[1], -p[0] * p[1] * p[1]];
        let gu = |p: Point| [[2.0 * p[0] * p[1], p[0] * p[0]], [-p[1] * p[1], -2.0 * p[0] * p[1]]];
        let r = commuting_check(&u, &gu, &local, &ops, &cfg, &rules);
        assert!(r.iter().all(|x| x.abs() < 1e-10), "{r:?}");

        let lin = ElementConfig::new(1, 1, 1, 0, 0);
        let (local, ops, rules) = setup(lin);
        let r = commuting_check(&|p| [p[0] - p[1], 2.0 * p[1]], &|_| [[1.0, -1.0], [0.0, 2.0]], &local, &ops, &lin, &rules);
        assert!(r.iter().all(|x| x.abs() < 1e-10));

        let mesh = uniform_triangulation(10, Rect::UNIT).unwrap();
        let rules = QuadratureSet::new(&cfg).unwrap();
        let local = LocalElement::new(&mesh, 37, &cfg, &rules);
        let ops = LocalOperatorSet::build(&local, &cfg);
        let u = |p: Point| [-p[0].cos() * p[1].sin(), p[0].sin() * p[1].cos()];
        let gu = |p: Point| {
            let (x, y) = (p[0], p[1]);
            [[x.sin() * y.sin(), -x.cos() * y.cos()], [x.cos() * y.cos(), -x.sin() * y.sin()]]
        };
        let r = commuting_check(&u, &gu, &local, &ops, &cfg, &rules);
        assert!(r.iter().all(|x| x.abs() < 1e-8), "{r:?}");
    }

    #[test]
    fn monomial_path_matches_orthonormal_path() {
        let cfg = ElementConfig::new(2, 1, 0, 2, 2);
        let mesh = uniform_triangulation(3, Rect::UNIT).unwrap();
        let rules = QuadratureSet::new(&cfg).unwrap();
        let a = LocalElement::new(&mesh, 4, &cfg, &rules);
        let b = LocalElement::new_monomial(&mesh, 4, &cfg, &rules);
        let oa = LocalOperatorSet::build(&a, &cfg);
        let ob = LocalOperatorSet::build(&b, &cfg);
        // identical edge bases, so the velocity coefficient spaces differ only
        // in the interior block; compare operator outputs on exact fields
        let u = |p: Point| [p[0] * p[1] + 1.0, p[0] - p[1] * p[1]];
        let ca = a.interpolate(&u, &rules);
        let cb = b.interpolate(&u, &rules);
        let ga = apply(&oa.gradient, &ca);
        let gb = apply(&ob.gradient, &cb);
        let da = apply(&oa.divergence, &ca);
        let db = apply(&ob.divergence, &cb);
        for p in [[0.2, 0.3], [0.1, 0.25]] {
            let (ta, tb) = (a.eval_tensor(&ga, a.layout.dr, p), b.eval_tensor(&gb, b.layout.dr, p));
            for i in 0..2 {
                for j in 0..2 {
                    assert!((ta[i][j] - tb[i][j]).abs() < 1e-9);
                }
            }
            assert!((a.eval_scalar(&da, p) - b.eval_scalar(&db, p)).abs() < 1e-9);
        }
        let quad = |l: &LocalElement, o: &LocalOperatorSet, c: &[f64]| {
            let v = DVector::from_column_slice(c);
            v.dot(&(o.stiffness(l, &Viscosity::Identity, &rules) * &v))
        };
        let (ka, kb) = (quad(&a, &oa, &ca), quad(&b, &ob, &cb));
        assert!((ka - kb).abs() < 1e-9 * ka.abs().max(1.0));
    }

    #[test]
    fn stiffness_and_stabilizer_are_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = ElementConfig::new(2, 1, 1, 1, 1);
        let (local, ops, rules) = setup(cfg);
        let aniso = Viscosity::Constant([[2.0, 0.5], [0.5, 1.0]]);
        for k in [
            ops.stiffness(&local, &Viscosity::Identity, &rules),
            ops.stiffness(&local, &aniso, &rules),
            ops.stabilizer(&local, &cfg),
        ] {
            assert!((&k - k.transpose()).amax() <= 1e-12 * k.amax());
            for _ in 0..20 {
                let v = DVector::from_fn(k.nrows(), |_, _| rng.random_range(-1.0..1.0));
                assert!(v.dot(&(&k * &v)) >= -1e-10);
            }
        }
    }
}
