//! Global saddle-point system.
//!
//! Unknowns are ordered by a [`DofMap`]. The assembled matrix is
//!
//! ```text
//! [ A + S1   -B^T   0 ]
//! [ -B       -S2    c ]
//! [ 0         c^T   0 ]
//! ```
//!
//! i.e. the continuity equation is multiplied by `-1` so the matrix is
//! symmetric; the pressure unknown itself is not rescaled. `c` carries the
//! pressure gauge (zero mean or a point value). Boundary edge unknowns are
//! eliminated with their values moved to the right-hand side.

mod dofmap;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

pub use dofmap::{DofKind, DofMap, Slot};

use crate::femspace::{project_qb_vector, EdgeBasis, ElementConfig, FemError};
use crate::mesh::{Mesh, Point};
use crate::sparse::CsrMatrix;
use crate::weakops::{local_load, LocalElement, LocalOperatorSet};
pub use crate::weakops::{QuadratureSet, Tensor, Viscosity};

pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type TensorField = Arc<dyn Fn(Point) -> Tensor + Send + Sync>;

/// Dirichlet velocity data.
#[derive(Clone)]
pub enum BoundaryData {
    /// One field on the whole boundary, tags ignored.
    Everywhere(VectorField),
    /// One field per boundary tag; every tag in the mesh must be present.
    Tagged(BTreeMap<i32, VectorField>),
}

impl BoundaryData {
    pub fn for_tag(&self, tag: Option<i32>) -> Option<&VectorField> {
        match self {
            BoundaryData::Everywhere(g) => Some(g),
            BoundaryData::Tagged(m) => tag.and_then(|t| m.get(&t)),
        }
    }
}

/// How the additive pressure constant is fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PressureGauge {
    /// `int p_h = 0` through a Lagrange multiplier.
    Mean,
    /// `p_h(x) = 0` in the element containing `x`; the solution is shifted to
    /// zero mean afterwards.
    Point(Point),
}

/// Data of one Stokes problem.
#[derive(Clone)]
pub struct ProblemSpec {
    pub viscosity: Viscosity,
    pub body_force: VectorField,
    pub dirichlet: BoundaryData,
    pub gauge: PressureGauge,
    pub exact_u: Option<VectorField>,
    pub exact_grad_u: Option<TensorField>,
    pub exact_p: Option<ScalarField>,
}

impl ProblemSpec {
    pub fn new(body_force: VectorField, dirichlet: BoundaryData) -> Self {
        ProblemSpec {
            viscosity: Viscosity::Identity,
            body_force,
            dirichlet,
            gauge: PressureGauge::Mean,
            exact_u: None,
            exact_grad_u: None,
            exact_p: None,
        }
    }

    /// Manufactured problem: Dirichlet data is the trace of `u`.
    pub fn manufactured(u: VectorField, grad_u: TensorField, p: ScalarField, body_force: VectorField) -> Self {
        let mut s = Self::new(body_force, BoundaryData::Everywhere(u.clone()));
        s.exact_u = Some(u);
        s.exact_grad_u = Some(grad_u);
        s.exact_p = Some(p);
        s
    }

    pub fn with_viscosity(mut self, viscosity: Viscosity) -> Self {
        self.viscosity = viscosity;
        self
    }

    pub fn with_gauge(mut self, gauge: PressureGauge) -> Self {
        self.gauge = gauge;
        self
    }
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("viscosity", &self.viscosity)
            .field("gauge", &self.gauge)
            .field("exact_u", &self.exact_u.is_some())
            .field("exact_p", &self.exact_p.is_some())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("viscosity at ({x:.4}, {y:.4}) is not symmetric positive definite: {reason}")]
    Viscosity { x: f64, y: f64, reason: String },
    #[error("boundary edges with tag {0:?} have no Dirichlet data")]
    MissingBoundaryData(Option<i32>),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Local matrices of one element.
#[derive(Debug, Clone)]
pub struct ElementBlocks {
    /// `(A grad_w phi_c, grad_w phi_r)`.
    pub stiffness: DMatrix<f64>,
    /// Velocity stabilizer `s1`.
    pub s1: DMatrix<f64>,
    /// `(div_w phi_c, psi_r)`, pressure rows.
    pub divergence: DMatrix<f64>,
    /// `(f, phi_0)`.
    pub load: Vec<f64>,
    /// `int_T psi_r`.
    pub pressure_moments: Vec<f64>,
    /// Coefficients of the constant 1 in the pressure basis.
    pub pressure_unit: Vec<f64>,
    /// Pressure basis values at the edge quadrature points of each local edge,
    /// `nq x dn`, in the global orientation of the edge.
    pub pressure_traces: [DMatrix<f64>; 3],
}

fn check_viscosity(local: &LocalElement, viscosity: &Viscosity, rules: &QuadratureSet) -> Result<(), AssemblyError> {
    let points: Vec<Point> = match viscosity {
        Viscosity::Identity => return Ok(()),
        Viscosity::Constant(_) => vec![local.tri[0]],
        Viscosity::Field(_) => rules.data_element.on_triangle(&local.tri).into_iter().map(|(p, _)| p).collect(),
    };
    for p in points {
        let a = viscosity.at(p);
        let bad = |reason: String| AssemblyError::Viscosity { x: p[0], y: p[1], reason };
        let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if !a.iter().flatten().all(|v| v.is_finite()) {
            return Err(bad("non-finite entry".into()));
        }
        if (a[0][1] - a[1][0]).abs() > 1e-12 * scale {
            return Err(bad(format!("asymmetric off-diagonal {} vs {}", a[0][1], a[1][0])));
        }
        let (tr, det) = (a[0][0] + a[1][1], a[0][0] * a[1][1] - a[0][1] * a[1][0]);
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        let lmin = 0.5 * tr - disc;
        if lmin <= 0.0 {
            return Err(bad(format!("smallest eigenvalue {lmin:.3e}")));
        }
    }
    Ok(())
}

/// Local matrices of element `t`.
pub fn element_blocks(
    mesh: &Mesh,
    t: usize,
    cfg: &ElementConfig,
    spec: &ProblemSpec,
    rules: &QuadratureSet,
) -> Result<ElementBlocks, AssemblyError> {
    let local = LocalElement::new(mesh, t, cfg, rules);
    check_viscosity(&local, &spec.viscosity, rules)?;
    let ops = LocalOperatorSet::build(&local, cfg);
    let dn = local.layout.dn;
    let mut moments = vec![0.0; dn];
    let mut psi = vec![0.0; dn];
    for (p, w) in rules.element.on_triangle(&local.tri) {
        local.basis.eval(p, &mut psi);
        for (m, v) in moments.iter_mut().zip(&psi) {
            *m += w * v;
        }
    }
    let unit = if local.basis.is_orthonormal() {
        moments.clone()
    } else {
        let chol = local.mass(dn).cholesky().expect("pressure Gram matrix is positive definite");
        chol.solve(&DVector::from_column_slice(&moments)).iter().copied().collect()
    };
    let traces = std::array::from_fn(|i| {
        let [a, b] = mesh.edge_points(mesh.triangles[t].edges[i]);
        let pts = rules.edge.on_segment(a, b);
        let mut m = DMatrix::zeros(pts.len(), dn);
        for (q, (_, p, _)) in pts.iter().enumerate() {
            local.basis.eval(*p, &mut psi);
            for r in 0..dn {
                m[(q, r)] = psi[r];
            }
        }
        m
    });
    Ok(ElementBlocks {
        stiffness: ops.stiffness(&local, &spec.viscosity, rules),
        s1: ops.stabilizer(&local, cfg),
        divergence: ops.divergence_coupling(&local),
        load: local_load(&local, &*spec.body_force, rules),
        pressure_moments: moments,
        pressure_unit: unit,
        pressure_traces: traces,
    })
}

/// `mu h_e^-beta <[p], [q]>_e` on interior edge `e` for the pressure blocks of
/// its two owners (first owner first); the jump is first minus second owner.
pub fn edge_jump_matrix(
    mesh: &Mesh,
    e: usize,
    cfg: &ElementConfig,
    rules: &QuadratureSet,
    traces: [&DMatrix<f64>; 2],
) -> DMatrix<f64> {
    let edge = &mesh.edges[e];
    let [a, b] = mesh.edge_points(e);
    let dn = traces[0].ncols();
    let mut j = DMatrix::zeros(2 * dn, 2 * dn);
    let mut v = vec![0.0; 2 * dn];
    for (q, (_, _, w)) in rules.edge.on_segment(a, b).into_iter().enumerate() {
        for r in 0..dn {
            v[r] = traces[0][(q, r)];
            v[dn + r] = -traces[1][(q, r)];
        }
        for x in 0..2 * dn {
            for y in 0..2 * dn {
                j[(x, y)] += w * v[x] * v[y];
            }
        }
    }
    j * (cfg.mu * edge.diameter.powf(-cfg.beta))
}

fn local_edge_index(mesh: &Mesh, t: usize, e: usize) -> usize {
    mesh.triangles[t].edges.iter().position(|&x| x == e).expect("edge belongs to its owner")
}

/// Coefficients of `Q_b g` on every boundary edge (both components, layout
/// of one local edge block); `None` on interior edges.
pub fn boundary_values(
    mesh: &Mesh,
    cfg: &ElementConfig,
    data: &BoundaryData,
    rules: &QuadratureSet,
) -> Result<Vec<Option<Vec<f64>>>, AssemblyError> {
    mesh.edges
        .iter()
        .map(|edge| {
            if !edge.is_boundary() {
                return Ok(None);
            }
            let g = data.for_tag(edge.tag()).ok_or(AssemblyError::MissingBoundaryData(edge.tag()))?;
            let [a, b] = mesh.edge_points(edge.id);
            let [c0, c1] = project_qb_vector(|p| g(p), &EdgeBasis::new(edge.id, a, b, cfg.j), &rules.data_edge);
            Ok(Some(c0.into_iter().chain(c1).collect()))
        })
        .collect()
}

/// Assembled, constrained system.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub config: ElementConfig,
    pub rules: QuadratureSet,
    pub dofs: DofMap,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub gauge: PressureGauge,
    /// Per edge, the fixed coefficients of boundary edges.
    pub boundary_values: Vec<Option<Vec<f64>>>,
    /// Entries `(pressure dof, c_r)` of the gauge row.
    pub constraint: Vec<(usize, f64)>,
    pub pressure_moments: Vec<Vec<f64>>,
    pub pressure_unit: Vec<Vec<f64>>,
}

const CHUNK: usize = 2048;

impl GlobalSystem {
    pub fn assemble(mesh: &Mesh, cfg: &ElementConfig, spec: &ProblemSpec) -> Result<Self, AssemblyError> {
        Self::assemble_with(mesh, cfg, spec, DofMap::new(mesh, cfg))
    }

    /// Assembles with a given (possibly renumbered) dof map.
    pub fn assemble_with(mesh: &Mesh, cfg: &ElementConfig, spec: &ProblemSpec, dofs: DofMap) -> Result<Self, AssemblyError> {
        cfg.validate()?;
        let rules = QuadratureSet::new(cfg)?;
        let boundary = boundary_values(mesh, cfg, &spec.dirichlet, &rules)?;
        let nt = mesh.num_triangles();
        let n = dofs.len();
        let mult = dofs.multiplier();

        // constraint row needs only geometry and the pressure basis
        let mut constraint_local: Vec<(usize, Vec<f64>)> = Vec::new();
        if let PressureGauge::Point(x) = spec.gauge {
            let t = mesh.locate(x);
            let local = LocalElement::new(mesh, t, cfg, &rules);
            let mut psi = vec![0.0; dofs.dn];
            local.basis.eval(x, &mut psi);
            constraint_local.push((t, psi));
        }

        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut dofs_t = Vec::new();
        for t in 0..nt {
            dofs_t.clear();
            dofs_t.extend(dofs.velocity_slots(mesh, t).into_iter().filter_map(|s| match s {
                Slot::Free(g) => Some(g),
                Slot::Fixed { .. } => None,
            }));
            dofs_t.extend(dofs.pressure_slots(t));
            for &a in &dofs_t {
                rows[a].extend_from_slice(&dofs_t);
            }
        }
        if cfg.mu > 0.0 {
            for edge in mesh.edges.iter().filter(|e| !e.is_boundary()) {
                let (t1, t2) = (edge.owners.0, edge.owners.1.expect("interior edge"));
                let p: Vec<usize> = dofs.pressure_slots(t1).into_iter().chain(dofs.pressure_slots(t2)).collect();
                for &a in &p {
                    rows[a].extend_from_slice(&p);
                }
            }
        }
        rows[mult].push(mult);
        match spec.gauge {
            PressureGauge::Mean => {
                for t in 0..nt {
                    for g in dofs.pressure_slots(t) {
                        rows[mult].push(g);
                        rows[g].push(mult);
                    }
                }
            }
            PressureGauge::Point(_) => {
                for (t, _) in &constraint_local {
                    for g in dofs.pressure_slots(*t) {
                        rows[mult].push(g);
                        rows[g].push(mult);
                    }
                }
            }
        }
        let mut matrix = CsrMatrix::from_pattern(n, rows);
        let mut rhs = vec![0.0; n];
        let mut pressure_moments = Vec::with_capacity(nt);
        let mut pressure_unit = Vec::with_capacity(nt);
        let mut traces: Vec<[DMatrix<f64>; 3]> = Vec::with_capacity(nt);

        for start in (0..nt).step_by(CHUNK) {
            let end = (start + CHUNK).min(nt);
            let blocks: Vec<ElementBlocks> =
                (start..end).into_par_iter().map(|t| element_blocks(mesh, t, cfg, spec, &rules)).collect::<Result<_, _>>()?;
            for (t, blk) in (start..end).zip(blocks) {
                insert_element(&mut matrix, &mut rhs, &dofs.velocity_slots(mesh, t), &dofs.pressure_slots(t), &blk, &boundary);
                pressure_moments.push(blk.pressure_moments);
                pressure_unit.push(blk.pressure_unit);
                traces.push(blk.pressure_traces);
            }
        }

        if cfg.mu > 0.0 {
            let interior: Vec<usize> = mesh.edges.iter().filter(|e| !e.is_boundary()).map(|e| e.id).collect();
            let jumps: Vec<DMatrix<f64>> = interior
                .par_iter()
                .map(|&e| {
                    let edge = &mesh.edges[e];
                    let (t1, t2) = (edge.owners.0, edge.owners.1.expect("interior edge"));
                    let tr = [&traces[t1][local_edge_index(mesh, t1, e)], &traces[t2][local_edge_index(mesh, t2, e)]];
                    edge_jump_matrix(mesh, e, cfg, &rules, tr)
                })
                .collect();
            for (&e, j) in interior.iter().zip(jumps) {
                let edge = &mesh.edges[e];
                let p: Vec<usize> = dofs
                    .pressure_slots(edge.owners.0)
                    .into_iter()
                    .chain(dofs.pressure_slots(edge.owners.1.expect("interior")))
                    .collect();
                for (x, &gx) in p.iter().enumerate() {
                    for (y, &gy) in p.iter().enumerate() {
                        matrix.add(gx, gy, -j[(x, y)]);
                    }
                }
            }
        }

        let raw: Vec<(usize, f64)> = match spec.gauge {
            PressureGauge::Mean => {
                (0..nt).flat_map(|t| dofs.pressure_slots(t).into_iter().zip(pressure_moments[t].clone())).collect()
            }
            PressureGauge::Point(_) => {
                constraint_local.iter().flat_map(|(t, psi)| dofs.pressure_slots(*t).into_iter().zip(psi.clone())).collect()
            }
        };
        let cmax = raw.iter().fold(0.0f64, |m, e| m.max(e.1.abs()));
        let constraint: Vec<(usize, f64)> = raw.into_iter().filter(|e| e.1.abs() > 1e-13 * cmax).collect();
        for &(g, v) in &constraint {
            matrix.add(mult, g, v);
            matrix.add(g, mult, v);
        }

        Ok(GlobalSystem {
            config: *cfg,
            rules,
            dofs,
            matrix,
            rhs,
            gauge: spec.gauge,
            boundary_values: boundary,
            constraint,
            pressure_moments,
            pressure_unit,
        })
    }

    /// Velocity-velocity block `A + S1` (canonical velocity order).
    pub fn velocity_block(&self) -> CsrMatrix {
        let v = self.dofs.velocity_dofs();
        self.matrix.select(&v, &v)
    }

    /// `B` with `B(q, v) = (div_w v, q)` (pressure rows, velocity columns).
    pub fn divergence_block(&self) -> CsrMatrix {
        let mut b = self.matrix.select(&self.dofs.pressure_dofs(), &self.dofs.velocity_dofs());
        b.values.iter_mut().for_each(|v| *v = -*v);
        b
    }

    /// Pressure stabilizer block `S2`.
    pub fn pressure_block(&self) -> CsrMatrix {
        let p = self.dofs.pressure_dofs();
        let mut s = self.matrix.select(&p, &p);
        s.values.iter_mut().for_each(|v| *v = -*v);
        s
    }

    /// Writes `<stem>.mtx` (lower triangle, symmetric) and `<stem>_rhs.mtx`.
    pub fn write_matrix_market(&self, dir: &Path, stem: &str) -> Result<(), AssemblyError> {
        use std::fmt::Write as _;
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.mtx")), self.matrix.to_matrix_market(true))?;
        let mut s = String::from("%%MatrixMarket matrix array real general\n");
        let _ = writeln!(s, "{} 1", self.rhs.len());
        for v in &self.rhs {
            let _ = writeln!(s, "{v:.17e}");
        }
        std::fs::write(dir.join(format!("{stem}_rhs.mtx")), s)?;
        Ok(())
    }
}

fn fixed_value(boundary: &[Option<Vec<f64>>], edge: usize, offset: usize) -> f64 {
    boundary[edge].as_ref().expect("fixed slot on a boundary edge")[offset]
}

fn insert_element(
    matrix: &mut CsrMatrix,
    rhs: &mut [f64],
    vs: &[Slot],
    ps: &[usize],
    blk: &ElementBlocks,
    boundary: &[Option<Vec<f64>>],
) {
    for (r, sr) in vs.iter().enumerate() {
        let Slot::Free(gr) = *sr else { continue };
        rhs[gr] += blk.load[r];
        for (c, sc) in vs.iter().enumerate() {
            let v = blk.stiffness[(r, c)] + blk.s1[(r, c)];
            match *sc {
                Slot::Free(gc) => matrix.add(gr, gc, v),
                Slot::Fixed { edge, offset } => rhs[gr] -= v * fixed_value(boundary, edge, offset),
            }
        }
    }
    for (q, &pq) in ps.iter().enumerate() {
        for (c, sc) in vs.iter().enumerate() {
            let v = -blk.divergence[(q, c)];
            match *sc {
                Slot::Free(gc) => {
                    matrix.add(pq, gc, v);
                    matrix.add(gc, pq, v);
                }
                Slot::Fixed { edge, offset } => rhs[pq] -= v * fixed_value(boundary, edge, offset),
            }
        }
    }
}

/// Individual blocks on the full (unconstrained) space, assembled from
/// triplets. Columns of fixed slots are dropped, so with a boundary
/// constrained dof map these are the blocks acting on `V_h^0`.
pub mod blocks {
    use super::*;

    fn collect(n: usize, triplets: Vec<(usize, usize, f64)>) -> CsrMatrix {
        CsrMatrix::from_triplets(n, n, &triplets)
    }

    fn per_element<F>(mesh: &Mesh, cfg: &ElementConfig, spec: &ProblemSpec, mut f: F) -> Result<(), AssemblyError>
    where
        F: FnMut(usize, &ElementBlocks),
    {
        let rules = QuadratureSet::new(cfg)?;
        for t in 0..mesh.num_triangles() {
            let blk = element_blocks(mesh, t, cfg, spec, &rules)?;
            f(t, &blk);
        }
        Ok(())
    }

    fn velocity_form(
        mesh: &Mesh,
        cfg: &ElementConfig,
        spec: &ProblemSpec,
        dofs: &DofMap,
        pick: impl Fn(&ElementBlocks) -> &DMatrix<f64>,
    ) -> Result<CsrMatrix, AssemblyError> {
        let mut tr = Vec::new();
        per_element(mesh, cfg, spec, |t, blk| {
            let vs = dofs.velocity_slots(mesh, t);
            let m = pick(blk);
            for (r, sr) in vs.iter().enumerate() {
                for (c, sc) in vs.iter().enumerate() {
                    if let (Slot::Free(a), Slot::Free(b)) = (sr, sc) {
                        tr.push((*a, *b, m[(r, c)]));
                    }
                }
            }
        })?;
        Ok(collect(dofs.len(), tr))
    }

    /// `(A grad_w u, grad_w v)`.
    pub fn stiffness(mesh: &Mesh, cfg: &ElementConfig, spec: &ProblemSpec, dofs: &DofMap) -> Result<CsrMatrix, AssemblyError> {
        velocity_form(mesh, cfg, spec, dofs, |b| &b.stiffness)
    }

    /// `s1(u, v)`.
    pub fn s1(mesh: &Mesh, cfg: &ElementConfig, spec: &ProblemSpec, dofs: &DofMap) -> Result<CsrMatrix, AssemblyError> {
        velocity_form(mesh, cfg, spec, dofs, |b| &b.s1)
    }

    /// `B(q, v) = (div_w v, q)`, stored at (pressure, velocity) positions.
    pub fn divergence(mesh: &Mesh, cfg: &ElementConfig, spec: &ProblemSpec, dofs: &DofMap) -> Result<CsrMatrix, AssemblyError> {
        let mut tr = Vec::new();
        per_element(mesh, cfg, spec, |t, blk| {
            let vs = dofs.velocity_slots(mesh, t);
            for (q, pq) in dofs.pressure_slots(t).into_iter().enumerate() {
                for (c, sc) in vs.iter().enumerate() {
                    if let Slot::Free(b) = sc {
                        tr.push((pq, *b, blk.divergence[(q, c)]));
                    }
                }
            }
        })?;
        Ok(collect(dofs.len(), tr))
    }

    /// `s2(p, q)`.
    pub fn s2(mesh: &Mesh, cfg: &ElementConfig, spec: &ProblemSpec, dofs: &DofMap) -> Result<CsrMatrix, AssemblyError> {
        let rules = QuadratureSet::new(cfg)?;
        let mut traces = Vec::new();
        per_element(mesh, cfg, spec, |_, blk| traces.push(blk.pressure_traces.clone()))?;
        let mut tr = Vec::new();
        for edge in mesh.edges.iter().filter(|e| !e.is_boundary()) {
            let (t1, t2) = (edge.owners.0, edge.owners.1.expect("interior edge"));
            let j = edge_jump_matrix(
                mesh,
                edge.id,
                cfg,
                &rules,
                [&traces[t1][local_edge_index(mesh, t1, edge.id)], &traces[t2][local_edge_index(mesh, t2, edge.id)]],
            );
            let p: Vec<usize> = dofs.pressure_slots(t1).into_iter().chain(dofs.pressure_slots(t2)).collect();
            for (x, &gx) in p.iter().enumerate() {
                for (y, &gy) in p.iter().enumerate() {
                    tr.push((gx, gy, j[(x, y)]));
                }
            }
        }
        Ok(collect(dofs.len(), tr))
    }

    /// `(f, v0)` on the free velocity unknowns.
    pub fn load(mesh: &Mesh, cfg: &ElementConfig, spec: &ProblemSpec, dofs: &DofMap) -> Result<Vec<f64>, AssemblyError> {
        let mut out = vec![0.0; dofs.len()];
        per_element(mesh, cfg, spec, |t, blk| {
            for (r, s) in dofs.velocity_slots(mesh, t).into_iter().enumerate() {
                if let Slot::Free(g) = s {
                    out[g] += blk.load[r];
                }
            }
        })?;
        Ok(out)
    }
}
