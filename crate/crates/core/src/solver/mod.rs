//! Direct solve of the assembled system, projection-based error norms,
//! observed convergence orders and field export.

mod table;
pub mod vtk;

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

pub use table::{observed_order, ConvergenceRow, ConvergenceTable, Order, NOISE_FLOOR};

use crate::assembly::{GlobalSystem, PressureGauge, ProblemSpec, Slot};
use crate::femspace::{project_q0, ElementConfig};
use crate::mesh::Mesh;
use crate::sparse::{saddle_point_order, solve_refined, LdlFactor, LdlOptions, SparseError};
use crate::weakops::{LocalElement, LocalOperatorSet};

/// Accepted relative algebraic residual.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Refinement keeps going while above this.
const REFINE_TARGET: f64 = 1e-13;
const MAX_REFINEMENT: usize = 6;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("system for element {element} is singular ({flags}): {source}")]
    Singular { element: String, flags: String, source: SparseError },
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("error norms need the exact {0}")]
    MissingExact(&'static str),
}

#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    pub unknowns: usize,
    pub nnz: usize,
    pub nnz_factor: usize,
    pub regularized_pivots: usize,
    pub negative_pivots: usize,
    pub refinement_steps: usize,
    pub relative_residual: f64,
    pub factor_seconds: f64,
}

/// Discrete solution expanded to per-element and per-edge coefficients.
#[derive(Debug, Clone)]
pub struct Solution {
    pub config: ElementConfig,
    /// `2 * dk` coefficients per element: component 0, then component 1.
    pub interior: Vec<f64>,
    /// `2 * dj` coefficients per edge, boundary edges included.
    pub edges: Vec<f64>,
    /// `dn` coefficients per element (after any gauge shift).
    pub pressure: Vec<f64>,
    pub multiplier: f64,
    /// `int p_h` after the gauge shift.
    pub pressure_integral: f64,
    /// Raw solution vector in the numbering of the dof map.
    pub raw: Vec<f64>,
    pub stats: SolveStats,
}

impl Solution {
    /// Velocity coefficients of element `t` in the local layout.
    pub fn local_velocity(&self, mesh: &Mesh, t: usize) -> Vec<f64> {
        let cfg = &self.config;
        let (dk, dj) = (crate::femspace::dim_p(cfg.k), cfg.j + 1);
        let mut out = self.interior[t * 2 * dk..(t + 1) * 2 * dk].to_vec();
        for &e in &mesh.triangles[t].edges {
            out.extend_from_slice(&self.edges[e * 2 * dj..(e + 1) * 2 * dj]);
        }
        out
    }

    pub fn local_pressure(&self, t: usize) -> &[f64] {
        let dn = crate::femspace::dim_p(self.config.n);
        &self.pressure[t * dn..(t + 1) * dn]
    }

    /// Euclidean norm of all velocity coefficients.
    pub fn velocity_norm(&self) -> f64 {
        self.interior.iter().chain(&self.edges).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest `|u_b|` coefficient over the given edges.
    pub fn max_edge_coefficient(&self, edges: &[usize]) -> f64 {
        let dj = self.config.j + 1;
        edges.iter().flat_map(|&e| &self.edges[e * 2 * dj..(e + 1) * 2 * dj]).fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Factors and solves the system, then expands the solution.
pub fn solve(system: &GlobalSystem) -> Result<Solution, SolveError> {
    solve_with(system, LdlOptions::default())
}

pub fn solve_with(system: &GlobalSystem, opts: LdlOptions) -> Result<Solution, SolveError> {
    let cfg = system.config;
    let n = system.dofs.len();
    let start = Instant::now();
    let blocks = system.dofs.blocks();
    let perm = saddle_point_order(&system.matrix, &blocks);
    let signs = blocks.scalar_signs(n);
    let singular = |source: SparseError| match source {
        SparseError::Singular { .. } => SolveError::Singular { element: cfg.to_string(), flags: cfg.regime_flags(), source },
        other => SolveError::Sparse(other),
    };
    let factor = LdlFactor::factor(&system.matrix, &perm, &signs, opts).map_err(singular)?;
    let factor_seconds = start.elapsed().as_secs_f64();
    let (x, report) =
        solve_refined(&system.matrix, &factor, &system.rhs, REFINE_TARGET, RESIDUAL_TOL, MAX_REFINEMENT).map_err(singular)?;

    let dofs = &system.dofs;
    let nt = system.pressure_moments.len();
    let (dk, dj, dn) = (dofs.dk, dofs.dj, dofs.dn);
    let mut interior = vec![0.0; nt * 2 * dk];
    for t in 0..nt {
        for c in 0..2 {
            for a in 0..dk {
                interior[t * 2 * dk + c * dk + a] = x[dofs.interior(t, c, a)];
            }
        }
    }
    let ne = system.boundary_values.len();
    let mut edges = vec![0.0; ne * 2 * dj];
    for e in 0..ne {
        let block = &mut edges[e * 2 * dj..(e + 1) * 2 * dj];
        match &system.boundary_values[e] {
            Some(g) => block.copy_from_slice(g),
            None => {
                for c in 0..2 {
                    for i in 0..dj {
                        block[c * dj + i] = x[dofs.edge(e, c, i).expect("interior edge is free")];
                    }
                }
            }
        }
    }
    let mut pressure = vec![0.0; nt * dn];
    for t in 0..nt {
        for r in 0..dn {
            pressure[t * dn + r] = x[dofs.pressure(t, r)];
        }
    }
    let integral = |p: &[f64]| -> f64 {
        (0..nt).map(|t| p[t * dn..(t + 1) * dn].iter().zip(&system.pressure_moments[t]).map(|(a, b)| a * b).sum::<f64>()).sum()
    };
    if let PressureGauge::Point(_) = system.gauge {
        let area: f64 = (0..nt)
            .map(|t| system.pressure_unit[t].iter().zip(&system.pressure_moments[t]).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let mean = integral(&pressure) / area;
        for t in 0..nt {
            for r in 0..dn {
                pressure[t * dn + r] -= mean * system.pressure_unit[t][r];
            }
        }
    }
    let pressure_integral = integral(&pressure);
    Ok(Solution {
        config: cfg,
        interior,
        edges,
        pressure,
        multiplier: x[dofs.multiplier()],
        pressure_integral,
        raw: x,
        stats: SolveStats {
            unknowns: n,
            nnz: system.matrix.nnz(),
            nnz_factor: factor.stats.nnz_l,
            regularized_pivots: factor.stats.regularized,
            negative_pivots: factor.stats.negative_pivots,
            refinement_steps: report.iterations,
            relative_residual: report.relative_residual,
            factor_seconds,
        },
    })
}

/// The three reported error norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub h: f64,
    /// `|||Q_h u - u_h|||`
    pub energy: f64,
    /// `||Q_0 u - u_0||`
    pub l2_velocity: f64,
    /// `||Q_h^p p - p_h||`, with `p` shifted to zero mean.
    pub l2_pressure: f64,
}

/// How the norms of the error coefficients are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormEvaluation {
    /// Pointwise evaluation and quadrature.
    #[default]
    Quadrature,
    /// Quadratic forms with the local matrices.
    Coefficient,
}

struct LocalErrors {
    energy2: f64,
    l2u2: f64,
    l2p2: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Error norms of a solution against the exact fields of `spec`.
pub fn error_report(
    mesh: &Mesh,
    system: &GlobalSystem,
    solution: &Solution,
    spec: &ProblemSpec,
    method: NormEvaluation,
) -> Result<ErrorReport, SolveError> {
    let u = spec.exact_u.as_ref().ok_or(SolveError::MissingExact("velocity"))?;
    let p = spec.exact_p.as_ref().ok_or(SolveError::MissingExact("pressure"))?;
    let cfg = &system.config;
    let rules = &system.rules;
    let area = mesh.area();
    let p_integral: f64 = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| rules.data_element.on_triangle(&mesh.triangle_points(t)).into_iter().map(|(x, w)| w * p(x)).sum::<f64>())
        .sum();
    let p_mean = p_integral / area;

    let parts: Vec<LocalErrors> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let local = LocalElement::new(mesh, t, cfg, rules);
            let ops = LocalOperatorSet::build(&local, cfg);
            let lay = local.layout;
            let qu = local.interpolate(&|x| u(x), rules);
            let e: Vec<f64> = qu.iter().zip(solution.local_velocity(mesh, t)).map(|(a, b)| a - b).collect();
            let mut qp = project_q0(|x| p(x), &local.basis, &local.tri, cfg.n, &rules.data_element);
            for (q, one) in qp.iter_mut().zip(&system.pressure_unit[t]) {
                *q -= p_mean * one;
            }
            let ep: Vec<f64> = qp.iter().zip(solution.local_pressure(t)).map(|(a, b)| a - b).collect();
            match method {
                NormEvaluation::Coefficient => {
                    let ev = DVector::from_column_slice(&e);
                    let form = ops.stiffness(&local, &spec.viscosity, rules) + ops.stabilizer(&local, cfg);
                    let energy2 = ev.dot(&(form * &ev));
                    let mk = local.mass(lay.dk);
                    let l2u2 = (0..2)
                        .map(|c| {
                            let v = DVector::from_column_slice(&e[c * lay.dk..(c + 1) * lay.dk]);
                            v.dot(&(&mk * &v))
                        })
                        .sum();
                    let epv = DVector::from_column_slice(&ep);
                    let l2p2 = epv.dot(&(local.mass(lay.dn) * &epv));
                    LocalErrors { energy2, l2u2, l2p2 }
                }
                NormEvaluation::Quadrature => {
                    let g: Vec<f64> = (&ops.gradient * DVector::from_column_slice(&e)).iter().copied().collect();
                    let rule = match spec.viscosity {
                        crate::weakops::Viscosity::Field(_) => &rules.data_element,
                        _ => &rules.element,
                    };
                    let mut energy2 = 0.0;
                    let mut l2u2 = 0.0;
                    let mut l2p2 = 0.0;
                    for (x, w) in rule.on_triangle(&local.tri) {
                        let gw = local.eval_tensor(&g, lay.dr, x);
                        let a = spec.viscosity.at(x);
                        for i in 0..2 {
                            for j in 0..2 {
                                let agij: f64 = (0..2).map(|k| a[j][k] * gw[i][k]).sum();
                                energy2 += w * agij * gw[i][j];
                            }
                        }
                        let e0 = local.eval_interior(&e, x);
                        l2u2 += w * (e0[0] * e0[0] + e0[1] * e0[1]);
                        let pe = local.eval_scalar(&ep, x);
                        l2p2 += w * pe * pe;
                    }
                    let mut psi = vec![0.0; lay.dj];
                    let mut boundary = 0.0;
                    for (k, mm) in ops.mismatch.iter().enumerate() {
                        let m: Vec<f64> = (mm * DVector::from_column_slice(&e)).iter().copied().collect();
                        let eb = &local.edges[k];
                        for (s, _, w) in rules.edge.on_segment(eb.start, eb.end) {
                            eb.eval(s, &mut psi);
                            let v0 = dot(&m[..lay.dj], &psi);
                            let v1 = dot(&m[lay.dj..], &psi);
                            boundary += w * (v0 * v0 + v1 * v1);
                        }
                    }
                    energy2 += boundary * local.diameter.powf(-cfg.gamma);
                    LocalErrors { energy2, l2u2, l2p2 }
                }
            }
        })
        .collect();
    let sum = |f: fn(&LocalErrors) -> f64| parts.iter().map(f).sum::<f64>().max(0.0).sqrt();
    Ok(ErrorReport { h: mesh.h, energy: sum(|l| l.energy2), l2_velocity: sum(|l| l.l2u2), l2_pressure: sum(|l| l.l2p2) })
}

/// Residual of the discrete continuity equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassBalance {
    /// `max_q |(div_w u_h, q) + s2(p_h, q)|` over the pressure basis.
    pub max_residual: f64,
    pub velocity_norm: f64,
}

/// Evaluates the second equation of the scheme for every pressure basis
/// function.
pub fn mass_balance(mesh: &Mesh, system: &GlobalSystem, solution: &Solution) -> MassBalance {
    let cfg = &system.config;
    let rules = &system.rules;
    let dn = system.dofs.dn;
    let mut residual: Vec<f64> = (0..mesh.num_triangles())
        .into_par_iter()
        .flat_map_iter(|t| {
            let local = LocalElement::new(mesh, t, cfg, rules);
            let ops = LocalOperatorSet::build(&local, cfg);
            let b = ops.divergence_coupling(&local);
            (b * DVector::from_column_slice(&solution.local_velocity(mesh, t))).iter().copied().collect::<Vec<_>>()
        })
        .collect();
    debug_assert_eq!(residual.len(), mesh.num_triangles() * dn);
    if cfg.mu > 0.0 {
        let sp = system.pressure_block().matvec(&solution.pressure);
        for (r, s) in residual.iter_mut().zip(sp) {
            *r += s;
        }
    }
    MassBalance { max_residual: residual.iter().fold(0.0f64, |m, v| m.max(v.abs())), velocity_norm: solution.velocity_norm() }
}

/// Relative algebraic residual `|K z - b| / |b|` of a raw solution vector.
pub fn algebraic_residual(system: &GlobalSystem, raw: &[f64]) -> f64 {
    let r = system.matrix.matvec(raw);
    let num: f64 = r.iter().zip(&system.rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den: f64 = system.rhs.iter().map(|b| b * b).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Velocity coefficient vector of the interpolant `Q_h u` in the free
/// numbering, with pressure and multiplier zero.
pub fn interpolant_vector(mesh: &Mesh, system: &GlobalSystem, u: &dyn Fn(crate::mesh::Point) -> [f64; 2]) -> Vec<f64> {
    let mut z = vec![0.0; system.dofs.len()];
    for t in 0..mesh.num_triangles() {
        let local = LocalElement::new(mesh, t, &system.config, &system.rules);
        let q = local.interpolate(u, &system.rules);
        for (v, s) in q.iter().zip(system.dofs.velocity_slots(mesh, t)) {
            if let Slot::Free(g) = s {
                z[g] = *v;
            }
        }
    }
    z
}
