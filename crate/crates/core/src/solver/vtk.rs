//! Legacy ASCII VTK output (unstructured grid of triangles).

use std::fmt::Write as _;
use std::path::Path;

use super::Solution;
use crate::assembly::GlobalSystem;
use crate::mesh::Mesh;
use crate::weakops::LocalElement;

pub const VTK_TRIANGLE: u8 = 5;

#[derive(Debug, thiserror::Error)]
pub enum VtkError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed VTK file: {0}")]
    Format(String),
}

/// Renders the solution: interior velocity averaged at the vertices and the
/// cell average of the pressure.
pub fn render(mesh: &Mesh, system: &GlobalSystem, solution: &Solution) -> String {
    let nv = mesh.num_vertices();
    let mut vel = vec![[0.0f64; 2]; nv];
    let mut count = vec![0usize; nv];
    for t in 0..mesh.num_triangles() {
        let local = LocalElement::new(mesh, t, &system.config, &system.rules);
        let coeffs = solution.local_velocity(mesh, t);
        for &v in &mesh.triangles[t].vertices {
            let u = local.eval_interior(&coeffs, mesh.point(v));
            vel[v][0] += u[0];
            vel[v][1] += u[1];
            count[v] += 1;
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "weak Galerkin Stokes solution");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {nv} double");
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:.12e} {:.12e} 0", v.x, v.y);
    }
    let nt = mesh.num_triangles();
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in &mesh.triangles {
        let [a, b, c] = t.vertices;
        let _ = writeln!(s, "3 {a} {b} {c}");
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        let _ = writeln!(s, "{VTK_TRIANGLE}");
    }
    let _ = writeln!(s, "POINT_DATA {nv}");
    let _ = writeln!(s, "VECTORS velocity double");
    for (u, c) in vel.iter().zip(&count) {
        let c = (*c).max(1) as f64;
        let _ = writeln!(s, "{:.12e} {:.12e} 0", u[0] / c, u[1] / c);
    }
    let _ = writeln!(s, "CELL_DATA {nt}");
    let _ = writeln!(s, "SCALARS pressure double 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for t in 0..nt {
        let p = solution.local_pressure(t);
        let avg: f64 = p.iter().zip(&system.pressure_moments[t]).map(|(a, b)| a * b).sum::<f64>() / mesh.triangles[t].area;
        let _ = writeln!(s, "{avg:.12e}");
    }
    s
}

pub fn write_vtk(path: &Path, mesh: &Mesh, system: &GlobalSystem, solution: &Solution) -> Result<(), VtkError> {
    std::fs::write(path, render(mesh, system, solution))
        .map_err(|source| VtkError::Io { path: path.display().to_string(), source })
}

/// Structure of a legacy VTK unstructured grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VtkSummary {
    pub points: usize,
    pub cells: usize,
    pub cell_types: Vec<u8>,
    pub point_vectors: Vec<String>,
    pub cell_scalars: Vec<String>,
}

/// Reads back the section counts and field names.
pub fn read_summary(path: &Path) -> Result<VtkSummary, VtkError> {
    let text = std::fs::read_to_string(path).map_err(|source| VtkError::Io { path: path.display().to_string(), source })?;
    parse_summary(&text)
}

pub fn parse_summary(text: &str) -> Result<VtkSummary, VtkError> {
    let bad = |m: &str| VtkError::Format(m.to_string());
    let mut lines = text.lines();
    if !lines.next().is_some_and(|l| l.starts_with("# vtk DataFile")) {
        return Err(bad("missing header"));
    }
    let mut out = VtkSummary::default();
    let tokens: Vec<&str> = lines.skip(1).flat_map(str::split_whitespace).collect();
    let count = |i: usize| tokens.get(i).and_then(|t| t.parse::<usize>().ok()).ok_or_else(|| bad("bad count"));
    let mut i = 0;
    while i < tokens.len() {
        match tokens[i] {
            "POINTS" => {
                out.points = count(i + 1)?;
                i += 3 + 3 * out.points;
            }
            "CELLS" => {
                out.cells = count(i + 1)?;
                i += 3 + count(i + 2)?;
            }
            "CELL_TYPES" => {
                let n = count(i + 1)?;
                out.cell_types = tokens
                    .get(i + 2..i + 2 + n)
                    .ok_or_else(|| bad("truncated CELL_TYPES"))?
                    .iter()
                    .map(|t| t.parse().map_err(|_| bad("bad cell type")))
                    .collect::<Result<_, _>>()?;
                i += 2 + n;
            }
            "VECTORS" => {
                out.point_vectors.push(tokens.get(i + 1).ok_or_else(|| bad("VECTORS name"))?.to_string());
                i += 3 + 3 * out.points;
            }
            "SCALARS" => {
                out.cell_scalars.push(tokens.get(i + 1).ok_or_else(|| bad("SCALARS name"))?.to_string());
                i += 6 + out.cells;
            }
            _ => i += 1,
        }
    }
    if out.cell_types.len() != out.cells {
        return Err(bad("CELL_TYPES count differs from CELLS"));
    }
    Ok(out)
}
