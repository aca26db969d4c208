//! Conforming triangular partitions with edge connectivity, boundary tags and
//! per-entity size metrics.

pub mod gmsh;
mod quality;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

pub use quality::{mesh_quality, QualityReport};

pub type Point = [f64; 2];

/// Boundary tags assigned by [`uniform_triangulation`].
pub mod side {
    pub const BOTTOM: i32 = 1;
    pub const RIGHT: i32 = 2;
    pub const TOP: i32 = 3;
    pub const LEFT: i32 = 4;
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

impl Vertex {
    pub fn point(&self) -> Point {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangle {
    pub id: usize,
    /// Vertex ids, counter-clockwise for an oriented mesh.
    pub vertices: [usize; 3],
    /// Longest edge length.
    pub diameter: f64,
    pub area: f64,
    pub centroid: Point,
    /// Local edge `i` joins `vertices[i]` and `vertices[(i + 1) % 3]`.
    pub edges: [usize; 3],
    /// `+1` when this triangle is the first owner of the edge (the edge normal
    /// is then outward for it), `-1` otherwise.
    pub edge_signs: [i8; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Interior,
    /// Boundary edge with the physical tag it was given, if any.
    Boundary(Option<i32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: usize,
    /// Vertex ids, smaller id first. The arc-length parameter of the edge runs
    /// from `vertices[0]` to `vertices[1]`.
    pub vertices: [usize; 2],
    pub diameter: f64,
    /// Owning triangles; the first owner always has the smaller id.
    pub owners: (usize, Option<usize>),
    pub kind: EdgeKind,
    /// Unit normal, outward for the first owner.
    pub normal: [f64; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        matches!(self.kind, EdgeKind::Boundary(_))
    }

    pub fn tag(&self) -> Option<i32> {
        match self.kind {
            EdgeKind::Boundary(tag) => tag,
            EdgeKind::Interior => None,
        }
    }
}

/// Axis-aligned rectangle `(x0, x1) x (y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };

    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }
}

/// Direction of the diagonal splitting each square of a structured grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Diagonal {
    /// From the lower-left to the upper-right corner.
    #[default]
    Forward,
    /// From the upper-left to the lower-right corner.
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vertex>,
    pub triangles: Vec<Triangle>,
    pub edges: Vec<Edge>,
    /// Mesh parameter reported in convergence tables.
    pub h: f64,
}

impl Mesh {
    /// Builds a mesh from raw connectivity, reorienting clockwise triangles.
    ///
    /// `boundary_tags` maps a vertex pair (any order) to a physical tag; boundary
    /// edges missing from the map stay untagged. The edge list is derived from
    /// the triangles.
    pub fn new(
        points: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_tags: &BTreeMap<[usize; 2], i32>,
    ) -> Result<Mesh, MeshError> {
        Self::build(points, triangles, boundary_tags, true)
    }

    /// Like [`Mesh::new`] but keeps the given vertex order of every triangle,
    /// so orientation defects survive and can be reported by [`mesh_quality`].
    pub fn new_unoriented(
        points: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_tags: &BTreeMap<[usize; 2], i32>,
    ) -> Result<Mesh, MeshError> {
        Self::build(points, triangles, boundary_tags, false)
    }

    fn build(
        points: Vec<Point>,
        mut tris: Vec<[usize; 3]>,
        boundary_tags: &BTreeMap<[usize; 2], i32>,
        orient: bool,
    ) -> Result<Mesh, MeshError> {
        let nv = points.len();
        if let Some(i) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(MeshError::Invalid(format!("vertex {i} has non-finite coordinates")));
        }
        let mut referenced = vec![false; nv];
        for (t, tri) in tris.iter_mut().enumerate() {
            for &v in tri.iter() {
                if v >= nv {
                    return Err(MeshError::Invalid(format!("triangle {t} references missing vertex {v}")));
                }
                referenced[v] = true;
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::Invalid(format!("triangle {t} repeats a vertex")));
            }
            let signed = signed_area(points[tri[0]], points[tri[1]], points[tri[2]]);
            if signed.abs() <= f64::EPSILON * 1e-3 * diameter_of(&points, tri).powi(2) {
                return Err(MeshError::Invalid(format!("triangle {t} is degenerate")));
            }
            if orient && signed < 0.0 {
                tri.swap(1, 2);
            }
        }
        if let Some(v) = referenced.iter().position(|r| !r) {
            return Err(MeshError::Invalid(format!("vertex {v} is not referenced by any triangle")));
        }

        let vertices: Vec<Vertex> = points.iter().enumerate().map(|(id, p)| Vertex { id, x: p[0], y: p[1] }).collect();

        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::with_capacity(tris.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(tris.len() * 2);
        let mut triangles = Vec::with_capacity(tris.len());
        for (t, tri) in tris.iter().enumerate() {
            let p = [points[tri[0]], points[tri[1]], points[tri[2]]];
            let mut tri_edges = [0usize; 3];
            let mut signs = [0i8; 3];
            for i in 0..3 {
                let (a, b) = (tri[i], tri[(i + 1) % 3]);
                let key = [a.min(b), a.max(b)];
                match edge_index.get(&key) {
                    Some(&e) => {
                        let edge = &mut edges[e];
                        if edge.owners.1.is_some() {
                            return Err(MeshError::Invalid(format!(
                                "edge ({}, {}) is shared by more than two triangles",
                                key[0], key[1]
                            )));
                        }
                        edge.owners.1 = Some(t);
                        edge.kind = EdgeKind::Interior;
                        tri_edges[i] = e;
                        signs[i] = -1;
                    }
                    None => {
                        let e = edges.len();
                        let (pa, pb) = (p[i], p[(i + 1) % 3]);
                        let len = dist(pa, pb);
                        // outward for a counter-clockwise traversal a -> b
                        let normal = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
                        edges.push(Edge {
                            id: e,
                            vertices: key,
                            diameter: len,
                            owners: (t, None),
                            kind: EdgeKind::Boundary(None),
                            normal,
                        });
                        edge_index.insert(key, e);
                        tri_edges[i] = e;
                        signs[i] = 1;
                    }
                }
            }
            triangles.push(Triangle {
                id: t,
                vertices: *tri,
                diameter: diameter_of(&points, tri),
                area: signed_area(p[0], p[1], p[2]).abs(),
                centroid: [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0],
                edges: tri_edges,
                edge_signs: signs,
            });
        }
        for edge in edges.iter_mut() {
            if edge.owners.1.is_none() {
                edge.kind = EdgeKind::Boundary(boundary_tags.get(&edge.vertices).copied());
            }
        }
        let h = triangles.iter().map(|t| t.diameter).fold(0.0, f64::max);
        Ok(Mesh { vertices, triangles, edges, h })
    }

    /// Overrides the reported mesh parameter.
    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn point(&self, v: usize) -> Point {
        self.vertices[v].point()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let v = self.triangles[t].vertices;
        [self.point(v[0]), self.point(v[1]), self.point(v[2])]
    }

    pub fn edge_points(&self, e: usize) -> [Point; 2] {
        let v = self.edges[e].vertices;
        [self.point(v[0]), self.point(v[1])]
    }

    /// Unit normal of local edge `i` of triangle `t`, outward for `t`.
    pub fn outward_normal(&self, t: usize, i: usize) -> [f64; 2] {
        let tri = &self.triangles[t];
        let n = self.edges[tri.edges[i]].normal;
        let s = f64::from(tri.edge_signs[i]);
        [s * n[0], s * n[1]]
    }

    /// Total area of the partition.
    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| t.area).sum()
    }

    pub fn boundary_tags(&self) -> Vec<Option<i32>> {
        let mut tags: Vec<Option<i32>> = self.edges.iter().filter(|e| e.is_boundary()).map(|e| e.tag()).collect();
        tags.sort();
        tags.dedup();
        tags
    }

    /// Triangle containing `p` (with a small tolerance), falling back to the
    /// triangle with the nearest centroid.
    pub fn locate(&self, p: Point) -> usize {
        let mut best = (f64::INFINITY, 0usize);
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = self.triangle_points(t);
            let tol = -1e-12 * tri.area;
            let inside = signed_area(a, b, p) >= tol && signed_area(b, c, p) >= tol && signed_area(c, a, p) >= tol;
            if inside {
                return t;
            }
            let d = dist(tri.centroid, p);
            if d < best.0 {
                best = (d, t);
            }
        }
        best.1
    }

    /// Writes `vertices.csv` and `triangles.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<(), MeshError> {
        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(fs::File::create(dir.join("vertices.csv"))?);
        writeln!(w, "id,x,y")?;
        for v in &self.vertices {
            writeln!(w, "{},{:e},{:e}", v.id, v.x, v.y)?;
        }
        w.flush()?;
        let mut w = BufWriter::new(fs::File::create(dir.join("triangles.csv"))?);
        writeln!(w, "id,v0,v1,v2")?;
        for t in &self.triangles {
            writeln!(w, "{},{},{},{}", t.id, t.vertices[0], t.vertices[1], t.vertices[2])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Structured triangulation of `domain` with `nx` squares across; the number of
/// rows is chosen so the cells are as close to square as possible.
pub fn uniform_triangulation(nx: usize, domain: Rect) -> Result<Mesh, MeshError> {
    let (lx, ly) = (domain.x1 - domain.x0, domain.y1 - domain.y0);
    let ny = if lx > 0.0 && ly > 0.0 { ((nx as f64) * ly / lx).round().max(1.0) as usize } else { 1 };
    uniform_triangulation_with(nx, ny, domain, Diagonal::default())
}

/// Structured `nx` by `ny` grid of rectangles, each split into two triangles
/// along the same diagonal. Boundary edges are tagged with [`side`] constants and
/// the reported `h` is the grid spacing in x.
pub fn uniform_triangulation_with(nx: usize, ny: usize, domain: Rect, diagonal: Diagonal) -> Result<Mesh, MeshError> {
    let (lx, ly) = (domain.x1 - domain.x0, domain.y1 - domain.y0);
    if !(lx.is_finite() && ly.is_finite()) || lx <= 0.0 || ly <= 0.0 {
        return Err(MeshError::InvalidDomain(format!(
            "rectangle ({}, {}) x ({}, {}) has no interior",
            domain.x0, domain.x1, domain.y0, domain.y1
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidDomain("grid needs at least one cell per direction".into()));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut points = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            points.push([domain.x0 + lx * i as f64 / nx as f64, domain.y0 + ly * j as f64 / ny as f64]);
        }
    }
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            match diagonal {
                Diagonal::Forward => {
                    tris.push([v00, v10, v11]);
                    tris.push([v00, v11, v01]);
                }
                Diagonal::Backward => {
                    tris.push([v00, v10, v01]);
                    tris.push([v10, v11, v01]);
                }
            }
        }
    }
    let mut tags = BTreeMap::new();
    for i in 0..nx {
        tags.insert(sorted(id(i, 0), id(i + 1, 0)), side::BOTTOM);
        tags.insert(sorted(id(i, ny), id(i + 1, ny)), side::TOP);
    }
    for j in 0..ny {
        tags.insert(sorted(id(0, j), id(0, j + 1)), side::LEFT);
        tags.insert(sorted(id(nx, j), id(nx, j + 1)), side::RIGHT);
    }
    Ok(Mesh::new(points, tris, &tags)?.with_h(lx / nx as f64))
}

fn sorted(a: usize, b: usize) -> [usize; 2] {
    [a.min(b), a.max(b)]
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn diameter_of(points: &[Point], tri: &[usize; 3]) -> f64 {
    let (a, b, c) = (points[tri[0]], points[tri[1]], points[tri[2]]);
    dist(a, b).max(dist(b, c)).max(dist(c, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_square_counts() {
        let m = uniform_triangulation(1, Rect::UNIT).unwrap();
        assert_eq!(m.num_triangles(), 2);
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.num_edges(), 5);
        assert_eq!(m.edges.iter().filter(|e| e.is_boundary()).count(), 4);
    }

    #[test]
    fn sixteen_by_sixteen() {
        let m = uniform_triangulation(16, Rect::UNIT).unwrap();
        assert_eq!(m.h, 1.0 / 16.0);
        assert_eq!(m.num_triangles(), 512);
        for t in &m.triangles {
            assert!((t.diameter - 2f64.sqrt() / 16.0).abs() < 1e-15);
        }
    }

    #[test]
    fn areas_partition_domain() {
        for diag in [Diagonal::Forward, Diagonal::Backward] {
            let m = uniform_triangulation_with(2, 2, Rect::UNIT, diag).unwrap();
            assert!((m.area() - 1.0).abs() < 1e-12);
            let m = uniform_triangulation_with(3, 5, Rect::new(0.0, 8.0, 0.0, 4.5), diag).unwrap();
            assert!((m.area() - 36.0).abs() < 1e-12 * 36.0);
        }
    }

    #[test]
    fn degenerate_rectangle_rejected() {
        assert!(matches!(uniform_triangulation(4, Rect::new(0.0, 1.0, 2.0, 2.0)), Err(MeshError::InvalidDomain(_))));
        assert!(matches!(uniform_triangulation(0, Rect::UNIT), Err(MeshError::InvalidDomain(_))));
    }

    #[test]
    fn boundary_sides_are_tagged() {
        let m = uniform_triangulation(3, Rect::UNIT).unwrap();
        for e in m.edges.iter().filter(|e| e.is_boundary()) {
            let [a, b] = m.edge_points(e.id);
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            let expected = if mid[1] == 0.0 {
                side::BOTTOM
            } else if mid[1] == 1.0 {
                side::TOP
            } else if mid[0] == 0.0 {
                side::LEFT
            } else {
                side::RIGHT
            };
            assert_eq!(e.tag(), Some(expected));
        }
    }

    #[test]
    fn interior_edges_have_opposite_signs_and_normals_point_outward() {
        let m = uniform_triangulation(4, Rect::UNIT).unwrap();
        for e in &m.edges {
            match e.owners {
                (a, Some(b)) => {
                    assert!(a < b);
                    let la = m.triangles[a].edges.iter().position(|&x| x == e.id).unwrap();
                    let lb = m.triangles[b].edges.iter().position(|&x| x == e.id).unwrap();
                    assert_eq!(m.triangles[a].edge_signs[la], 1);
                    assert_eq!(m.triangles[b].edge_signs[lb], -1);
                }
                (_, None) => assert!(e.is_boundary()),
            }
            assert!((e.normal[0].hypot(e.normal[1]) - 1.0).abs() < 1e-14);
        }
        for t in 0..m.num_triangles() {
            let c = m.triangles[t].centroid;
            for i in 0..3 {
                let n = m.outward_normal(t, i);
                let [a, _] = m.edge_points(m.triangles[t].edges[i]);
                assert!((a[0] - c[0]) * n[0] + (a[1] - c[1]) * n[1] > 0.0);
            }
        }
    }

    #[test]
    fn closed_boundary_normal_integral_vanishes() {
        let m = uniform_triangulation_with(3, 2, Rect::new(0.0, 2.0, 0.0, 1.0), Diagonal::Backward).unwrap();
        for t in 0..m.num_triangles() {
            let mut s = [0.0; 2];
            for i in 0..3 {
                let e = &m.edges[m.triangles[t].edges[i]];
                let n = m.outward_normal(t, i);
                s[0] += n[0] * e.diameter;
                s[1] += n[1] * e.diameter;
            }
            assert!(s[0].abs() < 1e-12 && s[1].abs() < 1e-12);
        }
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let m = Mesh::new(pts, vec![[0, 2, 1]], &BTreeMap::new()).unwrap();
        let [a, b, c] = m.triangle_points(0);
        assert!(signed_area(a, b, c) > 0.0);
    }

    #[test]
    fn invalid_connectivity_is_rejected() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]];
        let err = Mesh::new(pts.clone(), vec![[0, 1, 2]], &BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("vertex 3"));
        let err = Mesh::new(pts[..3].to_vec(), vec![[0, 1, 1]], &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, MeshError::Invalid(_)));
        let collinear = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(Mesh::new(collinear, vec![[0, 1, 2]], &BTreeMap::new()).is_err());
    }

    #[test]
    fn locate_finds_containing_triangle() {
        let m = uniform_triangulation(4, Rect::UNIT).unwrap();
        let t = m.locate([0.0, 0.0]);
        assert!(m.triangles[t].vertices.contains(&0));
        let t = m.locate([0.6, 0.3]);
        let [a, b, c] = m.triangle_points(t);
        let p = [0.6, 0.3];
        assert!(signed_area(a, b, p) >= -1e-14 && signed_area(b, c, p) >= -1e-14 && signed_area(c, a, p) >= -1e-14);
    }

    #[test]
    fn csv_dump_writes_both_files() {
        let m = uniform_triangulation(2, Rect::UNIT).unwrap();
        let dir = tempfile::tempdir().unwrap();
        m.write_csv(dir.path()).unwrap();
        let v = std::fs::read_to_string(dir.path().join("vertices.csv")).unwrap();
        let t = std::fs::read_to_string(dir.path().join("triangles.csv")).unwrap();
        assert_eq!(v.lines().count(), 1 + 9);
        assert_eq!(t.lines().count(), 1 + 8);
    }
}
