use super::{signed_area, Mesh};

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    /// Smallest interior angle over all triangles, in degrees.
    pub min_angle_deg: f64,
    pub max_angle_deg: f64,
    /// Largest over smallest element diameter.
    pub diameter_ratio: f64,
    /// Triangles stored with clockwise vertex order.
    pub flipped_triangles: usize,
    /// Interior edges traversed in the same direction by both owners.
    pub inconsistent_edges: usize,
    /// Vertices lying strictly inside a boundary edge.
    pub hanging_nodes: usize,
    pub conforming: bool,
}

fn angles(p: [[f64; 2]; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cross = u[0] * v[1] - u[1] * v[0];
        let dot = u[0] * v[0] + u[1] * v[1];
        out[i] = cross.abs().atan2(dot).to_degrees();
    }
    out
}

pub fn mesh_quality(mesh: &Mesh) -> QualityReport {
    let mut min_angle = f64::INFINITY;
    let mut max_angle: f64 = 0.0;
    let mut flipped = 0;
    for t in 0..mesh.num_triangles() {
        let p = mesh.triangle_points(t);
        for a in angles(p) {
            min_angle = min_angle.min(a);
            max_angle = max_angle.max(a);
        }
        if signed_area(p[0], p[1], p[2]) < 0.0 {
            flipped += 1;
        }
    }
    let (hmin, hmax) =
        mesh.triangles.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), t| (lo.min(t.diameter), hi.max(t.diameter)));

    let mut inconsistent = 0;
    for e in &mesh.edges {
        if let (a, Some(b)) = e.owners {
            let dir = |t: usize| {
                let tri = &mesh.triangles[t];
                let i = tri.edges.iter().position(|&x| x == e.id).expect("edge listed by owner");
                tri.vertices[i] == e.vertices[0]
            };
            if dir(a) == dir(b) {
                inconsistent += 1;
            }
        }
    }

    let mut on_boundary = vec![false; mesh.num_vertices()];
    for e in mesh.edges.iter().filter(|e| e.is_boundary()) {
        on_boundary[e.vertices[0]] = true;
        on_boundary[e.vertices[1]] = true;
    }
    let boundary_vertices: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| on_boundary[v]).collect();
    let mut hanging = 0;
    for e in mesh.edges.iter().filter(|e| e.is_boundary()) {
        let [a, b] = mesh.edge_points(e.id);
        let tol = 1e-10 * e.diameter;
        let (xlo, xhi) = (a[0].min(b[0]) - tol, a[0].max(b[0]) + tol);
        let (ylo, yhi) = (a[1].min(b[1]) - tol, a[1].max(b[1]) + tol);
        for &v in &boundary_vertices {
            if v == e.vertices[0] || v == e.vertices[1] {
                continue;
            }
            let p = mesh.point(v);
            if p[0] < xlo || p[0] > xhi || p[1] < ylo || p[1] > yhi {
                continue;
            }
            // distance of p from the segment line relative to the edge length
            let d = 2.0 * signed_area(a, b, p).abs() / e.diameter;
            let s = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (e.diameter * e.diameter);
            if d <= tol && s > 1e-10 && s < 1.0 - 1e-10 {
                hanging += 1;
            }
        }
    }

    QualityReport {
        min_angle_deg: min_angle,
        max_angle_deg: max_angle,
        diameter_ratio: hmax / hmin,
        flipped_triangles: flipped,
        inconsistent_edges: inconsistent,
        hanging_nodes: hanging,
        conforming: flipped == 0 && inconsistent == 0 && hanging == 0,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::mesh::{uniform_triangulation, Rect};

    #[test]
    fn uniform_grid_is_right_isoceles() {
        let q = mesh_quality(&uniform_triangulation(4, Rect::UNIT).unwrap());
        assert!((q.min_angle_deg - 45.0).abs() < 1e-10);
        assert!((q.max_angle_deg - 90.0).abs() < 1e-10);
        assert!((q.diameter_ratio - 1.0).abs() < 1e-12);
        assert!(q.conforming);
    }

    #[test]
    fn flipped_triangle_breaks_conformity() {
        let m = uniform_triangulation(2, Rect::UNIT).unwrap();
        let pts: Vec<_> = m.vertices.iter().map(|v| v.point()).collect();
        let mut tris: Vec<_> = m.triangles.iter().map(|t| t.vertices).collect();
        tris[3].swap(1, 2);
        let bad = Mesh::new_unoriented(pts, tris, &BTreeMap::new()).unwrap();
        let q = mesh_quality(&bad);
        assert_eq!(q.flipped_triangles, 1);
        assert!(q.inconsistent_edges > 0);
        assert!(!q.conforming);
    }

    #[test]
    fn hanging_node_is_detected() {
        // a unit square split into one big triangle and two small ones sharing
        // a midpoint that the big triangle does not see
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let tris = vec![[0, 1, 2], [0, 4, 3], [4, 2, 3]];
        let m = Mesh::new(pts, tris, &BTreeMap::new()).unwrap();
        let q = mesh_quality(&m);
        assert_eq!(q.hanging_nodes, 1);
        assert!(!q.conforming);
    }
}
