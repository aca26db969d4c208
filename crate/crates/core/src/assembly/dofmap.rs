use crate::femspace::ElementConfig;
use crate::mesh::Mesh;
use crate::sparse::{BlockSign, BlockStructure};

/// Where a local velocity coefficient lives globally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Free(usize),
    /// Coefficient `offset` of the boundary data on edge `edge`.
    Fixed {
        edge: usize,
        offset: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    Interior,
    Edge,
    Pressure,
    Multiplier,
}

/// Global numbering of the free unknowns.
///
/// The canonical order is: interior velocity per element, then edge velocity
/// per interior edge, then pressure per element, then the gauge multiplier.
/// An optional permutation maps canonical to actual indices.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub dk: usize,
    pub dj: usize,
    pub dn: usize,
    n_elements: usize,
    edge_start: Vec<Option<usize>>,
    pressure_offset: usize,
    multiplier: usize,
    boundary_edges: Vec<usize>,
    perm: Option<Vec<usize>>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, cfg: &ElementConfig) -> Self {
        Self::build(mesh, cfg, true)
    }

    /// Numbers boundary edge unknowns as free as well (the full space `V_h`).
    pub fn unconstrained(mesh: &Mesh, cfg: &ElementConfig) -> Self {
        Self::build(mesh, cfg, false)
    }

    fn build(mesh: &Mesh, cfg: &ElementConfig, constrain_boundary: bool) -> Self {
        let (dk, dj, dn) = (crate::femspace::dim_p(cfg.k), cfg.j + 1, crate::femspace::dim_p(cfg.n));
        let nt = mesh.num_triangles();
        let mut next = nt * 2 * dk;
        let mut boundary_edges = Vec::new();
        let edge_start = mesh
            .edges
            .iter()
            .map(|e| {
                if e.is_boundary() && constrain_boundary {
                    boundary_edges.push(e.id);
                    None
                } else {
                    let s = next;
                    next += 2 * dj;
                    Some(s)
                }
            })
            .collect();
        let pressure_offset = next;
        let multiplier = pressure_offset + nt * dn;
        DofMap { dk, dj, dn, n_elements: nt, edge_start, pressure_offset, multiplier, boundary_edges, perm: None }
    }

    /// Renumbers all unknowns: canonical index `i` becomes `perm[i]`.
    ///
    /// # Panics
    /// If `perm` is not a permutation of `0..len()`.
    pub fn with_permutation(mut self, perm: Vec<usize>) -> Self {
        let mut seen = vec![false; self.len()];
        assert_eq!(perm.len(), self.len(), "permutation length");
        for &p in &perm {
            assert!(!std::mem::replace(&mut seen[p], true), "not a permutation");
        }
        self.perm = Some(perm);
        self
    }

    fn map(&self, canonical: usize) -> usize {
        self.perm.as_ref().map_or(canonical, |p| p[canonical])
    }

    /// Number of free unknowns including the multiplier.
    pub fn len(&self) -> usize {
        self.multiplier + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_velocity(&self) -> usize {
        self.pressure_offset
    }

    pub fn num_pressure(&self) -> usize {
        self.n_elements * self.dn
    }

    pub fn boundary_edges(&self) -> &[usize] {
        &self.boundary_edges
    }

    pub fn interior(&self, t: usize, comp: usize, a: usize) -> usize {
        self.map(t * 2 * self.dk + comp * self.dk + a)
    }

    pub fn edge(&self, e: usize, comp: usize, c: usize) -> Option<usize> {
        self.edge_start[e].map(|s| self.map(s + comp * self.dj + c))
    }

    pub fn pressure(&self, t: usize, r: usize) -> usize {
        self.map(self.pressure_offset + t * self.dn + r)
    }

    pub fn multiplier(&self) -> usize {
        self.map(self.multiplier)
    }

    fn canonical_kind(&self, c: usize) -> DofKind {
        if c < self.n_elements * 2 * self.dk {
            DofKind::Interior
        } else if c < self.pressure_offset {
            DofKind::Edge
        } else if c < self.multiplier {
            DofKind::Pressure
        } else {
            DofKind::Multiplier
        }
    }

    /// Kind of every actual index.
    pub fn kinds(&self) -> Vec<DofKind> {
        let mut out = vec![DofKind::Interior; self.len()];
        for c in 0..self.len() {
            out[self.map(c)] = self.canonical_kind(c);
        }
        out
    }

    /// Actual indices of the velocity unknowns, in canonical order.
    pub fn velocity_dofs(&self) -> Vec<usize> {
        (0..self.pressure_offset).map(|c| self.map(c)).collect()
    }

    /// Actual indices of the pressure unknowns, in canonical order.
    pub fn pressure_dofs(&self) -> Vec<usize> {
        (self.pressure_offset..self.multiplier).map(|c| self.map(c)).collect()
    }

    /// Global slots of the local velocity coefficients of element `t`, in
    /// the local layout order.
    pub fn velocity_slots(&self, mesh: &Mesh, t: usize) -> Vec<Slot> {
        let mut out = Vec::with_capacity(2 * self.dk + 6 * self.dj);
        for comp in 0..2 {
            for a in 0..self.dk {
                out.push(Slot::Free(self.interior(t, comp, a)));
            }
        }
        for &e in &mesh.triangles[t].edges {
            for comp in 0..2 {
                for c in 0..self.dj {
                    out.push(match self.edge(e, comp, c) {
                        Some(g) => Slot::Free(g),
                        None => Slot::Fixed { edge: e, offset: comp * self.dj + c },
                    });
                }
            }
        }
        out
    }

    pub fn pressure_slots(&self, t: usize) -> Vec<usize> {
        (0..self.dn).map(|r| self.pressure(t, r)).collect()
    }

    /// Block partition for the elimination order: interior and edge velocity
    /// blocks are positive, pressure blocks negative, the multiplier a
    /// constraint.
    pub fn blocks(&self) -> BlockStructure {
        let mut blocks = Vec::new();
        let mut signs = Vec::new();
        for t in 0..self.n_elements {
            blocks.push((0..2 * self.dk).map(|i| self.map(t * 2 * self.dk + i)).collect());
            signs.push(BlockSign::Positive);
        }
        for s in self.edge_start.iter().flatten() {
            blocks.push((0..2 * self.dj).map(|i| self.map(s + i)).collect());
            signs.push(BlockSign::Positive);
        }
        for t in 0..self.n_elements {
            blocks.push((0..self.dn).map(|r| self.pressure(t, r)).collect());
            signs.push(BlockSign::Negative);
        }
        blocks.push(vec![self.multiplier()]);
        signs.push(BlockSign::Constraint);
        BlockStructure { blocks, signs }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{uniform_triangulation, Rect};

    #[test]
    fn counts_match_local_dimensions() {
        let mesh = uniform_triangulation(3, Rect::UNIT).unwrap();
        let cfg = ElementConfig::new(2, 1, 1, 1, 1);
        let d = DofMap::new(&mesh, &cfg);
        let interior_edges = mesh.edges.iter().filter(|e| !e.is_boundary()).count();
        assert_eq!(d.num_velocity(), 18 * 12 + interior_edges * 4);
        assert_eq!(d.num_pressure(), 18 * 3);
        assert_eq!(d.len(), d.num_velocity() + d.num_pressure() + 1);
        assert_eq!(d.boundary_edges().len(), 12);
        let blocks = d.blocks();
        let total: usize = blocks.blocks.iter().map(Vec::len).sum();
        assert_eq!(total, d.len());
    }

    #[test]
    fn every_edge_dof_is_numbered_once() {
        let mesh = uniform_triangulation(4, Rect::UNIT).unwrap();
        let d = DofMap::new(&mesh, &ElementConfig::new(1, 0, 1, 0, 0));
        let mut seen = vec![0usize; d.len()];
        for t in 0..mesh.num_triangles() {
            for s in d.velocity_slots(&mesh, t) {
                if let Slot::Free(g) = s {
                    seen[g] += 1;
                }
            }
        }
        for (i, kind) in d.kinds().into_iter().enumerate() {
            match kind {
                DofKind::Interior => assert_eq!(seen[i], 1),
                DofKind::Edge => assert_eq!(seen[i], 2),
                _ => assert_eq!(seen[i], 0),
            }
        }
    }

    #[test]
    fn permutation_is_applied_everywhere() {
        let mesh = uniform_triangulation(2, Rect::UNIT).unwrap();
        let d = DofMap::new(&mesh, &ElementConfig::new(1, 0, 1, 0, 0));
        let n = d.len();
        let rev: Vec<usize> = (0..n).rev().collect();
        let p = d.clone().with_permutation(rev);
        assert_eq!(p.multiplier(), 0);
        assert_eq!(p.interior(0, 0, 0), n - 1);
        assert_eq!(p.kinds()[0], DofKind::Multiplier);
    }
}
