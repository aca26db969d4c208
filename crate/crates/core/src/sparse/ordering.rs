//! Fill-reducing, inertia-aware elimination order for symmetric saddle-point
//! matrices described as a partition into blocks with a sign each.
//!
//! Positive blocks whose neighbourhood is already a clique go first (no fill).
//! The remaining positive blocks are ordered by nested dissection with
//! breadth-first level-set separators. Every negative block is placed right
//! after its last positive neighbour, so its pivot is a Schur complement of an
//! already eliminated positive definite part. A constraint block goes
//! immediately before the last negative block it touches, which keeps every
//! intermediate pivot away from zero when the negative part has a
//! one-dimensional kernel fixed by the constraint.

use super::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSign {
    Positive,
    Negative,
    Constraint,
}

impl BlockSign {
    /// Expected sign of the pivots of this block.
    pub fn pivot_sign(self) -> f64 {
        match self {
            BlockSign::Negative => -1.0,
            _ => 1.0,
        }
    }
}

/// Partition of the unknowns into blocks of identical adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStructure {
    pub blocks: Vec<Vec<usize>>,
    pub signs: Vec<BlockSign>,
}

impl BlockStructure {
    /// One block per unknown, all positive.
    pub fn scalar(n: usize) -> Self {
        BlockStructure { blocks: (0..n).map(|i| vec![i]).collect(), signs: vec![BlockSign::Positive; n] }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Pivot sign per unknown.
    pub fn scalar_signs(&self, n: usize) -> Vec<f64> {
        let mut s = vec![1.0; n];
        for (b, members) in self.blocks.iter().enumerate() {
            for &i in members {
                s[i] = self.signs[b].pivot_sign();
            }
        }
        s
    }
}

/// Block adjacency (without self loops) induced by the matrix pattern.
fn block_graph(matrix: &CsrMatrix, blocks: &BlockStructure) -> Vec<Vec<usize>> {
    let mut owner = vec![usize::MAX; matrix.nrows];
    for (b, members) in blocks.blocks.iter().enumerate() {
        for &i in members {
            owner[i] = b;
        }
    }
    assert!(owner.iter().all(|&o| o != usize::MAX), "blocks must cover every unknown");
    let mut mark = vec![usize::MAX; blocks.len()];
    let mut adj = Vec::with_capacity(blocks.len());
    for (b, members) in blocks.blocks.iter().enumerate() {
        let mut nb = Vec::new();
        mark[b] = b;
        for &i in members {
            for &j in matrix.row(i).0 {
                let o = owner[j];
                if mark[o] != b {
                    mark[o] = b;
                    nb.push(o);
                }
            }
        }
        nb.sort_unstable();
        adj.push(nb);
    }
    adj
}

fn is_simplicial(b: usize, adj: &[Vec<usize>], mark: &mut [usize]) -> bool {
    let nb = &adj[b];
    for &u in nb {
        // every other neighbour of b must be adjacent to u
        mark[u] = b;
        for &w in &adj[u] {
            mark[w] = b;
        }
        if nb.iter().any(|&w| mark[w] != b) {
            for &w in &adj[u] {
                mark[w] = usize::MAX;
            }
            mark[u] = usize::MAX;
            return false;
        }
        for &w in &adj[u] {
            mark[w] = usize::MAX;
        }
        mark[u] = usize::MAX;
    }
    true
}

struct Dissector<'a> {
    adj: &'a [Vec<usize>],
    weight: &'a [usize],
    stamp: Vec<u32>,
    level: Vec<u32>,
    next_stamp: u32,
    out: Vec<usize>,
}

const LEAF: usize = 48;

impl Dissector<'_> {
    fn fresh(&mut self, nodes: &[usize]) -> u32 {
        self.next_stamp += 1;
        let s = self.next_stamp;
        for &v in nodes {
            self.stamp[v] = s;
        }
        s
    }

    /// BFS over the nodes carrying `member`; returns the level sets.
    fn bfs(&mut self, start: usize, member: u32) -> Vec<Vec<usize>> {
        let visited = self.next_stamp + 1;
        self.next_stamp += 1;
        let mut levels = vec![vec![start]];
        self.stamp[start] = visited;
        loop {
            let mut next = Vec::new();
            for &v in levels.last().expect("non-empty") {
                for &w in &self.adj[v] {
                    if self.stamp[w] == member {
                        self.stamp[w] = visited;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        // restore membership marks for the visited nodes
        for l in &levels {
            for &v in l {
                self.stamp[v] = member;
            }
        }
        levels
    }

    fn dissect(&mut self, nodes: Vec<usize>) {
        if nodes.len() <= LEAF {
            self.out.extend(nodes);
            return;
        }
        let member = self.fresh(&nodes);
        let mut levels = self.bfs(nodes[0], member);
        let reached: usize = levels.iter().map(Vec::len).sum();
        if reached < nodes.len() {
            // disconnected: handle each component on its own
            let mut seen = vec![];
            let comp_stamp = self.next_stamp + 1;
            self.next_stamp += 1;
            let mut components = Vec::new();
            for &v in &nodes {
                if self.stamp[v] == comp_stamp {
                    continue;
                }
                let ls = self.bfs(v, member);
                let comp: Vec<usize> = ls.into_iter().flatten().collect();
                for &w in &comp {
                    self.stamp[w] = comp_stamp;
                }
                seen.push(comp.len());
                components.push(comp);
            }
            for comp in components {
                self.dissect(comp);
            }
            return;
        }
        // pseudo-peripheral start node
        for _ in 0..4 {
            let last = levels.last().expect("non-empty");
            let far = *last.iter().min_by_key(|&&v| self.adj[v].len()).expect("non-empty");
            let cand = self.bfs(far, member);
            if cand.len() > levels.len() {
                levels = cand;
            } else {
                break;
            }
        }
        if levels.len() < 3 {
            self.out.extend(nodes);
            return;
        }
        let total: usize = nodes.iter().map(|&v| self.weight[v]).sum();
        let mut acc = 0;
        let mut cut = 1;
        for (i, l) in levels.iter().enumerate() {
            acc += l.iter().map(|&v| self.weight[v]).sum::<usize>();
            if 2 * acc >= total {
                cut = i.clamp(1, levels.len() - 2);
                break;
            }
        }
        for (i, l) in levels.iter().enumerate() {
            for &v in l {
                self.level[v] = i as u32;
            }
        }
        let mut part_a: Vec<usize> = levels[..cut].iter().flatten().copied().collect();
        let part_b: Vec<usize> = levels[cut + 1..].iter().flatten().copied().collect();
        let mut sep = Vec::new();
        for &v in &levels[cut] {
            let touches_b = self.adj[v].iter().any(|&w| self.stamp[w] == member && self.level[w] as usize == cut + 1);
            if touches_b {
                sep.push(v);
            } else {
                part_a.push(v);
            }
        }
        self.dissect(part_a);
        self.dissect(part_b);
        self.out.extend(sep);
    }
}

/// Nested dissection order of a graph given by adjacency lists.
pub fn nested_dissection(adj: &[Vec<usize>], weight: &[usize]) -> Vec<usize> {
    let n = adj.len();
    let mut d = Dissector { adj, weight, stamp: vec![0; n], level: vec![0; n], next_stamp: 0, out: Vec::with_capacity(n) };
    d.dissect((0..n).collect());
    d.out
}

/// Elimination order (new position -> original unknown) for `matrix`.
pub fn saddle_point_order(matrix: &CsrMatrix, blocks: &BlockStructure) -> Vec<usize> {
    let nb = blocks.len();
    let adj = block_graph(matrix, blocks);
    let mut mark = vec![usize::MAX; nb];
    let mut first = Vec::new();
    let mut rest = Vec::new();
    for b in 0..nb {
        if blocks.signs[b] != BlockSign::Positive {
            continue;
        }
        if is_simplicial(b, &adj, &mut mark) {
            first.push(b);
        } else {
            rest.push(b);
        }
    }
    // nested dissection on the positive, non-simplicial blocks
    let mut local = vec![usize::MAX; nb];
    for (i, &b) in rest.iter().enumerate() {
        local[b] = i;
    }
    let sub_adj: Vec<Vec<usize>> =
        rest.iter().map(|&b| adj[b].iter().filter(|&&w| local[w] != usize::MAX).map(|&w| local[w]).collect()).collect();
    let weight: Vec<usize> = rest.iter().map(|&b| blocks.blocks[b].len()).collect();
    let nd = nested_dissection(&sub_adj, &weight);
    let positive: Vec<usize> = first.iter().copied().chain(nd.iter().map(|&i| rest[i])).collect();

    let mut pos = vec![usize::MAX; nb];
    for (i, &b) in positive.iter().enumerate() {
        pos[b] = i;
    }
    let mut after: Vec<Vec<usize>> = vec![Vec::new(); positive.len()];
    let mut orphans = Vec::new();
    for b in 0..nb {
        if blocks.signs[b] != BlockSign::Negative {
            continue;
        }
        match adj[b].iter().filter(|&&w| pos[w] != usize::MAX).map(|&w| pos[w]).max() {
            Some(p) => after[p].push(b),
            None => orphans.push(b),
        }
    }
    let mut order: Vec<usize> = Vec::with_capacity(nb);
    for (i, &b) in positive.iter().enumerate() {
        order.push(b);
        order.extend(after[i].iter().copied());
    }
    order.extend(orphans);

    for c in (0..nb).filter(|&b| blocks.signs[b] == BlockSign::Constraint) {
        let mut where_ = vec![usize::MAX; nb];
        for (i, &b) in order.iter().enumerate() {
            where_[b] = i;
        }
        let anchor = adj[c]
            .iter()
            .filter(|&&w| blocks.signs[w] == BlockSign::Negative && where_[w] != usize::MAX)
            .max_by_key(|&&w| where_[w])
            .copied();
        match anchor {
            Some(a) => {
                order.retain(|&b| b != a);
                order.push(c);
                order.push(a);
            }
            None => order.push(c),
        }
    }
    debug_assert_eq!(order.len(), nb);
    order.iter().flat_map(|&b| blocks.blocks[b].iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_laplacian(n: usize) -> CsrMatrix {
        let id = |i: usize, j: usize| i * n + j;
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                t.push((id(i, j), id(i, j), 4.0));
                if i + 1 < n {
                    t.push((id(i, j), id(i + 1, j), -1.0));
                    t.push((id(i + 1, j), id(i, j), -1.0));
                }
                if j + 1 < n {
                    t.push((id(i, j), id(i, j + 1), -1.0));
                    t.push((id(i, j + 1), id(i, j), -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(n * n, n * n, &t)
    }

    #[test]
    fn order_is_a_permutation() {
        let m = grid_laplacian(20);
        let p = saddle_point_order(&m, &BlockStructure::scalar(400));
        let mut s = p.clone();
        s.sort_unstable();
        assert_eq!(s, (0..400).collect::<Vec<_>>());
    }

    #[test]
    fn negative_blocks_follow_their_positive_neighbours() {
        // two velocity-like unknowns coupled to one pressure-like unknown
        let m = CsrMatrix::from_triplets(
            4,
            4,
            &[
                (0, 0, 2.0),
                (1, 1, 2.0),
                (0, 1, 1.0),
                (1, 0, 1.0),
                (0, 2, 1.0),
                (2, 0, 1.0),
                (1, 2, 1.0),
                (2, 1, 1.0),
                (2, 3, 1.0),
                (3, 2, 1.0),
            ],
        );
        let blocks = BlockStructure {
            blocks: vec![vec![0], vec![1], vec![2], vec![3]],
            signs: vec![BlockSign::Positive, BlockSign::Positive, BlockSign::Negative, BlockSign::Constraint],
        };
        let p = saddle_point_order(&m, &blocks);
        assert_eq!(&p[2..], &[3, 2]);
    }

    #[test]
    fn simplicial_blocks_go_first() {
        // star: leaf 0..3 attached to a triangle 4,5,6 where each leaf sees all
        // of the triangle
        let mut t = Vec::new();
        for i in 0..7 {
            t.push((i, i, 1.0));
        }
        for a in 4..7 {
            for b in 4..7 {
                if a != b {
                    t.push((a, b, 1.0));
                }
            }
            for leaf in 0..4 {
                t.push((leaf, a, 1.0));
                t.push((a, leaf, 1.0));
            }
        }
        let m = CsrMatrix::from_triplets(7, 7, &t);
        let p = saddle_point_order(&m, &BlockStructure::scalar(7));
        let mut head = p[..4].to_vec();
        head.sort_unstable();
        assert_eq!(head, vec![0, 1, 2, 3]);
    }
}
