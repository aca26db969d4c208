//! Supernodal multifrontal LDLᵀ with sign-aware pivot regularization.
//!
//! Pivots whose sign disagrees with the expected inertia, or that are too
//! small, are replaced by `delta * sign`. The perturbation is undone exactly at
//! solve time through a low-rank correction; the small capacitance matrix of
//! that correction doubles as a singularity certificate.

use super::{CsrMatrix, SparseError};
use nalgebra::{DMatrix, DVector};

const NONE: usize = usize::MAX;
/// Panel width of the dense front factorization.
const PANEL: usize = 48;
/// Column block of the trailing update.
const UPDATE_BLOCK: usize = 192;

/// Tuning knobs for [`LdlFactor::factor`].
#[derive(Debug, Clone, Copy)]
pub struct LdlOptions {
    /// Pivots with `sign * d < eps * max|K|` are regularized.
    pub eps: f64,
    /// Replacement magnitude, relative to `max|K|`.
    pub delta: f64,
    /// More regularized pivots than this means the matrix is singular.
    pub max_corrections: usize,
    /// Smallest singular value of the capacitance matrix accepted.
    pub capacitance_tol: f64,
}

impl Default for LdlOptions {
    fn default() -> Self {
        LdlOptions { eps: 1e-12, delta: 1e-6, max_corrections: 32, capacitance_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FactorStats {
    pub n: usize,
    pub nnz_a: usize,
    /// Stored off-diagonal entries of `L`, explicit zeros of amalgamated
    /// supernodes included.
    pub nnz_l: usize,
    pub supernodes: usize,
    pub regularized: usize,
    pub positive_pivots: usize,
    pub negative_pivots: usize,
}

/// Low-rank correction undoing the pivot perturbations.
#[derive(Debug, Clone)]
struct Correction {
    /// Permuted positions of the regularized pivots.
    positions: Vec<usize>,
    /// Diagonal perturbation added to each.
    shifts: Vec<f64>,
    /// `K'^{-1} U` columns (permuted numbering).
    z: Vec<Vec<f64>>,
    /// LU of the capacitance `I - U^T Z E`.
    capacitance: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Consecutive columns of `L` sharing one row structure below the diagonal
/// block.
#[derive(Debug, Clone)]
struct Supernode {
    first: usize,
    ncols: usize,
    /// Rows below the diagonal block, ascending.
    rows: Vec<u32>,
    /// Column-major `(ncols + rows.len()) x ncols`; unit lower triangle on top.
    l: Vec<f64>,
}

impl Supernode {
    fn height(&self) -> usize {
        self.ncols + self.rows.len()
    }
}

/// Factorization `P K Pᵀ = L D Lᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    supernodes: Vec<Supernode>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    correction: Option<Correction>,
    pub stats: FactorStats,
}

/// Compressed columns of `P K Pᵀ` restricted to `row <= col` (`upper`) or
/// `row >= col` (`!upper`).
fn permuted_triangle(k: &CsrMatrix, pinv: &[usize], upper: bool) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let n = k.nrows;
    let keep = |pi: usize, pj: usize| if upper { pi <= pj } else { pi >= pj };
    let mut counts = vec![0usize; n + 1];
    for i in 0..n {
        for &j in k.row(i).0 {
            if keep(pinv[i], pinv[j]) {
                counts[pinv[j] + 1] += 1;
            }
        }
    }
    for c in 0..n {
        counts[c + 1] += counts[c];
    }
    let mut next = counts.clone();
    let mut ai = vec![0; counts[n]];
    let mut ax = vec![0.0; counts[n]];
    for i in 0..n {
        let (cols, vals) = k.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let (pi, pj) = (pinv[i], pinv[j]);
            if keep(pi, pj) {
                ai[next[pj]] = pi;
                ax[next[pj]] = v;
                next[pj] += 1;
            }
        }
    }
    (counts, ai, ax)
}

/// Elimination tree and off-diagonal column counts of `L` from the upper
/// triangle.
fn etree(n: usize, ap: &[usize], ai: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut work = vec![NONE; n];
    let mut parent = vec![NONE; n];
    let mut lnz = vec![0usize; n];
    for j in 0..n {
        work[j] = j;
        for &row in &ai[ap[j]..ap[j + 1]] {
            let mut i = row;
            while work[i] != j {
                if parent[i] == NONE {
                    parent[i] = j;
                }
                lnz[i] += 1;
                work[i] = j;
                i = parent[i];
            }
        }
    }
    (parent, lnz)
}

/// Postorder of a forest given by `parent`; children are visited in
/// increasing order so an already postordered tree maps to the identity.
fn postorder(parent: &[usize]) -> Vec<usize> {
    let n = parent.len();
    let mut head = vec![NONE; n];
    let mut next = vec![NONE; n];
    for j in (0..n).rev() {
        if parent[j] != NONE {
            next[j] = head[parent[j]];
            head[parent[j]] = j;
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = Vec::new();
    for root in (0..n).filter(|&j| parent[j] == NONE) {
        stack.push(root);
        while let Some(&top) = stack.last() {
            let child = head[top];
            if child == NONE {
                order.push(top);
                stack.pop();
            } else {
                head[top] = next[child];
                stack.push(child);
            }
        }
    }
    order
}

#[derive(Debug, Clone)]
struct SymbolicNode {
    first: usize,
    ncols: usize,
    rows: Vec<usize>,
    parent: usize,
    /// Structural nonzeros (diagonal block lower triangle included).
    true_nnz: usize,
}

impl SymbolicNode {
    fn dense_nnz(&self) -> usize {
        self.ncols * (self.ncols + 1) / 2 + self.ncols * self.rows.len()
    }
}

/// Fundamental supernodes of a postordered elimination tree, then relaxed
/// amalgamation of each node into its parent when the parent directly
/// follows it.
fn supernodes(n: usize, parent: &[usize], lnz: &[usize], lp: &[usize], li: &[usize]) -> Vec<SymbolicNode> {
    let mut nchild = vec![0usize; n];
    for &p in parent {
        if p != NONE {
            nchild[p] += 1;
        }
    }
    let mut first_of = Vec::new();
    for j in 0..n {
        let extends = j > 0 && parent[j - 1] == j && nchild[j] == 1 && lnz[j - 1] == lnz[j] + 1;
        if !extends {
            first_of.push(j);
        }
    }
    let count = first_of.len();
    let mut node_of = vec![0usize; n];
    for (s, &f) in first_of.iter().enumerate() {
        let end = first_of.get(s + 1).copied().unwrap_or(n);
        node_of[f..end].iter_mut().for_each(|x| *x = s);
    }
    // row structures from the lower pattern of A and the children
    let mut nodes: Vec<SymbolicNode> = Vec::with_capacity(count);
    let mut mark = vec![NONE; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); count];
    for s in 0..count {
        let first = first_of[s];
        let end = first_of.get(s + 1).copied().unwrap_or(n);
        let last = end - 1;
        let mut rows = Vec::new();
        for c in first..end {
            for &r in &li[lp[c]..lp[c + 1]] {
                if r > last && mark[r] != s {
                    mark[r] = s;
                    rows.push(r);
                }
            }
        }
        for &ch in &children[s] {
            let child_rows: &Vec<usize> = &nodes[ch].rows;
            for &r in child_rows {
                if r > last && mark[r] != s {
                    mark[r] = s;
                    rows.push(r);
                }
            }
        }
        rows.sort_unstable();
        let p = parent[last];
        let parent_node = if p == NONE { NONE } else { node_of[p] };
        if parent_node != NONE {
            children[parent_node].push(s);
        }
        let ncols = end - first;
        let true_nnz = (first..end).map(|c| lnz[c] + 1).sum();
        nodes.push(SymbolicNode { first, ncols, rows, parent: parent_node, true_nnz });
    }

    // relaxed amalgamation
    let mut merged: Vec<SymbolicNode> = Vec::with_capacity(count);
    let mut new_index = vec![0usize; count];
    for (s, node) in nodes.into_iter().enumerate() {
        let mut node = node;
        if let Some(prev) = merged.last().filter(|m| m.parent == s && m.first + m.ncols == node.first) {
            {
                let candidate = SymbolicNode {
                    first: prev.first,
                    ncols: prev.ncols + node.ncols,
                    rows: node.rows.clone(),
                    parent: node.parent,
                    true_nnz: prev.true_nnz + node.true_nnz,
                };
                let dense = candidate.dense_nnz();
                let zeros = dense - candidate.true_nnz.min(dense);
                let frac = zeros as f64 / dense as f64;
                let nc = candidate.ncols;
                let accept = nc <= 4 || (nc <= 16 && frac < 0.8) || (nc <= 48 && frac < 0.1) || frac < 0.05;
                if accept {
                    merged.pop();
                    node = candidate;
                }
            }
        }
        merged.push(node);
        new_index[s] = merged.len() - 1;
    }
    // parents are still fundamental indices; translate
    for m in merged.iter_mut() {
        if m.parent != NONE {
            m.parent = new_index[m.parent];
        }
    }
    merged
}

/// Pivot bookkeeping shared across fronts.
struct PivotPolicy<'a> {
    signs: &'a [f64],
    opts: LdlOptions,
    scale: f64,
    positions: Vec<usize>,
    shifts: Vec<f64>,
}

impl PivotPolicy<'_> {
    fn pivot(&mut self, global: usize, d: f64) -> Result<f64, SparseError> {
        let s = self.signs[global];
        if s * d >= self.opts.eps * self.scale {
            return Ok(d);
        }
        let target = s * self.opts.delta * self.scale;
        self.positions.push(global);
        self.shifts.push(target - d);
        if self.positions.len() > self.opts.max_corrections {
            return Err(SparseError::Singular { regularized: self.positions.len(), capacitance_min: 0.0 });
        }
        Ok(target)
    }
}

/// Eliminates the leading `nc` columns of the lower triangle of the dense
/// front `f`. Afterwards the leading columns hold `L` (unit diagonal not
/// stored, `d` written to `d_out`) and the trailing block holds the Schur
/// complement.
fn factor_front(
    f: &mut DMatrix<f64>,
    nc: usize,
    first: usize,
    d_out: &mut [f64],
    policy: &mut PivotPolicy,
) -> Result<(), SparseError> {
    let m = f.nrows();
    let mut j0 = 0;
    while j0 < nc {
        let j1 = (j0 + PANEL).min(nc);
        for j in j0..j1 {
            let d = policy.pivot(first + j, f[(j, j)])?;
            d_out[j] = d;
            f[(j, j)] = 1.0;
            let dinv = 1.0 / d;
            for r in j + 1..m {
                f[(r, j)] *= dinv;
            }
            for c in j + 1..j1 {
                let t = f[(c, j)] * d;
                if t != 0.0 {
                    let (src, dst) = column_pair(f, j, c);
                    for r in c..m {
                        dst[r] -= src[r] * t;
                    }
                }
            }
        }
        if j1 < m {
            let b = j1 - j0;
            let lp = f.view((j1, j0), (m - j1, b)).clone_owned();
            let mut w = lp.clone();
            for (p, mut col) in w.column_iter_mut().enumerate() {
                col *= d_out[j0 + p];
            }
            let mut c0 = 0;
            let rows = m - j1;
            while c0 < rows {
                let c1 = (c0 + UPDATE_BLOCK).min(rows);
                let rhs = lp.rows(c0, c1 - c0).transpose();
                let lhs = w.rows(c0, rows - c0);
                let mut target = f.view_mut((j1 + c0, j1 + c0), (rows - c0, c1 - c0));
                target.gemm(-1.0, &lhs, &rhs, 1.0);
                c0 = c1;
            }
        }
        j0 = j1;
    }
    Ok(())
}

/// Column `src` read-only and column `dst` mutable (`src < dst`).
fn column_pair(f: &mut DMatrix<f64>, src: usize, dst: usize) -> (&[f64], &mut [f64]) {
    let m = f.nrows();
    let (a, b) = f.as_mut_slice().split_at_mut(dst * m);
    (&a[src * m..(src + 1) * m], &mut b[..m])
}

impl LdlFactor {
    /// Factors `k` in the elimination order `perm` (`perm[new] = old`).
    /// `signs[i]` is the expected pivot sign of unknown `i`. The order is
    /// refined by a postorder of its elimination tree, which leaves the fill
    /// and the pivots unchanged.
    pub fn factor(k: &CsrMatrix, perm: &[usize], signs: &[f64], opts: LdlOptions) -> Result<Self, SparseError> {
        let n = k.nrows;
        if k.ncols != n || perm.len() != n || signs.len() != n {
            return Err(SparseError::Dimension { expected: n, found: perm.len().min(signs.len()).min(k.ncols) });
        }
        if u32::try_from(n).is_err() {
            return Err(SparseError::TooLarge(n));
        }
        let scale = k.max_abs().max(f64::MIN_POSITIVE);
        let inverse = |p: &[usize]| {
            let mut inv = vec![0; n];
            for (new, &old) in p.iter().enumerate() {
                inv[old] = new;
            }
            inv
        };
        let (ap, ai, _) = permuted_triangle(k, &inverse(perm), true);
        let (parent, _) = etree(n, &ap, &ai);
        let post = postorder(&parent);
        let perm: Vec<usize> = post.iter().map(|&p| perm[p]).collect();
        let pinv = inverse(&perm);
        let (ap, ai, _) = permuted_triangle(k, &pinv, true);
        let (parent, lnz) = etree(n, &ap, &ai);
        let (lp, li, lx) = permuted_triangle(k, &pinv, false);
        let symbolic = supernodes(n, &parent, &lnz, &lp, &li);

        let psign: Vec<f64> = perm.iter().map(|&o| signs[o]).collect();
        let mut policy = PivotPolicy { signs: &psign, opts, scale, positions: Vec::new(), shifts: Vec::new() };
        let mut d = vec![0.0; n];
        let mut pos = vec![NONE; n];
        let mut pending: Vec<(Vec<usize>, DMatrix<f64>)> = Vec::new();
        let mut nchildren = vec![0usize; symbolic.len()];
        for s in &symbolic {
            if s.parent != NONE {
                nchildren[s.parent] += 1;
            }
        }
        let mut factored = Vec::with_capacity(symbolic.len());
        for (s, node) in symbolic.iter().enumerate() {
            let nc = node.ncols;
            let m = nc + node.rows.len();
            for (i, g) in (node.first..node.first + nc).chain(node.rows.iter().copied()).enumerate() {
                pos[g] = i;
            }
            let mut f = DMatrix::<f64>::zeros(m, m);
            for c in node.first..node.first + nc {
                let fc = pos[c];
                for q in lp[c]..lp[c + 1] {
                    f[(pos[li[q]], fc)] += lx[q];
                }
            }
            // children are the most recent pending updates (postorder)
            for _ in 0..nchildren[s] {
                let (rows, u) = pending.pop().expect("child update present");
                let local: Vec<usize> = rows.iter().map(|&r| pos[r]).collect();
                for (b, &cb) in local.iter().enumerate() {
                    let col = u.column(b);
                    for a in b..local.len() {
                        f[(local[a], cb)] += col[a];
                    }
                }
            }
            factor_front(&mut f, nc, node.first, &mut d[node.first..node.first + nc], &mut policy)?;
            if !node.rows.is_empty() {
                let update = f.view((nc, nc), (m - nc, m - nc)).clone_owned();
                pending.push((node.rows.clone(), update));
            }
            let l = f.columns(0, nc).iter().copied().collect();
            factored.push(Supernode { first: node.first, ncols: nc, rows: node.rows.iter().map(|&r| r as u32).collect(), l });
        }
        debug_assert!(pending.is_empty());

        let positive = d.iter().filter(|&&v| v > 0.0).count();
        let nnz_l = factored.iter().map(|s| s.ncols * (s.ncols - 1) / 2 + s.ncols * s.rows.len()).sum();
        let stats = FactorStats {
            n,
            nnz_a: k.nnz(),
            nnz_l,
            supernodes: factored.len(),
            regularized: policy.positions.len(),
            positive_pivots: positive,
            negative_pivots: n - positive,
        };
        let (positions, shifts) = (std::mem::take(&mut policy.positions), std::mem::take(&mut policy.shifts));
        let dinv = d.iter().map(|v| 1.0 / v).collect();
        let mut f = LdlFactor { n, perm, supernodes: factored, d, dinv, correction: None, stats };
        if !positions.is_empty() {
            f.build_correction(positions, shifts, opts)?;
        }
        Ok(f)
    }

    fn build_correction(&mut self, positions: Vec<usize>, shifts: Vec<f64>, opts: LdlOptions) -> Result<(), SparseError> {
        // K = K' - U E U^T with E = diag(shifts)
        let r = positions.len();
        let mut z = Vec::with_capacity(r);
        for &p in &positions {
            let mut e = vec![0.0; self.n];
            e[p] = 1.0;
            self.solve_permuted_in_place(&mut e);
            z.push(e);
        }
        let mut c = DMatrix::identity(r, r);
        for (i, &pi) in positions.iter().enumerate() {
            for j in 0..r {
                c[(i, j)] -= z[j][pi] * shifts[j];
            }
        }
        let smin = c.clone().svd(false, false).singular_values.min();
        if smin < opts.capacitance_tol {
            return Err(SparseError::Singular { regularized: r, capacitance_min: smin });
        }
        self.correction = Some(Correction { positions, shifts, z, capacitance: c.lu() });
        Ok(())
    }

    fn solve_permuted_in_place(&self, x: &mut [f64]) {
        for s in &self.supernodes {
            let (nc, h, f) = (s.ncols, s.height(), s.first);
            for j in 0..nc {
                let xj = x[f + j];
                if xj == 0.0 {
                    continue;
                }
                let col = &s.l[j * h..(j + 1) * h];
                for r in j + 1..nc {
                    x[f + r] -= col[r] * xj;
                }
                for (i, &row) in s.rows.iter().enumerate() {
                    x[row as usize] -= col[nc + i] * xj;
                }
            }
        }
        for (xi, di) in x.iter_mut().zip(&self.dinv) {
            *xi *= di;
        }
        for s in self.supernodes.iter().rev() {
            let (nc, h, f) = (s.ncols, s.height(), s.first);
            for j in (0..nc).rev() {
                let col = &s.l[j * h..(j + 1) * h];
                let mut acc = x[f + j];
                for r in j + 1..nc {
                    acc -= col[r] * x[f + r];
                }
                for (i, &row) in s.rows.iter().enumerate() {
                    acc -= col[nc + i] * x[row as usize];
                }
                x[f + j] = acc;
            }
        }
    }

    /// Solves `K x = b` (one application, no refinement).
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        self.solve_permuted_in_place(&mut x);
        if let Some(c) = &self.correction {
            // x = y + Z E w,  (I - U^T Z E) w = U^T y
            let rhs = DVector::from_iterator(c.positions.len(), c.positions.iter().map(|&p| x[p]));
            let w = c.capacitance.solve(&rhs).expect("capacitance checked at factorization");
            for (j, zj) in c.z.iter().enumerate() {
                let a = c.shifts[j] * w[j];
                for (xi, zi) in x.iter_mut().zip(zj) {
                    *xi += a * zi;
                }
            }
        }
        let mut out = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }

    /// Pivots `D` in elimination order.
    pub fn pivots(&self) -> &[f64] {
        &self.d
    }
}

/// Outcome of [`solve_refined`].
#[derive(Debug, Clone, Copy)]
pub struct RefinementReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve with iterative refinement until `|b - Kx| <= target |b|`; after
/// `max_iter` steps the result is still accepted if the residual is below
/// `accept`.
pub fn solve_refined(
    k: &CsrMatrix,
    f: &LdlFactor,
    b: &[f64],
    target: f64,
    accept: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, RefinementReport), SparseError> {
    let bn = norm(b);
    let mut x = f.solve(b);
    if bn == 0.0 {
        return Ok((x, RefinementReport { iterations: 0, relative_residual: 0.0 }));
    }
    let mut r = vec![0.0; b.len()];
    let mut rel = f64::INFINITY;
    for it in 0..=max_iter {
        k.matvec_into(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        rel = norm(&r) / bn;
        if rel <= target || (it == max_iter && rel <= accept) {
            return Ok((x, RefinementReport { iterations: it, relative_residual: rel }));
        }
        if it == max_iter || !rel.is_finite() {
            break;
        }
        let dx = f.solve(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
    }
    Err(SparseError::NoConvergence { residual: rel, tol: accept })
}
