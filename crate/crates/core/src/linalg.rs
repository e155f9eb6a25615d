//! Sparse operators and block-structured symmetric matrices.
//!
//! Stage Jacobians are stored in CSR form. The symmetric matrices that the
//! direction solver factors (`M_j` and the weight normal matrices) are kept as
//! a set of dense blocks, one per connected component of their sparsity graph,
//! so that e.g. the first-stage matrix of a network (block diagonal over
//! neurons once permuted) is factored block by block.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use petgraph::unionfind::UnionFind;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

/// Row-by-row construction of a [`Csr`].
#[derive(Debug)]
pub struct CsrBuilder {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrBuilder {
    pub fn new(ncols: usize) -> Self {
        Self::with_capacity(ncols, 0, 0)
    }

    pub fn with_capacity(ncols: usize, rows: usize, nnz: usize) -> Self {
        let mut indptr = Vec::with_capacity(rows + 1);
        indptr.push(0);
        Self {
            ncols,
            indptr,
            indices: Vec::with_capacity(nnz),
            values: Vec::with_capacity(nnz),
        }
    }

    /// Appends an entry to the current row. Columns within a row must be
    /// pushed in increasing order.
    #[inline]
    pub fn push(&mut self, col: usize, value: f64) {
        debug_assert!(col < self.ncols);
        self.indices.push(col);
        self.values.push(value);
    }

    #[inline]
    pub fn end_row(&mut self) {
        self.indptr.push(self.indices.len());
    }

    pub fn build(self) -> Csr {
        Csr {
            nrows: self.indptr.len() - 1,
            ncols: self.ncols,
            indptr: self.indptr,
            indices: self.indices,
            values: self.values,
        }
    }
}

impl Csr {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Keeps every nonzero entry of `m`.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut b = CsrBuilder::new(m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    b.push(j, v);
                }
            }
            b.end_row();
        }
        b.build()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[(r, c)] += v;
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let range = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[range.clone()], &self.values[range])
    }

    /// `self * x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "csr matvec operand length");
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    /// `self^T * x`
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "csr transposed matvec operand length");
        let mut out = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c] += v * xr;
            }
        }
        out
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                indices[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        Csr {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            values,
        }
    }

    pub fn scaled(&self, s: f64) -> Csr {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }
}

/// A symmetric matrix stored as dense diagonal blocks over disjoint index
/// sets. Entries outside every block are zero.
#[derive(Debug, Clone)]
pub struct BlockSym {
    n: usize,
    /// (block, position within block) for every row.
    loc: Vec<(usize, usize)>,
    blocks: Vec<SymBlock>,
}

#[derive(Debug, Clone)]
pub struct SymBlock {
    pub indices: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

/// Returned when a block is not numerically positive definite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite {
    pub min_eigenvalue: f64,
}

impl BlockSym {
    /// Assembles `diag*I + sum_k scale_k * C_k^T C_k + A M A^T`.
    ///
    /// Each `C_k` has `n` columns; `A` is `n x M.dim()`.
    pub fn assemble(
        n: usize,
        diag: f64,
        grams: &[(f64, &Csr)],
        congruence: Option<(&Csr, &BlockSym)>,
    ) -> BlockSym {
        let mut uf = UnionFind::<usize>::new(n);
        for &(_, c) in grams {
            assert_eq!(c.ncols(), n, "gram factor column count");
            for r in 0..c.nrows() {
                let (cols, _) = c.row(r);
                if let Some((&first, rest)) = cols.split_first() {
                    for &col in rest {
                        uf.union(first, col);
                    }
                }
            }
        }
        if let Some((a, m)) = congruence {
            assert_eq!(a.nrows(), n, "congruence row count");
            assert_eq!(a.ncols(), m.n, "congruence column count");
            let mut first_row: Vec<Option<usize>> = vec![None; m.blocks.len()];
            for r in 0..n {
                let (cols, _) = a.row(r);
                for &p in cols {
                    let c = m.loc[p].0;
                    match first_row[c] {
                        Some(f) => {
                            uf.union(f, r);
                        }
                        None => first_row[c] = Some(r),
                    }
                }
            }
        }

        // Components ordered by their smallest index.
        let labels = uf.into_labeling();
        let mut block_of_root = vec![usize::MAX; n];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut loc = vec![(0, 0); n];
        for (i, &root) in labels.iter().enumerate() {
            if block_of_root[root] == usize::MAX {
                block_of_root[root] = groups.len();
                groups.push(Vec::new());
            }
            let b = block_of_root[root];
            loc[i] = (b, groups[b].len());
            groups[b].push(i);
        }
        let mut blocks: Vec<SymBlock> = groups
            .into_iter()
            .map(|indices| {
                let k = indices.len();
                SymBlock {
                    indices,
                    matrix: DMatrix::from_diagonal_element(k, k, diag),
                }
            })
            .collect();

        for &(scale, c) in grams {
            for r in 0..c.nrows() {
                let (cols, vals) = c.row(r);
                if cols.is_empty() {
                    continue;
                }
                let b = loc[cols[0]].0;
                let mat = &mut blocks[b].matrix;
                for (&ca, &va) in cols.iter().zip(vals) {
                    let la = loc[ca].1;
                    let sva = scale * va;
                    for (&cb, &vb) in cols.iter().zip(vals) {
                        mat[(loc[cb].1, la)] += sva * vb;
                    }
                }
            }
        }

        if let Some((a, m)) = congruence {
            let mut touched = vec![usize::MAX; m.blocks.len()];
            for (t_id, block) in blocks.iter_mut().enumerate() {
                let rows = &block.indices;
                let nt = rows.len();
                let mut sources = Vec::new();
                for &r in rows {
                    for &p in a.row(r).0 {
                        let c = m.loc[p].0;
                        if touched[c] != t_id {
                            touched[c] = t_id;
                            sources.push(c);
                        }
                    }
                }
                for c in sources {
                    let mc = &m.blocks[c].matrix;
                    let nc = mc.nrows();
                    // ut = M_c * A[T, c]^T, column t belongs to target row t
                    let mut ut = DMatrix::<f64>::zeros(nc, nt);
                    for (t, &r) in rows.iter().enumerate() {
                        let (cols, vals) = a.row(r);
                        for (&p, &v) in cols.iter().zip(vals) {
                            let (pc, lp) = m.loc[p];
                            if pc != c {
                                continue;
                            }
                            let src = mc.column(lp);
                            let mut dst = ut.column_mut(t);
                            dst.axpy(v, &src, 1.0);
                        }
                    }
                    for (t2, &r2) in rows.iter().enumerate() {
                        let (cols, vals) = a.row(r2);
                        for (&p, &v) in cols.iter().zip(vals) {
                            let (pc, lp) = m.loc[p];
                            if pc != c {
                                continue;
                            }
                            for t in 0..nt {
                                block.matrix[(t, t2)] += ut[(lp, t)] * v;
                            }
                        }
                    }
                }
            }
        }

        BlockSym { n, loc, blocks }
    }

    /// Splits a dense symmetric matrix into its connected blocks.
    pub fn from_dense(m: &DMatrix<f64>) -> BlockSym {
        assert!(m.is_square());
        let n = m.nrows();
        // one pattern row per coupled pair; its gram term links the pair
        let mut pattern = CsrBuilder::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if m[(i, j)] != 0.0 || m[(j, i)] != 0.0 {
                    pattern.push(i, 1.0);
                    pattern.push(j, 1.0);
                    pattern.end_row();
                }
            }
        }
        let pattern = pattern.build();
        let mut out = BlockSym::assemble(n, 0.0, &[(0.0, &pattern)], None);
        for block in &mut out.blocks {
            for (a, &i) in block.indices.iter().enumerate() {
                for (b, &j) in block.indices.iter().enumerate() {
                    block.matrix[(a, b)] = m[(i, j)];
                }
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[SymBlock] {
        &self.blocks
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "block matvec operand length");
        let mut out = vec![0.0; self.n];
        for block in &self.blocks {
            let local = DVector::from_iterator(block.indices.len(), block.indices.iter().map(|&i| v[i]));
            let prod = &block.matrix * local;
            for (&i, &p) in block.indices.iter().zip(prod.iter()) {
                out[i] = p;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for block in &self.blocks {
            for (a, &i) in block.indices.iter().enumerate() {
                for (b, &j) in block.indices.iter().enumerate() {
                    out[(i, j)] = block.matrix[(a, b)];
                }
            }
        }
        out
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                SymmetricEigen::new(b.matrix.clone())
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn factor(&self) -> Result<BlockCholesky, NotPositiveDefinite> {
        let mut factors = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            match Cholesky::new(block.matrix.clone()) {
                Some(ch) => factors.push(ch),
                None => {
                    return Err(NotPositiveDefinite {
                        min_eigenvalue: self.min_eigenvalue(),
                    })
                }
            }
        }
        Ok(BlockCholesky {
            n: self.n,
            indices: self.blocks.iter().map(|b| b.indices.clone()).collect(),
            factors,
        })
    }
}

/// Cholesky factors of every block of a [`BlockSym`].
#[derive(Debug, Clone)]
pub struct BlockCholesky {
    n: usize,
    indices: Vec<Vec<usize>>,
    factors: Vec<Cholesky<f64, Dyn>>,
}

impl BlockCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "block solve operand length");
        let mut out = vec![0.0; self.n];
        for (idx, ch) in self.indices.iter().zip(&self.factors) {
            let mut local = DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]));
            ch.solve_mut(&mut local);
            for (&i, &x) in idx.iter().zip(local.iter()) {
                out[i] = x;
            }
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `y += s * x`
#[inline]
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sparse_random(rng: &mut ChaCha8Rng, r: usize, c: usize, density: f64) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| {
            if rng.random::<f64>() < density {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        })
    }

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn csr_products_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = sparse_random(&mut rng, 7, 5, 0.4);
        let a = Csr::from_dense(&d);
        let x: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
        let y: Vec<f64> = (0..7).map(|i| 0.5 * i as f64).collect();
        let dx = &d * DVector::from_column_slice(&x);
        let dty = d.transpose() * DVector::from_column_slice(&y);
        assert!(a.matvec(&x).iter().zip(dx.iter()).all(|(p, q)| (p - q).abs() < 1e-14));
        assert!(a.tr_matvec(&y).iter().zip(dty.iter()).all(|(p, q)| (p - q).abs() < 1e-14));
        assert_eq!(a.transpose().to_dense(), d.transpose());
        assert_eq!(a.to_dense(), d);
    }

    #[test]
    fn assemble_matches_dense_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..20 {
            let n_prev = 6 + trial % 3;
            let n = 5 + trial % 4;
            let c1 = sparse_random(&mut rng, 4, n, 0.3);
            let prev_dense = {
                let g = sparse_random(&mut rng, n_prev, n_prev, 0.25);
                &g * g.transpose() + DMatrix::identity(n_prev, n_prev)
            };
            let prev = BlockSym::from_dense(&prev_dense);
            assert!(max_abs_diff(&prev.to_dense(), &prev_dense) == 0.0);
            let a = sparse_random(&mut rng, n, n_prev, 0.2);
            let m = BlockSym::assemble(
                n,
                0.7,
                &[(2.0, &Csr::from_dense(&c1))],
                Some((&Csr::from_dense(&a), &prev)),
            );
            let expected = DMatrix::identity(n, n) * 0.7
                + c1.transpose() * &c1 * 2.0
                + &a * &prev_dense * a.transpose();
            assert!(max_abs_diff(&m.to_dense(), &expected) < 1e-13, "trial {trial}");
            let v: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let mv = m.matvec(&v);
            let ev = &expected * DVector::from_column_slice(&v);
            assert!(mv.iter().zip(ev.iter()).all(|(p, q)| (p - q).abs() < 1e-12));
            let sol = m.factor().unwrap().solve(&v);
            let back = &expected * DVector::from_column_slice(&sol);
            assert!(back.iter().zip(&v).all(|(p, q)| (p - q).abs() < 1e-10));
        }
    }

    #[test]
    fn block_diagonal_structure_is_detected() {
        // Two rows of C touching disjoint column sets give two blocks.
        let mut b = CsrBuilder::new(4);
        b.push(0, 1.0);
        b.push(2, 1.0);
        b.end_row();
        b.push(1, 1.0);
        b.push(3, 2.0);
        b.end_row();
        let c = b.build();
        let m = BlockSym::assemble(4, 1.0, &[(1.0, &c)], None);
        assert_eq!(m.blocks().len(), 2);
        assert_eq!(m.blocks()[0].indices, vec![0, 2]);
        assert_eq!(m.blocks()[1].indices, vec![1, 3]);
    }

    #[test]
    fn indefinite_block_is_reported() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = BlockSym::from_dense(&d).factor().unwrap_err();
        assert!((err.min_eigenvalue + 1.0).abs() < 1e-12);
    }
}
