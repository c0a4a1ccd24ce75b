//! Sparse Cholesky factorization with fill-reducing ordering, and the
//! random-projection engine for fast quadratic forms of the inverse.
//!
//! The factorization is stored in LDL' form with a unit lower factor and a
//! positive diagonal `D`; the Cholesky factor of the permuted matrix is
//! `L_chol = L * sqrt(D)`. Quadratic forms in the inverse go through
//! triangular solves against this factor, either exactly (column solves) or
//! through the Johnson-Lindenstrauss sketch in [`sketch`].

mod ordering;
mod sketch;

pub use ordering::min_degree;
pub use sketch::{build_sketch, jl_dimension, ProjectionSketch};

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::network::VarId;
use crate::sparse::{EdgePattern, PatternMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FillOrdering {
    #[default]
    MinDegree,
    Natural,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FactorError {
    #[error("matrix is not positive definite (pivot at variable {variable})")]
    NotPositiveDefinite { variable: VarId },
}

/// Symbolic structure shared by every numeric factorization of matrices on
/// one pattern and ordering: permutation, permuted upper-triangular layout,
/// elimination tree, and the column pointers of L.
#[derive(Debug)]
pub struct SymbolicFactor {
    d: usize,
    /// perm[j] = original variable eliminated at step j.
    perm: Vec<u32>,
    /// position[orig] = elimination step of that variable.
    position: Vec<u32>,
    // Permuted upper triangle of the input pattern (diagonal included),
    // CSC with rows sorted; each slot knows its canonical pair index.
    a_colptr: Vec<usize>,
    a_rowind: Vec<u32>,
    a_slot_pair: Vec<u32>,
    /// Elimination tree (-1 for roots).
    parent: Vec<i32>,
    /// Column pointers of the off-diagonal part of L.
    l_colptr: Vec<usize>,
}

impl SymbolicFactor {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn perm(&self) -> &[u32] {
        &self.perm
    }

    /// position[orig] = elimination step of that variable.
    pub fn position(&self) -> &[u32] {
        &self.position
    }

    /// Total nonzeros of L including the diagonal.
    pub fn nnz_l(&self) -> usize {
        self.l_colptr[self.d] + self.d
    }
}

/// Computes the fill-reducing ordering and the symbolic factorization of a
/// symmetric pattern.
pub fn symbolic_factor(pattern: &EdgePattern, ord: FillOrdering) -> SymbolicFactor {
    let d = pattern.dim();
    let perm: Vec<u32> = match ord {
        FillOrdering::MinDegree => min_degree(pattern.adjacency_lists()),
        FillOrdering::Natural => (0..d as u32).collect(),
    };
    let mut position = vec![0u32; d];
    for (j, &v) in perm.iter().enumerate() {
        position[v as usize] = j as u32;
    }

    // Permuted upper-triangular CSC of the pattern.
    let pairs = pattern.pairs();
    let mut colcnt = vec![0usize; d];
    for &(u, v) in pairs {
        let (pu, pv) = (position[u as usize], position[v as usize]);
        colcnt[pu.max(pv) as usize] += 1;
    }
    let mut a_colptr = vec![0usize; d + 1];
    for j in 0..d {
        a_colptr[j + 1] = a_colptr[j] + colcnt[j];
    }
    let nnz = a_colptr[d];
    let mut a_rowind = vec![0u32; nnz];
    let mut a_slot_pair = vec![0u32; nnz];
    let mut next = a_colptr.clone();
    for (p, &(u, v)) in pairs.iter().enumerate() {
        let (pu, pv) = (position[u as usize], position[v as usize]);
        let (row, colj) = if pu <= pv { (pu, pv) } else { (pv, pu) };
        let s = next[colj as usize];
        a_rowind[s] = row;
        a_slot_pair[s] = p as u32;
        next[colj as usize] += 1;
    }
    for j in 0..d {
        let lo = a_colptr[j];
        let hi = a_colptr[j + 1];
        let mut order: Vec<usize> = (lo..hi).collect();
        order.sort_unstable_by_key(|&s| a_rowind[s]);
        let rows: Vec<u32> = order.iter().map(|&s| a_rowind[s]).collect();
        let slots: Vec<u32> = order.iter().map(|&s| a_slot_pair[s]).collect();
        a_rowind[lo..hi].copy_from_slice(&rows);
        a_slot_pair[lo..hi].copy_from_slice(&slots);
    }

    // Elimination tree and column counts of L (up-looking symbolic pass).
    let mut parent = vec![-1i32; d];
    let mut flag = vec![u32::MAX; d];
    let mut lnz = vec![0usize; d];
    for k in 0..d {
        flag[k] = k as u32;
        for s in a_colptr[k]..a_colptr[k + 1] {
            let mut i = a_rowind[s] as usize;
            while flag[i] != k as u32 {
                if parent[i] == -1 {
                    parent[i] = k as i32;
                }
                lnz[i] += 1;
                flag[i] = k as u32;
                i = parent[i] as usize;
            }
        }
    }
    let mut l_colptr = vec![0usize; d + 1];
    for j in 0..d {
        l_colptr[j + 1] = l_colptr[j] + lnz[j];
    }

    SymbolicFactor {
        d,
        perm,
        position,
        a_colptr,
        a_rowind,
        a_slot_pair,
        parent,
        l_colptr,
    }
}

/// Numeric factorization `P S P' = L D L'` with unit lower-triangular L and
/// positive diagonal D. Refactorizable in place for matrices sharing the
/// symbolic structure.
#[derive(Debug)]
pub struct CholeskyFactor {
    sym: Arc<SymbolicFactor>,
    l_rowind: Vec<u32>,
    l_values: Vec<f64>,
    diag: Vec<f64>,
    // numeric workspaces, reused across refactorizations
    work_y: Vec<f64>,
    work_flag: Vec<u32>,
    work_stack: Vec<u32>,
    work_fill: Vec<usize>,
}

/// Factorizes a pattern matrix, computing the ordering and symbolic
/// structure first. Fails cleanly when the matrix is not positive definite.
pub fn factorize(matrix: &PatternMatrix, ord: FillOrdering) -> Result<CholeskyFactor, FactorError> {
    let sym = Arc::new(symbolic_factor(matrix.pattern(), ord));
    let mut f = CholeskyFactor::allocate(sym);
    f.refactor(matrix)?;
    Ok(f)
}

impl CholeskyFactor {
    pub fn allocate(sym: Arc<SymbolicFactor>) -> Self {
        let d = sym.d;
        let nnz = sym.l_colptr[d];
        Self {
            sym,
            l_rowind: vec![0; nnz],
            l_values: vec![0.0; nnz],
            diag: vec![0.0; d],
            work_y: vec![0.0; d],
            work_flag: vec![u32::MAX; d],
            work_stack: vec![0; d],
            work_fill: vec![0; d],
        }
    }

    pub fn symbolic(&self) -> &Arc<SymbolicFactor> {
        &self.sym
    }

    pub fn dim(&self) -> usize {
        self.sym.d
    }

    pub fn nnz_l(&self) -> usize {
        self.sym.nnz_l()
    }

    /// Fill-in ratio: nnz(L) relative to the nonzeros of the lower triangle
    /// of the input pattern.
    pub fn fill_ratio(&self, pattern: &EdgePattern) -> f64 {
        self.nnz_l() as f64 / pattern.n_pairs() as f64
    }

    /// Up-looking numeric refactorization. On error the factor contents are
    /// unspecified; a later successful `refactor` restores a valid state.
    pub fn refactor(&mut self, matrix: &PatternMatrix) -> Result<(), FactorError> {
        let sym = &*self.sym;
        let d = sym.d;
        debug_assert_eq!(matrix.dim(), d);
        let vals = matrix.values();
        let y = &mut self.work_y;
        let flag = &mut self.work_flag;
        let stack = &mut self.work_stack;
        let fill = &mut self.work_fill;
        fill[..d].fill(0);
        // stale flags from a previous pass would corrupt the etree walk
        flag[..d].fill(u32::MAX);

        for k in 0..d {
            flag[k] = k as u32;
            y[k] = 0.0;
            let mut top = d;
            for s in sym.a_colptr[k]..sym.a_colptr[k + 1] {
                let row = sym.a_rowind[s] as usize;
                y[row] = vals[sym.a_slot_pair[s] as usize];
                // pattern of row k of L: walk up the etree
                let mut len = 0usize;
                let mut i = row;
                while flag[i] != k as u32 {
                    stack[len] = i as u32;
                    len += 1;
                    flag[i] = k as u32;
                    i = sym.parent[i] as usize;
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    // reuse tail of the stack buffer as the pattern list
                    let node = stack[len];
                    stack[top] = node;
                }
            }
            let mut dk = y[k];
            y[k] = 0.0;
            // stack[top..d] holds the pattern in topological order
            for t in top..d {
                let i = stack[t] as usize;
                let yi = y[i];
                y[i] = 0.0;
                let l_ki = yi / self.diag[i];
                let lo = sym.l_colptr[i];
                for p in lo..lo + fill[i] {
                    y[self.l_rowind[p] as usize] -= self.l_values[p] * yi;
                }
                dk -= l_ki * yi;
                let slot = lo + fill[i];
                self.l_rowind[slot] = k as u32;
                self.l_values[slot] = l_ki;
                fill[i] += 1;
            }
            if !(dk > 0.0) || !dk.is_finite() {
                return Err(FactorError::NotPositiveDefinite {
                    variable: sym.perm[k],
                });
            }
            self.diag[k] = dk;
        }
        Ok(())
    }

    /// log det of the factorized matrix.
    pub fn logdet(&self) -> f64 {
        self.diag.iter().map(|&dk| crate::math::ln(dk)).sum()
    }

    /// The LDL' pivots (all positive after a successful refactorization).
    pub fn pivots(&self) -> &[f64] {
        &self.diag
    }

    /// In-place solve in permuted coordinates: w <- (L D L')^{-1} w.
    /// `from` is the first index that can be nonzero on entry (0 for dense
    /// right-hand sides); entries before it must be zero.
    fn solve_permuted(&self, w: &mut [f64], from: usize) {
        let sym = &*self.sym;
        let d = sym.d;
        for j in from..d {
            let wj = w[j];
            if wj != 0.0 {
                for p in sym.l_colptr[j]..sym.l_colptr[j + 1] {
                    w[self.l_rowind[p] as usize] -= self.l_values[p] * wj;
                }
            }
        }
        for j in from..d {
            w[j] /= self.diag[j];
        }
        for j in (0..d).rev() {
            let mut acc = w[j];
            for p in sym.l_colptr[j]..sym.l_colptr[j + 1] {
                acc -= self.l_values[p] * w[self.l_rowind[p] as usize];
            }
            w[j] = acc;
        }
    }

    /// x = S^{-1} b, both in original variable order.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let sym = &*self.sym;
        let d = sym.d;
        let mut w = vec![0.0; d];
        for (orig, &bi) in b.iter().enumerate() {
            w[sym.position[orig] as usize] = bi;
        }
        self.solve_permuted(&mut w, 0);
        let mut x = vec![0.0; d];
        for (orig, xi) in x.iter_mut().enumerate() {
            *xi = w[sym.position[orig] as usize];
        }
        x
    }

    /// Column `v` of S^{-1}, in original variable order.
    pub fn inverse_column(&self, v: VarId) -> Vec<f64> {
        let sym = &*self.sym;
        let d = sym.d;
        let mut w = vec![0.0; d];
        let pos = sym.position[v as usize] as usize;
        w[pos] = 1.0;
        self.solve_permuted(&mut w, pos);
        let mut x = vec![0.0; d];
        for (orig, xi) in x.iter_mut().enumerate() {
            *xi = w[sym.position[orig] as usize];
        }
        x
    }

    /// Backward half-solve used by the sketch: w <- L'^{-1} D^{-1/2} w in
    /// permuted coordinates.
    pub(crate) fn half_solve_transposed(&self, w: &mut [f64]) {
        let sym = &*self.sym;
        let d = sym.d;
        for j in 0..d {
            w[j] /= crate::math::sqrt(self.diag[j]);
        }
        for j in (0..d).rev() {
            let mut acc = w[j];
            for p in sym.l_colptr[j]..sym.l_colptr[j + 1] {
                acc -= self.l_values[p] * w[self.l_rowind[p] as usize];
            }
            w[j] = acc;
        }
    }

    /// The Cholesky factor of the permuted matrix as (row, col, value)
    /// triplets in permuted coordinates, diagonal included. Test surface.
    pub fn chol_triplets(&self) -> Vec<(u32, u32, f64)> {
        let sym = &*self.sym;
        let mut out = Vec::with_capacity(self.nnz_l());
        for j in 0..sym.d {
            let sd = crate::math::sqrt(self.diag[j]);
            out.push((j as u32, j as u32, sd));
            for p in sym.l_colptr[j]..sym.l_colptr[j + 1] {
                out.push((self.l_rowind[p], j as u32, self.l_values[p] * sd));
            }
        }
        out
    }
}

/// Exact entries of S^{-1} for arbitrary index pairs, via two triangular
/// solves per distinct column; columns are solved once and shared by all
/// pairs that need them.
pub fn exact_inverse_entries(factor: &CholeskyFactor, pairs: &[(VarId, VarId)]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_unstable_by_key(|&i| pairs[i].1);
    let mut out = vec![0.0; pairs.len()];
    let mut cached: Option<(VarId, Vec<f64>)> = None;
    for i in order {
        let (u, v) = pairs[i];
        let col = match &cached {
            Some((cv, col)) if *cv == v => col,
            _ => {
                cached = Some((v, factor.inverse_column(v)));
                &cached.as_ref().unwrap().1
            }
        };
        out[i] = col[u as usize];
    }
    out
}

/// Dense |vars| x |vars| block of S^{-1} (row-major), used by the exact
/// mixture oracle.
pub fn inverse_submatrix(factor: &CholeskyFactor, vars: &[VarId]) -> Vec<f64> {
    let n = vars.len();
    let mut out = vec![0.0; n * n];
    for (j, &v) in vars.iter().enumerate() {
        let col = factor.inverse_column(v);
        for (i, &u) in vars.iter().enumerate() {
            out[i * n + j] = col[u as usize];
        }
    }
    out
}
