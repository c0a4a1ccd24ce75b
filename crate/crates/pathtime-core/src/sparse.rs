//! Symmetric sparsity patterns and pattern-aligned matrices.
//!
//! The precision matrix, the partial empirical covariance matrix, and the
//! ground-truth precision of synthetic worlds all live on the same symmetric
//! pattern, so the pattern is built once and matrices store one value per
//! canonical (unordered) pair.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

/// Symmetric sparsity pattern over `d` variables.
///
/// Stores the canonical pair list (`u <= v`, lexicographically sorted,
/// including every diagonal pair) plus a CSR adjacency view where each slot
/// carries the canonical pair index, so symmetric traversal and pair-aligned
/// value storage share one index space.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePattern {
    d: usize,
    pairs: Vec<(u32, u32)>,
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    slot_pair: Vec<u32>,
    diag_pair: Vec<u32>,
}

impl EdgePattern {
    /// Builds a pattern from arbitrary (possibly duplicated, unordered)
    /// pairs. The full diagonal is always included.
    pub fn from_pairs(d: usize, raw: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut pairs: Vec<(u32, u32)> = raw
            .into_iter()
            .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
            .collect();
        pairs.extend((0..d as u32).map(|u| (u, u)));
        pairs.sort_unstable();
        pairs.dedup();
        debug_assert!(pairs.iter().all(|&(_, v)| (v as usize) < d));

        // CSR over both orientations, slot -> canonical pair index.
        let mut deg = vec![0usize; d];
        for &(u, v) in &pairs {
            deg[u as usize] += 1;
            if u != v {
                deg[v as usize] += 1;
            }
        }
        let mut row_ptr = vec![0usize; d + 1];
        for i in 0..d {
            row_ptr[i + 1] = row_ptr[i] + deg[i];
        }
        let nnz = row_ptr[d];
        let mut col = vec![0u32; nnz];
        let mut slot_pair = vec![0u32; nnz];
        let mut next = row_ptr.clone();
        for (p, &(u, v)) in pairs.iter().enumerate() {
            let s = next[u as usize];
            col[s] = v;
            slot_pair[s] = p as u32;
            next[u as usize] += 1;
            if u != v {
                let s = next[v as usize];
                col[s] = u;
                slot_pair[s] = p as u32;
                next[v as usize] += 1;
            }
        }
        // Pairs are sorted, so each row's slots come out ordered by column.
        let mut diag_pair = vec![0u32; d];
        for (p, &(u, v)) in pairs.iter().enumerate() {
            if u == v {
                diag_pair[u as usize] = p as u32;
            }
        }
        Self {
            d,
            pairs,
            row_ptr,
            col,
            slot_pair,
            diag_pair,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of canonical pairs (diagonal included).
    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Off-diagonal canonical pair count.
    pub fn n_off_diag(&self) -> usize {
        self.pairs.len() - self.d
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn pair(&self, idx: usize) -> (u32, u32) {
        self.pairs[idx]
    }

    pub fn diag_pair(&self, u: u32) -> usize {
        self.diag_pair[u as usize] as usize
    }

    /// Canonical pair index of (u, v), if present.
    pub fn pair_index(&self, u: u32, v: u32) -> Option<usize> {
        let (a, b) = if u <= v { (u, v) } else { (v, u) };
        let row = &self.col[self.row_ptr[a as usize]..self.row_ptr[a as usize + 1]];
        let k = row.binary_search(&b).ok()?;
        Some(self.slot_pair[self.row_ptr[a as usize] + k] as usize)
    }

    pub fn contains(&self, u: u32, v: u32) -> bool {
        self.pair_index(u, v).is_some()
    }

    /// Neighbors of `u` (including `u` itself), with canonical pair indices.
    pub fn neighbors(&self, u: u32) -> impl Iterator<Item = (u32, usize)> + '_ {
        let lo = self.row_ptr[u as usize];
        let hi = self.row_ptr[u as usize + 1];
        (lo..hi).map(move |s| (self.col[s], self.slot_pair[s] as usize))
    }

    pub fn degree(&self, u: u32) -> usize {
        self.row_ptr[u as usize + 1] - self.row_ptr[u as usize]
    }

    /// Adjacency excluding self-loops, as index lists (used by orderings).
    pub fn adjacency_lists(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.d];
        for u in 0..self.d as u32 {
            for (v, _) in self.neighbors(u) {
                if v != u {
                    adj[u as usize].push(v);
                }
            }
        }
        adj
    }
}

/// Symmetric matrix with values aligned to an [`EdgePattern`]'s canonical
/// pair list. Off-pattern entries are structurally zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternMatrix {
    pattern: Arc<EdgePattern>,
    values: Vec<f64>,
}

impl PatternMatrix {
    pub fn zeros(pattern: Arc<EdgePattern>) -> Self {
        let n = pattern.n_pairs();
        Self {
            pattern,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(pattern: Arc<EdgePattern>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), pattern.n_pairs());
        Self { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<EdgePattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, u: u32, v: u32) -> f64 {
        self.pattern
            .pair_index(u, v)
            .map_or(0.0, |p| self.values[p])
    }

    pub fn set(&mut self, u: u32, v: u32, x: f64) {
        let p = self
            .pattern
            .pair_index(u, v)
            .expect("entry outside pattern");
        self.values[p] = x;
    }

    pub fn diag(&self, u: u32) -> f64 {
        self.values[self.pattern.diag_pair(u)]
    }

    pub fn set_diag(&mut self, u: u32, x: f64) {
        let p = self.pattern.diag_pair(u);
        self.values[p] = x;
    }

    /// Frobenius inner product with a value vector on the same pattern
    /// (off-diagonal pairs count twice).
    pub fn inner(&self, other: &PatternMatrix) -> f64 {
        debug_assert_eq!(self.pattern.n_pairs(), other.pattern.n_pairs());
        let mut acc = 0.0;
        for (p, &(u, v)) in self.pattern.pairs.iter().enumerate() {
            let w = if u == v { 1.0 } else { 2.0 };
            acc += w * self.values[p] * other.values[p];
        }
        acc
    }

    /// y = A x (dense vectors).
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (p, &(u, v)) in self.pattern.pairs.iter().enumerate() {
            let a = self.values[p];
            y[u as usize] += a * x[v as usize];
            if u != v {
                y[v as usize] += a * x[u as usize];
            }
        }
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_pattern() -> EdgePattern {
        // 0-1, 1-2 chain.
        EdgePattern::from_pairs(3, [(1u32, 0u32), (1, 2)])
    }

    #[test]
    fn diagonal_always_present_and_symmetric() {
        let pat = small_pattern();
        assert_eq!(pat.n_pairs(), 5);
        for u in 0..3 {
            assert!(pat.contains(u, u));
        }
        assert!(pat.contains(0, 1) && pat.contains(1, 0));
        assert!(!pat.contains(0, 2));
    }

    #[test]
    fn pair_indices_round_trip() {
        let pat = small_pattern();
        for (p, &(u, v)) in pat.pairs().iter().enumerate() {
            assert_eq!(pat.pair_index(u, v), Some(p));
            assert_eq!(pat.pair_index(v, u), Some(p));
        }
    }

    #[test]
    fn matrix_inner_counts_off_diagonals_twice() {
        let pat = Arc::new(small_pattern());
        let mut a = PatternMatrix::zeros(pat.clone());
        let mut b = PatternMatrix::zeros(pat);
        a.set(0, 0, 2.0);
        a.set(0, 1, 3.0);
        b.set(0, 0, 5.0);
        b.set(1, 0, 7.0);
        assert_eq!(a.inner(&b), 2.0 * 5.0 + 2.0 * 3.0 * 7.0);
    }

    #[test]
    fn mul_vec_applies_symmetrically() {
        let pat = Arc::new(small_pattern());
        let mut a = PatternMatrix::zeros(pat);
        a.set(0, 0, 4.0);
        a.set(1, 1, 5.0);
        a.set(2, 2, 6.0);
        a.set(0, 1, 1.0);
        a.set(1, 2, 2.0);
        let x = [1.0, 2.0, 3.0];
        let mut y = [0.0; 3];
        a.mul_vec(&x, &mut y);
        assert_eq!(y, [6.0, 17.0, 22.0]);
    }
}
