//! Random-projection sketch of the inverse of a factorized precision matrix.
//!
//! With `S = L L'` (under the fill-reducing permutation), any quadratic form
//! `x' S^{-1} x` equals `||L^{-1} P x||^2`. Sketching the solve with a k x d
//! Rademacher matrix R gives `Q' x` with `Q = P' L^{-T} R'`, so variances of
//! path selectors reduce to summing I rows of Q and taking a squared norm,
//! and `Q_u . Q_v` estimates `(S^{-1})_{uv}`.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CholeskyFactor;
use crate::math;
use crate::network::VarId;

/// Sketch width required by the projection lemma for `n` vectors at
/// distortion `epsilon`: `k >= 24 eps^-2 ln n`.
pub fn jl_dimension(epsilon: f64, n: usize) -> usize {
    assert!(epsilon > 0.0 && n >= 1);
    math::ceil(24.0 * math::ln(n.max(2) as f64) / (epsilon * epsilon)) as usize
}

/// Dense d x k sketch with rows indexed by variable id. Stored in f32: the
/// estimates carry (1 +- eps) distortion anyway, and halving the footprint
/// matters at network scale.
#[derive(Debug, Clone)]
pub struct ProjectionSketch {
    d: usize,
    k: usize,
    epsilon: f64,
    seed: u64,
    q: Vec<f32>,
}

/// Builds the sketch by `k` half-solves against the transposed Cholesky
/// factor, one per Rademacher row. Deterministic given the seed: column `i`
/// draws from an independent ChaCha stream `i`.
pub fn build_sketch(
    factor: &CholeskyFactor,
    k: usize,
    epsilon: f64,
    seed: u64,
) -> ProjectionSketch {
    assert!(k >= 1);
    let d = factor.dim();
    let position = &factor.symbolic().position;
    let scale = 1.0 / math::sqrt(k as f64);
    let mut q = vec![0.0f32; d * k];
    let mut r = vec![0.0f64; d];
    for i in 0..k {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let mut filled = 0usize;
        while filled < d {
            let mut bits: u64 = rng.random();
            let take = 64.min(d - filled);
            for j in 0..take {
                r[filled + j] = if bits & 1 == 1 { scale } else { -scale };
                bits >>= 1;
            }
            filled += take;
        }
        factor.half_solve_transposed(&mut r);
        for (orig, &pos) in position.iter().enumerate() {
            q[orig * k + i] = r[pos as usize] as f32;
        }
    }
    ProjectionSketch {
        d,
        k,
        epsilon,
        seed,
        q,
    }
}

impl ProjectionSketch {
    pub fn from_raw(d: usize, k: usize, epsilon: f64, seed: u64, q: Vec<f32>) -> Self {
        assert_eq!(q.len(), d * k);
        Self {
            d,
            k,
            epsilon,
            seed,
            q,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn width(&self) -> usize {
        self.k
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn raw(&self) -> &[f32] {
        &self.q
    }

    #[inline]
    fn row(&self, u: VarId) -> &[f32] {
        &self.q[u as usize * self.k..(u as usize + 1) * self.k]
    }

    /// `|| sum_{u in selector} Q_u ||^2`, the sketched estimate of
    /// `e' S^{-1} e` for the 0/1 selector. Cost O(|selector| * k).
    pub fn quad_form(&self, selector: &[VarId]) -> f64 {
        let mut acc = vec![0.0f64; self.k];
        for &u in selector {
            for (a, &x) in acc.iter_mut().zip(self.row(u)) {
                *a += x as f64;
            }
        }
        acc.iter().map(|a| a * a).sum()
    }

    /// Sketched estimate of `(S^{-1})_{uv}` (exact in expectation over R).
    pub fn inverse_entry(&self, u: VarId, v: VarId) -> f64 {
        self.row(u)
            .iter()
            .zip(self.row(v))
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum()
    }
}
