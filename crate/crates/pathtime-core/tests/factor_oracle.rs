//! Dense-oracle checks for the sparse factorization and projection sketch.

use std::sync::Arc;

use nalgebra::DMatrix;
use pathtime_core::factor::{
    build_sketch, exact_inverse_entries, factorize, inverse_submatrix, jl_dimension, FillOrdering,
};
use pathtime_core::sparse::{EdgePattern, PatternMatrix};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Random diagonally-dominant PD matrix on a chain-plus-random-edges pattern.
fn random_sparse_pd(d: usize, extra_edges: usize, rng: &mut StdRng) -> PatternMatrix {
    let mut pairs: Vec<(u32, u32)> = (0..d as u32 - 1).map(|u| (u, u + 1)).collect();
    for _ in 0..extra_edges {
        let u = rng.random_range(0..d as u32);
        let v = rng.random_range(0..d as u32);
        if u != v {
            pairs.push((u, v));
        }
    }
    let pat = Arc::new(EdgePattern::from_pairs(d, pairs));
    let mut m = PatternMatrix::zeros(pat.clone());
    let mut rowsum = vec![0.0; d];
    for (p, &(u, v)) in pat.pairs().iter().enumerate() {
        if u != v {
            let x = rng.random_range(-1.0..1.0);
            m.values_mut()[p] = x;
            rowsum[u as usize] += x.abs();
            rowsum[v as usize] += x.abs();
        }
    }
    for u in 0..d as u32 {
        let x = rng.random_range(0.2..2.0);
        m.set_diag(u, rowsum[u as usize] + x);
    }
    m
}

fn to_dense(m: &PatternMatrix) -> DMatrix<f64> {
    let d = m.dim();
    let mut out = DMatrix::zeros(d, d);
    for (p, &(u, v)) in m.pattern().pairs().iter().enumerate() {
        out[(u as usize, v as usize)] = m.values()[p];
        out[(v as usize, u as usize)] = m.values()[p];
    }
    out
}

#[test]
fn reconstruction_residual_small_at_d500() {
    let mut rng = StdRng::seed_from_u64(11);
    let m = random_sparse_pd(500, 800, &mut rng);
    let f = factorize(&m, FillOrdering::MinDegree).unwrap();
    // P S P' = L L' within 1e-8 * max|S|
    let d = m.dim();
    let perm = f.symbolic().perm().to_vec();
    let mut rec = DMatrix::<f64>::zeros(d, d);
    for (i, j, v) in f.chol_triplets() {
        rec[(i as usize, j as usize)] = v;
    }
    let rec = &rec * rec.transpose();
    let dense = to_dense(&m);
    let mut max_err: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let want = dense[(perm[i] as usize, perm[j] as usize)];
            max_err = max_err.max((rec[(i, j)] - want).abs());
            max_abs = max_abs.max(want.abs());
        }
    }
    assert!(max_err <= 1e-8 * max_abs, "residual {max_err} vs {max_abs}");
}

#[test]
fn exact_inverse_matches_dense_at_d500() {
    let mut rng = StdRng::seed_from_u64(5);
    let m = random_sparse_pd(500, 600, &mut rng);
    let f = factorize(&m, FillOrdering::MinDegree).unwrap();
    let dense_inv = to_dense(&m).try_inverse().unwrap();
    let mut pairs = Vec::new();
    for _ in 0..200 {
        pairs.push((
            rng.random_range(0..500u32),
            rng.random_range(0..500u32),
        ));
    }
    let got = exact_inverse_entries(&f, &pairs);
    for (&(u, v), &x) in pairs.iter().zip(&got) {
        let want = dense_inv[(u as usize, v as usize)];
        assert!((x - want).abs() <= 1e-8, "({u},{v}): {x} vs {want}");
    }
}

#[test]
fn polarization_identity_holds_exactly() {
    let mut rng = StdRng::seed_from_u64(17);
    let m = random_sparse_pd(40, 60, &mut rng);
    let f = factorize(&m, FillOrdering::MinDegree).unwrap();
    for _ in 0..20 {
        let u = rng.random_range(0..40u32);
        let v = rng.random_range(0..40u32);
        let vars = vec![u, v];
        let block = inverse_submatrix(&f, &vars);
        // q(x) = x' S^{-1} x: q(e_u + e_v) - q(e_u) - q(e_v) = 2 (S^{-1})_uv
        let q_u = block[0];
        let q_v = block[3];
        let q_sum = block[0] + block[1] + block[2] + block[3];
        let lhs = 0.5 * (q_sum - q_u - q_v);
        let rhs = exact_inverse_entries(&f, &[(u, v)])[0];
        assert!((lhs - rhs).abs() < 1e-10);
    }
}

#[test]
fn jl_band_coverage_on_random_systems() {
    // d = 50, eps = 0.3, k from the bound; in >= 19/20 seeds, at least
    // (1 - 1/d) of the diagonal estimates fall in the (1 +- eps) band.
    let eps = 0.3;
    let d = 50usize;
    let k = jl_dimension(eps, d);
    let mut rng = StdRng::seed_from_u64(23);
    let m = random_sparse_pd(d, 70, &mut rng);
    let f = factorize(&m, FillOrdering::MinDegree).unwrap();
    let dense_inv = to_dense(&m).try_inverse().unwrap();
    let mut good_seeds = 0;
    for seed in 0..20u64 {
        let sk = build_sketch(&f, k, eps, seed);
        let mut in_band = 0usize;
        for u in 0..d {
            let est = sk.quad_form(&[u as u32]);
            let truth = dense_inv[(u, u)];
            if est >= (1.0 - eps) * truth && est <= (1.0 + eps) * truth {
                in_band += 1;
            }
        }
        if in_band as f64 >= (1.0 - 1.0 / d as f64) * d as f64 {
            good_seeds += 1;
        }
    }
    assert!(good_seeds >= 19, "only {good_seeds}/20 seeds had full coverage");
}

#[test]
fn sketch_error_shrinks_like_inverse_sqrt_k() {
    let d = 50usize;
    let mut rng = StdRng::seed_from_u64(31);
    let m = random_sparse_pd(d, 70, &mut rng);
    let f = factorize(&m, FillOrdering::MinDegree).unwrap();
    let dense_inv = to_dense(&m).try_inverse().unwrap();
    let ks = [256usize, 1024, 4096];
    let mut med_err = Vec::new();
    for &k in &ks {
        let mut errs = Vec::new();
        for seed in 0..6u64 {
            let sk = build_sketch(&f, k, 0.3, 100 + seed);
            for u in 0..d {
                let est = sk.quad_form(&[u as u32]);
                let truth = dense_inv[(u, u)];
                errs.push(((est - truth) / truth).abs());
            }
        }
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        med_err.push(errs[errs.len() / 2]);
    }
    // log-log slope across the k range
    let slope = (med_err[2].ln() - med_err[0].ln()) / ((ks[2] as f64).ln() - (ks[0] as f64).ln());
    assert!(
        (slope + 0.5).abs() <= 0.15,
        "slope {slope}, medians {med_err:?}"
    );
}

#[test]
fn path_selector_quad_form_within_band() {
    let d = 200usize;
    let eps = 0.3;
    let k = jl_dimension(eps, d);
    let mut rng = StdRng::seed_from_u64(41);
    let m = random_sparse_pd(d, 300, &mut rng);
    let f = factorize(&m, FillOrdering::MinDegree).unwrap();
    let dense_inv = to_dense(&m).try_inverse().unwrap();
    let sk = build_sketch(&f, k, eps, 7);
    let mut hits = 0;
    let trials = 20;
    for t in 0..trials {
        let start = (t * 9) % (d - 10);
        let vars: Vec<u32> = (start as u32..start as u32 + 10).collect();
        let est = sk.quad_form(&vars);
        let mut truth = 0.0;
        for &u in &vars {
            for &v in &vars {
                truth += dense_inv[(u as usize, v as usize)];
            }
        }
        if est >= (1.0 - eps) * truth && est <= (1.0 + eps) * truth {
            hits += 1;
        }
    }
    assert!(hits >= trials - 1, "only {hits}/{trials} in band");
}

#[test]
fn inverse_entry_unbiased_and_concentrated() {
    // identity: off-diagonal estimates concentrate near zero
    let pat = Arc::new(EdgePattern::from_pairs(50, std::iter::empty()));
    let mut ident = PatternMatrix::zeros(pat);
    for u in 0..50u32 {
        ident.set_diag(u, 1.0);
    }
    let f = factorize(&ident, FillOrdering::MinDegree).unwrap();
    let k = jl_dimension(0.3, 50);
    let mut bad_seeds = 0;
    for seed in 0..20u64 {
        let sk = build_sketch(&f, k, 0.3, 1000 + seed);
        if sk.inverse_entry(3, 29).abs() > 0.3 {
            bad_seeds += 1;
        }
    }
    assert!(bad_seeds <= 1);

    // random 30x30: mean over 100 sketches within 3 standard errors
    let mut rng = StdRng::seed_from_u64(53);
    let m = random_sparse_pd(30, 40, &mut rng);
    let f = factorize(&m, FillOrdering::MinDegree).unwrap();
    let dense_inv = to_dense(&m).try_inverse().unwrap();
    let (u, v) = (4u32, 11u32);
    let n_sketches = 100;
    let mut samples = Vec::with_capacity(n_sketches);
    for seed in 0..n_sketches as u64 {
        let sk = build_sketch(&f, 128, 0.5, 5000 + seed);
        samples.push(sk.inverse_entry(u, v));
    }
    let mean: f64 = samples.iter().sum::<f64>() / n_sketches as f64;
    let var: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
        / (n_sketches as f64 - 1.0);
    let se = (var / n_sketches as f64).sqrt();
    let truth = dense_inv[(u as usize, v as usize)];
    assert!(
        (mean - truth).abs() <= 3.0 * se,
        "mean {mean} truth {truth} se {se}"
    );
}
