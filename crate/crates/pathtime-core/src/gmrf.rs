//! Partial empirical covariance accumulation and sparsity-constrained
//! maximum-likelihood estimation of the precision matrix.
//!
//! Observations cover only the variables their path traverses, so first and
//! second moments are accumulated per variable and per pattern pair from
//! co-observations. The assembled matrix (the partial empirical covariance
//! matrix) is rescaled pairwise so co-observed second moments match the
//! marginal ones, pruned where joint counts are too small, and boosted on
//! the diagonal until it factorizes. The precision matrix then minimizes
//! `-log det S + <S, Sigma>` over the pattern by projected gradient descent
//! with backtracking, run on the correlation scale.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::factor::{build_sketch, factorize, CholeskyFactor, FillOrdering};
use crate::math::{self, Kahan};
use crate::network::{VarId, VariableIndex};
use crate::observation::CompressedObservation;
use crate::sparse::{EdgePattern, PatternMatrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GmrfError {
    #[error("no observations accumulated")]
    EmptyStats,
    #[error("diagonal boost ladder exhausted without a positive-definite matrix")]
    DiagBoostExhausted,
    #[error("input covariance (with boost {delta}) is not positive definite")]
    InputNotPositiveDefinite { delta: f64 },
}

/// Streaming moment accumulators on a fixed pattern.
///
/// Per variable: observation count, sum of y and y^2. Per off-diagonal
/// pattern pair: co-observation count, sum of products, and the two marginal
/// second moments restricted to co-observations (the ingredients of the
/// pairwise scaling correction). Merging two accumulators is field-wise
/// addition, so sharded accumulation commutes.
#[derive(Debug, Clone)]
pub struct PecmStats {
    pattern: Arc<EdgePattern>,
    n_obs: u64,
    n: Vec<u64>,
    sum_y: Vec<Kahan>,
    sum_ysq: Vec<Kahan>,
    n_joint: Vec<u64>,
    sum_yy: Vec<Kahan>,
    sum_ysq_lo: Vec<Kahan>,
    sum_ysq_hi: Vec<Kahan>,
}

impl PecmStats {
    pub fn new(pattern: Arc<EdgePattern>) -> Self {
        let d = pattern.dim();
        let np = pattern.n_pairs();
        Self {
            pattern,
            n_obs: 0,
            n: vec![0; d],
            sum_y: vec![Kahan::new(); d],
            sum_ysq: vec![Kahan::new(); d],
            n_joint: vec![0; np],
            sum_yy: vec![Kahan::new(); np],
            sum_ysq_lo: vec![Kahan::new(); np],
            sum_ysq_hi: vec![Kahan::new(); np],
        }
    }

    pub fn pattern(&self) -> &Arc<EdgePattern> {
        &self.pattern
    }

    pub fn n_observations(&self) -> u64 {
        self.n_obs
    }

    pub fn count(&self, u: VarId) -> u64 {
        self.n[u as usize]
    }

    pub fn joint_count(&self, u: VarId, v: VarId) -> u64 {
        self.pattern
            .pair_index(u, v)
            .map_or(0, |p| self.n_joint[p])
    }

    pub fn mean(&self, u: VarId) -> f64 {
        let n = self.n[u as usize];
        if n == 0 {
            0.0
        } else {
            self.sum_y[u as usize].value() / n as f64
        }
    }

    pub fn sum_products(&self, u: VarId, v: VarId) -> f64 {
        self.pattern
            .pair_index(u, v)
            .map_or(0.0, |p| self.sum_yy[p].value())
    }

    /// Feeds one observation. Every occurrence of a variable contributes to
    /// its marginal moments; every unordered pair of distinct positions
    /// whose variables form a pattern edge contributes once to the joint
    /// moments (duplicate links thus contribute once per position pair).
    pub fn accumulate(&mut self, index: &VariableIndex, obs: &CompressedObservation) {
        let m = obs.path.len();
        let mut vars = Vec::with_capacity(m);
        for i in 0..m {
            vars.push(index.beta(obs.path[i], obs.states[i]));
        }
        self.n_obs += 1;
        for i in 0..m {
            let u = vars[i] as usize;
            let y = obs.travel_times[i];
            self.n[u] += 1;
            self.sum_y[u].add(y);
            self.sum_ysq[u].add(y * y);
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let (mut u, mut v) = (vars[i], vars[j]);
                let (mut yu, mut yv) = (obs.travel_times[i], obs.travel_times[j]);
                if u == v {
                    continue; // diagonal moments come from the marginals
                }
                if u > v {
                    core::mem::swap(&mut u, &mut v);
                    core::mem::swap(&mut yu, &mut yv);
                }
                if let Some(p) = self.pattern.pair_index(u, v) {
                    self.n_joint[p] += 1;
                    self.sum_yy[p].add(yu * yv);
                    self.sum_ysq_lo[p].add(yu * yu);
                    self.sum_ysq_hi[p].add(yv * yv);
                }
            }
        }
    }

    /// Field-wise merge; commutative and associative up to compensated
    /// floating-point rounding.
    pub fn merge(&mut self, other: &PecmStats) {
        debug_assert_eq!(self.pattern.n_pairs(), other.pattern.n_pairs());
        self.n_obs += other.n_obs;
        for (a, b) in self.n.iter_mut().zip(&other.n) {
            *a += b;
        }
        for (a, b) in self.sum_y.iter_mut().zip(&other.sum_y) {
            a.merge(b);
        }
        for (a, b) in self.sum_ysq.iter_mut().zip(&other.sum_ysq) {
            a.merge(b);
        }
        for (a, b) in self.n_joint.iter_mut().zip(&other.n_joint) {
            *a += b;
        }
        for (a, b) in self.sum_yy.iter_mut().zip(&other.sum_yy) {
            a.merge(b);
        }
        for (a, b) in self.sum_ysq_lo.iter_mut().zip(&other.sum_ysq_lo) {
            a.merge(b);
        }
        for (a, b) in self.sum_ysq_hi.iter_mut().zip(&other.sum_ysq_hi) {
            a.merge(b);
        }
    }
}

/// Variance floor on diagonal entries (s^2); zero-variance variables would
/// make the log-det objective unbounded.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct AssembleOptions {
    /// Minimum co-observation count for an off-diagonal entry to survive.
    pub prune_min_count: u64,
    /// Pairwise second-moment rescaling (the alpha correction). Disabled
    /// only for diagnostics and ablations.
    pub alpha_correction: bool,
    /// Diagonal boost candidates, as multiples of trace/d. The first one
    /// whose Cholesky succeeds wins.
    pub boost_candidates: Vec<f64>,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self {
            prune_min_count: 10,
            alpha_correction: true,
            boost_candidates: vec![0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2],
        }
    }
}

/// Assembled partial empirical covariance matrix.
#[derive(Debug, Clone)]
pub struct Pecm {
    pub matrix: PatternMatrix,
    pub mu_hat: Vec<f64>,
    /// Scalar added to the diagonal so the matrix factorizes.
    pub diag_boost: f64,
    /// Variables with at least one observation.
    pub observed: Vec<bool>,
    /// Pattern pair indices dropped for insufficient co-observations.
    pub pruned: Vec<u32>,
    /// Diagonal entries clamped to the variance floor.
    pub floored_variances: usize,
}

impl Pecm {
    /// The matrix the precision fit actually sees: Sigma + boost * I.
    pub fn boosted_matrix(&self) -> PatternMatrix {
        let mut m = self.matrix.clone();
        let d = m.dim();
        for u in 0..d as u32 {
            let x = m.diag(u) + self.diag_boost;
            m.set_diag(u, x);
        }
        m
    }
}

/// Assembles the PECM from accumulated moments: pairwise-rescaled second
/// moments minus the product of marginal means, pruned and boosted until the
/// matrix factorizes.
pub fn assemble_pecm(stats: &PecmStats, opts: &AssembleOptions) -> Result<Pecm, GmrfError> {
    if stats.n_obs == 0 {
        return Err(GmrfError::EmptyStats);
    }
    let pattern = stats.pattern.clone();
    let d = pattern.dim();
    let mut matrix = PatternMatrix::zeros(pattern.clone());
    let mut mu_hat = vec![0.0; d];
    let mut observed = vec![false; d];
    let mut floored = 0usize;

    for u in 0..d {
        let n = stats.n[u];
        if n == 0 {
            // neutral placeholder; inference falls back to a prior for
            // these variables and never reads this entry
            matrix.set_diag(u as u32, 1.0);
            continue;
        }
        observed[u] = true;
        let mean = stats.sum_y[u].value() / n as f64;
        let mut var = stats.sum_ysq[u].value() / n as f64 - mean * mean;
        if var < VARIANCE_FLOOR {
            var = VARIANCE_FLOOR;
            floored += 1;
        }
        mu_hat[u] = mean;
        matrix.set_diag(u as u32, var);
    }

    let mut pruned = Vec::new();
    for (p, &(u, v)) in pattern.pairs().iter().enumerate() {
        if u == v {
            continue;
        }
        let nj = stats.n_joint[p];
        if nj == 0 {
            continue; // never co-observed: structurally zero, not "pruned"
        }
        if nj < opts.prune_min_count {
            pruned.push(p as u32);
            continue;
        }
        let njf = nj as f64;
        let e_yy = stats.sum_yy[p].value() / njf;
        let alpha = if opts.alpha_correction {
            let e_usq_joint = stats.sum_ysq_lo[p].value() / njf;
            let e_vsq_joint = stats.sum_ysq_hi[p].value() / njf;
            let e_usq = stats.sum_ysq[u as usize].value() / stats.n[u as usize] as f64;
            let e_vsq = stats.sum_ysq[v as usize].value() / stats.n[v as usize] as f64;
            let denom = e_usq_joint * e_vsq_joint;
            if denom <= 0.0 {
                pruned.push(p as u32);
                continue;
            }
            math::sqrt(e_usq * e_vsq / denom)
        } else {
            1.0
        };
        let cov = alpha * e_yy - mu_hat[u as usize] * mu_hat[v as usize];
        matrix.values_mut()[p] = cov;
    }

    // Diagonal boost ladder: first candidate whose Cholesky succeeds.
    let trace: f64 = (0..d as u32).map(|u| matrix.diag(u)).sum();
    let unit = trace / d as f64;
    let sym = Arc::new(crate::factor::symbolic_factor(
        &pattern,
        FillOrdering::MinDegree,
    ));
    let mut chol = CholeskyFactor::allocate(sym);
    let mut chosen = None;
    let mut trial = matrix.clone();
    for &c in &opts.boost_candidates {
        let delta = c * unit;
        for u in 0..d as u32 {
            trial.set_diag(u, matrix.diag(u) + delta);
        }
        if chol.refactor(&trial).is_ok() {
            chosen = Some(delta);
            break;
        }
    }
    let diag_boost = chosen.ok_or(GmrfError::DiagBoostExhausted)?;

    Ok(Pecm {
        matrix,
        mu_hat,
        diag_boost,
        observed,
        pruned,
        floored_variances: floored,
    })
}

/// How the fit obtains inverse entries on the pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InverseMode {
    /// Two triangular solves per column: exact, for desk-scale fits and
    /// oracle checks.
    Exact,
    /// Random-projection estimates: near-linear cost, for network scale.
    Sketch { k: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub step_init: f64,
    pub max_iter: usize,
    /// Stationarity tolerance on max |Sigma_uv - (S^{-1})_uv| over the
    /// pattern, in the input matrix's units.
    pub tol: f64,
    pub mode: InverseMode,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            step_init: 1.0,
            max_iter: 500,
            tol: 1e-6,
            mode: InverseMode::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    MaxIterations,
    LineSearchStalled,
}

#[derive(Debug, Clone)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub grad_inf: f64,
    pub objective: f64,
    pub status: FitStatus,
    /// Objective after each accepted step (monotone nonincreasing).
    pub objective_trace: Vec<f64>,
}

/// Sparsity-constrained precision matrix with the mean vector and fit
/// provenance.
#[derive(Debug, Clone)]
pub struct PrecisionModel {
    pub matrix: PatternMatrix,
    pub mu: Vec<f64>,
    pub observed: Vec<bool>,
    pub diag_boost: f64,
    pub diagnostics: FitDiagnostics,
}

impl PrecisionModel {
    pub fn pattern(&self) -> &Arc<EdgePattern> {
        self.matrix.pattern()
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// Inverse entries of the current iterate on every pattern pair.
fn pattern_inverse(
    chol: &CholeskyFactor,
    pattern: &EdgePattern,
    mode: InverseMode,
    out: &mut [f64],
) {
    match mode {
        InverseMode::Exact => {
            let d = pattern.dim();
            for v in 0..d as u32 {
                let col = chol.inverse_column(v);
                for (u, p) in pattern.neighbors(v) {
                    if u >= v {
                        out[p] = col[u as usize];
                    }
                }
            }
        }
        InverseMode::Sketch { k, seed } => {
            let sk = build_sketch(chol, k, 0.0, seed);
            for (p, &(u, v)) in pattern.pairs().iter().enumerate() {
                out[p] = sk.inverse_entry(u, v);
            }
        }
    }
}

/// Fits the precision matrix: minimizes `-log det S + <S, Sigma>` subject to
/// the pattern's structural zeros, by projected gradient descent with
/// backtracking line search; steps whose Cholesky fails are rejected, so
/// every iterate stays positive definite. Internally the problem is solved
/// on the correlation scale (unit diagonal), which acts as an exact
/// diagonal preconditioner.
pub fn fit_precision(pecm: &Pecm, opts: &FitOptions) -> Result<PrecisionModel, GmrfError> {
    let sigma = pecm.boosted_matrix();
    let pattern = sigma.pattern().clone();
    let d = sigma.dim();
    let np = pattern.n_pairs();

    // correlation scaling
    let sd: Vec<f64> = (0..d as u32).map(|u| math::sqrt(sigma.diag(u))).collect();
    let mut corr = PatternMatrix::zeros(pattern.clone());
    for (p, &(u, v)) in pattern.pairs().iter().enumerate() {
        corr.values_mut()[p] = sigma.values()[p] / (sd[u as usize] * sd[v as usize]);
    }
    let logdet_scale: f64 = sd.iter().map(|s| 2.0 * math::ln(*s)).sum();

    let sym = Arc::new(crate::factor::symbolic_factor(
        &pattern,
        FillOrdering::MinDegree,
    ));
    let mut chol = CholeskyFactor::allocate(sym);

    // start from the separable optimum: identity on the correlation scale
    let mut s = PatternMatrix::zeros(pattern.clone());
    for u in 0..d as u32 {
        s.set_diag(u, 1.0);
    }
    if chol.refactor(&s).is_err() {
        return Err(GmrfError::InputNotPositiveDefinite {
            delta: pecm.diag_boost,
        });
    }

    let mut objective = -chol.logdet() + s.inner(&corr);
    let mut trace = vec![objective];
    let mut inv = vec![0.0; np];
    let mut grad = vec![0.0; np];
    let mut dir = vec![0.0; np];
    let mut prev_pivots: Vec<f64> = Vec::with_capacity(d);
    let mut trial = s.clone();
    let mut step = opts.step_init;
    let mut status = FitStatus::MaxIterations;
    let mut grad_inf_orig = f64::INFINITY;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        pattern_inverse(&chol, &pattern, opts.mode, &mut inv);

        grad_inf_orig = 0.0;
        for (p, &(u, v)) in pattern.pairs().iter().enumerate() {
            grad[p] = corr.values()[p] - inv[p];
            let orig = grad[p] * sd[u as usize] * sd[v as usize];
            grad_inf_orig = grad_inf_orig.max(orig.abs());
        }
        if grad_inf_orig <= opts.tol {
            status = FitStatus::Converged;
            break;
        }

        // steepest descent on the correlation scale; the scaling keeps the
        // Hessian roughly isotropic, so no further preconditioning is needed
        let mut descent = 0.0;
        for (p, &(u, v)) in pattern.pairs().iter().enumerate() {
            dir[p] = grad[p];
            let mult = if u == v { 1.0 } else { 2.0 };
            descent += mult * grad[p] * dir[p];
        }

        // backtracking line search, retaining positive definiteness. The
        // decrement is computed from pivot ratios plus the exact linear
        // term: near the optimum it is far below the f64 resolution of the
        // objective itself, so a direct f(S') - f(S) subtraction could not
        // certify genuine progress.
        prev_pivots.clear();
        prev_pivots.extend_from_slice(chol.pivots());
        let mut dir_inner_c = 0.0;
        for (p, &(u, v)) in pattern.pairs().iter().enumerate() {
            let mult = if u == v { 1.0 } else { 2.0 };
            dir_inner_c += mult * dir[p] * corr.values()[p];
        }
        let mut accepted = false;
        let mut first_try = true;
        for _ in 0..60 {
            for p in 0..np {
                trial.values_mut()[p] = s.values()[p] - step * dir[p];
            }
            if chol.refactor(&trial).is_ok() {
                let mut delta_logdet = 0.0;
                for (dk_new, dk_old) in chol.pivots().iter().zip(prev_pivots.iter()) {
                    delta_logdet += math::ln(dk_new / dk_old);
                }
                let delta_obj = -delta_logdet - step * dir_inner_c;
                if delta_obj <= -1e-4 * step * descent {
                    core::mem::swap(&mut s, &mut trial);
                    objective += delta_obj;
                    trace.push(objective);
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
            first_try = false;
        }
        if !accepted {
            status = FitStatus::LineSearchStalled;
            let _ = chol.refactor(&s);
            break;
        }
        if first_try {
            step = (step * 2.0).min(1e6);
        }
    }

    // map back to the original scale
    let mut out = PatternMatrix::zeros(pattern.clone());
    for (p, &(u, v)) in pattern.pairs().iter().enumerate() {
        out.values_mut()[p] = s.values()[p] / (sd[u as usize] * sd[v as usize]);
    }
    let objective_orig = objective + logdet_scale;
    // keep the trace in original-scale units as well
    for t in trace.iter_mut() {
        *t += logdet_scale;
    }

    Ok(PrecisionModel {
        matrix: out,
        mu: pecm.mu_hat.clone(),
        observed: pecm.observed.clone(),
        diag_boost: pecm.diag_boost,
        diagnostics: FitDiagnostics {
            iterations,
            grad_inf: grad_inf_orig,
            objective: objective_orig,
            status,
            objective_trace: trace,
        },
    })
}

/// Factorizes a fitted model in its original scale.
pub fn factorize_model(
    model: &PrecisionModel,
) -> Result<CholeskyFactor, crate::factor::FactorError> {
    factorize(&model.matrix, FillOrdering::MinDegree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_edge_pattern, build_variable_index, RoadNetwork};

    fn line_network(n: usize) -> (RoadNetwork, VariableIndex, Arc<EdgePattern>) {
        let downstream: Vec<Vec<u32>> = (0..n)
            .map(|i| if i + 1 < n { vec![i as u32 + 1] } else { vec![] })
            .collect();
        let net = RoadNetwork::with_uniform_modes(downstream, 1, vec![100.0; n]).unwrap();
        let idx = build_variable_index(&net);
        let pat = Arc::new(build_edge_pattern(&net, &idx));
        (net, idx, pat)
    }

    fn obs(path: &[u32], y: &[f64]) -> CompressedObservation {
        CompressedObservation {
            path: path.to_vec(),
            states: vec![0; path.len()],
            travel_times: y.to_vec(),
        }
    }

    fn pecm_from_matrix(matrix: PatternMatrix) -> Pecm {
        let d = matrix.dim();
        Pecm {
            matrix,
            mu_hat: vec![0.0; d],
            diag_boost: 0.0,
            observed: vec![true; d],
            pruned: vec![],
            floored_variances: 0,
        }
    }

    #[test]
    fn accumulate_single_pair() {
        let (_, idx, pat) = line_network(8);
        let mut stats = PecmStats::new(pat);
        stats.accumulate(&idx, &obs(&[3, 4], &[2.0, 5.0]));
        assert_eq!(stats.count(3), 1);
        assert_eq!(stats.count(4), 1);
        assert_eq!(stats.joint_count(3, 4), 1);
        assert_eq!(stats.sum_products(3, 4), 10.0);
    }

    #[test]
    fn merge_equals_sequential_accumulation() {
        let (_, idx, pat) = line_network(6);
        let all: Vec<CompressedObservation> = (0..40)
            .map(|i| {
                let start = i % 4;
                obs(
                    &[start as u32, start as u32 + 1, start as u32 + 2],
                    &[(i % 7 + 1) as f64, (i % 5 + 2) as f64, (i % 3 + 1) as f64],
                )
            })
            .collect();
        let mut whole = PecmStats::new(pat.clone());
        for o in &all {
            whole.accumulate(&idx, o);
        }
        let mut a = PecmStats::new(pat.clone());
        let mut b = PecmStats::new(pat);
        for (i, o) in all.iter().enumerate() {
            if i % 2 == 0 {
                a.accumulate(&idx, o);
            } else {
                b.accumulate(&idx, o);
            }
        }
        a.merge(&b);
        // integer-valued inputs: sums are exact in both orders
        assert_eq!(whole.n, a.n);
        assert_eq!(whole.n_joint, a.n_joint);
        for p in 0..whole.sum_yy.len() {
            assert_eq!(whole.sum_yy[p].value(), a.sum_yy[p].value());
        }
        for u in 0..whole.n.len() {
            assert_eq!(whole.sum_y[u].value(), a.sum_y[u].value());
            assert_eq!(whole.sum_ysq[u].value(), a.sum_ysq[u].value());
        }
    }

    #[test]
    fn empty_stats_rejected() {
        let (_, _, pat) = line_network(3);
        let stats = PecmStats::new(pat);
        assert_eq!(
            assemble_pecm(&stats, &AssembleOptions::default()).unwrap_err(),
            GmrfError::EmptyStats
        );
    }

    /// Partially observed bivariate data whose uncorrected covariance is
    /// indefinite: joint observations (10,10), (-10,-10), then lone
    /// observations 1, -1 on each variable.
    fn partial_bivariate_stats() -> PecmStats {
        let (_, idx, pat) = line_network(2);
        let mut stats = PecmStats::new(pat);
        stats.accumulate(&idx, &obs(&[0, 1], &[10.0, 10.0]));
        stats.accumulate(&idx, &obs(&[0, 1], &[-10.0, -10.0]));
        stats.accumulate(&idx, &obs(&[0], &[1.0]));
        stats.accumulate(&idx, &obs(&[0], &[-1.0]));
        stats.accumulate(&idx, &obs(&[1], &[1.0]));
        stats.accumulate(&idx, &obs(&[1], &[-1.0]));
        stats
    }

    #[test]
    fn uncorrected_partial_covariance_is_indefinite() {
        let stats = partial_bivariate_stats();
        let opts = AssembleOptions {
            alpha_correction: false,
            prune_min_count: 1,
            boost_candidates: vec![0.0],
        };
        // off-diagonal 100 exceeds the diagonals: one negative eigenvalue,
        // boost candidate 0 cannot factorize it
        let err = assemble_pecm(&stats, &opts).unwrap_err();
        assert_eq!(err, GmrfError::DiagBoostExhausted);

        // raw moments: diag 50.5, off-diag 100
        assert_eq!(stats.count(0), 4);
        assert_eq!(stats.joint_count(0, 1), 2);
        let e_sq = stats.sum_ysq[0].value() / 4.0;
        assert!((e_sq - 50.5).abs() < 1e-12);
        let e_yy = stats.sum_products(0, 1) / 2.0;
        assert!((e_yy - 100.0).abs() < 1e-12);
        // eigenvalues of [[50.5, 100], [100, 50.5]] are 50.5 -+ 100
        let (lo, hi) = (50.5 - 100.0, 50.5 + 100.0);
        assert!(lo < 0.0 && hi > 0.0);
    }

    #[test]
    fn alpha_correction_restores_factorizability() {
        let stats = partial_bivariate_stats();
        let opts = AssembleOptions {
            prune_min_count: 1,
            ..AssembleOptions::default()
        };
        let pecm = assemble_pecm(&stats, &opts).unwrap();
        // alpha = 50.5/100: the off-diagonal shrinks to the geometric mean
        // of the diagonals. The co-observed pairs are perfectly correlated,
        // so the corrected matrix is exactly singular and the boost ladder
        // settles on the first positive candidate.
        let off = pecm.matrix.get(0, 1);
        let geo = math::sqrt(pecm.matrix.diag(0) * pecm.matrix.diag(1));
        assert!((off - 50.5).abs() < 1e-12);
        assert!(off <= geo + 1e-12);
        let unit = (pecm.matrix.diag(0) + pecm.matrix.diag(1)) / 2.0;
        assert!(pecm.diag_boost > 0.0 && pecm.diag_boost <= 1e-6 * unit);
        assert!(factorize(&pecm.boosted_matrix(), FillOrdering::MinDegree).is_ok());
    }

    #[test]
    fn fully_observed_alpha_is_one_and_matches_dense_covariance() {
        let (_, idx, pat) = line_network(3);
        let mut stats = PecmStats::new(pat.clone());
        let data: [[f64; 3]; 5] = [
            [1.0, 2.0, 3.0],
            [2.0, 1.0, 4.0],
            [3.0, 3.0, 2.0],
            [0.5, 2.5, 3.5],
            [1.5, 1.0, 1.0],
        ];
        for row in &data {
            stats.accumulate(&idx, &obs(&[0, 1, 2], row));
        }
        let pecm = assemble_pecm(
            &stats,
            &AssembleOptions {
                prune_min_count: 1,
                ..AssembleOptions::default()
            },
        )
        .unwrap();
        // dense covariance oracle restricted to the pattern
        let n = data.len() as f64;
        for (p, &(u, v)) in pat.pairs().iter().enumerate() {
            let (u, v) = (u as usize, v as usize);
            let mu_u: f64 = data.iter().map(|r| r[u]).sum::<f64>() / n;
            let mu_v: f64 = data.iter().map(|r| r[v]).sum::<f64>() / n;
            let cov: f64 = data.iter().map(|r| r[u] * r[v]).sum::<f64>() / n - mu_u * mu_v;
            assert!(
                (pecm.matrix.values()[p] - cov).abs() < 1e-10,
                "pair ({u},{v})"
            );
        }
    }

    #[test]
    fn fit_diagonal_pattern_is_separable_optimum() {
        let pat = Arc::new(EdgePattern::from_pairs(3, core::iter::empty()));
        let mut matrix = PatternMatrix::zeros(pat);
        for (u, v) in [(0u32, 4.0), (1, 9.0), (2, 0.25)] {
            matrix.set_diag(u, v);
        }
        let model = fit_precision(&pecm_from_matrix(matrix), &FitOptions::default()).unwrap();
        assert_eq!(model.diagnostics.status, FitStatus::Converged);
        assert!((model.matrix.diag(0) - 0.25).abs() < 1e-9);
        assert!((model.matrix.diag(1) - 1.0 / 9.0).abs() < 1e-9);
        assert!((model.matrix.diag(2) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn fit_full_pattern_matches_dense_inverse() {
        // 3x3 full pattern: the optimum is Sigma^{-1}
        let pat = Arc::new(EdgePattern::from_pairs(3, [(0u32, 1u32), (0, 2), (1, 2)]));
        let mut matrix = PatternMatrix::zeros(pat);
        matrix.set_diag(0, 2.0);
        matrix.set_diag(1, 3.0);
        matrix.set_diag(2, 1.5);
        matrix.set(0, 1, 0.8);
        matrix.set(0, 2, 0.3);
        matrix.set(1, 2, -0.5);
        let a = [[2.0, 0.8, 0.3], [0.8, 3.0, -0.5], [0.3, -0.5, 1.5]];
        let opts = FitOptions {
            tol: 1e-8,
            ..FitOptions::default()
        };
        let model = fit_precision(&pecm_from_matrix(matrix), &opts).unwrap();
        assert_eq!(model.diagnostics.status, FitStatus::Converged);
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        let inv00 = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
        let inv01 = -(a[0][1] * a[2][2] - a[0][2] * a[2][1]) / det;
        let inv12 = -(a[0][0] * a[1][2] - a[0][2] * a[1][0]) / det;
        assert!((model.matrix.diag(0) - inv00).abs() < 1e-7);
        assert!((model.matrix.get(0, 1) - inv01).abs() < 1e-7);
        assert!((model.matrix.get(1, 2) - inv12).abs() < 1e-7);
    }

    #[test]
    fn objective_trace_is_monotone() {
        let pat = Arc::new(EdgePattern::from_pairs(4, [(0u32, 1u32), (1, 2), (2, 3)]));
        let mut matrix = PatternMatrix::zeros(pat);
        for u in 0..4u32 {
            matrix.set_diag(u, 1.0 + u as f64);
        }
        matrix.set(0, 1, 0.5);
        matrix.set(1, 2, -0.7);
        matrix.set(2, 3, 1.1);
        let model = fit_precision(&pecm_from_matrix(matrix), &FitOptions::default()).unwrap();
        let trace = &model.diagnostics.objective_trace;
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert_eq!(model.diagnostics.status, FitStatus::Converged);
    }

    #[test]
    fn max_iter_one_reports_not_converged() {
        let pat = Arc::new(EdgePattern::from_pairs(3, [(0u32, 1u32), (1, 2)]));
        let mut matrix = PatternMatrix::zeros(pat);
        for u in 0..3u32 {
            matrix.set_diag(u, 2.0);
        }
        matrix.set(0, 1, 0.9);
        matrix.set(1, 2, -0.9);
        let opts = FitOptions {
            max_iter: 1,
            tol: 1e-12,
            ..FitOptions::default()
        };
        let model = fit_precision(&pecm_from_matrix(matrix), &opts).unwrap();
        assert_eq!(model.diagnostics.status, FitStatus::MaxIterations);
        assert_eq!(model.diagnostics.iterations, 1);
    }
}
