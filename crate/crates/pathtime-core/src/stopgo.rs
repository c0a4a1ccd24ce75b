//! Stop-and-go trajectory compression: reconstructs piecewise-constant
//! speeds from noisy offset samples with an l1 penalty, counts the zero-speed
//! phases, and reduces a trace to (state, travel time) per link.
//!
//! Speeds are physical, so the LASSO carries a nonnegativity constraint; the
//! penalty term is then linear and the subproblem is solved by cyclic
//! coordinate descent on the Gram system. The penalty weight is chosen per
//! trace by BIC over a fixed logarithmic grid, with the nonzero count as the
//! degrees of freedom.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::network::{LinkId, RoadNetwork};
use crate::observation::CompressedObservation;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StopGoError {
    #[error("timestamps must be strictly increasing")]
    NonMonotonicTimestamps,
    #[error("need at least two samples on a link")]
    TooFewSamples,
}

/// Timestamped offsets on one link: (t seconds, x meters from link start).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTrace {
    pub link: LinkId,
    pub samples: Vec<(f64, f64)>,
}

impl LinkTrace {
    fn check(&self) -> Result<(), StopGoError> {
        if self.samples.len() < 2 {
            return Err(StopGoError::TooFewSamples);
        }
        for w in self.samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(StopGoError::NonMonotonicTimestamps);
            }
        }
        Ok(())
    }
}

/// Reconstruction of one link trace at the BIC-selected penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct StopGoResult {
    /// Per-interval speeds (m/s), nonnegative, many exactly zero.
    pub speeds: Vec<f64>,
    /// Maximal zero-speed runs of at least the minimum stop duration.
    pub stop_count: u32,
    /// Time span covered by the samples (refined against the link length
    /// during decomposition).
    pub travel_time: f64,
    pub lambda_used: f64,
    pub bic: f64,
    pub rss: f64,
    pub df: usize,
}

/// Least-squares system of the speed reconstruction: `A` is J x J lower
/// triangular with `A[i][k] = t_{k+1} - t_k` for `k <= i`, and
/// `b[i] = x_{i+1} - x_0`.
pub fn build_ls_system(trace: &LinkTrace) -> Result<(Vec<Vec<f64>>, Vec<f64>), StopGoError> {
    trace.check()?;
    let s = &trace.samples;
    let j = s.len() - 1;
    let dts: Vec<f64> = (0..j).map(|k| s[k + 1].0 - s[k].0).collect();
    let a: Vec<Vec<f64>> = (0..j)
        .map(|i| (0..j).map(|k| if k <= i { dts[k] } else { 0.0 }).collect())
        .collect();
    let b: Vec<f64> = (0..j).map(|i| s[i + 1].1 - s[0].1).collect();
    Ok((a, b))
}

fn gram_system(a: &[Vec<f64>], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = a[0].len();
    let mut gram = vec![0.0; n * n];
    let mut atb = vec![0.0; n];
    for (row, &bi) in a.iter().zip(b) {
        for j in 0..n {
            let aj = row[j];
            if aj == 0.0 {
                continue;
            }
            atb[j] += aj * bi;
            for k in j..n {
                gram[j * n + k] += aj * row[k];
            }
        }
    }
    for j in 0..n {
        for k in 0..j {
            gram[j * n + k] = gram[k * n + j];
        }
    }
    (gram, atb)
}

/// Normalized KKT residual of the nonnegative LASSO at `v`: stationarity
/// violation relative to the gradient scale.
pub fn lasso_kkt_residual(a: &[Vec<f64>], b: &[f64], lambda: f64, v: &[f64]) -> f64 {
    let (gram, atb) = gram_system(a, b);
    let n = v.len();
    let scale = atb.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut worst = 0.0f64;
    for j in 0..n {
        let mut g = -atb[j] + lambda;
        for k in 0..n {
            g += gram[j * n + k] * v[k];
        }
        let r = if v[j] > 0.0 { g.abs() } else { (-g).max(0.0) };
        worst = worst.max(r);
    }
    worst / scale
}

const KKT_TOL: f64 = 1e-10;

/// Coordinates below this (relative to the largest speed) are stationarity
/// slop from the solver tolerance, not genuine support members.
fn speed_eps(speeds: &[f64]) -> f64 {
    1e-6 * speeds.iter().fold(1.0f64, |m, &x| m.max(x))
}

/// Number of genuinely nonzero speeds.
pub fn support_size(speeds: &[f64]) -> usize {
    let eps = speed_eps(speeds);
    speeds.iter().filter(|&&x| x > eps).count()
}

fn coordinate_descent(gram: &[f64], atb: &[f64], lambda: f64, v: &mut [f64]) {
    let n = atb.len();
    // g = gram * v, maintained incrementally
    let mut g = vec![0.0; n];
    for j in 0..n {
        if v[j] != 0.0 {
            for k in 0..n {
                g[k] += gram[k * n + j] * v[j];
            }
        }
    }
    let scale = atb.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    for _ in 0..100_000 {
        for j in 0..n {
            let qjj = gram[j * n + j];
            if qjj == 0.0 {
                continue;
            }
            let old = v[j];
            let target = (atb[j] - lambda - (g[j] - qjj * old)) / qjj;
            let new = target.max(0.0);
            if new != old {
                let delta = new - old;
                for k in 0..n {
                    g[k] += gram[k * n + j] * delta;
                }
                v[j] = new;
            }
        }
        // stationarity is checked after the sweep: right after a coordinate
        // update its own partial gradient is zero by construction
        let mut worst = 0.0f64;
        for j in 0..n {
            let grad = g[j] - atb[j] + lambda;
            let r = if v[j] > 0.0 { grad.abs() } else { (-grad).max(0.0) };
            worst = worst.max(r);
        }
        if worst <= KKT_TOL * scale {
            return;
        }
    }
}

/// Minimizer of `0.5 ||A v - b||^2 + lambda sum(v)` over `v >= 0`.
pub fn solve_lasso(a: &[Vec<f64>], b: &[f64], lambda: f64) -> Vec<f64> {
    let n = a[0].len();
    let (gram, atb) = gram_system(a, b);
    let mut v = vec![0.0; n];
    coordinate_descent(&gram, &atb, lambda, &mut v);
    v
}

/// 30 logarithmically spaced penalty weights from the smallest one that
/// zeroes every speed (`max |A' b|`) down to 1e-4 of it, descending.
pub fn default_lambda_grid(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let (_, atb) = gram_system(a, b);
    let lambda_max = atb.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if lambda_max == 0.0 {
        return vec![0.0];
    }
    let n = 30;
    (0..n)
        .map(|i| lambda_max * math::exp(math::ln(1e-4) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Number of maximal zero-speed runs lasting at least `min_stop_s` seconds.
pub fn count_stops(speeds: &[f64], ts: &[f64], min_stop_s: f64) -> u32 {
    debug_assert_eq!(ts.len(), speeds.len() + 1);
    let eps = speed_eps(speeds);
    let mut stops = 0u32;
    let mut run_duration = 0.0;
    for (j, &v) in speeds.iter().enumerate() {
        if v <= eps {
            run_duration += ts[j + 1] - ts[j];
        } else {
            if run_duration >= min_stop_s {
                stops += 1;
            }
            run_duration = 0.0;
        }
    }
    if run_duration >= min_stop_s {
        stops += 1;
    }
    stops
}

/// Default minimal duration of a zero-speed run to count as a stop phase;
/// sub-sampling-period zeros are noise.
pub const MIN_STOP_DURATION_S: f64 = 2.0;

/// Fits the penalty weight by BIC over the grid (descending) and returns the
/// winning reconstruction. BIC = J ln(RSS/J) + df ln J with df = nonzero
/// count; the residual is floored so interpolating solutions compare by df.
pub fn select_lambda_bic(
    trace: &LinkTrace,
    lambda_grid: &[f64],
) -> Result<(f64, StopGoResult), StopGoError> {
    let (a, b) = build_ls_system(trace)?;
    let j = b.len();
    let ts: Vec<f64> = trace.samples.iter().map(|s| s.0).collect();
    let (gram, atb) = gram_system(&a, &b);

    let mut grid: Vec<f64> = lambda_grid.to_vec();
    grid.sort_by(|x, y| y.partial_cmp(x).unwrap());

    let mut v = vec![0.0; j];
    let mut best: Option<(f64, StopGoResult)> = None;
    for &lambda in &grid {
        coordinate_descent(&gram, &atb, lambda, &mut v);
        let mut rss = 0.0;
        for (row, &bi) in a.iter().zip(&b) {
            let pred: f64 = row.iter().zip(v.iter()).map(|(x, y)| x * y).sum();
            rss += (pred - bi) * (pred - bi);
        }
        let df = support_size(&v);
        let bic = j as f64 * math::ln(rss.max(1e-12) / j as f64) + df as f64 * math::ln(j as f64);
        let better = match &best {
            None => true,
            Some((_, cur)) => bic < cur.bic,
        };
        if better {
            let stop_count = count_stops(&v, &ts, MIN_STOP_DURATION_S);
            best = Some((
                lambda,
                StopGoResult {
                    speeds: v.clone(),
                    stop_count,
                    travel_time: ts[j] - ts[0],
                    lambda_used: lambda,
                    bic,
                    rss,
                    df,
                },
            ));
        }
    }
    Ok(best.expect("grid is nonempty"))
}

#[derive(Debug, Clone)]
pub struct DecomposeOptions {
    /// Penalty grid; per-trace default when empty.
    pub lambda_grid: Vec<f64>,
    pub min_stop_s: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            lambda_grid: Vec::new(),
            min_stop_s: MIN_STOP_DURATION_S,
        }
    }
}

/// Outcome of decomposing one trajectory: contiguous observation runs
/// (split wherever a link was dropped) and the dropped links.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub observations: Vec<CompressedObservation>,
    pub dropped: Vec<LinkId>,
}

/// Entry/exit times extrapolated from the reconstructed speeds and the link
/// length: the boundary crossing is assumed to happen at the speed of the
/// adjacent reconstructed interval.
fn refine_travel_time(trace: &LinkTrace, speeds: &[f64], length: f64) -> Option<f64> {
    let ts: Vec<f64> = trace.samples.iter().map(|s| s.0).collect();
    let x0 = trace.samples[0].1.max(0.0);
    let eps = speed_eps(speeds);
    let first_pos = speeds.iter().copied().find(|&v| v > eps)?;
    let last_pos = speeds.iter().rev().copied().find(|&v| v > eps)?;
    let t_entry = ts[0] - x0 / first_pos;

    // reconstructed offsets at sample times
    let mut x = x0;
    let mut t_exit = None;
    for (k, &v) in speeds.iter().enumerate() {
        let dt = ts[k + 1] - ts[k];
        let next = x + v * dt;
        if next >= length && v > eps {
            t_exit = Some(ts[k] + (length - x) / v);
            break;
        }
        x = next;
    }
    let t_exit = t_exit.unwrap_or_else(|| {
        let last_t = *ts.last().expect("nonempty");
        last_t + (length - x).max(0.0) / last_pos
    });
    let tt = t_exit - t_entry;
    (tt > 0.0).then_some(tt)
}

/// Compresses a trajectory (link-contiguous traces) into per-link
/// (state, travel time) records. Links with fewer than two samples or a
/// degenerate reconstruction are dropped and the observation splits into
/// contiguous runs at those points.
pub fn decompose_trajectory(
    network: &RoadNetwork,
    traces: &[LinkTrace],
    opts: &DecomposeOptions,
) -> Decomposition {
    let mut observations = Vec::new();
    let mut dropped = Vec::new();
    let mut cur = CompressedObservation {
        path: Vec::new(),
        states: Vec::new(),
        travel_times: Vec::new(),
    };
    let flush = |cur: &mut CompressedObservation, out: &mut Vec<CompressedObservation>| {
        if !cur.path.is_empty() {
            out.push(core::mem::replace(
                cur,
                CompressedObservation {
                    path: Vec::new(),
                    states: Vec::new(),
                    travel_times: Vec::new(),
                },
            ));
        }
    };
    for trace in traces {
        // a break in adjacency also splits the observation
        if let Some(&prev) = cur.path.last() {
            if !network.is_adjacent(prev, trace.link) {
                flush(&mut cur, &mut observations);
            }
        }
        let fitted = match &opts.lambda_grid[..] {
            [] => match build_ls_system(trace) {
                Ok((a, b)) => select_lambda_bic(trace, &default_lambda_grid(&a, &b)),
                Err(e) => Err(e),
            },
            grid => select_lambda_bic(trace, grid),
        };
        let Ok((_, result)) = fitted else {
            dropped.push(trace.link);
            flush(&mut cur, &mut observations);
            continue;
        };
        let ts: Vec<f64> = trace.samples.iter().map(|s| s.0).collect();
        let stops = count_stops(&result.speeds, &ts, opts.min_stop_s);
        let Some(tt) = refine_travel_time(trace, &result.speeds, network.length_m(trace.link))
        else {
            dropped.push(trace.link);
            flush(&mut cur, &mut observations);
            continue;
        };
        let state = (stops as u8).min(network.modes(trace.link) - 1);
        cur.path.push(trace.link);
        cur.states.push(state);
        cur.travel_times.push(tt);
    }
    flush(&mut cur, &mut observations);
    Decomposition {
        observations,
        dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(link: u32, pts: &[(f64, f64)]) -> LinkTrace {
        LinkTrace {
            link,
            samples: pts.to_vec(),
        }
    }

    #[test]
    fn ls_system_matches_hand_formula() {
        let (a, b) = build_ls_system(&trace(0, &[(0.0, 0.0), (1.0, 5.0), (2.0, 10.0)])).unwrap();
        assert_eq!(a, vec![vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(b, vec![5.0, 10.0]);

        let (a, b) = build_ls_system(&trace(0, &[(0.0, 0.0), (2.0, 8.0)])).unwrap();
        assert_eq!(a, vec![vec![2.0]]);
        assert_eq!(b, vec![8.0]);
    }

    #[test]
    fn ls_system_rejects_bad_traces() {
        assert_eq!(
            build_ls_system(&trace(0, &[(0.0, 0.0)])).unwrap_err(),
            StopGoError::TooFewSamples
        );
        assert_eq!(
            build_ls_system(&trace(0, &[(0.0, 0.0), (0.0, 1.0)])).unwrap_err(),
            StopGoError::NonMonotonicTimestamps
        );
    }

    /// Noiseless trace generated from known speeds.
    fn synthetic_trace(speeds: &[f64], dts: &[f64]) -> LinkTrace {
        let mut samples = vec![(0.0, 0.0)];
        let (mut t, mut x) = (0.0, 0.0);
        for (v, dt) in speeds.iter().zip(dts) {
            t += dt;
            x += v * dt;
            samples.push((t, x));
        }
        trace(0, &samples)
    }

    #[test]
    fn noiseless_system_is_exactly_solvable() {
        let speeds = [3.0, 7.0, 0.0, 2.0, 9.0];
        let dts = [1.0, 2.0, 1.5, 0.5, 1.0];
        let tr = synthetic_trace(&speeds, &dts);
        let (a, b) = build_ls_system(&tr).unwrap();
        // back-substitution on the triangular system reproduces the speeds
        let mut v = vec![0.0; 5];
        for i in 0..5 {
            let mut acc = b[i];
            for k in 0..i {
                acc -= a[i][k] * v[k];
            }
            v[i] = acc / a[i][i];
        }
        for (got, want) in v.iter().zip(&speeds) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn lasso_with_zero_penalty_recovers_noiseless_speeds() {
        let speeds = [4.0, 0.0, 6.0, 2.5];
        let dts = [1.0, 1.0, 2.0, 1.0];
        let tr = synthetic_trace(&speeds, &dts);
        let (a, b) = build_ls_system(&tr).unwrap();
        let v = solve_lasso(&a, &b, 0.0);
        for (got, want) in v.iter().zip(&speeds) {
            assert!((got - want).abs() < 1e-6, "{v:?}");
        }
        assert!(lasso_kkt_residual(&a, &b, 0.0, &v) <= 1e-8);
    }

    #[test]
    fn huge_penalty_zeroes_everything() {
        let tr = synthetic_trace(&[5.0, 5.0, 5.0], &[1.0, 1.0, 1.0]);
        let (a, b) = build_ls_system(&tr).unwrap();
        let (_, atb) = gram_system(&a, &b);
        let lambda_max = atb.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let v = solve_lasso(&a, &b, lambda_max * 10.0);
        assert!(v.iter().all(|&x| x == 0.0));
        // lambda_max itself already admits the all-zero solution
        let v = solve_lasso(&a, &b, lambda_max);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn noiseless_single_speed_keeps_full_support() {
        let tr = synthetic_trace(&[8.0; 6], &[1.0; 6]);
        let (a, b) = build_ls_system(&tr).unwrap();
        let (lambda, result) = select_lambda_bic(&tr, &default_lambda_grid(&a, &b)).unwrap();
        assert_eq!(result.stop_count, 0);
        assert_eq!(result.df, 6);
        assert!(lambda <= 1e-3 * default_lambda_grid(&a, &b)[0]);
    }

    #[test]
    fn support_size_is_monotone_along_the_grid() {
        let tr = synthetic_trace(&[6.0, 0.0, 0.0, 4.0, 7.0, 0.0, 3.0], &[1.0; 7]);
        let (a, b) = build_ls_system(&tr).unwrap();
        let grid = default_lambda_grid(&a, &b);
        let mut prev_df = 0usize;
        for &lambda in &grid {
            let v = solve_lasso(&a, &b, lambda);
            let df = support_size(&v);
            assert!(df >= prev_df, "df not monotone along descending grid");
            prev_df = df;
            assert!(v.iter().all(|&x| x >= 0.0));
            assert!(lasso_kkt_residual(&a, &b, lambda, &v) <= 1e-8);
        }
    }

    #[test]
    fn stop_counting_respects_minimum_duration() {
        let ts = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        // one 1 s zero (noise) and one 3 s zero run (a stop)
        let speeds = [5.0, 0.0, 5.0, 0.0, 0.0, 0.0];
        assert_eq!(count_stops(&speeds, &ts, 2.0), 1);
        assert_eq!(count_stops(&speeds, &ts, 0.5), 2);
        assert_eq!(count_stops(&[1.0, 1.0], &[0.0, 1.0, 2.0], 2.0), 0);
    }

    fn grid_net(n: usize) -> RoadNetwork {
        let downstream: Vec<Vec<u32>> = (0..n)
            .map(|i| if i + 1 < n { vec![i as u32 + 1] } else { vec![] })
            .collect();
        RoadNetwork::with_uniform_modes(downstream, 2, vec![60.0; n]).unwrap()
    }

    #[test]
    fn decompose_single_link_free_flow() {
        let net = grid_net(1);
        // 5 m/s across a 60 m link: 12 s travel time
        let samples: Vec<(f64, f64)> = (0..=12).map(|k| (k as f64, 5.0 * k as f64)).collect();
        let out = decompose_trajectory(
            &net,
            &[trace(0, &samples)],
            &DecomposeOptions::default(),
        );
        assert_eq!(out.observations.len(), 1);
        let obs = &out.observations[0];
        assert_eq!(obs.path, vec![0]);
        assert_eq!(obs.states, vec![0]);
        // the smallest grid penalty still shrinks speeds a little, so the
        // extrapolated crossing is near-exact rather than exact
        assert!((obs.travel_times[0] - 12.0).abs() < 0.05);
        // one record against 13 samples
        assert_eq!(obs.path.len(), 1);
    }

    #[test]
    fn state_clamps_to_mode_support() {
        let net = grid_net(1);
        // three long stops: stop_count 3, but m = 2 clamps the state to 1
        let speeds = [
            6.0, 0.0, 0.0, 0.0, 6.0, 0.0, 0.0, 0.0, 6.0, 0.0, 0.0, 0.0, 6.0, 6.0,
        ];
        let tr = synthetic_trace(&speeds, &[1.0; 14]);
        let out = decompose_trajectory(&net, &[tr], &DecomposeOptions::default());
        let obs = &out.observations[0];
        assert_eq!(obs.states, vec![1]);
    }

    #[test]
    fn too_few_samples_drops_link_and_splits_runs() {
        let net = grid_net(3);
        let full: Vec<(f64, f64)> = (0..=12).map(|k| (k as f64, 5.0 * k as f64)).collect();
        let shifted: Vec<(f64, f64)> =
            (0..=12).map(|k| (26.0 + k as f64, 5.0 * k as f64)).collect();
        let traces = vec![
            trace(0, &full),
            trace(1, &[(13.0, 30.0)]), // single sample: dropped
            trace(2, &shifted),
        ];
        let out = decompose_trajectory(&net, &traces, &DecomposeOptions::default());
        assert_eq!(out.dropped, vec![1]);
        assert_eq!(out.observations.len(), 2);
        assert_eq!(out.observations[0].path, vec![0]);
        assert_eq!(out.observations[1].path, vec![2]);
    }
}
