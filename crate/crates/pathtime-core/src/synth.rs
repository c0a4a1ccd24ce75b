//! Synthetic ground-truth worlds: grid networks with a known state chain and
//! a known sparse precision matrix, plus trajectory and GPS-trace sampling
//! from them. Stands in for proprietary probe data and gives every learning
//! stage an oracle to be validated against.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::factor::{exact_inverse_entries, factorize, CholeskyFactor, FillOrdering};
use crate::markov::{MarkovParams, StochasticMatrix};
use crate::math;
use crate::network::{
    build_edge_pattern, build_variable_index, EdgePattern, LinkId, RoadNetwork, VariableIndex,
};
use crate::observation::CompressedObservation;
use crate::sparse::PatternMatrix;
use crate::stopgo::LinkTrace;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("network has no links")]
    EmptyNetwork,
    #[error("travel-time floor hit rate {rate} exceeds 0.1%; world parameters rejected")]
    ExcessiveFloorRate { rate: f64 },
}

/// Travel times are floored here (seconds); worlds whose floor hit rate
/// exceeds 0.1% are rejected at generation.
pub const TRAVEL_TIME_FLOOR_S: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct WorldOptions {
    pub link_length_range: (f64, f64),
    pub free_speed_range: (f64, f64),
    /// Additional mean seconds per extra stop state.
    pub stop_delay_range: (f64, f64),
    /// Scale of the per-variable precision diagonal, as a standard
    /// deviation in seconds.
    pub sigma_range: (f64, f64),
    /// Fraction of each precision row taken by off-diagonal mass (< 1 keeps
    /// the matrix diagonally dominant, hence positive definite).
    pub coupling: f64,
    /// Self-transition bias of the state chain (green-wave persistence).
    pub persistence: f64,
}

impl Default for WorldOptions {
    fn default() -> Self {
        Self {
            link_length_range: (150.0, 250.0),
            free_speed_range: (8.0, 14.0),
            stop_delay_range: (12.0, 25.0),
            sigma_range: (0.8, 1.8),
            coupling: 0.65,
            persistence: 0.75,
        }
    }
}

/// A fully specified world: network, state chain, and travel-time GMRF,
/// with the precision factor prebuilt for sampling.
#[derive(Debug)]
pub struct GroundTruth {
    pub network: RoadNetwork,
    pub index: VariableIndex,
    pub pattern: Arc<EdgePattern>,
    pub markov: MarkovParams,
    pub mu: Vec<f64>,
    pub s_true: PatternMatrix,
    pub factor: CholeskyFactor,
    pub seed: u64,
}

/// Directed 4-neighbor grid over `w x h` nodes: one link per direction per
/// grid edge, so `2 (2 w h - w - h)` links in total.
pub fn grid_network(w: usize, h: usize, m: u8, opts: &WorldOptions, rng: &mut ChaCha8Rng) -> RoadNetwork {
    let node = |r: usize, c: usize| r * w + c;
    // enumerate undirected grid edges, two links each
    let mut endpoints: Vec<(usize, usize)> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if c + 1 < w {
                endpoints.push((node(r, c), node(r, c + 1)));
            }
            if r + 1 < h {
                endpoints.push((node(r, c), node(r + 1, c)));
            }
        }
    }
    let n_links = endpoints.len() * 2;
    let mut tail = Vec::with_capacity(n_links);
    let mut head = Vec::with_capacity(n_links);
    for &(a, b) in &endpoints {
        tail.push(a);
        head.push(b);
        tail.push(b);
        head.push(a);
    }
    let mut out_links: BTreeMap<usize, Vec<LinkId>> = BTreeMap::new();
    for l in 0..n_links {
        out_links.entry(tail[l]).or_default().push(l as LinkId);
    }
    let downstream: Vec<Vec<LinkId>> = (0..n_links)
        .map(|l| out_links.get(&head[l]).cloned().unwrap_or_default())
        .collect();
    let lengths: Vec<f64> = (0..n_links / 2)
        .flat_map(|_| {
            // both directions of a grid edge share the length
            let len = rng.random_range(opts.link_length_range.0..opts.link_length_range.1);
            [len, len]
        })
        .collect();
    RoadNetwork::with_uniform_modes(downstream, m, lengths).expect("grid adjacency is valid")
}

/// Deterministic world for a seed: grid network, persistence-biased state
/// chain, state-ordered means, and a diagonally dominant precision matrix
/// whose off-diagonal mass concentrates on same-state cross-link pairs
/// (congestion propagates within a regime).
pub fn generate_world(
    w: usize,
    h: usize,
    m: u8,
    seed: u64,
    opts: &WorldOptions,
) -> Result<GroundTruth, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let network = grid_network(w, h, m, opts, &mut rng);
    let index = build_variable_index(&network);
    let pattern = Arc::new(build_edge_pattern(&network, &index));
    let d = index.dim();
    let n = network.n_links();

    // means: free-flow time plus a delay per stop state, ordered in s
    let mut mu = vec![0.0; d];
    for l in 0..n as LinkId {
        let v_free = rng.random_range(opts.free_speed_range.0..opts.free_speed_range.1);
        let mut mean = network.length_m(l) / v_free;
        for s in 0..network.modes(l) {
            if s > 0 {
                mean += rng.random_range(opts.stop_delay_range.0..opts.stop_delay_range.1);
            }
            mu[index.beta(l, s) as usize] = mean;
        }
    }

    // precision: diagonal from sigma, off-diagonal negative couplings
    // scaled per-row to a fixed fraction of the diagonal
    let mut s_true = PatternMatrix::zeros(pattern.clone());
    for u in 0..d as u32 {
        let sigma = rng.random_range(opts.sigma_range.0..opts.sigma_range.1);
        s_true.set_diag(u, 1.0 / (sigma * sigma));
    }
    let mut weights = vec![0.0; pattern.n_pairs()];
    let mut rowsum = vec![0.0; d];
    for (p, &(u, v)) in pattern.pairs().iter().enumerate() {
        if u == v {
            continue;
        }
        let (lu, su) = index.inverse(u);
        let (lv, sv) = index.inverse(v);
        let kind = if lu == lv {
            0.1
        } else if su == sv {
            1.0
        } else {
            0.05
        };
        let w_p = kind
            * rng.random_range(0.5..1.0)
            * math::sqrt(s_true.diag(u) * s_true.diag(v));
        weights[p] = w_p;
        rowsum[u as usize] += w_p;
        rowsum[v as usize] += w_p;
    }
    let row_scale: Vec<f64> = (0..d)
        .map(|u| {
            if rowsum[u] > 0.0 {
                opts.coupling * s_true.diag(u as u32) / rowsum[u]
            } else {
                0.0
            }
        })
        .collect();
    for (p, &(u, v)) in pattern.pairs().iter().enumerate() {
        if u != v && weights[p] > 0.0 {
            let t = row_scale[u as usize].min(row_scale[v as usize]).min(1.0);
            s_true.values_mut()[p] = -weights[p] * t;
        }
    }

    // state chain: free-flow-leaning initial laws, persistent transitions
    let mut pi = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row: Vec<f64> = (0..m)
            .map(|s| {
                let base = math::exp(-(s as f64) * 0.6);
                base * rng.random_range(0.8..1.2)
            })
            .collect();
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= total);
        pi.push(row);
    }
    let mut trans = BTreeMap::new();
    for u in 0..n as LinkId {
        for &l in network.downstream(u) {
            let mut p = vec![0.0; (m as usize) * (m as usize)];
            for su in 0..m as usize {
                let mut row: Vec<f64> = (0..m as usize)
                    .map(|sl| {
                        let base = if sl == su {
                            opts.persistence
                        } else {
                            (1.0 - opts.persistence) / ((m as f64 - 1.0).max(1.0))
                        };
                        base * rng.random_range(0.7..1.3)
                    })
                    .collect();
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= total);
                p[su * m as usize..(su + 1) * m as usize].copy_from_slice(&row);
            }
            trans.insert(
                (u, l),
                StochasticMatrix {
                    rows: m as usize,
                    cols: m as usize,
                    p,
                },
            );
        }
    }
    let markov = MarkovParams {
        pi,
        trans,
        smoothing: 0.0,
    };

    let factor = factorize(&s_true, FillOrdering::MinDegree)
        .expect("diagonally dominant construction is positive definite");

    let truth = GroundTruth {
        network,
        index,
        pattern,
        markov,
        mu,
        s_true,
        factor,
        seed,
    };

    // reject worlds that clip travel times too often
    if truth.network.n_links() > 0 {
        let mut probe_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x666c6f6f72);
        let mut hits = 0usize;
        let mut total = 0usize;
        for _ in 0..200 {
            let path = sample_path(&truth, 8, &mut probe_rng);
            let (_, raw) = truth.draw_travel_times(&path, &sample_states(&truth, &path, &mut probe_rng), &mut probe_rng);
            hits += raw;
            total += path.len();
        }
        let rate = hits as f64 / total.max(1) as f64;
        if rate >= 1e-3 {
            return Err(SynthError::ExcessiveFloorRate { rate });
        }
    }
    Ok(truth)
}

fn sample_states(truth: &GroundTruth, path: &[LinkId], rng: &mut ChaCha8Rng) -> Vec<u8> {
    crate::markov::sample_state_sequence(&truth.markov, &truth.network, path, rng)
}

impl GroundTruth {
    /// Joint Gaussian draw of the whole variable vector restricted to the
    /// path's selected variables, floored at the minimum travel time.
    /// Returns the times and the number of floor hits.
    fn draw_travel_times(
        &self,
        path: &[LinkId],
        states: &[u8],
        rng: &mut ChaCha8Rng,
    ) -> (Vec<f64>, usize) {
        let d = self.index.dim();
        let mut z = vec![0.0; d];
        for zi in z.iter_mut() {
            *zi = math::sample_std_normal(rng);
        }
        // cov(P' L^{-T} D^{-1/2} z) = S^{-1}
        self.factor.half_solve_transposed(&mut z);
        let position = self.factor.symbolic().position();
        let mut floors = 0usize;
        let times: Vec<f64> = path
            .iter()
            .zip(states)
            .map(|(&l, &s)| {
                let var = self.index.beta(l, s);
                let y = self.mu[var as usize] + z[position[var as usize] as usize];
                if y < TRAVEL_TIME_FLOOR_S {
                    floors += 1;
                    TRAVEL_TIME_FLOOR_S
                } else {
                    y
                }
            })
            .collect();
        (times, floors)
    }

    /// True covariance entries on the pattern, via exact column solves of
    /// the true precision matrix. Evaluation oracle.
    pub fn true_covariance_on_pattern(&self) -> PatternMatrix {
        let vals = exact_inverse_entries(&self.factor, self.pattern.pairs());
        PatternMatrix::from_values(self.pattern.clone(), vals)
    }
}

/// Random walk of `len` links with no immediate backtracking (the reverse
/// link is taken only at dead ends).
pub fn sample_path(truth: &GroundTruth, len: usize, rng: &mut ChaCha8Rng) -> Vec<LinkId> {
    let net = &truth.network;
    let n = net.n_links();
    assert!(n > 0, "cannot sample a path on an empty network");
    let mut path = Vec::with_capacity(len);
    let mut cur = rng.random_range(0..n as LinkId);
    path.push(cur);
    while path.len() < len {
        let outs = net.downstream(cur);
        if outs.is_empty() {
            break;
        }
        // the reverse link shares both endpoints: it is the out-link whose
        // head is our tail, identified by it listing us downstream too
        let choices: Vec<LinkId> = outs
            .iter()
            .copied()
            .filter(|&cand| !net.downstream(cand).contains(&cur) || outs.len() == 1)
            .collect();
        let pool = if choices.is_empty() { outs } else { &choices[..] };
        cur = pool[rng.random_range(0..pool.len())];
        path.push(cur);
    }
    path
}

/// Samples one trajectory: a random-walk path, a state sequence from the
/// chain, and travel times from the GMRF conditioned on those states.
pub fn sample_trajectory(
    truth: &GroundTruth,
    path_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CompressedObservation, SynthError> {
    if truth.network.n_links() == 0 {
        return Err(SynthError::EmptyNetwork);
    }
    let path = sample_path(truth, path_len, rng);
    Ok(sample_trajectory_on_path(truth, &path, rng))
}

/// Same as [`sample_trajectory`] but on a caller-chosen path (fixed-route
/// demand models).
pub fn sample_trajectory_on_path(
    truth: &GroundTruth,
    path: &[LinkId],
    rng: &mut ChaCha8Rng,
) -> CompressedObservation {
    let states = sample_states(truth, path, rng);
    let (travel_times, _) = truth.draw_travel_times(path, &states, rng);
    CompressedObservation {
        path: path.to_vec(),
        states,
        travel_times,
    }
}

/// Piecewise-constant-speed offset profile of one link traversal: a single
/// go speed with `stops` interior plateaus, tuned so the crossing takes
/// exactly `travel_time`.
#[derive(Debug, Clone)]
pub struct LinkProfile {
    pub length: f64,
    pub travel_time: f64,
    pub go_speed: f64,
    /// (offset of the plateau, duration) pairs, ascending in offset.
    pub stops: Vec<(f64, f64)>,
}

/// Maximum go speed the renderer will emit; stop durations are scaled down
/// when a short travel time cannot fit them.
const MAX_GO_SPEED: f64 = 18.0;
const MIN_RENDER_STOP_S: f64 = 2.5;

pub fn build_link_profile(
    length: f64,
    travel_time: f64,
    n_stops: u8,
    rng: &mut ChaCha8Rng,
) -> LinkProfile {
    let mut durations: Vec<f64> = (0..n_stops)
        .map(|_| rng.random_range(5.0..30.0))
        .collect();
    let budget = (travel_time - length / MAX_GO_SPEED).max(0.0) * 0.9;
    let total: f64 = durations.iter().sum();
    if total > budget {
        let scale = budget / total.max(1e-9);
        durations.iter_mut().for_each(|d| *d *= scale);
    }
    durations.retain(|&d| d >= MIN_RENDER_STOP_S);
    let stop_total: f64 = durations.iter().sum();
    let go_speed = length / (travel_time - stop_total).max(length / MAX_GO_SPEED);
    // stratified stop positions in the interior of the link
    let k = durations.len();
    let stops: Vec<(f64, f64)> = durations
        .into_iter()
        .enumerate()
        .map(|(i, dur)| {
            let slot = 0.7 / k as f64;
            let frac = 0.15 + slot * (i as f64 + 0.2 + rng.random_range(0.0..0.6));
            (frac * length, dur)
        })
        .collect();
    LinkProfile {
        length,
        travel_time,
        go_speed,
        stops,
    }
}

impl LinkProfile {
    /// Offset at `dt` seconds after entering the link.
    pub fn offset_at(&self, dt: f64) -> f64 {
        let mut t_left = dt;
        let mut x = 0.0;
        for &(pos, dur) in &self.stops {
            let drive = (pos - x) / self.go_speed;
            if t_left <= drive {
                return x + t_left * self.go_speed;
            }
            t_left -= drive;
            x = pos;
            if t_left <= dur {
                return x;
            }
            t_left -= dur;
        }
        (x + t_left * self.go_speed).min(self.length)
    }
}

/// Renders noisy GPS samples for a compressed observation: a global
/// sampling clock, per-link piecewise-constant-speed profiles matching each
/// link's state and travel time, and i.i.d. Gaussian offset noise.
pub fn render_gps_trace(
    truth: &GroundTruth,
    obs: &CompressedObservation,
    sampling_period_s: f64,
    noise_sigma_m: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<LinkTrace> {
    let mut traces = Vec::with_capacity(obs.path.len());
    let mut entry = 0.0f64;
    for i in 0..obs.path.len() {
        let link = obs.path[i];
        let profile = build_link_profile(
            truth.network.length_m(link),
            obs.travel_times[i],
            obs.states[i],
            rng,
        );
        let exit = entry + obs.travel_times[i];
        let mut samples = Vec::new();
        let mut k = math::ceil(entry / sampling_period_s) as i64;
        loop {
            let t = k as f64 * sampling_period_s;
            if t >= exit {
                break;
            }
            let x = profile.offset_at(t - entry) + noise_sigma_m * math::sample_std_normal(rng);
            samples.push((t, x));
            k += 1;
        }
        traces.push(LinkTrace { link, samples });
        entry = exit;
    }
    traces
}
