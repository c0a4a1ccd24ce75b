//! Per-link discrete state chain: initial distributions, transition
//! matrices, count-based fitting, ancestral sampling.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::network::{LinkId, RoadNetwork};
use crate::observation::CompressedObservation;

/// Row-stochastic matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    pub rows: usize,
    pub cols: usize,
    pub p: Vec<f64>,
}

impl StochasticMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.p[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.p[r * self.cols + c]
    }
}

/// Mergeable sufficient statistics: initial-state counts per link and
/// transition counts per traversed directed edge.
#[derive(Debug, Clone, Default)]
pub struct MarkovCounts {
    pub initial: BTreeMap<LinkId, Vec<u64>>,
    pub transitions: BTreeMap<(LinkId, LinkId), Vec<u64>>,
}

impl MarkovCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, network: &RoadNetwork, obs: &CompressedObservation) {
        if obs.path.is_empty() {
            return;
        }
        let l0 = obs.path[0];
        let m0 = network.modes(l0) as usize;
        let entry = self.initial.entry(l0).or_insert_with(|| vec![0; m0]);
        entry[obs.states[0] as usize] += 1;
        for i in 1..obs.path.len() {
            let (u, l) = (obs.path[i - 1], obs.path[i]);
            let (mu, ml) = (network.modes(u) as usize, network.modes(l) as usize);
            let counts = self
                .transitions
                .entry((u, l))
                .or_insert_with(|| vec![0; mu * ml]);
            counts[obs.states[i - 1] as usize * ml + obs.states[i] as usize] += 1;
        }
    }

    /// Commutative merge of per-shard counts.
    pub fn merge(&mut self, other: &MarkovCounts) {
        for (l, c) in &other.initial {
            let entry = self.initial.entry(*l).or_insert_with(|| vec![0; c.len()]);
            for (a, b) in entry.iter_mut().zip(c) {
                *a += b;
            }
        }
        for (e, c) in &other.transitions {
            let entry = self
                .transitions
                .entry(*e)
                .or_insert_with(|| vec![0; c.len()]);
            for (a, b) in entry.iter_mut().zip(c) {
                *a += b;
            }
        }
    }

    /// Normalizes counts into probabilities with additive smoothing.
    /// Links or rows with zero total fall back to uniform.
    pub fn into_params(&self, network: &RoadNetwork, smoothing: f64) -> MarkovParams {
        let n = network.n_links();
        let mut pi = Vec::with_capacity(n);
        for l in 0..n as LinkId {
            let m = network.modes(l) as usize;
            let mut row = vec![smoothing; m];
            if let Some(counts) = self.initial.get(&l) {
                for (r, c) in row.iter_mut().zip(counts) {
                    *r += *c as f64;
                }
            }
            normalize_or_uniform(&mut row);
            pi.push(row);
        }
        let mut trans = BTreeMap::new();
        for ((u, l), counts) in &self.transitions {
            let (mu, ml) = (
                network.modes(*u) as usize,
                network.modes(*l) as usize,
            );
            let mut p = vec![0.0; mu * ml];
            for r in 0..mu {
                let mut row: Vec<f64> = (0..ml)
                    .map(|c| counts[r * ml + c] as f64 + smoothing)
                    .collect();
                normalize_or_uniform(&mut row);
                p[r * ml..(r + 1) * ml].copy_from_slice(&row);
            }
            trans.insert(
                (*u, *l),
                StochasticMatrix {
                    rows: mu,
                    cols: ml,
                    p,
                },
            );
        }
        MarkovParams {
            pi,
            trans,
            smoothing,
        }
    }
}

fn normalize_or_uniform(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        for x in row.iter_mut() {
            *x /= total;
        }
    } else {
        let u = 1.0 / row.len() as f64;
        row.fill(u);
    }
}

/// Initial state probabilities per link and transition matrices per
/// traversed directed edge. Edges unseen in training fall back to uniform
/// rows at query time rather than being stored.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovParams {
    pub pi: Vec<Vec<f64>>,
    pub trans: BTreeMap<(LinkId, LinkId), StochasticMatrix>,
    pub smoothing: f64,
}

impl MarkovParams {
    pub fn initial(&self, l: LinkId) -> &[f64] {
        &self.pi[l as usize]
    }

    /// P(S_l = s_l | S_u = s_u), uniform when the edge was never observed.
    pub fn transition_prob(
        &self,
        network: &RoadNetwork,
        u: LinkId,
        l: LinkId,
        s_u: u8,
        s_l: u8,
    ) -> f64 {
        match self.trans.get(&(u, l)) {
            Some(t) => t.get(s_u as usize, s_l as usize),
            None => 1.0 / network.modes(l) as f64,
        }
    }
}

/// Maximum-likelihood fit (count ratios) with additive smoothing.
pub fn fit_markov<'a>(
    network: &RoadNetwork,
    observations: impl IntoIterator<Item = &'a CompressedObservation>,
    smoothing: f64,
) -> MarkovParams {
    let mut counts = MarkovCounts::new();
    for obs in observations {
        counts.observe(network, obs);
    }
    counts.into_params(network, smoothing)
}

/// Ancestral sampling of one state sequence along a path: the first state
/// from the link's initial distribution, each subsequent state from the
/// transition row of its predecessor.
pub fn sample_state_sequence<R: rand::Rng + ?Sized>(
    params: &MarkovParams,
    network: &RoadNetwork,
    path: &[LinkId],
    rng: &mut R,
) -> Vec<u8> {
    let mut states = Vec::with_capacity(path.len());
    if path.is_empty() {
        return states;
    }
    let s0 = math::sample_categorical(params.initial(path[0]), rng) as u8;
    states.push(s0);
    for i in 1..path.len() {
        let (u, l) = (path[i - 1], path[i]);
        let prev = states[i - 1] as usize;
        let s = match params.trans.get(&(u, l)) {
            Some(t) => math::sample_categorical(t.row(prev), rng) as u8,
            None => rng.random_range(0..network.modes(l)),
        };
        states.push(s);
    }
    states
}

/// Log-probability of a state sequence along a path; negative infinity when
/// any factor is zero.
pub fn state_sequence_logprob(
    params: &MarkovParams,
    network: &RoadNetwork,
    path: &[LinkId],
    states: &[u8],
) -> f64 {
    debug_assert_eq!(path.len(), states.len());
    if path.is_empty() {
        return 0.0;
    }
    let mut lp = 0.0;
    let p0 = params.initial(path[0])[states[0] as usize];
    if p0 == 0.0 {
        return f64::NEG_INFINITY;
    }
    lp += math::ln(p0);
    for i in 1..path.len() {
        let p = params.transition_prob(network, path[i - 1], path[i], states[i - 1], states[i]);
        if p == 0.0 {
            return f64::NEG_INFINITY;
        }
        lp += math::ln(p);
    }
    lp
}

/// Exact probabilities of every state sequence on a path (chain product),
/// in lexicographic sequence order. Used by the exact mixture and by
/// sampling oracles; the caller guards the m^I blowup.
pub fn enumerate_sequence_probs(
    params: &MarkovParams,
    network: &RoadNetwork,
    path: &[LinkId],
) -> Vec<(Vec<u8>, f64)> {
    let mut out: Vec<(Vec<u8>, f64)> = vec![(Vec::new(), 1.0)];
    for (i, &l) in path.iter().enumerate() {
        let m = network.modes(l);
        let mut next = Vec::with_capacity(out.len() * m as usize);
        for (seq, p) in &out {
            for s in 0..m {
                let factor = if i == 0 {
                    params.initial(l)[s as usize]
                } else {
                    params.transition_prob(network, path[i - 1], l, seq[i - 1], s)
                };
                let mut seq2 = seq.clone();
                seq2.push(s);
                next.push((seq2, p * factor));
            }
        }
        out = next;
    }
    out
}

/// Forward marginals P(S_{l_i} = s) for every position on the path, by the
/// standard chain recursion in O(I m^2).
pub fn forward_marginals(
    params: &MarkovParams,
    network: &RoadNetwork,
    path: &[LinkId],
) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(path.len());
    for (i, &l) in path.iter().enumerate() {
        let m = network.modes(l) as usize;
        if i == 0 {
            out.push(params.initial(l).to_vec());
            continue;
        }
        let prev = &out[i - 1];
        let mut cur = vec![0.0; m];
        for (s_u, &pu) in prev.iter().enumerate() {
            for (s_l, c) in cur.iter_mut().enumerate() {
                *c += pu
                    * params.transition_prob(network, path[i - 1], l, s_u as u8, s_l as u8);
            }
        }
        out.push(cur);
    }
    out
}
