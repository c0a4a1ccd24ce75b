//! Road graph representation, per-link mode bookkeeping, and the
//! (link, state) -> variable indexing shared by every other module.

use alloc::vec;
use alloc::vec::Vec;

pub use crate::sparse::EdgePattern;

pub type LinkId = u32;
pub type VarId = u32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetworkError {
    #[error("link {link} references unknown downstream link {target}")]
    DanglingAdjacency { link: LinkId, target: LinkId },
    #[error("link {link} has zero modes")]
    ZeroModes { link: LinkId },
    #[error("link {link} has non-positive length")]
    BadLength { link: LinkId },
}

/// Directed link graph with per-link mode counts and lengths.
///
/// Links are dense `0..n-1`. Immutable after construction; safe for
/// concurrent reads.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    downstream: Vec<Vec<LinkId>>,
    upstream: Vec<Vec<LinkId>>,
    modes: Vec<u8>,
    length_m: Vec<f64>,
}

impl RoadNetwork {
    /// Builds and validates a network. `modes[l]` is the number of discrete
    /// states of link `l` (>= 1), `length_m[l]` its length in meters.
    pub fn new(
        downstream: Vec<Vec<LinkId>>,
        modes: Vec<u8>,
        length_m: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        let n = downstream.len();
        assert_eq!(modes.len(), n);
        assert_eq!(length_m.len(), n);
        let mut upstream = vec![Vec::new(); n];
        for (l, outs) in downstream.iter().enumerate() {
            for &t in outs {
                if t as usize >= n {
                    return Err(NetworkError::DanglingAdjacency {
                        link: l as LinkId,
                        target: t,
                    });
                }
                upstream[t as usize].push(l as LinkId);
            }
        }
        for (l, &m) in modes.iter().enumerate() {
            if m == 0 {
                return Err(NetworkError::ZeroModes { link: l as LinkId });
            }
        }
        for (l, &len) in length_m.iter().enumerate() {
            if !(len > 0.0) {
                return Err(NetworkError::BadLength { link: l as LinkId });
            }
        }
        Ok(Self {
            downstream,
            upstream,
            modes,
            length_m,
        })
    }

    /// Uniform mode count across all links.
    pub fn with_uniform_modes(
        downstream: Vec<Vec<LinkId>>,
        m: u8,
        length_m: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        let n = downstream.len();
        Self::new(downstream, vec![m; n], length_m)
    }

    pub fn n_links(&self) -> usize {
        self.downstream.len()
    }

    pub fn modes(&self, l: LinkId) -> u8 {
        self.modes[l as usize]
    }

    pub fn length_m(&self, l: LinkId) -> f64 {
        self.length_m[l as usize]
    }

    pub fn downstream(&self, l: LinkId) -> &[LinkId] {
        &self.downstream[l as usize]
    }

    pub fn upstream(&self, l: LinkId) -> &[LinkId] {
        &self.upstream[l as usize]
    }

    pub fn contains_link(&self, l: LinkId) -> bool {
        (l as usize) < self.n_links()
    }

    pub fn is_adjacent(&self, u: LinkId, l: LinkId) -> bool {
        self.downstream[u as usize].contains(&l)
    }

    /// Sizes of the weakly-connected components of the link graph, largest
    /// first. Disconnected networks are reported, not rejected.
    pub fn component_sizes(&self) -> Vec<usize> {
        let n = self.n_links();
        let mut seen = vec![false; n];
        let mut sizes = Vec::new();
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut size = 0usize;
            stack.push(start as LinkId);
            seen[start] = true;
            while let Some(l) = stack.pop() {
                size += 1;
                for &t in self
                    .downstream(l)
                    .iter()
                    .chain(self.upstream(l).iter())
                {
                    if !seen[t as usize] {
                        seen[t as usize] = true;
                        stack.push(t);
                    }
                }
            }
            sizes.push(size);
        }
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }
}

/// Dense bijection between (link, state) pairs and variable ids.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableIndex {
    offsets: Vec<u32>,
    inverse: Vec<(LinkId, u8)>,
}

/// Builds the variable index: ids are assigned link-major, state-minor, so
/// `d = sum of per-link mode counts` and ids are dense and contiguous.
pub fn build_variable_index(network: &RoadNetwork) -> VariableIndex {
    let n = network.n_links();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut inverse = Vec::new();
    let mut next = 0u32;
    for l in 0..n as LinkId {
        offsets.push(next);
        let m = network.modes(l);
        for s in 0..m {
            inverse.push((l, s));
        }
        next += m as u32;
    }
    offsets.push(next);
    VariableIndex { offsets, inverse }
}

impl VariableIndex {
    pub fn dim(&self) -> usize {
        self.inverse.len()
    }

    #[inline]
    pub fn beta(&self, link: LinkId, state: u8) -> VarId {
        debug_assert!((state as u32) < self.offsets[link as usize + 1] - self.offsets[link as usize]);
        self.offsets[link as usize] + state as u32
    }

    #[inline]
    pub fn inverse(&self, var: VarId) -> (LinkId, u8) {
        self.inverse[var as usize]
    }

    pub fn modes(&self, link: LinkId) -> u8 {
        (self.offsets[link as usize + 1] - self.offsets[link as usize]) as u8
    }

    /// All variable ids of one link.
    pub fn link_vars(&self, link: LinkId) -> impl Iterator<Item = VarId> {
        self.offsets[link as usize]..self.offsets[link as usize + 1]
    }
}

/// Builds the GMRF sparsity pattern: (beta(l,s), beta(l',s')) is an edge iff
/// l = l' or l' is adjacent (upstream or downstream) to l. The diagonal is
/// always included.
pub fn build_edge_pattern(network: &RoadNetwork, index: &VariableIndex) -> EdgePattern {
    let mut raw: Vec<(u32, u32)> = Vec::new();
    for l in 0..network.n_links() as LinkId {
        // all pairs within a link
        let vars: Vec<VarId> = index.link_vars(l).collect();
        for i in 0..vars.len() {
            for j in i..vars.len() {
                raw.push((vars[i], vars[j]));
            }
        }
        // pairs with downstream neighbors; upstream edges are the same set
        // seen from the other side, symmetry handles them.
        for &t in network.downstream(l) {
            if t == l {
                continue;
            }
            for u in index.link_vars(l) {
                for v in index.link_vars(t) {
                    raw.push((u, v));
                }
            }
        }
    }
    EdgePattern::from_pairs(index.dim(), raw)
}
