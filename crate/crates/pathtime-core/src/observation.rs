//! Compressed trajectory observations: the shared unit of data between the
//! stop-and-go compressor, the Markov learner, and the GMRF accumulator.

use alloc::vec::Vec;

use crate::network::{LinkId, RoadNetwork};

/// One compressed trajectory: per traversed link, the discrete state label
/// (number of stops, clamped to the link's mode support) and the travel time
/// in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedObservation {
    pub path: Vec<LinkId>,
    pub states: Vec<u8>,
    pub travel_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ObservationError {
    #[error("path, states and travel_times have mismatched lengths")]
    LengthMismatch,
    #[error("link {0} not in network")]
    UnknownLink(LinkId),
    #[error("state {state} out of range for link {link}")]
    StateOutOfRange { link: LinkId, state: u8 },
    #[error("links {0} and {1} are consecutive on the path but not adjacent")]
    NonAdjacent(LinkId, LinkId),
    #[error("travel time must be positive on link {0}")]
    NonPositiveTime(LinkId),
}

impl CompressedObservation {
    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    pub fn total_time(&self) -> f64 {
        self.travel_times.iter().sum()
    }

    /// Checks the structural invariants against a network.
    pub fn validate(&self, network: &RoadNetwork) -> Result<(), ObservationError> {
        if self.path.len() != self.states.len() || self.path.len() != self.travel_times.len() {
            return Err(ObservationError::LengthMismatch);
        }
        for (i, &l) in self.path.iter().enumerate() {
            if !network.contains_link(l) {
                return Err(ObservationError::UnknownLink(l));
            }
            if self.states[i] >= network.modes(l) {
                return Err(ObservationError::StateOutOfRange {
                    link: l,
                    state: self.states[i],
                });
            }
            if !(self.travel_times[i] > 0.0) {
                return Err(ObservationError::NonPositiveTime(l));
            }
            if i > 0 && !network.is_adjacent(self.path[i - 1], l) {
                return Err(ObservationError::NonAdjacent(self.path[i - 1], l));
            }
        }
        Ok(())
    }
}
