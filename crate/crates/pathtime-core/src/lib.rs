//! Core algorithms for learning and querying multimodal travel-time
//! distributions on road networks.
//!
//! The crate covers the full modelling chain: compressing timestamped probe
//! traces into per-link (state, travel time) observations, learning a Markov
//! chain over discrete link states, estimating a sparse Gaussian Markov
//! random field over state-conditional travel times, and answering path
//! travel-time distribution queries through a sampled Gaussian mixture whose
//! variances come from a random-projection sketch of the precision factor.
//!
//! Everything here is pure computation: no IO, no clocks, no global state.
//! File formats, the CLI, and timing harnesses live in the companion
//! `pathtime` crate. The crate builds without `std` (with `alloc`) so the
//! numerical core can be embedded; the `std` feature (default) only switches
//! math intrinsics and error-trait plumbing.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod eval;
pub mod factor;
pub mod gmrf;
pub mod inference;
pub mod markov;
pub mod math;
pub mod network;
pub mod observation;
pub mod sparse;
pub mod stopgo;
pub mod synth;

pub use network::{EdgePattern, LinkId, RoadNetwork, VarId, VariableIndex};
pub use observation::CompressedObservation;
