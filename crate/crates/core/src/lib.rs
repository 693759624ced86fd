//! Deterministic wireless sensor network simulator with an overhearing-based
//! self-referenced trust model.
//!
//! Every node watches the radio envelopes of its one-hop neighbours, scores
//! each neighbour once per time slot with a random-Fourier-feature estimate of
//! expected similarity, and folds the resulting trust penalty into a
//! distance-vector rank. Trust-induced parent changes launch notification
//! tickets that walk the routing tree to the base station, which filters them
//! and revokes the nodes it believes are malicious.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernel`]: metric normalisation, feature map, expected similarity, KEA vector
//! * [`trust`]: subjective trust and the trust-weighted link penalty
//! * [`detect`]: the per-neighbour scoring pipeline built on the two above
//! * [`overhearing`]: per-slot metric collection from radio envelopes
//! * [`routing`]: ETX, rank computation and parent selection
//! * [`attacks`]: malicious behaviour overrides
//! * [`ants`]: notification tickets and refractory handling
//! * [`basestation`]: ticket ingestion and verdict filtering
//! * [`config`], [`topology`], [`sim`]: the discrete-event world
//! * [`runlog`], [`metrics`], [`experiments`]: outputs and scenario sweeps

pub mod ants;
pub mod attacks;
pub mod basestation;
pub mod config;
pub mod detect;
mod error;
pub mod experiments;
mod ids;
pub mod kernel;
pub mod metrics;
pub mod overhearing;
pub mod routing;
pub mod runlog;
pub mod sim;
pub mod topology;
pub mod trust;

pub use error::{ConfigError, Error, KernelError};
pub use ids::NodeId;
