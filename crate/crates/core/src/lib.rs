//! Mobility-driven agent-based simulation of airborne and vector-borne
//! disease spread.
//!
//! The pipeline runs in two stages. GPS traces are reduced to per-minute
//! location codes ([`mobility`]), days are grouped into behavioral
//! sub-classes per occupation ([`behavior`]) and visit/occupancy matrices
//! are fitted for each sub-class ([`trajectory`]). The simulator
//! ([`sim`]) then drives a population of agents through a hierarchical
//! environment ([`environment`]) using trajectories sampled from those
//! matrices, with disease progression ([`progression`]), contact-based
//! transmission ([`airborne`]) and patch-level vector dynamics
//! ([`vectorborne`]).

pub mod airborne;
pub mod behavior;
pub mod environment;
pub mod error;
pub mod mobility;
pub mod progression;
pub mod rng;
pub mod sim;
pub mod trajectory;
pub mod vectorborne;

pub use error::{Error, Result};

/// Minutes in a simulated day.
pub const MINUTES_PER_DAY: usize = 1440;
