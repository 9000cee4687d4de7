//! Equilibrium analysis of a slotted two-relay random-access network with
//! join-the-shortest-queue routing and a collision channel.
//!
//! Three solvers compute the joint queue-length distribution and check one
//! another: the compensation approach ([`compensation`]), the power-series
//! algorithm ([`psa`]) and a direct solve of a truncated chain ([`oracle`]).
//! [`simulator`] runs the system itself; [`measures`] turns any distribution
//! into sojourn times and correlations.

pub mod cli;
pub mod compensation;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod measures;
pub mod model;
pub mod oracle;
pub mod psa;
pub mod simulator;

pub use error::{Error, Result};
pub use grid::{Coordinates, ProbabilityGrid};
pub use model::ModelParams;
