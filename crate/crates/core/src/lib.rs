//! Finite Markov chain analysis: structural ergodicity checks, stationary
//! distributions computed several independent ways, and convergence
//! certificates (column envelopes, coupling, Doeblin minorization).

pub mod chain;
pub mod coupling;
pub mod doeblin;
pub mod envelope;
pub mod error;
pub mod generators;
pub mod io;
pub mod linalg;
pub mod random;
pub mod sim;
pub mod stationary;
pub mod structure;

pub use chain::{
    distance_curve, distance_from_stationary, min_entry, tv_distance, validate_stochastic, Distribution,
    StateSpace, StochasticMatrix, TvDistance,
};
pub use error::{Error, Result};
pub use stationary::{Method, StationaryResult};
pub use structure::ErgodicityReport;
