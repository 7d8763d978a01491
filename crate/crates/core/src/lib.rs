//! Two-party communication complexity laboratory.
//!
//! Protocol simulators for set disjointness and related problems under
//! bounded-information input distributions, the distributions themselves,
//! exact information measures, and brute-force oracles for tiny instances.

pub mod error;
pub mod matrix;
pub mod engine;
pub mod dist;
pub mod info;
pub mod oracle;
pub mod disj;
pub mod qcost;
pub mod oneway;
pub mod sparse;

pub use engine::{
    fit_exponent, monte_carlo, run_protocol, Cell, Channel, CommProblem, Fit, InputSource, Party, Protocol,
    PublicCoin, RunRecord, Set, Transcript,
};
pub use error::{CoreError, Result};
pub use matrix::{DenseMatrix, SparseMatrix};
