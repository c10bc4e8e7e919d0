//! Toolkit for characterizing correlated (cross-talk) readout noise of
//! multi-qubit measurement devices.
//!
//! The pipeline goes: generate overlapping-tomography circuit collections
//! ([`circuits`]), run them against a synthetic noisy-readout device
//! ([`sim`]), estimate reduced noise matrices and POVMs for all small qubit
//! subsets ([`marginals`]), quantify pairwise correlations and coherent
//! errors ([`crosstalk`]), partition qubits into noise clusters
//! ([`clustering`]), reconstruct a clusters-and-neighbors stochastic noise
//! model ([`model`]), and finally benchmark the model by error-mitigated
//! energy estimation on classical local Hamiltonians ([`bench`]).
//!
//! Conventions used throughout:
//!
//! * Stochastic matrices are left stochastic: `entry(x, y)` is the
//!   probability of reading outcome `x` given true outcome `y`, so every
//!   column sums to one.
//! * Qubit 0 is the most significant bit of an outcome index, and the
//!   leftmost character of a bitstring.
//! * All randomness is driven by explicit 64-bit seeds with per-circuit
//!   substreams, so results are identical regardless of thread count.

pub mod bench;
pub mod circuits;
pub mod clustering;
pub mod crosstalk;
pub mod distance;
mod error;
pub(crate) mod linalg;
pub mod marginals;
pub mod model;
pub mod povm;
pub mod random;
pub mod sim;

pub use error::{Error, Result};
pub use povm::{DensityMatrix, Povm, QubitSubset, StochasticMatrix};
