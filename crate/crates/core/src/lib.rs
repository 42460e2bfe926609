//! Quantum-inspired annealing for QUBO / Ising spin-glass problems.
//!
//! The heuristic represents the annealed state as a generalized coherent
//! state `U(y) V(M) U(x) |+>^N` and minimizes the expectation value of the
//! interpolating Hamiltonian `s H_I + (1 - s) H_TF` with one ADAM update per
//! schedule step. Expectation values and gradients are evaluated in closed
//! form at `O(N)` cost per Hamiltonian term.
//!
//! Modules:
//! - [`qubo`]: problem representation, spin mapping, lattice instances, file format.
//! - [`oracle`]: dense statevector simulator and exhaustive ground-state search.
//! - [`gcs`]: the analytical expectation-value and gradient engine.
//! - [`anneal`]: the annealing driver (GCS and product-state modes).
//! - [`sa`]: simulated-annealing baseline.
//! - [`bench`]: batch experiments, statistics and CSV reports.
//! - [`verify`]: engine-versus-oracle verification suite.

#![allow(clippy::needless_range_loop)]

pub mod anneal;
pub mod bench;
pub mod error;
pub mod gcs;
pub mod oracle;
pub mod qubo;
pub mod sa;
pub mod verify;

pub(crate) mod rng;

pub use error::{Error, Result};
pub use qubo::{BinaryQubo, Boundary, QuboInstance, SpinConfiguration};

/// Tool version embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Tool name embedded in every output file.
pub const TOOL_NAME: &str = "qubo-gcs";
