//! Reference computations used to check the heuristics: an exact dense
//! statevector simulator and exhaustive ground-state search.

mod exact;
mod statevector;

pub use exact::{brute_force_min, lexicographic_key, MAX_EXACT_SPINS};
pub use statevector::{
    build_state, expval, expval_real, hamiltonian_expval, DenseState, Pauli, MAX_STATE_SPINS,
};

#[cfg(test)]
pub(crate) use statevector::rotation_matrix as statevector_rotation_for_tests;
