//! Coherent-state variational family `U(y) V(M) U(x) |+>^N` and its
//! analytical loss and gradient.

mod eval;
mod params;
mod spin;

pub use eval::{
    expval_field, expval_sx, expval_z, expval_zz, gradient, loss, z_expectations, Ansatz, Engine,
    Evaluation, FieldAxis, Gradient,
};
pub use params::GcsParams;
pub use spin::{
    conjugation_coeff_derivs, conjugation_coeffs, ladder_basis_change, single_spin_state,
    CoeffDerivs, ConjugationCoeffs, SingleSpinState, LADDER_ALPHAS,
};
