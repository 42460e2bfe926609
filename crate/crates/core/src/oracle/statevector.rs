//! Dense statevector construction of `U(y) V(M) U(x) |+>^N`.
//!
//! Basis index bit `k` is spin `k`; bit 0 is `|0>` (sigma_z = +1, spin up).
//! Single-spin exponentials are evaluated numerically (scaled Taylor series
//! with repeated squaring) and the entangler is applied as an explicit
//! diagonal phase, so nothing here shares code with the analytical engine.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gcs::GcsParams;
use crate::qubo::QuboInstance;

/// Largest spin count for which a dense state is built.
pub const MAX_STATE_SPINS: usize = 22;

type Mat2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Single-site operator in a Pauli string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
    /// `sigma_+ = |0><1|`
    Plus,
    /// `sigma_- = |1><0|`
    Minus,
}

impl Pauli {
    fn matrix(self) -> Mat2 {
        match self {
            Pauli::I => [[ONE, ZERO], [ZERO, ONE]],
            Pauli::X => [[ZERO, ONE], [ONE, ZERO]],
            Pauli::Y => [[ZERO, -I], [I, ZERO]],
            Pauli::Z => [[ONE, ZERO], [ZERO, -ONE]],
            Pauli::Plus => [[ZERO, ONE], [ZERO, ZERO]],
            Pauli::Minus => [[ZERO, ZERO], [ONE, ZERO]],
        }
    }

    fn is_hermitian(self) -> bool {
        !matches!(self, Pauli::Plus | Pauli::Minus)
    }
}

/// Dense `2^n` amplitude vector.
#[derive(Debug, Clone)]
pub struct DenseState {
    n: usize,
    amps: Vec<Complex64>,
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

/// `exp(a)` for a 2x2 complex matrix by scaling and squaring.
fn expm2(a: &Mat2) -> Mat2 {
    let norm: f64 = a.iter().flatten().map(|z| z.norm()).sum();
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled: Mat2 = [
        [a[0][0] * scale, a[0][1] * scale],
        [a[1][0] * scale, a[1][1] * scale],
    ];
    let mut sum: Mat2 = [[ONE, ZERO], [ZERO, ONE]];
    let mut term: Mat2 = sum;
    for k in 1..=20 {
        term = mat_mul(&term, &scaled);
        let inv = 1.0 / k as f64;
        for row in term.iter_mut() {
            for z in row.iter_mut() {
                *z *= inv;
            }
        }
        for r in 0..2 {
            for c in 0..2 {
                sum[r][c] += term[r][c];
            }
        }
    }
    for _ in 0..squarings {
        sum = mat_mul(&sum, &sum);
    }
    sum
}

/// `exp(-i v . sigma)` evaluated numerically.
pub(crate) fn rotation_matrix(v: &[f64; 3]) -> Mat2 {
    let gen = [
        [Complex64::new(v[2], 0.0), Complex64::new(v[0], -v[1])],
        [Complex64::new(v[0], v[1]), Complex64::new(-v[2], 0.0)],
    ];
    let minus_i_gen: Mat2 = [
        [-I * gen[0][0], -I * gen[0][1]],
        [-I * gen[1][0], -I * gen[1][1]],
    ];
    expm2(&minus_i_gen)
}

impl DenseState {
    /// `|+>^n`.
    pub fn plus(n: usize) -> Result<Self> {
        if n > MAX_STATE_SPINS {
            return Err(Error::Resource(format!(
                "dense state for {n} spins exceeds the {MAX_STATE_SPINS}-spin cap"
            )));
        }
        if n == 0 {
            return Err(Error::Validation("state needs at least one spin".into()));
        }
        let dim = 1usize << n;
        let a = Complex64::new((dim as f64).sqrt().recip(), 0.0);
        Ok(DenseState {
            n,
            amps: vec![a; dim],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn apply_single(&mut self, site: usize, m: &Mat2) {
        let bit = 1usize << site;
        for idx in 0..self.amps.len() {
            if idx & bit == 0 {
                let a0 = self.amps[idx];
                let a1 = self.amps[idx | bit];
                self.amps[idx] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[idx | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    /// Applies `exp(-i sum_{j != k} M_jk Z_j Z_k)`, ordered pairs.
    fn apply_entangler(&mut self, params: &GcsParams) {
        let n = self.n;
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            let spin = |k: usize| if idx >> k & 1 == 0 { 1.0 } else { -1.0 };
            let mut exponent = 0.0;
            for j in 0..n {
                for k in 0..n {
                    if j != k {
                        exponent += params.m(j, k) * spin(j) * spin(k);
                    }
                }
            }
            *amp *= Complex64::from_polar(1.0, -exponent);
        }
    }

    fn apply_string(&mut self, ops: &[(usize, Pauli)]) -> Result<()> {
        for &(site, p) in ops.iter().rev() {
            if site >= self.n {
                return Err(Error::Validation(format!(
                    "site {site} out of range for {} spins",
                    self.n
                )));
            }
            self.apply_single(site, &p.matrix());
        }
        Ok(())
    }
}

/// Builds `U(y) V(M) U(x) |+>^N`.
pub fn build_state(params: &GcsParams) -> Result<DenseState> {
    let mut state = DenseState::plus(params.n())?;
    for (site, x) in params.x.iter().enumerate() {
        state.apply_single(site, &rotation_matrix(x));
    }
    if !params.m_is_zero() {
        state.apply_entangler(params);
    }
    for (site, y) in params.y.iter().enumerate() {
        state.apply_single(site, &rotation_matrix(y));
    }
    Ok(state)
}

/// `<psi| op |psi>` for a product of single-site operators.
///
/// Operators are multiplied left to right, i.e. the last entry acts first.
pub fn expval(state: &DenseState, ops: &[(usize, Pauli)]) -> Result<Complex64> {
    let mut image = state.clone();
    image.apply_string(ops)?;
    Ok(state
        .amps
        .iter()
        .zip(&image.amps)
        .map(|(a, b)| a.conj() * b)
        .sum())
}

/// Real expectation value of a Hermitian Pauli string.
pub fn expval_real(state: &DenseState, ops: &[(usize, Pauli)]) -> Result<f64> {
    if let Some(&(_, p)) = ops.iter().find(|(_, p)| !p.is_hermitian()) {
        return Err(Error::Validation(format!(
            "{p:?} is not Hermitian; use `expval` for the complex value"
        )));
    }
    Ok(expval(state, ops)?.re)
}

/// `<H(s)>` with `H(s) = s H_I + (1 - s) H_TF`, where `H_I` includes the
/// bias and offset of `inst` and `H_TF = -sum_i X_i`.
pub fn hamiltonian_expval(state: &DenseState, inst: &QuboInstance, s: f64) -> Result<f64> {
    if inst.n() != state.n() {
        return Err(Error::Validation("instance and state sizes differ".into()));
    }
    let mut ising = inst.offset();
    for b in inst.bonds() {
        ising += 2.0 * b.w * expval_real(state, &[(b.i, Pauli::Z), (b.j, Pauli::Z)])?;
    }
    for (i, &c) in inst.bias().iter().enumerate() {
        if c != 0.0 {
            ising += c * expval_real(state, &[(i, Pauli::Z)])?;
        }
    }
    let mut field = 0.0;
    for i in 0..state.n() {
        field -= expval_real(state, &[(i, Pauli::X)])?;
    }
    Ok(s * ising + (1.0 - s) * field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn zero_params_give_uniform_state() {
        let st = build_state(&GcsParams::zeros(3)).unwrap();
        let a = 1.0 / 8f64.sqrt();
        assert!(st
            .amplitudes()
            .iter()
            .all(|z| close(*z, Complex64::new(a, 0.0), 1e-15)));
    }

    #[test]
    fn x_rotation_on_plus_is_a_global_phase() {
        let mut p = GcsParams::zeros(1);
        p.x[0] = [FRAC_PI_4, 0.0, 0.0];
        let st = build_state(&p).unwrap();
        let phase = Complex64::from_polar(1.0, -FRAC_PI_4) * FRAC_1_SQRT_2;
        assert!(close(st.amplitudes()[0], phase, 1e-14));
        assert!(close(st.amplitudes()[1], phase, 1e-14));
    }

    #[test]
    fn rotation_matrix_matches_closed_form() {
        let v: [f64; 3] = [0.3, -0.4, 1.2];
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let m = rotation_matrix(&v);
        let (c, s) = (r.cos(), r.sin() / r);
        // cos r I - i (sin r / r) v.sigma
        let expect00 = Complex64::new(c, -s * v[2]);
        let expect01 = Complex64::new(-s * v[1], -s * v[0]);
        assert!(close(m[0][0], expect00, 1e-14));
        assert!(close(m[0][1], expect01, 1e-14));
    }

    #[test]
    fn norm_is_preserved() {
        let mut rng = rng::seeded(1);
        for n in 1..=6 {
            let p = GcsParams::random(n, 1.5, 0.8, &mut rng);
            let st = build_state(&p).unwrap();
            assert!((st.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn plus_state_expectations() {
        let st = build_state(&GcsParams::zeros(3)).unwrap();
        assert!((expval_real(&st, &[(1, Pauli::X)]).unwrap() - 1.0).abs() < 1e-14);
        assert!(
            expval_real(&st, &[(0, Pauli::Z), (2, Pauli::Z)])
                .unwrap()
                .abs()
                < 1e-14
        );
        assert!(expval_real(&st, &[(0, Pauli::Plus)]).is_err());
        let plus = expval(&st, &[(0, Pauli::Plus)]).unwrap();
        assert!(close(plus, Complex64::new(0.5, 0.0), 1e-14));
    }

    #[test]
    fn z_strings_ignore_m_when_y_is_zero() {
        let mut rng = rng::seeded(2);
        let p = GcsParams::random(4, 1.0, 0.7, &mut rng);
        let mut no_m = GcsParams::zeros(4);
        no_m.x = p.x.clone();
        let mut p = p;
        p.y = vec![[0.0; 3]; 4];
        let a = build_state(&p).unwrap();
        let b = build_state(&no_m).unwrap();
        for ops in [vec![(0, Pauli::Z)], vec![(1, Pauli::Z), (3, Pauli::Z)]] {
            let va = expval_real(&a, &ops).unwrap();
            let vb = expval_real(&b, &ops).unwrap();
            assert!((va - vb).abs() < 1e-12);
        }
    }

    #[test]
    fn site_out_of_range_is_rejected() {
        let st = build_state(&GcsParams::zeros(2)).unwrap();
        assert!(expval(&st, &[(2, Pauli::Z)]).is_err());
    }

    #[test]
    fn too_many_spins_is_a_resource_error() {
        assert!(matches!(DenseState::plus(23), Err(Error::Resource(_))));
    }
}
