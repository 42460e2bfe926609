//! Single-spin building blocks: rotated `|+>` states, the Pauli-vector
//! rotation induced by `U(y)`, and their parameter derivatives.
//!
//! `exp(-i v . sigma) = cos r I - i (sin r / r) v . sigma` with `r = |v|`.
//! Conjugating the Pauli vector by it is a rotation by `2r` about `v / r`:
//! `U^dag sigma_j U = sum_k c_jk sigma_k` with
//! `c = cos 2r I + (sin 2r / r) [v]_x + ((1 - cos 2r) / r^2) v v^T`.
//! Everything is written in terms of `cos r`, `sin r / r` and
//! `(cos r - sin r / r) / r^2` so the small-`r` limit is smooth.

use num_complex::Complex64;

const SMALL_R: f64 = 1e-7;
/// Below this radius the derivative helper switches to its Taylor series;
/// the closed form cancels catastrophically well before `SMALL_R`.
const SMALL_R_DERIV: f64 = 1e-2;

/// Index of `sigma_-`, `sigma_z`, `sigma_+` in the ladder basis (alpha = -1, 0, +1).
pub const LADDER_ALPHAS: [i32; 3] = [-1, 0, 1];

/// `cos r`, `sin r / r`, and `(cos r - sin r / r) / r^2` for `r^2 = r2`.
///
/// The third value is `d(sin r / r)/dr / r`, so that
/// `d(sin r / r)/dv_m = q v_m`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Trig {
    pub cos: f64,
    pub sinc: f64,
    pub q: f64,
}

impl Trig {
    pub(crate) fn new(v: &[f64; 3]) -> Self {
        let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let r = r2.sqrt();
        let (cos, sinc) = if r < SMALL_R {
            (1.0 - r2 / 2.0, 1.0 - r2 / 6.0)
        } else {
            let (s, c) = r.sin_cos();
            (c, s / r)
        };
        let q = if r < SMALL_R_DERIV {
            -1.0 / 3.0 + r2 / 30.0 - r2 * r2 / 840.0 + r2 * r2 * r2 / 45360.0
        } else {
            (cos - sinc) / r2
        };
        Trig { cos, sinc, q }
    }
}

/// `exp(-i x . sigma) |+>` as amplitudes in the sigma_z basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleSpinState {
    pub amp: [Complex64; 2],
}

pub fn single_spin_state(x: &[f64; 3]) -> SingleSpinState {
    let t = Trig::new(x);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (c, s) = (t.cos, t.sinc);
    SingleSpinState {
        amp: [
            Complex64::new(h * (c - s * x[1]), -h * s * (x[0] + x[2])),
            Complex64::new(h * (c + s * x[1]), -h * s * (x[0] - x[2])),
        ],
    }
}

/// Rotated state plus everything the engine needs about it.
///
/// Amplitudes are stored scaled by `sqrt 2` so that `|+>` is exactly
/// `(1, 1)`; sandwiches built from them carry a factor 2.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SpinData {
    pub psi: [Complex64; 2],
    /// `d psi / d x_m`, same scaling
    pub dpsi: [[Complex64; 2]; 3],
    /// `<sigma_z>`
    pub z: f64,
    /// `d <sigma_z> / d x_m`
    pub dz: [f64; 3],
}

impl SpinData {
    pub(crate) fn new(x: &[f64; 3]) -> Self {
        let t = Trig::new(x);
        let (c, s) = (t.cos, t.sinc);
        let psi = [
            Complex64::new(c - s * x[1], -s * (x[0] + x[2])),
            Complex64::new(c + s * x[1], -s * (x[0] - x[2])),
        ];
        let mut dpsi = [[Complex64::new(0.0, 0.0); 2]; 3];
        for m in 0..3 {
            let dc = -s * x[m];
            let ds = t.q * x[m];
            let e = |k: usize| if k == m { 1.0 } else { 0.0 };
            dpsi[m][0] = Complex64::new(
                dc - ds * x[1] - s * e(1),
                -(ds * (x[0] + x[2]) + s * (e(0) + e(2))),
            );
            dpsi[m][1] = Complex64::new(
                dc + ds * x[1] + s * e(1),
                -(ds * (x[0] - x[2]) + s * (e(0) - e(2))),
            );
        }
        let z = 0.5 * (psi[0].norm_sqr() - psi[1].norm_sqr());
        let mut dz = [0.0; 3];
        for m in 0..3 {
            dz[m] = (psi[0].conj() * dpsi[m][0]).re - (psi[1].conj() * dpsi[m][1]).re;
        }
        SpinData { psi, dpsi, z, dz }
    }
}

/// Real rotation `c` and its ladder-basis form `d = c A`.
///
/// Rows are indexed by the source Pauli `x, y, z`; columns of `d` by
/// `alpha = -1, 0, +1` (`sigma_-`, `sigma_z`, `sigma_+`), using
/// `sigma_x = sigma_+ + sigma_-` and `sigma_y = i sigma_- - i sigma_+`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugationCoeffs {
    pub c: [[f64; 3]; 3],
    pub d: [[Complex64; 3]; 3],
}

/// Basis change from `{sigma_x, sigma_y, sigma_z}` to `{sigma_-, sigma_z, sigma_+}`.
pub fn ladder_basis_change() -> [[Complex64; 3]; 3] {
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    [[one, z, one], [i, z, -i], [z, one, z]]
}

fn to_ladder(c: &[[f64; 3]; 3]) -> [[Complex64; 3]; 3] {
    let mut d = [[Complex64::new(0.0, 0.0); 3]; 3];
    for j in 0..3 {
        d[j][0] = Complex64::new(c[j][0], c[j][1]);
        d[j][1] = Complex64::new(c[j][2], 0.0);
        d[j][2] = Complex64::new(c[j][0], -c[j][1]);
    }
    d
}

fn cross_matrix(v: &[f64; 3]) -> [[f64; 3]; 3] {
    [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
}

pub fn conjugation_coeffs(y: &[f64; 3]) -> ConjugationCoeffs {
    let t = Trig::new(y);
    let (co, s) = (t.cos, t.sinc);
    let diag = 1.0 - 2.0 * (s * s) * (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]);
    let k = cross_matrix(y);
    let mut c = [[0.0; 3]; 3];
    for j in 0..3 {
        for l in 0..3 {
            c[j][l] = 2.0 * s * co * k[j][l] + 2.0 * s * s * y[j] * y[l];
        }
        c[j][j] += diag;
    }
    ConjugationCoeffs {
        c,
        d: to_ladder(&c),
    }
}

/// Derivative of the Cartesian and ladder coefficient tables.
pub type CoeffDerivs = ([[f64; 3]; 3], [[Complex64; 3]; 3]);

/// `d c / d y_m` and `d d / d y_m` for `m = 0, 1, 2`.
pub fn conjugation_coeff_derivs(y: &[f64; 3]) -> [CoeffDerivs; 3] {
    let t = Trig::new(y);
    let (co, s, q) = (t.cos, t.sinc, t.q);
    let k = cross_matrix(y);
    let mut out = [([[0.0; 3]; 3], [[Complex64::new(0.0, 0.0); 3]; 3]); 3];
    for m in 0..3 {
        let mut e = [0.0; 3];
        e[m] = 1.0;
        let ek = cross_matrix(&e);
        let d_diag = -4.0 * s * co * y[m];
        let d_sc = (q * co - s * s) * y[m];
        let d_ss = 2.0 * s * q * y[m];
        let mut dc = [[0.0; 3]; 3];
        for j in 0..3 {
            for l in 0..3 {
                dc[j][l] = 2.0 * d_sc * k[j][l]
                    + 2.0 * s * co * ek[j][l]
                    + 2.0 * d_ss * y[j] * y[l]
                    + 2.0 * s * s * (e[j] * y[l] + y[j] * e[l]);
            }
            dc[j][j] += d_diag;
        }
        out[m] = (dc, to_ladder(&dc));
    }
    out
}
