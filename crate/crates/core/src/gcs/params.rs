use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variational parameters of `U(y) V(M) U(x) |+>^N`.
///
/// `x` and `y` hold one rotation generator per spin (coefficients of
/// `sigma_x, sigma_y, sigma_z`). `m` is the symmetric entangling matrix with
/// zero diagonal, stored dense row-major; each unordered pair is one
/// parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcsParams {
    n: usize,
    pub x: Vec<[f64; 3]>,
    pub y: Vec<[f64; 3]>,
    m: Vec<f64>,
}

impl GcsParams {
    /// All-zero parameters, i.e. the state `|+>^N`.
    pub fn zeros(n: usize) -> Self {
        GcsParams {
            n,
            x: vec![[0.0; 3]; n],
            y: vec![[0.0; 3]; n],
            m: vec![0.0; n * n],
        }
    }

    /// Builds parameters from explicit blocks; `m` is given as full rows.
    pub fn new(x: Vec<[f64; 3]>, y: Vec<[f64; 3]>, m: Vec<Vec<f64>>) -> Result<Self> {
        let n = x.len();
        if y.len() != n || m.len() != n || m.iter().any(|r| r.len() != n) {
            return Err(Error::Validation(format!(
                "parameter blocks must all describe {n} spins"
            )));
        }
        for i in 0..n {
            if m[i][i] != 0.0 {
                return Err(Error::Validation(format!("M[{i}][{i}] must be zero")));
            }
            for j in 0..n {
                if m[i][j] != m[j][i] {
                    return Err(Error::Validation(format!(
                        "M is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let p = GcsParams {
            n,
            x,
            y,
            m: m.into_iter().flatten().collect(),
        };
        if !p.is_finite() {
            return Err(Error::Validation("non-finite parameter".into()));
        }
        Ok(p)
    }

    /// Uniform random draw: `x, y` entries in `[-scale_xy, scale_xy]`, `M`
    /// entries in `[-scale_m, scale_m]`.
    pub fn random<R: Rng + ?Sized>(n: usize, scale_xy: f64, scale_m: f64, rng: &mut R) -> Self {
        let mut p = GcsParams::zeros(n);
        let mut draw = |s: f64| {
            if s > 0.0 {
                rng.random_range(-s..=s)
            } else {
                0.0
            }
        };
        for v in p.x.iter_mut().chain(p.y.iter_mut()) {
            for c in v.iter_mut() {
                *c = draw(scale_xy);
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let v = draw(scale_m);
                p.set_m(i, j, v);
            }
        }
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.n + j]
    }

    /// Row `i` of `M`.
    #[inline]
    pub fn m_row(&self, i: usize) -> &[f64] {
        &self.m[i * self.n..(i + 1) * self.n]
    }

    /// Sets the pair `(i, j)`; both triangle entries change together.
    pub fn set_m(&mut self, i: usize, j: usize, v: f64) {
        assert_ne!(i, j, "M has zero diagonal");
        let n = self.n;
        self.m[i * n + j] = v;
        self.m[j * n + i] = v;
    }

    /// Number of independent real parameters: `6N + N(N-1)/2`.
    pub fn param_count(&self) -> usize {
        6 * self.n + self.n * (self.n.saturating_sub(1)) / 2
    }

    pub fn is_finite(&self) -> bool {
        self.x
            .iter()
            .chain(&self.y)
            .flatten()
            .all(|v| v.is_finite())
            && self.m.iter().all(|v| v.is_finite())
    }

    pub fn m_is_zero(&self) -> bool {
        self.m.iter().all(|&v| v == 0.0)
    }

    pub fn y_is_zero(&self) -> bool {
        self.y.iter().flatten().all(|&v| v == 0.0)
    }

    /// Parameters embedding a classical configuration: each `x_i` rotates
    /// `|+>` onto `|s_i>` about the y axis; `M = 0`, `y = 0`.
    pub fn classical(spins: &[i8]) -> Self {
        let mut p = GcsParams::zeros(spins.len());
        for (x, &s) in p.x.iter_mut().zip(spins) {
            x[1] = -f64::from(s) * std::f64::consts::FRAC_PI_4;
        }
        p
    }
}
