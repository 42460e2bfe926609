//! Problem representation: binary QUBO, Ising-form instances, spin
//! configurations and classical energies.
//!
//! Energies use the ordered-pair convention
//! `E(s) = sum_{i,j} W_ij s_i s_j + sum_i c_i s_i + offset`, where the double
//! sum runs over ordered pairs. Couplings are stored once per unordered pair,
//! so each stored bond contributes `2 w s_i s_j`.

mod format;
mod lattice;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{parse_instance, read_instance, render_instance, write_instance, MAX_FILE_SPINS};
pub use lattice::{gen_ea3d, gen_ea_slab};

/// Boundary condition recorded with lattice instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    #[default]
    Periodic,
    /// Not a lattice instance.
    None,
}

impl Boundary {
    pub fn tag(self) -> &'static str {
        match self {
            Boundary::Open => "open",
            Boundary::Periodic => "periodic",
            Boundary::None => "none",
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(Boundary::Open),
            "periodic" => Ok(Boundary::Periodic),
            "none" => Ok(Boundary::None),
            other => Err(Error::Validation(format!("unknown boundary tag '{other}'"))),
        }
    }
}

/// Binary formulation: minimize `sum_{i,j} J_ij z_i z_j + sum_i b_i z_i` over `z in {0,1}^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryQubo {
    pub j: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl BinaryQubo {
    pub fn new(j: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let q = BinaryQubo { j, b };
        q.validate()?;
        Ok(q)
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.b.len();
        if n == 0 {
            return Err(Error::Validation(
                "binary QUBO needs at least one variable".into(),
            ));
        }
        if self.j.len() != n || self.j.iter().any(|row| row.len() != n) {
            return Err(Error::Validation(format!("J must be {n}x{n} to match b")));
        }
        if self.b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite entry in b".into()));
        }
        for i in 0..n {
            for k in 0..n {
                let v = self.j[i][k];
                if !v.is_finite() {
                    return Err(Error::Validation(format!("non-finite J[{i}][{k}]")));
                }
                if v != self.j[k][i] {
                    return Err(Error::Validation(format!(
                        "J is not symmetric at ({i}, {k}): {v} vs {}",
                        self.j[k][i]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Binary objective at `z`.
    pub fn loss(&self, z: &[u8]) -> Result<f64> {
        if z.len() != self.n() {
            return Err(Error::Validation(format!(
                "assignment has {} entries, problem has {}",
                z.len(),
                self.n()
            )));
        }
        let mut total = 0.0;
        for (i, row) in self.j.iter().enumerate() {
            for (k, &jik) in row.iter().enumerate() {
                total += jik * f64::from(z[i]) * f64::from(z[k]);
            }
            total += self.b[i] * f64::from(z[i]);
        }
        Ok(total)
    }
}

/// One stored coupling, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Ising-form instance with sparse symmetric couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct QuboInstance {
    n: usize,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, f64)>>,
    c: Vec<f64>,
    offset: f64,
    boundary: Boundary,
}

impl QuboInstance {
    /// Builds an instance from unordered couplings `(i, j, w)`.
    ///
    /// Each unordered pair may appear in either orientation; repeated pairs
    /// must carry identical weights. Self-couplings `(i, i, w)` are constant
    /// (`s_i^2 = 1`) and are moved into the offset with a warning.
    pub fn new(
        n: usize,
        couplings: impl IntoIterator<Item = (usize, usize, f64)>,
        c: Vec<f64>,
        offset: f64,
        boundary: Boundary,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("instance needs at least one spin".into()));
        }
        if c.len() != n {
            return Err(Error::Validation(format!(
                "bias vector has {} entries, expected {n}",
                c.len()
            )));
        }
        if let Some(i) = c.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite bias c[{i}]")));
        }
        let mut offset = offset;
        let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (a, b, w) in couplings {
            if a >= n || b >= n {
                return Err(Error::Validation(format!(
                    "coupling ({a}, {b}) out of range for {n} spins"
                )));
            }
            if !w.is_finite() {
                return Err(Error::Validation(format!("non-finite coupling ({a}, {b})")));
            }
            if a == b {
                log::warn!("diagonal coupling W[{a}][{a}] = {w} moved into the constant offset");
                offset += w;
                continue;
            }
            let key = (a.min(b), a.max(b));
            if let Some(prev) = pairs.insert(key, w) {
                if prev != w {
                    return Err(Error::Validation(format!(
                        "asymmetric duplicate coupling ({}, {}): {prev} vs {w}",
                        key.0, key.1
                    )));
                }
            }
        }
        if !offset.is_finite() {
            return Err(Error::Validation("non-finite offset".into()));
        }
        let bonds: Vec<Bond> = pairs
            .into_iter()
            .map(|((i, j), w)| Bond { i, j, w })
            .collect();
        Ok(Self::from_sorted_bonds(n, bonds, c, offset, boundary))
    }

    fn from_sorted_bonds(
        n: usize,
        bonds: Vec<Bond>,
        c: Vec<f64>,
        offset: f64,
        boundary: Boundary,
    ) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for b in &bonds {
            adjacency[b.i].push((b.j, b.w));
            adjacency[b.j].push((b.i, b.w));
        }
        for row in &mut adjacency {
            row.sort_by_key(|&(k, _)| k);
        }
        QuboInstance {
            n,
            bonds,
            adjacency,
            c,
            offset,
            boundary,
        }
    }

    /// Builds an instance from a dense symmetric coupling matrix.
    pub fn from_dense(w: &[Vec<f64>], c: Vec<f64>, offset: f64) -> Result<Self> {
        let n = w.len();
        if w.iter().any(|row| row.len() != n) {
            return Err(Error::Validation("coupling matrix must be square".into()));
        }
        let mut couplings = Vec::new();
        for i in 0..n {
            if w[i][i] != 0.0 {
                couplings.push((i, i, w[i][i]));
            }
            for k in (i + 1)..n {
                if w[i][k] != w[k][i] {
                    return Err(Error::Validation(format!(
                        "coupling matrix is not symmetric at ({i}, {k})"
                    )));
                }
                if w[i][k] != 0.0 {
                    couplings.push((i, k, w[i][k]));
                }
            }
        }
        Self::new(n, couplings, c, offset, Boundary::None)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored couplings, one per unordered pair, sorted by `(i, j)`.
    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    /// Neighbors of `i` with coupling weights, sorted by neighbor index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn bias(&self) -> &[f64] {
        &self.c
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn has_bias(&self) -> bool {
        self.c.iter().any(|&v| v != 0.0)
    }

    /// Dense `N x N` view of `W` (ordered-pair convention, zero diagonal).
    pub fn dense_couplings(&self) -> Vec<Vec<f64>> {
        let mut w = vec![vec![0.0; self.n]; self.n];
        for b in &self.bonds {
            w[b.i][b.j] = b.w;
            w[b.j][b.i] = b.w;
        }
        w
    }

    /// Classical energy of a spin configuration.
    pub fn energy(&self, s: &[i8]) -> Result<f64> {
        self.check_spins(s)?;
        Ok(self.energy_unchecked(s))
    }

    pub(crate) fn energy_unchecked(&self, s: &[i8]) -> f64 {
        let mut e = self.offset;
        for b in &self.bonds {
            e += 2.0 * b.w * f64::from(s[b.i] * s[b.j]);
        }
        for (ci, &si) in self.c.iter().zip(s) {
            e += ci * f64::from(si);
        }
        e
    }

    pub(crate) fn check_spins(&self, s: &[i8]) -> Result<()> {
        if s.len() != self.n {
            return Err(Error::Validation(format!(
                "configuration has {} spins, instance has {}",
                s.len(),
                self.n
            )));
        }
        if let Some(i) = s.iter().position(|&v| v != 1 && v != -1) {
            return Err(Error::Validation(format!(
                "spin {i} is {} (must be +-1)",
                s[i]
            )));
        }
        Ok(())
    }

    /// `sum_j W_ij s_j` for every site.
    pub fn local_fields(&self, s: &[i8]) -> Vec<f64> {
        self.adjacency
            .iter()
            .map(|row| row.iter().map(|&(k, w)| w * f64::from(s[k])).sum())
            .collect()
    }

    /// Energy change from flipping spin `k`, given its current local field.
    #[inline]
    pub fn flip_delta(&self, s: &[i8], field_k: f64, k: usize) -> f64 {
        -2.0 * f64::from(s[k]) * (2.0 * field_k + self.c[k])
    }

    /// Absorbs the bias into couplings to an extra spin (index `n`).
    ///
    /// With the extra spin fixed to `+1` the folded energy equals the
    /// original energy for every configuration; see [`unfold_spins`].
    pub fn fold_bias(&self) -> QuboInstance {
        let n = self.n;
        let mut bonds = self.bonds.clone();
        for (i, &ci) in self.c.iter().enumerate() {
            if ci != 0.0 {
                bonds.push(Bond {
                    i,
                    j: n,
                    w: ci / 2.0,
                });
            }
        }
        bonds.sort_by_key(|b| (b.i, b.j));
        Self::from_sorted_bonds(n + 1, bonds, vec![0.0; n + 1], self.offset, self.boundary)
    }

    /// Returns a copy with every coupling and the bias multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> QuboInstance {
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                w: b.w * factor,
                ..*b
            })
            .collect();
        let c = self.c.iter().map(|v| v * factor).collect();
        Self::from_sorted_bonds(self.n, bonds, c, self.offset * factor, self.boundary)
    }

    /// Mean absolute value over nonzero couplings; 1 if there are none.
    pub fn mean_abs_coupling(&self) -> f64 {
        let nz: Vec<f64> = self
            .bonds
            .iter()
            .map(|b| b.w.abs())
            .filter(|&w| w > 0.0)
            .collect();
        if nz.is_empty() {
            1.0
        } else {
            nz.iter().sum::<f64>() / nz.len() as f64
        }
    }
}

/// Maps a solution of a folded instance back to the original spins.
///
/// The folded instance has no bias, so its energy is invariant under a
/// global flip; the solution is first flipped so the reference spin is `+1`.
pub fn unfold_spins(folded: &[i8]) -> Vec<i8> {
    let (&last, rest) = folded
        .split_last()
        .expect("folded configuration is never empty");
    if last == 1 {
        rest.to_vec()
    } else {
        rest.iter().map(|&v| -v).collect()
    }
}

/// Converts a binary QUBO to Ising form via `s = 2z - 1`.
///
/// `W = J/4` off the diagonal, `c_i = (b_i + sum_j J_ij)/2`, and every
/// constant (including the diagonal of `J`) lands in the offset, so
/// `loss(z) == energy(2z - 1)` for every assignment.
pub fn from_binary(q: &BinaryQubo) -> Result<QuboInstance> {
    q.validate()?;
    let n = q.n();
    let mut offset = 0.0;
    let mut couplings = Vec::new();
    let mut c = vec![0.0; n];
    for i in 0..n {
        let row_sum: f64 = q.j[i].iter().sum();
        c[i] = (q.b[i] + row_sum) / 2.0;
        offset += row_sum / 4.0 + q.j[i][i] / 4.0 + q.b[i] / 2.0;
        for k in (i + 1)..n {
            if q.j[i][k] != 0.0 {
                couplings.push((i, k, q.j[i][k] / 4.0));
            }
        }
    }
    QuboInstance::new(n, couplings, c, offset, Boundary::None)
}

/// A `+-1` configuration together with its energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinConfiguration {
    pub spins: Vec<i8>,
    pub energy: f64,
}

impl SpinConfiguration {
    pub fn evaluate(inst: &QuboInstance, spins: Vec<i8>) -> Result<Self> {
        let energy = inst.energy(&spins)?;
        Ok(SpinConfiguration { spins, energy })
    }
}

/// Spins of the binary assignment `z`: `s = 2z - 1`.
pub fn spins_from_binary(z: &[u8]) -> Vec<i8> {
    z.iter().map(|&v| if v == 0 { -1 } else { 1 }).collect()
}
