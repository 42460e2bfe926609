//! Exhaustive ground-state search.
//!
//! The configuration space is split on the top `PREFIX_BITS` spins; each
//! block is walked in Gray-code order over the remaining spins with
//! single-flip energy updates from maintained local fields. Candidates whose
//! running energy comes within a small tolerance of the best so far are
//! re-evaluated from scratch, so the reported energy is exactly
//! [`QuboInstance::energy`] of the reported configuration. Ties go to the
//! lexicographically smallest configuration, ordering `+1 < -1` with spin 0
//! most significant.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qubo::{QuboInstance, SpinConfiguration};

/// Largest spin count accepted by [`brute_force_min`].
pub const MAX_EXACT_SPINS: usize = 25;

const PREFIX_BITS: usize = 6;

/// Lexicographic rank of a configuration (smaller wins ties).
pub fn lexicographic_key(s: &[i8]) -> u64 {
    s.iter()
        .fold(0u64, |acc, &v| (acc << 1) | u64::from(v == -1))
}

#[derive(Clone)]
struct Best {
    energy: f64,
    key: u64,
    spins: Vec<i8>,
}

impl Best {
    fn offer(&mut self, energy: f64, spins: &[i8]) {
        if energy < self.energy {
            self.energy = energy;
            self.key = lexicographic_key(spins);
            self.spins.copy_from_slice(spins);
        } else if energy == self.energy {
            let key = lexicographic_key(spins);
            if key < self.key {
                self.key = key;
                self.spins.copy_from_slice(spins);
            }
        }
    }

    fn better_than(&self, other: &Best) -> bool {
        self.energy < other.energy || (self.energy == other.energy && self.key < other.key)
    }
}

/// Global minimum energy and its (lexicographically first) minimizer.
pub fn brute_force_min(inst: &QuboInstance) -> Result<(f64, SpinConfiguration)> {
    let n = inst.n();
    if n > MAX_EXACT_SPINS {
        return Err(Error::Resource(format!(
            "exhaustive search over {n} spins exceeds the {MAX_EXACT_SPINS}-spin cap"
        )));
    }
    let prefix = n.min(PREFIX_BITS);
    let free = n - prefix;
    // incremental updates drift by rounding; anything this close to the best is rechecked
    let scale = inst.offset().abs()
        + inst.bonds().iter().map(|b| 2.0 * b.w.abs()).sum::<f64>()
        + inst.bias().iter().map(|c| c.abs()).sum::<f64>();
    let tol = 1e-9 * (1.0 + scale);

    let blocks: Vec<Best> = (0u64..1 << prefix)
        .into_par_iter()
        .map(|block| {
            let mut s = vec![1i8; n];
            for b in 0..prefix {
                if block >> b & 1 == 1 {
                    s[free + b] = -1;
                }
            }
            let mut fields = inst.local_fields(&s);
            let mut energy = inst.energy_unchecked(&s);
            let mut best = Best {
                energy,
                key: lexicographic_key(&s),
                spins: s.clone(),
            };
            for g in 1u64..1 << free {
                let k = g.trailing_zeros() as usize;
                energy += inst.flip_delta(&s, fields[k], k);
                let old = f64::from(s[k]);
                s[k] = -s[k];
                for &(nb, w) in inst.neighbors(k) {
                    fields[nb] -= 2.0 * w * old;
                }
                if energy <= best.energy + tol {
                    best.offer(inst.energy_unchecked(&s), &s);
                }
            }
            best
        })
        .collect();

    let best = blocks
        .into_iter()
        .reduce(|a, b| if b.better_than(&a) { b } else { a })
        .expect("at least one block");
    Ok((
        best.energy,
        SpinConfiguration {
            spins: best.spins,
            energy: best.energy,
        },
    ))
}
