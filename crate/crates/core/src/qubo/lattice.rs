//! Edwards-Anderson spin-glass instances on cubic lattices and slabs.
//!
//! Site `(x, y, z)` has index `x + lx * (y + ly * z)`. Bonds are generated
//! site by site in index order, one per positive lattice direction
//! (`d = 0, 1, 2` for x, y, z). The coupling of the bond leaving site `i`
//! along direction `d` is the first standard-normal draw of ChaCha8 stream
//! `3 i + d` under the instance seed, independent of every other bond.
//!
//! Periodic wrap-around is applied only along sides of length at least 3; on
//! a side of length 2 the wrap bond would duplicate the ordinary bond.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Boundary, QuboInstance};
use crate::error::{Error, Result};
use crate::rng;

/// Cubic `L x L x L` lattice with standard-Gaussian nearest-neighbor couplings.
pub fn gen_ea3d(l: usize, seed: u64, boundary: Boundary) -> Result<QuboInstance> {
    if l < 2 {
        return Err(Error::Validation(format!(
            "lattice side must be at least 2, got {l}"
        )));
    }
    gen_ea_slab([l, l, l], seed, boundary)
}

/// Rectangular `lx x ly x lz` slab, same coupling rule as [`gen_ea3d`].
pub fn gen_ea_slab(dims: [usize; 3], seed: u64, boundary: Boundary) -> Result<QuboInstance> {
    if dims.contains(&0) {
        return Err(Error::Validation(format!(
            "slab dimensions must be positive, got {dims:?}"
        )));
    }
    if boundary == Boundary::None {
        return Err(Error::Validation(
            "lattice boundary must be open or periodic".into(),
        ));
    }
    let [lx, ly, lz] = dims;
    let n = lx
        .checked_mul(ly)
        .and_then(|v| v.checked_mul(lz))
        .ok_or_else(|| Error::Validation("slab too large".into()))?;
    let index = |x: usize, y: usize, z: usize| x + lx * (y + ly * z);

    let mut couplings = Vec::with_capacity(3 * n);
    for z in 0..lz {
        for y in 0..ly {
            for x in 0..lx {
                let site = index(x, y, z);
                let coord = [x, y, z];
                for d in 0..3 {
                    let mut next = coord;
                    next[d] += 1;
                    if next[d] == dims[d] {
                        if boundary == Boundary::Periodic && dims[d] >= 3 {
                            next[d] = 0;
                        } else {
                            continue;
                        }
                    }
                    let other = index(next[0], next[1], next[2]);
                    let w: f64 = rng::stream(seed, (3 * site + d) as u64).sample(StandardNormal);
                    couplings.push((site, other, w));
                }
            }
        }
    }
    QuboInstance::new(n, couplings, vec![0.0; n], 0.0, boundary)
}
