//! Single-party BPV nonce generator: a table of `n` precomputed pairs
//! `(rᵢ, rᵢ·α)` from which a fresh `(r, R)` is assembled as a random
//! `v`-subset sum.

use rand::seq::SliceRandom;
use rand::{CryptoRng, Rng, RngCore};

use crate::error::{Error, Result};
use crate::group::{add_points, mul_basepoint, scalar_add, GroupElement, OpCounter, Scalar};

#[derive(Clone, Debug)]
pub struct BpvTable {
    pairs: Vec<(Scalar, GroupElement)>,
    v: usize,
}

impl BpvTable {
    pub fn pairs(&self) -> &[(Scalar, GroupElement)] {
        &self.pairs
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn n(&self) -> usize {
        self.pairs.len()
    }
}

pub fn offline<R: RngCore + CryptoRng>(
    v: usize,
    n: usize,
    rng: &mut R,
    ops: &mut OpCounter,
) -> Result<BpvTable> {
    if !(v > 2 && v < n) {
        return Err(Error::Params(format!("BPV requires 2 < v < n (v={v}, n={n})")));
    }
    let pairs = (0..n)
        .map(|_| {
            let r = Scalar::random_nonzero(rng);
            (r, mul_basepoint(&r, ops))
        })
        .collect();
    Ok(BpvTable { pairs, v })
}

/// Uniform `v`-subset of `[0, n)` via a partial Fisher–Yates shuffle.
pub fn sample_subset<R: Rng + ?Sized>(n: usize, v: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let (chosen, _) = idx.partial_shuffle(rng, v);
    chosen.to_vec()
}

/// `(Σ_{i∈S} rᵢ, Σ_{i∈S} Rᵢ)` for an explicit subset.
pub fn combine(table: &BpvTable, subset: &[usize], ops: &mut OpCounter) -> (Scalar, GroupElement) {
    let (first, rest) = subset.split_first().expect("subset must be non-empty");
    let (mut r, mut big_r) = table.pairs[*first];
    for &i in rest {
        let (ri, big_ri) = &table.pairs[i];
        r = scalar_add(&r, ri, ops);
        big_r = add_points(&big_r, big_ri, ops);
    }
    (r, big_r)
}

pub fn online<R: RngCore + CryptoRng>(
    table: &BpvTable,
    rng: &mut R,
    ops: &mut OpCounter,
) -> (Scalar, GroupElement) {
    let subset = sample_subset(table.n(), table.v, rng);
    combine(table, &subset, ops)
}
