//! Symmetric machinery: the PRF, the three hash functions, and the
//! derivations built from them.
//!
//! | function | instantiation | domain tag |
//! |----------|---------------|------------|
//! | `PRF_0`  | AES-CTR (AES-128 for 16-byte seeds, AES-256 for 32-byte scalars) | `0x00` |
//! | `H_0`    | BLAKE2b-512 truncated to 16 bytes | `0x01` |
//! | `H_1`    | BLAKE2b-512 in counter mode, read as `log2 n`-bit chunks | `0x02` |
//! | `H_2`    | BLAKE2b-512, reduced mod `q` | `0x03` |
//!
//! The Schnorr baseline challenge uses the `H_2` construction under tag
//! `0x04`. The PRF domain tag occupies the first byte of every counter
//! block; hash tags are prefixed to the hashed input.

use std::fmt;

use aes::cipher::{BlockEncrypt, KeyInit};
use aes::{Aes128, Aes256, Block};
use blake2::{Blake2b512, Digest};

use crate::group::{OpCounter, Scalar};

pub const KAPPA_BYTES: usize = 16;

pub const TAG_PRF0: u8 = 0x00;
pub const TAG_H0: u8 = 0x01;
pub const TAG_H1: u8 = 0x02;
pub const TAG_H2: u8 = 0x03;
pub const TAG_SCHNORR: u8 = 0x04;

/// Bytes of PRF output behind one derived scalar (>= 253 + 128 bits).
pub const WIDE_LEN: usize = 48;

const WIDTH_BLOCK: u8 = 0x10;
const WIDTH_WIDE: u8 = 0x30;

/// A κ-bit secret seed (`z_j`).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub [u8; KAPPA_BYTES]);

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Seed(..)")
    }
}

/// The one-time tag `x` bound into the signature in place of `R`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct CommitmentTag(pub [u8; KAPPA_BYTES]);

impl fmt::Debug for CommitmentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CommitmentTag({})", hex::encode(self.0))
    }
}

/// `v` distinct table indexes in derivation order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexSet(Vec<u32>);

impl IndexSet {
    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|&i| i as usize)
    }

    /// Sorted copy, for comparing as a set.
    pub fn sorted(&self) -> Vec<u32> {
        let mut s = self.0.clone();
        s.sort_unstable();
        s
    }
}

#[allow(clippy::large_enum_variant)]
enum Cipher {
    Aes128(Aes128),
    Aes256(Aes256),
}

/// `PRF_0` keyed once, evaluated at many indexes.
pub struct Prf(Cipher);

impl Prf {
    pub fn from_seed(seed: &Seed) -> Self {
        Prf(Cipher::Aes128(Aes128::new(&seed.0.into())))
    }

    pub fn from_scalar(key: &Scalar) -> Self {
        Prf(Cipher::Aes256(Aes256::new(&key.to_bytes().into())))
    }

    fn keystream<const B: usize>(&self, width: u8, index: u32) -> [Block; B] {
        let mut blocks = [Block::default(); B];
        for (ctr, block) in blocks.iter_mut().enumerate() {
            block[0] = TAG_PRF0;
            block[1] = width;
            block[8..12].copy_from_slice(&index.to_be_bytes());
            block[12..16].copy_from_slice(&(ctr as u32).to_be_bytes());
        }
        match &self.0 {
            Cipher::Aes128(c) => c.encrypt_blocks(&mut blocks),
            Cipher::Aes256(c) => c.encrypt_blocks(&mut blocks),
        }
        blocks
    }

    /// κ-bit output at `index`.
    pub fn block(&self, index: u32, ops: &mut OpCounter) -> [u8; KAPPA_BYTES] {
        ops.prf_calls += 1;
        self.keystream::<1>(WIDTH_BLOCK, index)[0].into()
    }

    /// 384-bit expansion at `index`, as used for scalar derivation.
    pub fn wide(&self, index: u32, ops: &mut OpCounter) -> [u8; WIDE_LEN] {
        ops.prf_calls += 1;
        let blocks = self.keystream::<3>(WIDTH_WIDE, index);
        let mut out = [0u8; WIDE_LEN];
        for (chunk, block) in out.chunks_exact_mut(16).zip(blocks.iter()) {
            chunk.copy_from_slice(block);
        }
        out
    }

    pub fn scalar(&self, index: u32, ops: &mut OpCounter) -> Scalar {
        reduce_wide(&self.wide(index, ops))
    }
}

fn reduce_wide(bytes: &[u8; WIDE_LEN]) -> Scalar {
    let mut wide = [0u8; 64];
    wide[..WIDE_LEN].copy_from_slice(bytes);
    Scalar::from_wide_bytes(&wide)
}

/// `PRF_0(key || index)` under a seed key.
pub fn prf0(key: &Seed, index: u32, ops: &mut OpCounter) -> [u8; KAPPA_BYTES] {
    Prf::from_seed(key).block(index, ops)
}

/// `PRF_0(y || j)`: the per-party seed `z_j` derived from the signing key.
pub fn party_seed(y: &Scalar, j: u32, ops: &mut OpCounter) -> Seed {
    Seed(Prf::from_scalar(y).block(j, ops))
}

/// `PRF_0(z || i)` widened and reduced into `Z_q`.
pub fn derive_scalar(key: &Seed, index: u32, ops: &mut OpCounter) -> Scalar {
    Prf::from_seed(key).scalar(index, ops)
}

/// Sums 384-bit PRF expansions as plain integers so that a whole batch is
/// reduced modulo `q` once. `(Σ wᵢ) mod q = Σ (wᵢ mod q) mod q`.
#[derive(Clone, Debug, Default)]
pub struct WideAccumulator {
    limbs: [u64; 8],
}

impl WideAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counted as one modular addition.
    pub fn add(&mut self, value: &[u8; WIDE_LEN], ops: &mut OpCounter) {
        ops.scalar_adds += 1;
        self.add_le_bytes(value);
    }

    /// Adds an already reduced scalar. Counted as one modular addition.
    pub fn add_scalar(&mut self, value: &Scalar, ops: &mut OpCounter) {
        ops.scalar_adds += 1;
        self.add_le_bytes(&value.to_bytes());
    }

    fn add_le_bytes(&mut self, value: &[u8]) {
        let words = value.len() / 8;
        let mut carry = 0u128;
        for (i, limb) in self.limbs.iter_mut().enumerate() {
            let word = if i < words {
                u64::from_le_bytes(value[i * 8..i * 8 + 8].try_into().unwrap())
            } else {
                0
            };
            let sum = *limb as u128 + word as u128 + carry;
            *limb = sum as u64;
            carry = sum >> 64;
        }
        debug_assert_eq!(carry, 0);
    }

    pub fn reduce(&self) -> Scalar {
        let mut bytes = [0u8; 64];
        for (chunk, limb) in bytes.chunks_exact_mut(8).zip(self.limbs.iter()) {
            chunk.copy_from_slice(&limb.to_le_bytes());
        }
        Scalar::from_wide_bytes(&bytes)
    }
}

fn blake2b(tag: u8, parts: &[&[u8]]) -> [u8; 64] {
    let mut h = Blake2b512::new();
    h.update([tag]);
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// `H_0`: 16-byte digest.
pub fn h0(input: &[u8], ops: &mut OpCounter) -> CommitmentTag {
    h0_parts(&[input], ops)
}

pub(crate) fn h0_parts(parts: &[&[u8]], ops: &mut OpCounter) -> CommitmentTag {
    ops.hash_calls += 1;
    let d = blake2b(TAG_H0, parts);
    let mut x = [0u8; KAPPA_BYTES];
    x.copy_from_slice(&d[..KAPPA_BYTES]);
    CommitmentTag(x)
}

/// `x = H_0(y || c)` with `c` as an 8-byte big-endian integer.
pub fn commitment_tag(y: &Scalar, counter: u64, ops: &mut OpCounter) -> CommitmentTag {
    h0_parts(&[&y.to_bytes(), &counter.to_be_bytes()], ops)
}

/// Extendable bit stream `BLAKE2b(0x02 || z || x || k)` for `k = 0, 1, ...`,
/// read most-significant bit first.
struct IndexStream<'a> {
    z: &'a Seed,
    x: &'a CommitmentTag,
    block: [u8; 64],
    block_no: u32,
    bit_pos: usize,
    consumed: usize,
}

impl<'a> IndexStream<'a> {
    fn new(z: &'a Seed, x: &'a CommitmentTag) -> Self {
        let mut s = IndexStream {
            z,
            x,
            block: [0; 64],
            block_no: 0,
            bit_pos: 0,
            consumed: 0,
        };
        s.refill();
        s
    }

    fn refill(&mut self) {
        self.block = blake2b(TAG_H1, &[&self.z.0, &self.x.0, &self.block_no.to_be_bytes()]);
        self.block_no += 1;
        self.bit_pos = 0;
    }

    fn next_bit(&mut self) -> usize {
        if self.bit_pos == 512 {
            self.refill();
        }
        let byte = self.block[self.bit_pos / 8];
        let bit = (byte >> (7 - self.bit_pos % 8)) & 1;
        self.bit_pos += 1;
        self.consumed += 1;
        bit as usize
    }

    fn next_chunk(&mut self, bits: u32) -> usize {
        (0..bits).fold(0, |acc, _| (acc << 1) | self.next_bit())
    }
}

fn check_index_params(v: usize, n: usize) {
    assert!(
        v > 2 && v < n && n.is_power_of_two() && n <= 1 << 31,
        "index parameters require 2 < v < n with n a power of two (v={v}, n={n})"
    );
}

pub(crate) fn h1_indexes_consumed(
    z: &Seed,
    x: &CommitmentTag,
    v: usize,
    n: usize,
    ops: &mut OpCounter,
) -> (IndexSet, usize) {
    check_index_params(v, n);
    ops.hash_calls += 1;
    let bits = n.trailing_zeros();
    let mut stream = IndexStream::new(z, x);
    let mut out: Vec<u32> = Vec::with_capacity(v);
    while out.len() < v {
        let candidate = stream.next_chunk(bits) as u32;
        if !out.contains(&candidate) {
            out.push(candidate);
        }
    }
    (IndexSet(out), stream.consumed)
}

/// `H_1(z || x)`: the first `v` distinct `log2 n`-bit chunks of the stream.
///
/// # Panics
/// Unless `2 < v < n` and `n` is a power of two.
pub fn h1_indexes(z: &Seed, x: &CommitmentTag, v: usize, n: usize, ops: &mut OpCounter) -> IndexSet {
    h1_indexes_consumed(z, x, v, n, ops).0
}

/// Raw chunks of the `H_1` stream, duplicates included.
pub fn h1_raw_chunks(z: &Seed, x: &CommitmentTag, bits: u32, count: usize) -> Vec<u32> {
    let mut stream = IndexStream::new(z, x);
    (0..count).map(|_| stream.next_chunk(bits) as u32).collect()
}

/// Wide hash-to-scalar under an arbitrary domain tag.
pub fn hash_to_scalar(tag: u8, parts: &[&[u8]], ops: &mut OpCounter) -> Scalar {
    ops.hash_calls += 1;
    Scalar::from_wide_bytes(&blake2b(tag, parts))
}

/// `H_2(m || x)`.
pub fn h2_challenge(m: &[u8], x: &CommitmentTag, ops: &mut OpCounter) -> Scalar {
    hash_to_scalar(TAG_H2, &[m, &x.0], ops)
}
