//! Plain Schnorr signatures over the same group, used as the baseline the
//! scheme is measured against and as the source of the key-extraction
//! relation for same-nonce signature pairs.

use rand::{CryptoRng, RngCore};

use crate::error::{Error, Result};
use crate::group::{
    mul_basepoint, mul_point_add_basepoint, scalar_invert, scalar_mul, scalar_sub, GroupElement,
    OpCounter, Scalar, SCALAR_LEN,
};
use crate::kdf::{hash_to_scalar, TAG_SCHNORR};

pub const SCHNORR_SIGNATURE_LEN: usize = 2 * SCALAR_LEN;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SchnorrKeypair {
    pub secret: Scalar,
    pub public: GroupElement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SchnorrSignature {
    pub s: Scalar,
    pub e: Scalar,
}

impl SchnorrSignature {
    /// `s || e`.
    pub fn to_bytes(&self) -> [u8; SCHNORR_SIGNATURE_LEN] {
        let mut out = [0u8; SCHNORR_SIGNATURE_LEN];
        out[..SCALAR_LEN].copy_from_slice(&self.s.to_bytes());
        out[SCALAR_LEN..].copy_from_slice(&self.e.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != SCHNORR_SIGNATURE_LEN {
            return Err(Error::Length {
                what: "schnorr signature",
                expected: SCHNORR_SIGNATURE_LEN,
                got: bytes.len(),
            });
        }
        Ok(SchnorrSignature {
            s: Scalar::from_bytes(&bytes[..SCALAR_LEN])?,
            e: Scalar::from_bytes(&bytes[SCALAR_LEN..])?,
        })
    }
}

pub fn keygen<R: RngCore + CryptoRng>(rng: &mut R, ops: &mut OpCounter) -> SchnorrKeypair {
    let secret = Scalar::random_nonzero(rng);
    SchnorrKeypair {
        secret,
        public: mul_basepoint(&secret, ops),
    }
}

fn challenge(m: &[u8], commitment: &GroupElement, ops: &mut OpCounter) -> Scalar {
    hash_to_scalar(TAG_SCHNORR, &[m, &commitment.to_bytes()], ops)
}

/// Signs with a caller-chosen nonce. Reusing `r` across two messages leaks
/// the key (see [`extract_key`]).
pub(crate) fn sign_with_nonce(m: &[u8], y: &Scalar, r: &Scalar, ops: &mut OpCounter) -> SchnorrSignature {
    let commitment = mul_basepoint(r, ops);
    let e = challenge(m, &commitment, ops);
    let s = scalar_sub(r, &scalar_mul(&e, y, ops), ops);
    SchnorrSignature { s, e }
}

pub fn sign<R: RngCore + CryptoRng>(
    m: &[u8],
    y: &Scalar,
    rng: &mut R,
    ops: &mut OpCounter,
) -> SchnorrSignature {
    let r = Scalar::random_nonzero(rng);
    sign_with_nonce(m, y, &r, ops)
}

/// Accepts iff `e = H(m || e·Y + s·α)`.
pub fn verify(m: &[u8], sig: &SchnorrSignature, public: &GroupElement, ops: &mut OpCounter) -> bool {
    let commitment = mul_point_add_basepoint(&sig.e, public, &sig.s, ops);
    challenge(m, &commitment, ops) == sig.e
}

/// Like [`verify`], from the 64-byte wire form. Malformed input rejects.
pub fn verify_bytes(m: &[u8], sig: &[u8], public: &GroupElement, ops: &mut OpCounter) -> bool {
    SchnorrSignature::from_bytes(sig).is_ok_and(|sig| verify(m, &sig, public, ops))
}

/// Recovers `y` from two responses `(s, h)` that share a nonce `r`.
///
/// Both satisfy `r ≡ y·h + s (mod q)`, so
/// `y = (s₂ − s₁)·(h₁ − h₂)⁻¹`. The caller checks the result against `Y`.
pub fn extract_key(first: (Scalar, Scalar), second: (Scalar, Scalar)) -> Result<Scalar> {
    let mut ops = OpCounter::new();
    let (s1, h1) = first;
    let (s2, h2) = second;
    let denom = scalar_sub(&h1, &h2, &mut ops);
    let inv = scalar_invert(&denom, &mut ops).ok_or(Error::Singular)?;
    Ok(scalar_mul(&scalar_sub(&s2, &s1, &mut ops), &inv, &mut ops))
}
