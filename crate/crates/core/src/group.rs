//! Prime-order group arithmetic.
//!
//! The scheme is written against an abstract group of prime order `q` with
//! generator `α`. This module fixes that group to Ristretto255 and wraps
//! its scalars and elements in newtypes so that every arithmetic step that
//! matters for the cost model goes through a counted function.
//!
//! Notation is additive: the multiplicative `α^r` becomes `r·α`, and a
//! product of commitments becomes a sum of group elements.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use curve25519_dalek::constants::{RISTRETTO_BASEPOINT_POINT, RISTRETTO_BASEPOINT_TABLE};
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar as DalekScalar;
use curve25519_dalek::traits::Identity;
use rand::{CryptoRng, RngCore};

use crate::error::{Error, Result};

/// Encoded length of a [`Scalar`].
pub const SCALAR_LEN: usize = 32;
/// Encoded length of a [`GroupElement`].
pub const POINT_LEN: usize = 32;

/// Group order `q = 2^252 + 27742317777372353535851937790883648493`, little-endian.
pub const GROUP_ORDER_LE: [u8; 32] = [
    0xed, 0xd3, 0xf5, 0x5c, 0x1a, 0x63, 0x12, 0x58, 0xd6, 0x9c, 0xf7, 0xa2, 0xde, 0xf9, 0xde, 0x14,
    0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x10,
];

/// Element of `Z_q`, always fully reduced.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Scalar(pub(crate) DalekScalar);

impl Scalar {
    pub const ZERO: Scalar = Scalar(DalekScalar::ZERO);
    pub const ONE: Scalar = Scalar(DalekScalar::ONE);

    /// Decodes a canonical little-endian encoding. Values `>= q` are rejected.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; SCALAR_LEN] = bytes.try_into().map_err(|_| Error::Length {
            what: "scalar",
            expected: SCALAR_LEN,
            got: bytes.len(),
        })?;
        Option::from(DalekScalar::from_canonical_bytes(arr))
            .map(Scalar)
            .ok_or(Error::NonCanonicalScalar)
    }

    pub fn to_bytes(&self) -> [u8; SCALAR_LEN] {
        self.0.to_bytes()
    }

    /// Reduces a 512-bit little-endian integer modulo `q`.
    pub fn from_wide_bytes(bytes: &[u8; 64]) -> Self {
        Scalar(DalekScalar::from_bytes_mod_order_wide(bytes))
    }

    pub fn from_u64(v: u64) -> Self {
        Scalar(DalekScalar::from(v))
    }

    /// Uniform element of `Z_q*`.
    pub fn random_nonzero<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        loop {
            let s = DalekScalar::random(rng);
            if s != DalekScalar::ZERO {
                return Scalar(s);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0 == DalekScalar::ZERO
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", hex::encode(self.to_bytes()))
    }
}

/// Element of the prime-order group generated by `α`.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GroupElement(pub(crate) RistrettoPoint);

impl GroupElement {
    pub fn identity() -> Self {
        GroupElement(RistrettoPoint::identity())
    }

    /// The generator `α`.
    pub fn generator() -> Self {
        GroupElement(RISTRETTO_BASEPOINT_POINT)
    }

    /// Decodes a canonical compressed encoding; anything that is not a
    /// valid element of the prime-order group is rejected.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let compressed = CompressedRistretto::from_slice(bytes).map_err(|_| Error::Length {
            what: "group element",
            expected: POINT_LEN,
            got: bytes.len(),
        })?;
        compressed
            .decompress()
            .map(GroupElement)
            .ok_or(Error::InvalidPoint)
    }

    pub fn to_bytes(&self) -> [u8; POINT_LEN] {
        self.0.compress().to_bytes()
    }

    pub fn is_identity(&self) -> bool {
        self.0 == RistrettoPoint::identity()
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        GroupElement(RistrettoPoint::random(rng))
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({})", hex::encode(self.to_bytes()))
    }
}

/// Identifier of the configured group, as recorded in key files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum GroupId {
    Ristretto255 = 1,
}

impl GroupId {
    pub fn from_u8(b: u8) -> Result<Self> {
        match b {
            1 => Ok(GroupId::Ristretto255),
            other => Err(Error::Format(format!("unknown group id {other}"))),
        }
    }
}

/// System-wide parameters `(q, α)` of the configured group.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupParams {
    pub id: GroupId,
    pub order_le: [u8; 32],
    pub generator: GroupElement,
    pub scalar_len: usize,
    pub point_len: usize,
}

impl GroupParams {
    pub fn ristretto255() -> Self {
        GroupParams {
            id: GroupId::Ristretto255,
            order_le: GROUP_ORDER_LE,
            generator: GroupElement::generator(),
            scalar_len: SCALAR_LEN,
            point_len: POINT_LEN,
        }
    }
}

/// Operation counts accumulated over one measurement scope.
///
/// Scheme functions take `&mut OpCounter` explicitly; there is no global
/// counter. A delta is taken by subtracting two snapshots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub fixed_base_mults: u64,
    pub var_base_mults: u64,
    pub point_adds: u64,
    pub scalar_mults: u64,
    pub scalar_adds: u64,
    pub prf_calls: u64,
    pub hash_calls: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fixed-base, variable-base and point additions together.
    pub fn group_ops(&self) -> u64 {
        self.fixed_base_mults + self.var_base_mults + self.point_adds
    }
}

impl Add for OpCounter {
    type Output = OpCounter;

    fn add(self, o: OpCounter) -> OpCounter {
        OpCounter {
            fixed_base_mults: self.fixed_base_mults + o.fixed_base_mults,
            var_base_mults: self.var_base_mults + o.var_base_mults,
            point_adds: self.point_adds + o.point_adds,
            scalar_mults: self.scalar_mults + o.scalar_mults,
            scalar_adds: self.scalar_adds + o.scalar_adds,
            prf_calls: self.prf_calls + o.prf_calls,
            hash_calls: self.hash_calls + o.hash_calls,
        }
    }
}

impl AddAssign for OpCounter {
    fn add_assign(&mut self, o: OpCounter) {
        *self = *self + o;
    }
}

impl Sub for OpCounter {
    type Output = OpCounter;

    /// Delta between a later and an earlier snapshot.
    fn sub(self, o: OpCounter) -> OpCounter {
        OpCounter {
            fixed_base_mults: self.fixed_base_mults - o.fixed_base_mults,
            var_base_mults: self.var_base_mults - o.var_base_mults,
            point_adds: self.point_adds - o.point_adds,
            scalar_mults: self.scalar_mults - o.scalar_mults,
            scalar_adds: self.scalar_adds - o.scalar_adds,
            prf_calls: self.prf_calls - o.prf_calls,
            hash_calls: self.hash_calls - o.hash_calls,
        }
    }
}

pub fn scalar_add(a: &Scalar, b: &Scalar, ops: &mut OpCounter) -> Scalar {
    ops.scalar_adds += 1;
    Scalar(a.0 + b.0)
}

/// `a − b mod q`; counted as a modular addition.
pub fn scalar_sub(a: &Scalar, b: &Scalar, ops: &mut OpCounter) -> Scalar {
    ops.scalar_adds += 1;
    Scalar(a.0 - b.0)
}

pub fn scalar_mul(a: &Scalar, b: &Scalar, ops: &mut OpCounter) -> Scalar {
    ops.scalar_mults += 1;
    Scalar(a.0 * b.0)
}

/// Multiplicative inverse; `None` for zero. Counted as one multiplication.
pub fn scalar_invert(a: &Scalar, ops: &mut OpCounter) -> Option<Scalar> {
    if a.is_zero() {
        return None;
    }
    ops.scalar_mults += 1;
    Some(Scalar(a.0.invert()))
}

/// `k·α` using the precomputed basepoint table.
pub fn mul_basepoint(k: &Scalar, ops: &mut OpCounter) -> GroupElement {
    ops.fixed_base_mults += 1;
    GroupElement(&k.0 * RISTRETTO_BASEPOINT_TABLE)
}

pub fn mul_point(k: &Scalar, p: &GroupElement, ops: &mut OpCounter) -> GroupElement {
    ops.var_base_mults += 1;
    GroupElement(k.0 * p.0)
}

pub fn add_points(p: &GroupElement, q: &GroupElement, ops: &mut OpCounter) -> GroupElement {
    ops.point_adds += 1;
    GroupElement(p.0 + q.0)
}

pub fn neg_point(p: &GroupElement) -> GroupElement {
    GroupElement(-p.0)
}

/// `a·P + b·α`, the verification equation's right-hand side.
///
/// Counted as one variable-base multiplication, one fixed-base
/// multiplication and one addition even though it runs as a single
/// interleaved (variable-time) computation. Inputs are public.
pub fn mul_point_add_basepoint(
    a: &Scalar,
    p: &GroupElement,
    b: &Scalar,
    ops: &mut OpCounter,
) -> GroupElement {
    ops.var_base_mults += 1;
    ops.fixed_base_mults += 1;
    ops.point_adds += 1;
    GroupElement(RistrettoPoint::vartime_double_scalar_mul_basepoint(
        &a.0, &p.0, &b.0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn q_big() -> BigUint {
        BigUint::from_bytes_le(&GROUP_ORDER_LE)
    }

    fn big(s: &Scalar) -> BigUint {
        BigUint::from_bytes_le(&s.to_bytes())
    }

    fn from_big(b: &BigUint) -> Scalar {
        let mut bytes = b.to_bytes_le();
        bytes.resize(32, 0);
        Scalar::from_bytes(&bytes).unwrap()
    }

    /// Naive double-and-add over the group law only.
    fn double_and_add(k: &Scalar, p: &GroupElement) -> GroupElement {
        let mut acc = RistrettoPoint::identity();
        for byte in k.to_bytes().iter().rev() {
            for bit in (0..8).rev() {
                acc = acc + acc;
                if (byte >> bit) & 1 == 1 {
                    acc += p.0;
                }
            }
        }
        GroupElement(acc)
    }

    fn random_scalar(rng: &mut StdRng) -> Scalar {
        Scalar(DalekScalar::random(rng))
    }

    #[test]
    fn order_constant_matches_group() {
        let q = q_big();
        assert_eq!(q, (BigUint::from(1u8) << 252) + BigUint::parse_bytes(b"27742317777372353535851937790883648493", 10).unwrap());
        // q·α = identity: (q−1)·α + α
        let q_minus_1 = from_big(&(q - 1u8));
        let mut ops = OpCounter::new();
        let p = mul_basepoint(&q_minus_1, &mut ops);
        assert!(add_points(&p, &GroupElement::generator(), &mut ops).is_identity());
        assert_eq!(GroupParams::ristretto255().order_le, GROUP_ORDER_LE);
    }

    #[test]
    fn scalar_add_examples() {
        let mut rng = StdRng::seed_from_u64(1);
        let mut ops = OpCounter::new();
        let s = random_scalar(&mut rng);
        assert_eq!(scalar_add(&Scalar::ZERO, &s, &mut ops), s);
        let neg = from_big(&(q_big() - big(&s)));
        assert_eq!(scalar_add(&s, &neg, &mut ops), Scalar::ZERO);
        assert_eq!(ops.scalar_adds, 2);
    }

    #[test]
    fn scalar_arith_matches_bigint_oracle() {
        let mut rng = StdRng::seed_from_u64(2);
        let q = q_big();
        let mut ops = OpCounter::new();
        for _ in 0..1000 {
            let a = random_scalar(&mut rng);
            let b = random_scalar(&mut rng);
            assert_eq!(big(&scalar_add(&a, &b, &mut ops)), (big(&a) + big(&b)) % &q);
            assert_eq!(big(&scalar_mul(&a, &b, &mut ops)), (big(&a) * big(&b)) % &q);
            assert_eq!(big(&scalar_sub(&a, &b, &mut ops)), (big(&a) + &q - big(&b)) % &q);
        }
        assert_eq!(ops.scalar_adds, 2000);
        assert_eq!(ops.scalar_mults, 1000);
    }

    #[test]
    fn scalar_mul_examples() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut ops = OpCounter::new();
        let s = random_scalar(&mut rng);
        assert_eq!(scalar_mul(&Scalar::ONE, &s, &mut ops), s);
        assert_eq!(scalar_mul(&Scalar::ZERO, &s, &mut ops), Scalar::ZERO);
        let inv = scalar_invert(&s, &mut ops).unwrap();
        assert_eq!(scalar_mul(&s, &inv, &mut ops), Scalar::ONE);
        assert!(scalar_invert(&Scalar::ZERO, &mut ops).is_none());
    }

    #[test]
    fn basepoint_mult_examples() {
        let mut ops = OpCounter::new();
        assert!(mul_basepoint(&Scalar::ZERO, &mut ops).is_identity());
        assert_eq!(mul_basepoint(&Scalar::ONE, &mut ops), GroupElement::generator());
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..50 {
            let k = random_scalar(&mut rng);
            assert_eq!(mul_basepoint(&k, &mut ops), double_and_add(&k, &GroupElement::generator()));
        }
        assert_eq!(ops.fixed_base_mults, 52);
        assert_eq!(ops.var_base_mults, 0);
    }

    #[test]
    fn point_mult_examples() {
        let mut rng = StdRng::seed_from_u64(5);
        let mut ops = OpCounter::new();
        let p = GroupElement::random(&mut rng);
        assert_eq!(mul_point(&Scalar::ONE, &p, &mut ops), p);
        let q_minus_1 = from_big(&(q_big() - 1u8));
        assert_eq!(mul_point(&q_minus_1, &p, &mut ops), neg_point(&p));
        let k = random_scalar(&mut rng);
        assert_eq!(
            mul_point(&k, &GroupElement::generator(), &mut ops),
            mul_basepoint(&k, &mut ops)
        );
        assert_eq!(mul_point(&k, &p, &mut ops), double_and_add(&k, &p));
    }

    #[test]
    fn add_points_examples() {
        let mut rng = StdRng::seed_from_u64(6);
        let mut ops = OpCounter::new();
        let p = GroupElement::random(&mut rng);
        assert_eq!(add_points(&p, &GroupElement::identity(), &mut ops), p);
        assert!(add_points(&p, &neg_point(&p), &mut ops).is_identity());
        let k1 = random_scalar(&mut rng);
        let k2 = random_scalar(&mut rng);
        let lhs = add_points(&mul_basepoint(&k1, &mut ops), &mul_basepoint(&k2, &mut ops), &mut ops);
        assert_eq!(lhs, mul_basepoint(&scalar_add(&k1, &k2, &mut ops), &mut ops));
    }

    #[test]
    fn double_mult_matches_components() {
        let mut rng = StdRng::seed_from_u64(7);
        let mut ops = OpCounter::new();
        let p = GroupElement::random(&mut rng);
        let a = random_scalar(&mut rng);
        let b = random_scalar(&mut rng);
        let before = ops;
        let combined = mul_point_add_basepoint(&a, &p, &b, &mut ops);
        let delta = ops - before;
        assert_eq!((delta.var_base_mults, delta.fixed_base_mults, delta.point_adds), (1, 1, 1));
        let separate = add_points(&mul_point(&a, &p, &mut ops), &mul_basepoint(&b, &mut ops), &mut ops);
        assert_eq!(combined, separate);
    }

    #[test]
    fn group_laws_on_random_triples() {
        let mut rng = StdRng::seed_from_u64(8);
        let mut ops = OpCounter::new();
        let id = GroupElement::identity();
        for _ in 0..1000 {
            let p = GroupElement::random(&mut rng);
            let q = GroupElement::random(&mut rng);
            let r = GroupElement::random(&mut rng);
            let pq = add_points(&p, &q, &mut ops);
            let qr = add_points(&q, &r, &mut ops);
            assert_eq!(add_points(&pq, &r, &mut ops), add_points(&p, &qr, &mut ops));
            assert_eq!(pq, add_points(&q, &p, &mut ops));
            assert_eq!(add_points(&p, &id, &mut ops), p);
            assert!(add_points(&p, &neg_point(&p), &mut ops).is_identity());
        }
    }

    #[test]
    fn scalar_point_compatibility() {
        let mut rng = StdRng::seed_from_u64(9);
        let mut ops = OpCounter::new();
        for _ in 0..100 {
            let a = random_scalar(&mut rng);
            let b = random_scalar(&mut rng);
            let lhs = mul_basepoint(&scalar_mul(&a, &b, &mut ops), &mut ops);
            let rhs = mul_point(&a, &mul_basepoint(&b, &mut ops), &mut ops);
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn encodings() {
        assert_eq!(Scalar::ZERO.to_bytes(), [0u8; 32]);
        assert!(matches!(Scalar::from_bytes(&[0xff; 32]), Err(Error::NonCanonicalScalar)));
        assert!(matches!(Scalar::from_bytes(&GROUP_ORDER_LE), Err(Error::NonCanonicalScalar)));
        assert!(matches!(Scalar::from_bytes(&[0; 31]), Err(Error::Length { .. })));
        assert!(matches!(GroupElement::from_bytes(&[0xff; 32]), Err(Error::InvalidPoint)));
        assert!(matches!(GroupElement::from_bytes(&[0; 33]), Err(Error::Length { .. })));
        assert!(GroupElement::from_bytes(&[0; 32]).unwrap().is_identity());
    }

    #[test]
    fn op_counter_arithmetic() {
        let a = OpCounter { point_adds: 3, prf_calls: 2, ..Default::default() };
        let b = OpCounter { point_adds: 1, hash_calls: 4, ..Default::default() };
        let sum = a + b;
        assert_eq!(sum.point_adds, 4);
        assert_eq!(sum - b, a);
        assert_eq!(sum.group_ops(), 4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scalar_round_trip(bytes in proptest::array::uniform32(any::<u8>())) {
                let mut wide = [0u8; 64];
                wide[..32].copy_from_slice(&bytes);
                let s = Scalar::from_wide_bytes(&wide);
                prop_assert_eq!(Scalar::from_bytes(&s.to_bytes()).unwrap(), s);
            }

            #[test]
            fn point_round_trip(seed in any::<u64>()) {
                let mut rng = StdRng::seed_from_u64(seed);
                let p = GroupElement::random(&mut rng);
                let enc = p.to_bytes();
                prop_assert_eq!(enc.len(), POINT_LEN);
                prop_assert_eq!(GroupElement::from_bytes(&enc).unwrap(), p);
            }
        }
    }
}
