//! The signature scheme: key generation, signing and verification, plus the
//! table-cached signing mode and the key/signature encodings.
//!
//! Signing computes `(r, x)` with [`snod::sender`] and returns
//! `σ = (s, x)` with `s = r − H_2(m || x)·y`. The signer never computes
//! `R`; a verifier obtains `R` for `x` from the `l` parties and accepts iff
//! `R = H_2(m || x)·Y + s·α`.

use std::fmt;

use rand::{CryptoRng, RngCore};

use crate::error::{Error, Result};
use crate::group::{
    mul_basepoint, mul_point_add_basepoint, scalar_mul, scalar_sub, GroupElement, GroupId,
    OpCounter, Scalar, POINT_LEN, SCALAR_LEN,
};
use crate::kdf::{h2_challenge, CommitmentTag, KAPPA_BYTES};
use crate::snod::{self, check_integrity, integrity_tag, KeyId, NonceTable, PartyShare, SnodParams};

pub const SIGNATURE_LEN: usize = SCALAR_LEN + KAPPA_BYTES;

pub const KEY_MAGIC: &[u8; 4] = b"ESMK";
pub const PUBKEY_MAGIC: &[u8; 4] = b"ESMP";
pub const FORMAT_VERSION: u8 = 1;
const PARAMS_LEN: usize = 8;

/// Signing mode: recompute nonce scalars from seeds, or read them from a
/// cached table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Mode {
    Esem = 0,
    Esem2 = 1,
}

/// `σ = (s, x)`, serialized as `s (32 bytes) || x (16 bytes)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signature {
    pub s: Scalar,
    pub x: CommitmentTag,
}

impl Signature {
    pub fn to_bytes(&self) -> [u8; SIGNATURE_LEN] {
        let mut out = [0u8; SIGNATURE_LEN];
        out[..SCALAR_LEN].copy_from_slice(&self.s.to_bytes());
        out[SCALAR_LEN..].copy_from_slice(&self.x.0);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != SIGNATURE_LEN {
            return Err(Error::Length {
                what: "signature",
                expected: SIGNATURE_LEN,
                got: bytes.len(),
            });
        }
        Ok(Signature {
            s: Scalar::from_bytes(&bytes[..SCALAR_LEN])?,
            x: CommitmentTag(bytes[SCALAR_LEN..].try_into().unwrap()),
        })
    }
}

fn encode_params(group: GroupId, p: &SnodParams, out: &mut Vec<u8>) {
    out.push(group as u8);
    out.push(p.l);
    out.extend_from_slice(&p.v.to_be_bytes());
    out.extend_from_slice(&p.n.to_be_bytes());
}

fn decode_params(b: &[u8]) -> Result<(GroupId, SnodParams)> {
    let group = GroupId::from_u8(b[0])?;
    let l = b[1];
    let v = u16::from_be_bytes([b[2], b[3]]);
    let n = u32::from_be_bytes(b[4..8].try_into().unwrap());
    Ok((group, SnodParams::toy(v, n, l)?))
}

fn check_header(bytes: &[u8], magic: &[u8; 4], min: usize, what: &'static str) -> Result<()> {
    if bytes.len() < min {
        return Err(Error::Length {
            what,
            expected: min,
            got: bytes.len(),
        });
    }
    if &bytes[..4] != magic {
        return Err(Error::Format(format!("bad {what} magic")));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported {what} version {}", bytes[4])));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub point: GroupElement,
    pub params: SnodParams,
    pub group: GroupId,
}

impl PublicKey {
    pub const ENCODED_LEN: usize = 5 + PARAMS_LEN + POINT_LEN;

    pub fn key_id(&self) -> KeyId {
        KeyId::for_public_key(&self.point)
    }

    /// `magic | version | params | Y`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::ENCODED_LEN);
        out.extend_from_slice(PUBKEY_MAGIC);
        out.push(FORMAT_VERSION);
        encode_params(self.group, &self.params, &mut out);
        out.extend_from_slice(&self.point.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        check_header(bytes, PUBKEY_MAGIC, Self::ENCODED_LEN, "public key")?;
        if bytes.len() != Self::ENCODED_LEN {
            return Err(Error::Length {
                what: "public key",
                expected: Self::ENCODED_LEN,
                got: bytes.len(),
            });
        }
        let (group, params) = decode_params(&bytes[5..5 + PARAMS_LEN])?;
        Ok(PublicKey {
            point: GroupElement::from_bytes(&bytes[5 + PARAMS_LEN..])?,
            params,
            group,
        })
    }
}

/// The signer's state: `y`, the next unused counter, parameters and, in
/// table-cached mode, every nonce scalar `r_{i,j}`.
#[derive(Clone, PartialEq, Eq)]
pub struct SigningKey {
    y: Scalar,
    counter: u64,
    params: SnodParams,
    table: Option<NonceTable>,
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigningKey")
            .field("counter", &self.counter)
            .field("params", &self.params)
            .field("mode", &self.mode())
            .finish_non_exhaustive()
    }
}

impl SigningKey {
    const FIXED_LEN: usize = 6 + PARAMS_LEN + SCALAR_LEN + 8;
    const TAG_LEN: usize = 32;

    pub fn from_secret(y: Scalar, params: SnodParams) -> Self {
        SigningKey {
            y,
            counter: 0,
            params,
            table: None,
        }
    }

    pub fn secret(&self) -> &Scalar {
        &self.y
    }

    pub fn params(&self) -> &SnodParams {
        &self.params
    }

    /// Next counter value that will be used.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn set_counter(&mut self, counter: u64) {
        self.counter = counter;
    }

    pub fn mode(&self) -> Mode {
        if self.table.is_some() {
            Mode::Esem2
        } else {
            Mode::Esem
        }
    }

    pub fn nonce_table(&self) -> Option<&NonceTable> {
        self.table.as_ref()
    }

    pub fn public_key(&self, ops: &mut OpCounter) -> PublicKey {
        PublicKey {
            point: mul_basepoint(&self.y, ops),
            params: self.params,
            group: GroupId::Ristretto255,
        }
    }

    /// Switches to table-cached signing by precomputing all `l·n` nonce
    /// scalars.
    pub fn expand(mut self, ops: &mut OpCounter) -> Self {
        if self.table.is_none() {
            self.table = Some(NonceTable::expand(&self.y, &self.params, ops));
        }
        self
    }

    /// Drops the cached table, returning to seed-based signing.
    pub fn compact(mut self) -> Self {
        self.table = None;
        self
    }

    /// Signature for an explicit counter value. Pure: the same
    /// `(key, counter, m)` always yields the same signature, in either
    /// mode. Never reuse a counter.
    pub fn sign_at(&self, counter: u64, m: &[u8], ops: &mut OpCounter) -> Signature {
        let (r, x) = match &self.table {
            Some(table) => snod::sender_cached(&self.y, counter, &self.params, table, ops),
            None => snod::sender(&self.y, counter, &self.params, ops),
        };
        let e = h2_challenge(m, &x, ops);
        let s = scalar_sub(&r, &scalar_mul(&e, &self.y, ops), ops);
        Signature { s, x }
    }

    /// Signs with the in-memory counter and advances it. For keys backed by
    /// a file use [`crate::keystore::FileSigner`], which persists the
    /// counter first.
    pub fn sign(&mut self, m: &[u8], ops: &mut OpCounter) -> Result<Signature> {
        let c = self.counter;
        self.counter = c
            .checked_add(1)
            .ok_or_else(|| Error::CounterPersistence("counter exhausted".into()))?;
        Ok(self.sign_at(c, m, ops))
    }

    /// `magic | version | mode | params | y | counter (BE) | table? | tag`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::FIXED_LEN + Self::TAG_LEN);
        out.extend_from_slice(KEY_MAGIC);
        out.push(FORMAT_VERSION);
        out.push(self.mode() as u8);
        encode_params(GroupId::Ristretto255, &self.params, &mut out);
        out.extend_from_slice(&self.y.to_bytes());
        out.extend_from_slice(&self.counter.to_be_bytes());
        if let Some(table) = &self.table {
            for row in table.rows() {
                for r in row {
                    out.extend_from_slice(&r.to_bytes());
                }
            }
        }
        let tag = integrity_tag(&out);
        out.extend_from_slice(&tag);
        out
    }

    pub fn encoded_len(params: &SnodParams, mode: Mode) -> usize {
        let table = match mode {
            Mode::Esem => 0,
            Mode::Esem2 => params.l() * params.n() * SCALAR_LEN,
        };
        Self::FIXED_LEN + table + Self::TAG_LEN
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        check_header(bytes, KEY_MAGIC, Self::FIXED_LEN + Self::TAG_LEN, "key file")?;
        let mode = match bytes[5] {
            0 => Mode::Esem,
            1 => Mode::Esem2,
            other => return Err(Error::Format(format!("unknown signing mode {other}"))),
        };
        let (_, params) = decode_params(&bytes[6..6 + PARAMS_LEN])?;
        let expected = Self::encoded_len(&params, mode);
        if bytes.len() != expected {
            return Err(Error::Length {
                what: "key file",
                expected,
                got: bytes.len(),
            });
        }
        let body = check_integrity(bytes, "key file")?;
        let mut pos = 6 + PARAMS_LEN;
        let y = Scalar::from_bytes(&body[pos..pos + SCALAR_LEN])?;
        if y.is_zero() {
            return Err(Error::Format("zero signing key".into()));
        }
        pos += SCALAR_LEN;
        let counter = u64::from_be_bytes(body[pos..pos + 8].try_into().unwrap());
        pos += 8;
        let table = match mode {
            Mode::Esem => None,
            Mode::Esem2 => {
                let rows = body[pos..]
                    .chunks_exact(params.n() * SCALAR_LEN)
                    .map(|row| row.chunks_exact(SCALAR_LEN).map(Scalar::from_bytes).collect())
                    .collect::<Result<Vec<Vec<Scalar>>>>()?;
                Some(NonceTable::from_rows(rows))
            }
        };
        Ok(SigningKey {
            y,
            counter,
            params,
            table,
        })
    }
}

/// Fresh key material: signing key (counter 0), public key, and the `l`
/// party shares.
pub fn keygen<R: RngCore + CryptoRng>(
    params: &SnodParams,
    rng: &mut R,
    ops: &mut OpCounter,
) -> (SigningKey, PublicKey, Vec<PartyShare>) {
    let y = Scalar::random_nonzero(rng);
    let sk = SigningKey::from_secret(y, *params);
    let pk = sk.public_key(ops);
    let shares = snod::offline(&y, params, ops);
    (sk, pk, shares)
}

/// Anything that can return the aggregate commitment `R` for a tag `x`.
pub trait CommitmentSource {
    /// `Err(Error::Unavailable)` when not all parties answered.
    fn fetch(&self, key_id: &KeyId, x: &CommitmentTag) -> Result<GroupElement>;
}

/// In-process parties. Party indexes without a share count as down.
#[derive(Clone, Debug)]
pub struct LocalParties {
    shares: Vec<PartyShare>,
    l: usize,
}

impl LocalParties {
    pub fn new(shares: Vec<PartyShare>, l: usize) -> Self {
        LocalParties { shares, l }
    }

    /// All shares of one key.
    pub fn complete(shares: Vec<PartyShare>) -> Self {
        let l = shares.first().map_or(0, |s| s.params.l());
        LocalParties { shares, l }
    }

    pub fn shares(&self) -> &[PartyShare] {
        &self.shares
    }

    /// Per-party responses in party order; `None` for a missing party.
    pub fn responses(&self, key_id: &KeyId, x: &CommitmentTag) -> Vec<Option<GroupElement>> {
        let mut ops = OpCounter::new();
        (1..=self.l)
            .map(|j| {
                self.shares
                    .iter()
                    .find(|s| s.j as usize == j && s.key_id == *key_id)
                    .map(|s| snod::party_construct(s, x, &mut ops))
            })
            .collect()
    }
}

impl CommitmentSource for LocalParties {
    fn fetch(&self, key_id: &KeyId, x: &CommitmentTag) -> Result<GroupElement> {
        snod::receiver_aggregate(&self.responses(key_id, x), self.l, &mut OpCounter::new())
    }
}

impl<T: CommitmentSource + ?Sized> CommitmentSource for &T {
    fn fetch(&self, key_id: &KeyId, x: &CommitmentTag) -> Result<GroupElement> {
        (**self).fetch(key_id, x)
    }
}

/// Three-way verification result. `Unavailable` is a liveness failure, not
/// a verdict on the signature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
    Unavailable(String),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

pub fn verify<S: CommitmentSource + ?Sized>(
    m: &[u8],
    sig: &Signature,
    pk: &PublicKey,
    source: &S,
    ops: &mut OpCounter,
) -> Verdict {
    let big_r = match source.fetch(&pk.key_id(), &sig.x) {
        Ok(r) => r,
        Err(Error::Unavailable(why)) => return Verdict::Unavailable(why),
        Err(other) => return Verdict::Unavailable(other.to_string()),
    };
    let e = h2_challenge(m, &sig.x, ops);
    if mul_point_add_basepoint(&e, &pk.point, &sig.s, ops) == big_r {
        Verdict::Accept
    } else {
        Verdict::Reject
    }
}

/// [`verify`] on the 48-byte wire form; malformed signatures reject.
pub fn verify_bytes<S: CommitmentSource + ?Sized>(
    m: &[u8],
    sig: &[u8],
    pk: &PublicKey,
    source: &S,
    ops: &mut OpCounter,
) -> Verdict {
    match Signature::from_bytes(sig) {
        Ok(sig) => verify(m, &sig, pk, source, ops),
        Err(_) => Verdict::Reject,
    }
}
