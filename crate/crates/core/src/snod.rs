//! Signer non-interactive distributed BPV.
//!
//! The signing key `y` seeds `l` party seeds `z_j = PRF_0(y || j)`, and each
//! seed in turn seeds a BPV table `r_{i,j} = PRF_0(z_j || i)`. Party `j`
//! holds `z_j` and the public half `R_{i,j} = r_{i,j}·α` of its table.
//!
//! For a one-time tag `x`, both the signer and party `j` derive the same
//! index set `H_1(z_j || x)`. The signer sums the matching `r_{i,j}` over
//! all parties without touching the group; each party sums its matching
//! `R_{i,j}`, and the verifier adds the `l` partial commitments to obtain
//! `R = r·α`.

use std::fmt;
use std::io::Write;

use blake2::digest::consts::U32;
use blake2::{Blake2b, Digest};

use crate::error::{Error, Result};
use crate::group::{add_points, mul_basepoint, GroupElement, OpCounter, Scalar, POINT_LEN};
use crate::kdf::{
    commitment_tag, h0, h1_indexes, party_seed, CommitmentTag, Prf, Seed, WideAccumulator,
    KAPPA_BYTES,
};

pub const KAPPA_BITS: f64 = 128.0;

/// BPV shape `(v, n)` and party count `l`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SnodParams {
    pub v: u16,
    pub n: u32,
    pub l: u8,
}

impl SnodParams {
    /// `v = 18, n = 1024, l = 3`.
    pub const ESEM: SnodParams = SnodParams { v: 18, n: 1024, l: 3 };
    /// `v = 40, n = 128, l = 3`: the preset for the table-cached variant.
    pub const ESEM2: SnodParams = SnodParams { v: 40, n: 128, l: 3 };

    /// Full parameter check, including the combinatorial bound
    /// `C(n, v)^l >= 2^128` on the space of joint index sets.
    pub fn new(v: u16, n: u32, l: u8) -> Result<Self> {
        let p = Self::toy(v, n, l)?;
        let bits = p.index_space_bits();
        if bits < KAPPA_BITS {
            return Err(Error::Params(format!(
                "C({n},{v})^{l} is only 2^{bits:.1}; need 2^128"
            )));
        }
        Ok(p)
    }

    /// Structural checks only; the combinatorial bound is waived so that
    /// small enumerable instances can be built.
    pub fn toy(v: u16, n: u32, l: u8) -> Result<Self> {
        if !(v > 2 && (v as u32) < n) {
            return Err(Error::Params(format!("need 2 < v < n (v={v}, n={n})")));
        }
        if !n.is_power_of_two() || n > 1 << 24 {
            return Err(Error::Params(format!("n must be a power of two <= 2^24 (n={n})")));
        }
        if l == 0 {
            return Err(Error::Params("need at least one party".into()));
        }
        Ok(SnodParams { v, n, l })
    }

    /// `l · log2 C(n, v)`.
    pub fn index_space_bits(&self) -> f64 {
        let n = self.n as f64;
        let per_party: f64 = (0..self.v as u32)
            .map(|k| ((n - k as f64) / (k as f64 + 1.0)).log2())
            .sum();
        per_party * self.l as f64
    }

    pub fn v(&self) -> usize {
        self.v as usize
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn l(&self) -> usize {
        self.l as usize
    }
}

/// 16-byte public-key identifier used to address shares on party servers.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyId(pub [u8; KAPPA_BYTES]);

impl KeyId {
    /// First 16 bytes of `H_0(encode(Y))`.
    pub fn for_public_key(public: &GroupElement) -> Self {
        KeyId(h0(&public.to_bytes(), &mut OpCounter::new()).0)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId({})", self.to_hex())
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// What party `P_j` stores: its seed and the public half of its table.
#[derive(Clone, PartialEq, Eq)]
pub struct PartyShare {
    /// 1-based party index.
    pub j: u8,
    pub params: SnodParams,
    pub key_id: KeyId,
    pub seed: Seed,
    pub points: Vec<GroupElement>,
}

impl fmt::Debug for PartyShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartyShare")
            .field("j", &self.j)
            .field("params", &self.params)
            .field("key_id", &self.key_id)
            .field("points", &self.points.len())
            .finish()
    }
}

pub const SHARE_MAGIC: &[u8; 4] = b"ESMS";
pub const SHARE_VERSION: u8 = 1;
const SHARE_HEADER_LEN: usize = 4 + 1 + 1 + 1 + 2 + 4 + KAPPA_BYTES + KAPPA_BYTES;
const TAG_LEN: usize = 32;

pub(crate) fn integrity_tag(bytes: &[u8]) -> [u8; TAG_LEN] {
    Blake2b::<U32>::digest(bytes).into()
}

pub(crate) fn check_integrity<'a>(bytes: &'a [u8], what: &'static str) -> Result<&'a [u8]> {
    if bytes.len() < TAG_LEN {
        return Err(Error::Length {
            what,
            expected: TAG_LEN,
            got: bytes.len(),
        });
    }
    let (body, tag) = bytes.split_at(bytes.len() - TAG_LEN);
    if integrity_tag(body) != tag {
        return Err(Error::Integrity);
    }
    Ok(body)
}

impl PartyShare {
    /// Serialized size for a table of `n` points.
    pub fn encoded_len(n: usize) -> usize {
        SHARE_HEADER_LEN + n * POINT_LEN + TAG_LEN
    }

    /// Bytes of point storage, `32·n`.
    pub fn point_storage_bytes(&self) -> usize {
        self.points.len() * POINT_LEN
    }

    /// `magic | version | j | l | v (BE) | n (BE) | key_id | z_j | points | tag`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::encoded_len(self.points.len()));
        out.extend_from_slice(SHARE_MAGIC);
        out.push(SHARE_VERSION);
        out.push(self.j);
        out.push(self.params.l);
        out.extend_from_slice(&self.params.v.to_be_bytes());
        out.extend_from_slice(&self.params.n.to_be_bytes());
        out.extend_from_slice(&self.key_id.0);
        out.extend_from_slice(&self.seed.0);
        for p in &self.points {
            out.extend_from_slice(&p.to_bytes());
        }
        let tag = integrity_tag(&out);
        out.extend_from_slice(&tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < SHARE_HEADER_LEN + TAG_LEN {
            return Err(Error::Length {
                what: "share file",
                expected: SHARE_HEADER_LEN + TAG_LEN,
                got: bytes.len(),
            });
        }
        if &bytes[..4] != SHARE_MAGIC {
            return Err(Error::Format("bad share magic".into()));
        }
        if bytes[4] != SHARE_VERSION {
            return Err(Error::Format(format!("unsupported share version {}", bytes[4])));
        }
        let j = bytes[5];
        let l = bytes[6];
        let v = u16::from_be_bytes([bytes[7], bytes[8]]);
        let n = u32::from_be_bytes(bytes[9..13].try_into().unwrap());
        let params = SnodParams::toy(v, n, l)?;
        if j == 0 || j > l {
            return Err(Error::Format(format!("party index {j} outside 1..={l}")));
        }
        let expected = Self::encoded_len(n as usize);
        if bytes.len() != expected {
            return Err(Error::Length {
                what: "share file",
                expected,
                got: bytes.len(),
            });
        }
        let body = check_integrity(bytes, "share file")?;
        let key_id = KeyId(body[13..29].try_into().unwrap());
        let seed = Seed(body[29..45].try_into().unwrap());
        let points = body[SHARE_HEADER_LEN..]
            .chunks_exact(POINT_LEN)
            .map(GroupElement::from_bytes)
            .collect::<Result<Vec<_>>>()?;
        Ok(PartyShare {
            j,
            params,
            key_id,
            seed,
            points,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    /// Re-derives every point from the seed. Costs `n` fixed-base
    /// multiplications.
    pub fn matches_seed(&self, ops: &mut OpCounter) -> bool {
        let prf = Prf::from_seed(&self.seed);
        self.points
            .iter()
            .enumerate()
            .all(|(i, p)| mul_basepoint(&prf.scalar(i as u32, ops), ops) == *p)
    }
}

/// Derives all `l` party shares from `y`. Deterministic.
pub fn offline(y: &Scalar, params: &SnodParams, ops: &mut OpCounter) -> Vec<PartyShare> {
    let key_id = KeyId::for_public_key(&mul_basepoint(y, ops));
    let y_prf = Prf::from_scalar(y);
    (1..=params.l)
        .map(|j| {
            let seed = Seed(y_prf.block(j as u32, ops));
            let prf = Prf::from_seed(&seed);
            let points = (0..params.n)
                .map(|i| mul_basepoint(&prf.scalar(i, ops), ops))
                .collect();
            PartyShare {
                j,
                params: *params,
                key_id,
                seed,
                points,
            }
        })
        .collect()
}

/// Signer side: `x = H_0(y || c)` and `r = Σ_j Σ_k PRF_0(z_j || i_{k,j}) mod q`.
///
/// Touches no share and performs no group operation. Counter uniqueness is
/// the caller's responsibility.
pub fn sender(y: &Scalar, counter: u64, params: &SnodParams, ops: &mut OpCounter) -> (Scalar, CommitmentTag) {
    let x = commitment_tag(y, counter, ops);
    let y_prf = Prf::from_scalar(y);
    let mut acc = WideAccumulator::new();
    for j in 1..=params.l as u32 {
        let seed = Seed(y_prf.block(j, ops));
        let prf = Prf::from_seed(&seed);
        for i in h1_indexes(&seed, &x, params.v(), params.n(), ops).as_slice() {
            acc.add(&prf.wide(*i, ops), ops);
        }
    }
    (acc.reduce(), x)
}

/// The signer's optional cache of every `r_{i,j}` (`l × n` scalars).
#[derive(Clone, PartialEq, Eq)]
pub struct NonceTable {
    rows: Vec<Vec<Scalar>>,
}

impl fmt::Debug for NonceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NonceTable({}x{})", self.rows.len(), self.rows.first().map_or(0, Vec::len))
    }
}

impl NonceTable {
    pub fn expand(y: &Scalar, params: &SnodParams, ops: &mut OpCounter) -> Self {
        let rows = (1..=params.l as u32)
            .map(|j| {
                let prf = Prf::from_seed(&party_seed(y, j, ops));
                (0..params.n).map(|i| prf.scalar(i, ops)).collect()
            })
            .collect();
        NonceTable { rows }
    }

    pub fn from_rows(rows: Vec<Vec<Scalar>>) -> Self {
        NonceTable { rows }
    }

    /// `r_{i,j}` with `j` 1-based and `i` 0-based.
    pub fn get(&self, j: usize, i: usize) -> &Scalar {
        &self.rows[j - 1][i]
    }

    pub fn rows(&self) -> &[Vec<Scalar>] {
        &self.rows
    }

    pub fn byte_len(&self) -> usize {
        self.rows.iter().map(|r| r.len() * crate::group::SCALAR_LEN).sum()
    }
}

/// [`sender`] with nonce scalars read from a cached table instead of the PRF.
pub fn sender_cached(
    y: &Scalar,
    counter: u64,
    params: &SnodParams,
    table: &NonceTable,
    ops: &mut OpCounter,
) -> (Scalar, CommitmentTag) {
    let x = commitment_tag(y, counter, ops);
    let y_prf = Prf::from_scalar(y);
    let mut acc = WideAccumulator::new();
    for j in 1..=params.l() {
        let seed = Seed(y_prf.block(j as u32, ops));
        for i in h1_indexes(&seed, &x, params.v(), params.n(), ops).iter() {
            acc.add_scalar(table.get(j, i), ops);
        }
    }
    (acc.reduce(), x)
}

/// Party side: `R̄_j = Σ_k R_{i_{k,j}, j}`.
pub fn party_construct(share: &PartyShare, x: &CommitmentTag, ops: &mut OpCounter) -> GroupElement {
    let indexes = h1_indexes(&share.seed, x, share.params.v(), share.params.n(), ops);
    let mut it = indexes.iter();
    let first = share.points[it.next().expect("v > 2")];
    it.fold(first, |acc, i| add_points(&acc, &share.points[i], ops))
}

/// Verifier side: `R = Σ_j R̄_j`. Every one of the `l` responses must be
/// present; anything less is reported as unavailable.
pub fn receiver_aggregate(
    responses: &[Option<GroupElement>],
    l: usize,
    ops: &mut OpCounter,
) -> Result<GroupElement> {
    if responses.len() != l {
        return Err(Error::Unavailable(format!(
            "expected {l} party responses, got {}",
            responses.len()
        )));
    }
    let missing: Vec<usize> = responses
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_none())
        .map(|(idx, _)| idx + 1)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Unavailable(format!("no response from parties {missing:?}")));
    }
    let mut it = responses.iter().flatten();
    let first = *it.next().ok_or_else(|| Error::Unavailable("no parties".into()))?;
    Ok(it.fold(first, |acc, p| add_points(&acc, p, ops)))
}
