//! Canonical encoding of hash inputs.
//!
//! Every hash the protocol computes is `H(tag || len(f1) || f1 || ... )`:
//! a one-byte domain tag followed, per field, by a 4-byte big-endian length
//! and the raw field bytes. The layout is injective, so `H(a, b)` and
//! `H(ab)` never share an input, and the tag keeps a challenge input from
//! ever being read as a MAC input.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256, Sha512};
use subtle::ConstantTimeEq;

/// Largest digest any supported algorithm produces.
pub const MAX_DIGEST_LEN: usize = 64;

/// Width of an encoded puzzle answer, independent of difficulty.
pub const R_ENCODED_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodecError {
    #[error("field of {0} bytes exceeds the 4-byte length prefix")]
    FieldTooLong(usize),
    #[error("unsupported hash algorithm `{0}`")]
    UnsupportedAlgorithm(String),
    #[error("puzzle value {r} does not fit in {k_bits} bits")]
    ROutOfRange { r: u64, k_bits: u32 },
    #[error("puzzle width {0} exceeds 32 bits")]
    WidthTooLarge(u32),
    #[error("digest must be 32 or 64 bytes, got {0}")]
    BadDigestLength(usize),
    #[error("invalid hex: {0}")]
    BadHex(#[from] hex::FromHexError),
}

/// Domain-separation label, one per hash context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FieldTag {
    Chal = 0x01,
    Mac = 0x02,
    Proof = 0x03,
    Chain = 0x04,
}

impl FieldTag {
    pub fn byte(self) -> u8 {
        self as u8
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(FieldTag::Chal),
            0x02 => Some(FieldTag::Mac),
            0x03 => Some(FieldTag::Proof),
            0x04 => Some(FieldTag::Chain),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum HashAlgorithm {
    #[default]
    Sha256,
    Sha512,
}

impl HashAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            HashAlgorithm::Sha256 => "sha256",
            HashAlgorithm::Sha512 => "sha512",
        }
    }

    pub fn digest_len(self) -> usize {
        match self {
            HashAlgorithm::Sha256 => 32,
            HashAlgorithm::Sha512 => 64,
        }
    }
}

impl fmt::Display for HashAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HashAlgorithm {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sha256" | "sha-256" => Ok(HashAlgorithm::Sha256),
            "sha512" | "sha-512" => Ok(HashAlgorithm::Sha512),
            _ => Err(CodecError::UnsupportedAlgorithm(s.to_string())),
        }
    }
}

/// Hash selection shared by every party of a deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HashConfig {
    algorithm: HashAlgorithm,
}

impl HashConfig {
    pub fn new(algorithm: HashAlgorithm) -> Self {
        HashConfig { algorithm }
    }

    pub fn from_name(name: &str) -> Result<Self, CodecError> {
        Ok(HashConfig::new(name.parse()?))
    }

    pub fn algorithm(&self) -> HashAlgorithm {
        self.algorithm
    }

    pub fn digest_len(&self) -> usize {
        self.algorithm.digest_len()
    }
}

/// A hash output. Equality is constant-time.
#[derive(Clone, Copy)]
pub struct Digest {
    bytes: [u8; MAX_DIGEST_LEN],
    len: u8,
}

impl Digest {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() != 32 && bytes.len() != 64 {
            return Err(CodecError::BadDigestLength(bytes.len()));
        }
        let mut buf = [0u8; MAX_DIGEST_LEN];
        buf[..bytes.len()].copy_from_slice(bytes);
        Ok(Digest {
            bytes: buf,
            len: bytes.len() as u8,
        })
    }

    pub fn from_hex(s: &str) -> Result<Self, CodecError> {
        Digest::from_slice(&hex::decode(s)?)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.as_bytes())
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        self.as_bytes()
    }
}

impl PartialEq for Digest {
    fn eq(&self, other: &Self) -> bool {
        // Lengths are public; only the contents need the constant-time path.
        self.len == other.len && bool::from(self.as_bytes().ct_eq(other.as_bytes()))
    }
}

impl Eq for Digest {}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

fn length_prefix(len: usize) -> Result<[u8; 4], CodecError> {
    u32::try_from(len)
        .map(u32::to_be_bytes)
        .map_err(|_| CodecError::FieldTooLong(len))
}

/// Lays out `tag` and `fields` in the canonical byte form.
pub fn encode_fields(tag: FieldTag, fields: &[&[u8]]) -> Result<Vec<u8>, CodecError> {
    let total = 1 + fields.iter().map(|f| 4 + f.len()).sum::<usize>();
    let mut out = Vec::with_capacity(total);
    out.push(tag.byte());
    for field in fields {
        out.extend_from_slice(&length_prefix(field.len())?);
        out.extend_from_slice(field);
    }
    Ok(out)
}

pub fn digest(data: &[u8], cfg: HashConfig) -> Digest {
    let mut h = TupleHasher::raw(cfg);
    h.update(data);
    h.finish()
}

/// `digest(encode_fields(tag, fields))`, streamed without building the buffer.
pub fn hash_tuple(tag: FieldTag, fields: &[&[u8]], cfg: HashConfig) -> Result<Digest, CodecError> {
    let mut h = TupleHasher::new(tag, cfg);
    for field in fields {
        h.field(field)?;
    }
    Ok(h.finish())
}

/// Incremental form of [`hash_tuple`]. Cloning a hasher after a common
/// prefix of fields lets hot loops skip re-hashing that prefix.
#[derive(Clone)]
pub struct TupleHasher {
    inner: Inner,
}

#[derive(Clone)]
enum Inner {
    Sha256(Sha256),
    Sha512(Sha512),
}

impl TupleHasher {
    fn raw(cfg: HashConfig) -> Self {
        let inner = match cfg.algorithm() {
            HashAlgorithm::Sha256 => Inner::Sha256(Sha256::new()),
            HashAlgorithm::Sha512 => Inner::Sha512(Sha512::new()),
        };
        TupleHasher { inner }
    }

    pub fn new(tag: FieldTag, cfg: HashConfig) -> Self {
        let mut h = TupleHasher::raw(cfg);
        h.update(&[tag.byte()]);
        h
    }

    fn update(&mut self, data: &[u8]) {
        match &mut self.inner {
            Inner::Sha256(h) => h.update(data),
            Inner::Sha512(h) => h.update(data),
        }
    }

    pub fn field(&mut self, bytes: &[u8]) -> Result<&mut Self, CodecError> {
        self.update(&length_prefix(bytes.len())?);
        self.update(bytes);
        Ok(self)
    }

    pub fn finish(self) -> Digest {
        match self.inner {
            Inner::Sha256(h) => Digest::from_slice(&h.finalize()),
            Inner::Sha512(h) => Digest::from_slice(&h.finalize()),
        }
        .expect("supported algorithms emit 32 or 64 bytes")
    }
}

/// Fixed 4-byte big-endian encoding of a puzzle answer `r < 2^k_bits`.
pub fn encode_r(r: u64, k_bits: u32) -> Result<[u8; R_ENCODED_LEN], CodecError> {
    if k_bits > 32 {
        return Err(CodecError::WidthTooLarge(k_bits));
    }
    if r >= 1u64 << k_bits {
        return Err(CodecError::ROutOfRange { r, k_bits });
    }
    Ok((r as u32).to_be_bytes())
}

/// `H^m(seed)`, with `H^0` the seed itself and each step a `CHAIN`-tagged hash.
pub fn hash_chain(seed: &[u8], m: u32, cfg: HashConfig) -> Vec<u8> {
    let mut value = seed.to_vec();
    for _ in 0..m {
        value = hash_tuple(FieldTag::Chain, &[&value], cfg)
            .expect("chain values are at most one digest or the seed")
            .as_bytes()
            .to_vec();
    }
    value
}
