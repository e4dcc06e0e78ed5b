//! The challenge-response exchange.
//!
//! Message 2 carries a puzzle `H(r, R)` over a `k`-bit secret `r` and a
//! 128-bit salt `R`, plus a MAC that binds `r` (through the client's later
//! proof) to the user id, the server key and the user's failure counter `n`.
//! The server keeps neither `r` nor `R`: the echoed MAC is enough to check
//! message 3 against the stored record alone.
//!
//! | variant            | puzzle           | client proof          | MAC fields                          |
//! |--------------------|------------------|-----------------------|-------------------------------------|
//! | `Base`             | `H(r, R)`        | `H(r, P)`             | `H(r, P), user, key, n`             |
//! | `OfflineResistant` | `H(r, P, R)`     | `H(r, P)`             | `H(r, P), user, key, n`             |
//! | `Lamport`          | `H(r, R)`        | `r, H^(i-1)(P)`       | `r, H^i(P), user, key, n`           |

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::hashcodec::{
    encode_r, hash_chain, hash_tuple, CodecError, Digest, FieldTag, HashConfig, TupleHasher,
};

pub const SALT_LEN: usize = 16;
pub const KEY_LEN: usize = 32;
pub const DEFAULT_K_BITS: u32 = 20;
pub const MAX_K_BITS: u32 = 32;
pub const DEFAULT_CHAIN_LENGTH: u32 = 1000;

pub type Salt = [u8; SALT_LEN];

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("entropy source failed: {0}")]
    Entropy(#[from] rand::Error),
    #[error("puzzle difficulty must be 1..=32 bits, got {0}")]
    InvalidDifficulty(u32),
    #[error("secret material does not match the {0} variant")]
    SecretMismatch(Variant),
    #[error("hash chain for `{0}` is exhausted; re-enroll the account")]
    ChainExhausted(String),
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("response for `{response}` checked against the record of `{record}`")]
    UserMismatch { record: String, response: String },
    #[error("outcome does not apply to this record")]
    OutcomeMismatch,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    /// No candidate reproduced the puzzle digest. For the offline-resistant
    /// variant this is what a wrong password looks like.
    #[error("no puzzle answer found after {evaluations} evaluations")]
    NotFound { evaluations: u64 },
    #[error("the offline-resistant puzzle needs the password")]
    PasswordRequired,
    #[error("only the offline-resistant puzzle takes a password")]
    PasswordUnexpected,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Puzzle difficulty. `r` is drawn from `[0, 2^k_bits)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PuzzleParams {
    k_bits: u32,
}

impl PuzzleParams {
    pub fn new(k_bits: u32) -> Result<Self, ProtocolError> {
        if !(1..=MAX_K_BITS).contains(&k_bits) {
            return Err(ProtocolError::InvalidDifficulty(k_bits));
        }
        Ok(PuzzleParams { k_bits })
    }

    /// A one-candidate puzzle (`k = 0`). Only useful as a baseline when
    /// measuring what the puzzle costs; servers never issue it.
    pub fn unthrottled() -> Self {
        PuzzleParams { k_bits: 0 }
    }

    pub fn k_bits(&self) -> u32 {
        self.k_bits
    }

    pub fn salt_len(&self) -> usize {
        SALT_LEN
    }

    /// Number of candidate answers, `2^k`.
    pub fn space(&self) -> u64 {
        1u64 << self.k_bits
    }
}

impl Default for PuzzleParams {
    fn default() -> Self {
        PuzzleParams {
            k_bits: DEFAULT_K_BITS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    Lamport,
    #[serde(rename = "offline")]
    OfflineResistant,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Base, Variant::Lamport, Variant::OfflineResistant];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Lamport => "lamport",
            Variant::OfflineResistant => "offline",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown variant `{0}` (expected base, lamport or offline)")]
pub struct ParseVariantError(pub String);

impl FromStr for Variant {
    type Err = ParseVariantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(Variant::Base),
            "lamport" => Ok(Variant::Lamport),
            "offline" | "offline-resistant" => Ok(Variant::OfflineResistant),
            _ => Err(ParseVariantError(s.to_string())),
        }
    }
}

/// The server's MAC key. Never leaves the server configuration.
#[derive(Clone, PartialEq, Eq)]
pub struct ServerKey([u8; KEY_LEN]);

impl ServerKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        ServerKey(bytes)
    }

    pub fn from_hex(s: &str) -> Result<Self, CodecError> {
        let mut key = [0u8; KEY_LEN];
        hex::decode_to_slice(s.trim(), &mut key)?;
        Ok(ServerKey(key))
    }

    pub fn generate<R: RngCore>(rng: &mut R) -> Result<Self, ProtocolError> {
        let mut key = [0u8; KEY_LEN];
        rng.try_fill_bytes(&mut key)?;
        Ok(ServerKey(key))
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for ServerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ServerKey(..)")
    }
}

/// What the server holds to check a login.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SecretMaterial {
    /// Plaintext password; the base and offline-resistant MACs need `H(r, P)`.
    Password(Vec<u8>),
    /// `head = H^index(P)`. The next login must reveal `H^(index-1)(P)`.
    Chain { head: Vec<u8>, index: u32 },
}

impl SecretMaterial {
    fn fits(&self, variant: Variant) -> bool {
        matches!(
            (self, variant),
            (SecretMaterial::Password(_), Variant::Base | Variant::OfflineResistant)
                | (SecretMaterial::Chain { .. }, Variant::Lamport)
        )
    }
}

/// Unsuccessful login attempts. Only ever grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FailCounter(pub u64);

impl FailCounter {
    pub fn to_be_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }

    pub fn incremented(self) -> Self {
        FailCounter(self.0 + 1)
    }
}

/// Per-user protocol state: everything `verify_response` is allowed to read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Account {
    pub user_id: String,
    pub variant: Variant,
    pub secret: SecretMaterial,
    pub n: FailCounter,
}

impl Account {
    pub fn new(user_id: impl Into<String>, variant: Variant, secret: SecretMaterial) -> Result<Self, ProtocolError> {
        if !secret.fits(variant) {
            return Err(ProtocolError::SecretMismatch(variant));
        }
        Ok(Account {
            user_id: user_id.into(),
            variant,
            secret,
            n: FailCounter::default(),
        })
    }

    /// Stand-in account for a user id the server does not know, so message 2
    /// looks the same whether or not the account exists.
    pub fn phantom(user_id: &str, variant: Variant, key: &ServerKey, cfg: HashConfig) -> Self {
        let seed = hash_tuple(
            FieldTag::Mac,
            &[b"phantom", user_id.as_bytes(), key.as_bytes()],
            cfg,
        )
        .expect("phantom inputs are short");
        let secret = match variant {
            Variant::Lamport => SecretMaterial::Chain {
                head: seed.as_bytes().to_vec(),
                index: DEFAULT_CHAIN_LENGTH,
            },
            _ => SecretMaterial::Password(seed.as_bytes().to_vec()),
        };
        Account {
            user_id: user_id.to_string(),
            variant,
            secret,
            n: FailCounter::default(),
        }
    }
}

/// Message 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Challenge {
    pub puzzle_digest: Digest,
    pub salt: Salt,
    pub mac: Digest,
    pub k_bits: u32,
    /// Current chain position `i` for the Lamport variant; the client needs
    /// it to compute `H^(i-1)(P)`.
    pub chain_index: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Proof {
    /// `H(r, P)`, for the base and offline-resistant variants.
    Hashed(Digest),
    /// `r` in the clear and `H^(i-1)(P)`, for the Lamport variant.
    Chain { r: u32, prev_chain: Vec<u8> },
}

/// Message 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponsePayload {
    pub user_id: String,
    pub variant: Variant,
    pub proof: Proof,
    pub mac: Digest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuthResult {
    Success,
    Fail,
}

impl AuthResult {
    pub fn is_success(self) -> bool {
        self == AuthResult::Success
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateDelta {
    None,
    IncrementN,
    AdvanceChain { new_head: Vec<u8>, new_index: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub result: AuthResult,
    pub delta: StateDelta,
}

impl VerifyOutcome {
    fn fail() -> Self {
        VerifyOutcome {
            result: AuthResult::Fail,
            delta: StateDelta::IncrementN,
        }
    }
}

/// A solved puzzle and the number of candidate digests it took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Solution {
    pub r: u32,
    pub evaluations: u64,
}

fn password_of(account: &Account) -> Result<&[u8], ProtocolError> {
    match (&account.secret, account.variant) {
        (SecretMaterial::Password(p), Variant::Base | Variant::OfflineResistant) => Ok(p),
        _ => Err(ProtocolError::SecretMismatch(account.variant)),
    }
}

fn chain_of(account: &Account) -> Result<(&[u8], u32), ProtocolError> {
    match (&account.secret, account.variant) {
        (SecretMaterial::Chain { head, index }, Variant::Lamport) => Ok((head, *index)),
        _ => Err(ProtocolError::SecretMismatch(account.variant)),
    }
}

/// `H(r, P)`.
pub fn proof_digest(r: u32, password: &[u8], cfg: HashConfig) -> Result<Digest, CodecError> {
    hash_tuple(FieldTag::Proof, &[&r.to_be_bytes(), password], cfg)
}

/// The puzzle digest for a given answer: `H(r, R)`, or `H(r, P, R)` when a
/// password is supplied (offline-resistant variant).
pub fn puzzle_digest(r: u32, salt: &Salt, password: Option<&[u8]>, cfg: HashConfig) -> Result<Digest, CodecError> {
    let r = r.to_be_bytes();
    match password {
        Some(p) => hash_tuple(FieldTag::Chal, &[&r, p, salt], cfg),
        None => hash_tuple(FieldTag::Chal, &[&r, salt], cfg),
    }
}

pub fn compute_mac(account: &Account, r: u32, key: &ServerKey, cfg: HashConfig) -> Result<Digest, ProtocolError> {
    match account.variant {
        Variant::Base | Variant::OfflineResistant => {
            let h_rp = proof_digest(r, password_of(account)?, cfg)?;
            Ok(mac_from_proof(&h_rp, &account.user_id, key, account.n, cfg)?)
        }
        Variant::Lamport => {
            let (head, _) = chain_of(account)?;
            Ok(lamport_mac(r, head, &account.user_id, key, account.n, cfg)?)
        }
    }
}

fn mac_from_proof(h_rp: &Digest, user_id: &str, key: &ServerKey, n: FailCounter, cfg: HashConfig) -> Result<Digest, CodecError> {
    hash_tuple(
        FieldTag::Mac,
        &[h_rp.as_bytes(), user_id.as_bytes(), key.as_bytes(), &n.to_be_bytes()],
        cfg,
    )
}

fn lamport_mac(r: u32, head: &[u8], user_id: &str, key: &ServerKey, n: FailCounter, cfg: HashConfig) -> Result<Digest, CodecError> {
    hash_tuple(
        FieldTag::Mac,
        &[&r.to_be_bytes(), head, user_id.as_bytes(), key.as_bytes(), &n.to_be_bytes()],
        cfg,
    )
}

/// Builds message 2 for a chosen `r` and salt. [`gen_challenge`] is this plus
/// fresh randomness.
pub fn build_challenge(
    account: &Account,
    r: u32,
    salt: Salt,
    params: PuzzleParams,
    key: &ServerKey,
    cfg: HashConfig,
) -> Result<Challenge, ProtocolError> {
    if !account.secret.fits(account.variant) {
        return Err(ProtocolError::SecretMismatch(account.variant));
    }
    encode_r(r as u64, params.k_bits())?;
    let chain_index = match account.variant {
        Variant::Lamport => {
            let (_, index) = chain_of(account)?;
            if index == 0 {
                return Err(ProtocolError::ChainExhausted(account.user_id.clone()));
            }
            Some(index)
        }
        _ => None,
    };
    let password = match account.variant {
        Variant::OfflineResistant => Some(password_of(account)?),
        _ => None,
    };
    Ok(Challenge {
        puzzle_digest: puzzle_digest(r, &salt, password, cfg)?,
        salt,
        mac: compute_mac(account, r, key, cfg)?,
        k_bits: params.k_bits(),
        chain_index,
    })
}

/// Issues message 2. `r` and `R` are dropped on return.
pub fn gen_challenge<R: RngCore + ?Sized>(
    account: &Account,
    params: PuzzleParams,
    key: &ServerKey,
    cfg: HashConfig,
    rng: &mut R,
) -> Result<Challenge, ProtocolError> {
    let mut buf = [0u8; 4 + SALT_LEN];
    rng.try_fill_bytes(&mut buf)?;
    let mask = (params.space() - 1) as u32;
    let r = u32::from_be_bytes(buf[..4].try_into().unwrap()) & mask;
    let mut salt = [0u8; SALT_LEN];
    salt.copy_from_slice(&buf[4..]);
    build_challenge(account, r, salt, params, key, cfg)
}

/// Scans `r = 0, 1, ...` until the candidate digest matches.
///
/// `password` must be given exactly when the challenge is offline-resistant.
pub fn solve_puzzle(
    puzzle: &Digest,
    salt: &Salt,
    k_bits: u32,
    variant: Variant,
    password: Option<&[u8]>,
    cfg: HashConfig,
) -> Result<Solution, SolveError> {
    match (variant, password) {
        (Variant::OfflineResistant, None) => return Err(SolveError::PasswordRequired),
        (Variant::Base | Variant::Lamport, Some(_)) => return Err(SolveError::PasswordUnexpected),
        _ => {}
    }
    if k_bits > MAX_K_BITS {
        return Err(CodecError::WidthTooLarge(k_bits).into());
    }
    let space = 1u64 << k_bits;
    let prefix = TupleHasher::new(FieldTag::Chal, cfg);
    for candidate in 0..space {
        let r = candidate as u32;
        let mut h = prefix.clone();
        h.field(&r.to_be_bytes())?;
        if let Some(p) = password {
            h.field(p)?;
        }
        h.field(salt)?;
        if h.finish() == *puzzle {
            return Ok(Solution {
                r,
                evaluations: candidate + 1,
            });
        }
    }
    Err(SolveError::NotFound { evaluations: space })
}

/// The chain value a Lamport client reveals at position `index`.
pub fn lamport_prev(password: &[u8], index: u32, cfg: HashConfig) -> Result<Vec<u8>, ProtocolError> {
    match index.checked_sub(1) {
        Some(prev) => Ok(hash_chain(password, prev, cfg)),
        None => Err(ProtocolError::ChainExhausted(String::new())),
    }
}

/// Builds message 3. `secret` is the password for the base and
/// offline-resistant variants and `H^(i-1)(P)` for Lamport.
pub fn make_response(
    variant: Variant,
    user_id: &str,
    r: u32,
    secret: &[u8],
    mac: Digest,
    cfg: HashConfig,
) -> Result<ResponsePayload, CodecError> {
    let proof = match variant {
        Variant::Base | Variant::OfflineResistant => Proof::Hashed(proof_digest(r, secret, cfg)?),
        Variant::Lamport => Proof::Chain {
            r,
            prev_chain: secret.to_vec(),
        },
    };
    Ok(ResponsePayload {
        user_id: user_id.to_string(),
        variant,
        proof,
        mac,
    })
}

/// Checks message 3 against the stored account only.
pub fn verify_response(
    account: &Account,
    resp: &ResponsePayload,
    key: &ServerKey,
    cfg: HashConfig,
) -> Result<VerifyOutcome, ProtocolError> {
    if account.user_id != resp.user_id {
        return Err(ProtocolError::UserMismatch {
            record: account.user_id.clone(),
            response: resp.user_id.clone(),
        });
    }
    if account.variant == Variant::Lamport {
        let (_, index) = chain_of(account)?;
        if index == 0 {
            return Err(ProtocolError::ChainExhausted(account.user_id.clone()));
        }
    }
    if resp.variant != account.variant {
        return Ok(VerifyOutcome::fail());
    }
    match (&resp.proof, account.variant) {
        (Proof::Hashed(h_rp), Variant::Base | Variant::OfflineResistant) => {
            password_of(account)?;
            let expected = mac_from_proof(h_rp, &account.user_id, key, account.n, cfg)?;
            if expected == resp.mac {
                Ok(VerifyOutcome {
                    result: AuthResult::Success,
                    delta: StateDelta::None,
                })
            } else {
                Ok(VerifyOutcome::fail())
            }
        }
        (Proof::Chain { r, prev_chain }, Variant::Lamport) => {
            let (head, index) = chain_of(account)?;
            let expected = lamport_mac(*r, head, &account.user_id, key, account.n, cfg)?;
            let mac_ok = expected == resp.mac;
            let chain_ok = match hash_tuple(FieldTag::Chain, &[prev_chain], cfg) {
                Ok(next) => head.len() == next.len() && Digest::from_slice(head).is_ok_and(|h| h == next),
                Err(_) => false,
            };
            if mac_ok && chain_ok {
                Ok(VerifyOutcome {
                    result: AuthResult::Success,
                    delta: StateDelta::AdvanceChain {
                        new_head: prev_chain.clone(),
                        new_index: index - 1,
                    },
                })
            } else {
                Ok(VerifyOutcome::fail())
            }
        }
        _ => Ok(VerifyOutcome::fail()),
    }
}

/// Applies a verification outcome to the account it was computed from.
pub fn apply_outcome(account: &Account, outcome: &VerifyOutcome) -> Result<Account, ProtocolError> {
    let mut next = account.clone();
    match &outcome.delta {
        StateDelta::None => {}
        StateDelta::IncrementN => next.n = account.n.incremented(),
        StateDelta::AdvanceChain { new_head, new_index } => {
            let (_, index) = chain_of(account)?;
            let expected = index
                .checked_sub(1)
                .ok_or_else(|| ProtocolError::ChainExhausted(account.user_id.clone()))?;
            if *new_index != expected {
                return Err(ProtocolError::OutcomeMismatch);
            }
            next.secret = SecretMaterial::Chain {
                head: new_head.clone(),
                index: *new_index,
            };
        }
    }
    Ok(next)
}
