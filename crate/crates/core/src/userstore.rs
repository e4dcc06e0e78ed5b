//! Per-user records, the only state the server keeps.
//!
//! The store file is line-delimited JSON: a header line, then one record per
//! line, binary values in lowercase hex. Base and offline-resistant records
//! hold the password in plaintext because the server must compute `H(r, P)`
//! to build their MAC; use the Lamport variant where that is unacceptable.
//!
//! Every mutation rewrites the file through a temporary file and a rename,
//! so a crash leaves either the old or the new file, never a mix.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::hashcodec::{hash_chain, HashAlgorithm, HashConfig};
use crate::protocol::{
    apply_outcome, Account, FailCounter, ProtocolError, SecretMaterial, Variant, VerifyOutcome,
    DEFAULT_K_BITS,
};

pub const FORMAT_NAME: &str = "compchall-store";
pub const FORMAT_VERSION: u32 = 1;

const PLAINTEXT_WARNING: &str =
    "base and offline records store passwords in plaintext; protect this file";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("incompatible store file: {0}")]
    Incompatible(String),
    #[error("user `{0}` is already enrolled")]
    DuplicateUser(String),
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("invalid enrollment: {0}")]
    InvalidEnrollment(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("injected fault before commit")]
    InjectedFault,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// A stored account plus bookkeeping. Timestamps never enter a hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRecord {
    pub account: Account,
    pub created_at: u64,
    pub updated_at: u64,
}

impl UserRecord {
    pub fn user_id(&self) -> &str {
        &self.account.user_id
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    format_version: u32,
    hash: String,
    k_bits: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    user_id: String,
    variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    password_hex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chain_head_hex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chain_index: Option<u32>,
    n: u64,
    created_at: u64,
    updated_at: u64,
}

impl From<&UserRecord> for RecordLine {
    fn from(rec: &UserRecord) -> Self {
        let (password_hex, chain_head_hex, chain_index) = match &rec.account.secret {
            SecretMaterial::Password(p) => (Some(hex::encode(p)), None, None),
            SecretMaterial::Chain { head, index } => (None, Some(hex::encode(head)), Some(*index)),
        };
        RecordLine {
            user_id: rec.account.user_id.clone(),
            variant: rec.account.variant,
            password_hex,
            chain_head_hex,
            chain_index,
            n: rec.account.n.0,
            created_at: rec.created_at,
            updated_at: rec.updated_at,
        }
    }
}

impl TryFrom<RecordLine> for UserRecord {
    type Error = String;

    fn try_from(line: RecordLine) -> Result<Self, String> {
        let secret = match (line.variant, line.password_hex, line.chain_head_hex, line.chain_index) {
            (Variant::Base | Variant::OfflineResistant, Some(p), None, None) => {
                SecretMaterial::Password(hex::decode(p).map_err(|e| e.to_string())?)
            }
            (Variant::Lamport, None, Some(h), Some(index)) => SecretMaterial::Chain {
                head: hex::decode(h).map_err(|e| e.to_string())?,
                index,
            },
            (v, ..) => return Err(format!("secret fields do not match variant {v}")),
        };
        let mut account = Account::new(line.user_id, line.variant, secret).map_err(|e| e.to_string())?;
        account.n = FailCounter(line.n);
        Ok(UserRecord {
            account,
            created_at: line.created_at,
            updated_at: line.updated_at,
        })
    }
}

/// Where an injected fault fires during a commit.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Half of the new file reaches the temporary path, then the commit
    /// stops before the rename.
    TornWriteBeforeRename,
}

pub struct UserStore {
    hash: HashConfig,
    k_bits: u32,
    path: Option<PathBuf>,
    users: RwLock<HashMap<String, Arc<Mutex<UserRecord>>>>,
    // Durable image. Lock order: a user's mutex, then this.
    committed: Mutex<BTreeMap<String, UserRecord>>,
    fault: Mutex<Option<FaultPoint>>,
}

impl UserStore {
    pub fn in_memory(hash: HashConfig, k_bits: u32) -> Self {
        UserStore {
            hash,
            k_bits,
            path: None,
            users: RwLock::new(HashMap::new()),
            committed: Mutex::new(BTreeMap::new()),
            fault: Mutex::new(None),
        }
    }

    /// Loads `path`, or creates an empty store file there.
    pub fn open(path: impl AsRef<Path>, hash: HashConfig, k_bits: u32) -> Result<Self, StoreError> {
        let path = path.as_ref();
        if path.exists() {
            return UserStore::load(path, hash);
        }
        let mut store = UserStore::in_memory(hash, k_bits);
        store.path = Some(path.to_path_buf());
        store.save(path)?;
        Ok(store)
    }

    /// Reads a store file. The file's hash algorithm must equal `hash`.
    /// Later mutations are written back to `path`.
    pub fn load(path: impl AsRef<Path>, hash: HashConfig) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut store = UserStore::parse(&text, hash)?;
        store.path = Some(path.to_path_buf());
        Ok(store)
    }

    fn parse(text: &str, hash: HashConfig) -> Result<Self, StoreError> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or(StoreError::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let header: Header = serde_json::from_str(first).map_err(|e| StoreError::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if header.format != FORMAT_NAME || header.format_version != FORMAT_VERSION {
            return Err(StoreError::Incompatible(format!(
                "expected {FORMAT_NAME} v{FORMAT_VERSION}, found {} v{}",
                header.format, header.format_version
            )));
        }
        let file_hash: HashAlgorithm = header
            .hash
            .parse()
            .map_err(|e: crate::hashcodec::CodecError| StoreError::Incompatible(e.to_string()))?;
        if file_hash != hash.algorithm() {
            return Err(StoreError::Incompatible(format!(
                "store uses {file_hash}, configuration uses {}",
                hash.algorithm()
            )));
        }
        let store = UserStore::in_memory(hash, header.k_bits);
        {
            let mut users = store.users.write().unwrap();
            let mut committed = store.committed.lock().unwrap();
            for (idx, raw) in lines {
                let line = idx + 1;
                if raw.trim().is_empty() {
                    continue;
                }
                let parsed: RecordLine = serde_json::from_str(raw).map_err(|e| StoreError::Parse {
                    line,
                    message: e.to_string(),
                })?;
                let rec = UserRecord::try_from(parsed).map_err(|message| StoreError::Parse { line, message })?;
                let id = rec.user_id().to_string();
                if users.contains_key(&id) {
                    return Err(StoreError::Parse {
                        line,
                        message: format!("duplicate user `{id}`"),
                    });
                }
                committed.insert(id.clone(), rec.clone());
                users.insert(id, Arc::new(Mutex::new(rec)));
            }
        }
        Ok(store)
    }

    fn render(&self, records: &BTreeMap<String, UserRecord>) -> String {
        let header = Header {
            format: FORMAT_NAME.into(),
            format_version: FORMAT_VERSION,
            hash: self.hash.algorithm().name().into(),
            k_bits: self.k_bits,
            warning: Some(PLAINTEXT_WARNING.into()),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for rec in records.values() {
            out.push_str(&serde_json::to_string(&RecordLine::from(rec)).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes a snapshot of every committed record to `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let committed = self.committed.lock().unwrap();
        write_atomic(path.as_ref(), self.render(&committed).as_bytes(), None)
    }

    pub fn hash_config(&self) -> HashConfig {
        self.hash
    }

    pub fn default_k_bits(&self) -> u32 {
        self.k_bits
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.users.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn user_ids(&self) -> Vec<String> {
        let mut ids: Vec<_> = self.users.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn get(&self, user_id: &str) -> Option<UserRecord> {
        let slot = self.users.read().unwrap().get(user_id).cloned()?;
        let rec = slot.lock().unwrap().clone();
        Some(rec)
    }

    #[doc(hidden)]
    pub fn inject_fault(&self, point: Option<FaultPoint>) {
        *self.fault.lock().unwrap() = point;
    }

    fn commit(&self, rec: &UserRecord) -> Result<(), StoreError> {
        let mut committed = self.committed.lock().unwrap();
        let fault = *self.fault.lock().unwrap();
        if let Some(path) = &self.path {
            let mut next = committed.clone();
            next.insert(rec.user_id().to_string(), rec.clone());
            write_atomic(path, self.render(&next).as_bytes(), fault)?;
            *committed = next;
        } else {
            if fault.is_some() {
                return Err(StoreError::InjectedFault);
            }
            committed.insert(rec.user_id().to_string(), rec.clone());
        }
        Ok(())
    }

    /// Creates an account. Lamport accounts store `H^m(P)` with index `m`.
    pub fn enroll(
        &self,
        user_id: &str,
        password: &str,
        variant: Variant,
        chain_length: u32,
    ) -> Result<UserRecord, StoreError> {
        if user_id.is_empty() || user_id.chars().any(char::is_control) {
            return Err(StoreError::InvalidEnrollment("user id must be non-empty printable text".into()));
        }
        if password.is_empty() {
            return Err(StoreError::InvalidEnrollment("password must not be empty".into()));
        }
        let secret = match variant {
            Variant::Base | Variant::OfflineResistant => SecretMaterial::Password(password.as_bytes().to_vec()),
            Variant::Lamport => {
                if chain_length == 0 {
                    return Err(StoreError::InvalidEnrollment("chain length must be at least 1".into()));
                }
                SecretMaterial::Chain {
                    head: hash_chain(password.as_bytes(), chain_length, self.hash),
                    index: chain_length,
                }
            }
        };
        let now = now_secs();
        let rec = UserRecord {
            account: Account::new(user_id, variant, secret)?,
            created_at: now,
            updated_at: now,
        };
        let mut users = self.users.write().unwrap();
        if users.contains_key(user_id) {
            return Err(StoreError::DuplicateUser(user_id.to_string()));
        }
        self.commit(&rec)?;
        users.insert(user_id.to_string(), Arc::new(Mutex::new(rec.clone())));
        Ok(rec)
    }

    /// Adds an existing record, e.g. one copied from another store.
    pub fn insert_record(&self, rec: UserRecord) -> Result<(), StoreError> {
        let mut users = self.users.write().unwrap();
        if users.contains_key(rec.user_id()) {
            return Err(StoreError::DuplicateUser(rec.user_id().to_string()));
        }
        self.commit(&rec)?;
        users.insert(rec.user_id().to_string(), Arc::new(Mutex::new(rec)));
        Ok(())
    }

    /// Runs `transaction` against a consistent view of one user's account.
    /// A returned outcome is applied and persisted before any other
    /// transaction on the same user starts; if that fails the record is
    /// left as it was.
    pub fn with_record<T>(
        &self,
        user_id: &str,
        transaction: impl FnOnce(&Account) -> (T, Option<VerifyOutcome>),
    ) -> Result<T, StoreError> {
        let slot = self
            .users
            .read()
            .unwrap()
            .get(user_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownUser(user_id.to_string()))?;
        let mut rec = slot.lock().unwrap();
        let (value, outcome) = transaction(&rec.account);
        if let Some(outcome) = outcome {
            let account = apply_outcome(&rec.account, &outcome)?;
            if account != rec.account {
                let next = UserRecord {
                    account,
                    created_at: rec.created_at,
                    updated_at: now_secs(),
                };
                self.commit(&next)?;
                *rec = next;
            }
        }
        Ok(value)
    }
}

fn write_atomic(path: &Path, contents: &[u8], fault: Option<FaultPoint>) -> Result<(), StoreError> {
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    if fault == Some(FaultPoint::TornWriteBeforeRename) {
        file.write_all(&contents[..contents.len() / 2]).map_err(io_err(&tmp))?;
        return Err(StoreError::InjectedFault);
    }
    file.write_all(contents).map_err(io_err(&tmp))?;
    file.sync_all().map_err(io_err(&tmp))?;
    drop(file);
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl Default for UserStore {
    fn default() -> Self {
        UserStore::in_memory(HashConfig::default(), DEFAULT_K_BITS)
    }
}
