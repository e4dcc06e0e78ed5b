//! Server configuration file.
//!
//! ```toml
//! key_hex = "…64 hex digits…"
//! k_bits = 20
//! hash = "sha256"
//! default_variant = "base"
//! read_timeout_secs = 10
//! ```
//!
//! `COMPCHALL_KEY` in the environment replaces `key_hex`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::hashcodec::{CodecError, HashConfig};
use crate::protocol::{ProtocolError, PuzzleParams, ServerKey, Variant};

pub const KEY_ENV: &str = "COMPCHALL_KEY";
pub const DEFAULT_READ_TIMEOUT_SECS: u64 = 10;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("no server key: set key_hex or {KEY_ENV}")]
    MissingKey,
    #[error("server key must be 64 hex digits: {0}")]
    BadKey(CodecError),
    #[error(transparent)]
    Hash(CodecError),
    #[error(transparent)]
    Params(#[from] ProtocolError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key_hex: Option<String>,
    #[serde(default = "default_k")]
    k_bits: u32,
    #[serde(default = "default_hash")]
    hash: String,
    #[serde(default = "default_variant")]
    default_variant: Variant,
    #[serde(default = "default_timeout")]
    read_timeout_secs: u64,
}

fn default_k() -> u32 {
    crate::protocol::DEFAULT_K_BITS
}

fn default_hash() -> String {
    "sha256".into()
}

fn default_variant() -> Variant {
    Variant::Base
}

fn default_timeout() -> u64 {
    DEFAULT_READ_TIMEOUT_SECS
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub key: ServerKey,
    pub params: PuzzleParams,
    pub hash: HashConfig,
    /// Variant used for decoy challenges to unknown users.
    pub default_variant: Variant,
    pub read_timeout: Duration,
}

impl ServerConfig {
    pub fn new(key: ServerKey, params: PuzzleParams) -> Self {
        ServerConfig {
            key,
            params,
            hash: HashConfig::default(),
            default_variant: Variant::Base,
            read_timeout: Duration::from_secs(DEFAULT_READ_TIMEOUT_SECS),
        }
    }

    /// A configuration with a fresh random key.
    pub fn generate<R: RngCore>(params: PuzzleParams, rng: &mut R) -> Result<Self, ProtocolError> {
        Ok(ServerConfig::new(ServerKey::generate(rng)?, params))
    }

    /// Parses TOML text; `env_key`, when set, wins over `key_hex`.
    pub fn from_toml(text: &str, env_key: Option<&str>) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text)?;
        let key_hex = env_key
            .map(str::to_string)
            .or(file.key_hex)
            .ok_or(ConfigError::MissingKey)?;
        Ok(ServerConfig {
            key: ServerKey::from_hex(&key_hex).map_err(ConfigError::BadKey)?,
            params: PuzzleParams::new(file.k_bits)?,
            hash: HashConfig::from_name(&file.hash).map_err(ConfigError::Hash)?,
            default_variant: file.default_variant,
            read_timeout: Duration::from_secs(file.read_timeout_secs),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let env_key = std::env::var(KEY_ENV).ok().filter(|k| !k.is_empty());
        ServerConfig::from_toml(&text, env_key.as_deref())
    }

    pub fn to_toml(&self) -> String {
        let file = ConfigFile {
            key_hex: Some(self.key.to_hex()),
            k_bits: self.params.k_bits(),
            hash: self.hash.algorithm().name().into(),
            default_variant: self.default_variant,
            read_timeout_secs: self.read_timeout.as_secs(),
        };
        toml::to_string(&file).expect("config serializes")
    }

    /// Writes the file readable by the owner only.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        let path = path.as_ref();
        let io = |source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut opts = fs::OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut file = opts.open(path).map_err(io)?;
        std::io::Write::write_all(&mut file, self.to_toml().as_bytes()).map_err(io)
    }
}
