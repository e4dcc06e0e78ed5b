//! Reference client.
//!
//! A login is two round trips on two connections: `LOGIN`/`CHALLENGE`, then
//! a local puzzle solve, then `RESPOND`/`RESULT`. After a success the client
//! keeps the solved `r` and the response it sent. The server accepts that
//! response again for as long as the account's failure counter has not
//! moved, so the next login skips the puzzle entirely.
//!
//! Lamport logins are never cached: every success advances the chain and
//! invalidates the previous response.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufReader};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::server::ServerEngine;
use super::wire::{decode_message, encode_message, read_message, write_message, ErrorCode, LineError, WireError, WireMessage};
use crate::hashcodec::HashConfig;
use crate::protocol::{
    lamport_prev, make_response, solve_puzzle, AuthResult, ProtocolError, ResponsePayload, SolveError, Variant,
};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("network: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("server replied ERR {0}")]
    Server(ErrorCode),
    #[error("unexpected reply `{0}`")]
    Unexpected(String),
    #[error("connection closed before a reply")]
    Closed,
    #[error("puzzle: {0}")]
    Puzzle(#[from] SolveError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("response cache: {0}")]
    Cache(String),
}

impl From<LineError> for ClientError {
    fn from(e: LineError) -> Self {
        match e {
            LineError::Io(e) => ClientError::Io(e),
            LineError::Wire(e) => ClientError::Wire(e),
        }
    }
}

/// One request, one reply.
pub trait Transport {
    fn round_trip(&mut self, request: &WireMessage) -> Result<WireMessage, ClientError>;
}

/// Opens a fresh TCP connection per round trip.
pub struct TcpTransport {
    addr: String,
    timeout: Duration,
}

impl TcpTransport {
    pub fn new(addr: impl Into<String>) -> Self {
        TcpTransport {
            addr: addr.into(),
            timeout: Duration::from_secs(30),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl Transport for TcpTransport {
    fn round_trip(&mut self, request: &WireMessage) -> Result<WireMessage, ClientError> {
        let addr = self
            .addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "address did not resolve"))?;
        let mut stream = TcpStream::connect_timeout(&addr, self.timeout)?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_write_timeout(Some(self.timeout))?;
        write_message(&mut stream, request)?;
        read_message(&mut BufReader::new(stream))?.ok_or(ClientError::Closed)
    }
}

/// Talks to an engine in the same process, through the wire encoding.
impl Transport for &ServerEngine {
    fn round_trip(&mut self, request: &WireMessage) -> Result<WireMessage, ClientError> {
        let request = decode_message(&encode_message(request))?;
        Ok(decode_message(&encode_message(&self.handle(&request)))?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CacheEntry {
    r: u32,
    response: ResponsePayload,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    user_id: String,
    r: u32,
    respond: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoginReport {
    pub result: Option<AuthResult>,
    /// The last successful response was accepted again; no puzzle was solved.
    pub cache_hit: bool,
    /// A cached response went stale and was discarded before solving afresh.
    pub stale_cache: bool,
    pub puzzle_solves: u32,
    pub evaluations: u64,
    pub solve_time: Duration,
    /// `RESPOND` messages sent.
    pub submissions: u32,
}

impl LoginReport {
    pub fn succeeded(&self) -> bool {
        self.result == Some(AuthResult::Success)
    }

    /// Puzzle hashes per second measured during this login.
    pub fn hash_rate(&self) -> Option<f64> {
        let secs = self.solve_time.as_secs_f64();
        (self.evaluations > 0 && secs > 0.0).then(|| self.evaluations as f64 / secs)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Client {
    hash: HashConfig,
    cache: BTreeMap<String, CacheEntry>,
}

impl Client {
    pub fn new(hash: HashConfig) -> Self {
        Client {
            hash,
            cache: BTreeMap::new(),
        }
    }

    pub fn cached_users(&self) -> impl Iterator<Item = &str> {
        self.cache.keys().map(String::as_str)
    }

    pub fn forget(&mut self, user_id: &str) {
        self.cache.remove(user_id);
    }

    /// Loads a cache written by [`Client::save_cache`]; a missing file is an
    /// empty cache.
    pub fn load_cache(&mut self, path: impl AsRef<Path>) -> Result<(), ClientError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let entry: CacheLine = serde_json::from_str(line).map_err(|e| ClientError::Cache(e.to_string()))?;
            let response = match decode_message(&entry.respond)? {
                WireMessage::Respond(resp) if resp.user_id == entry.user_id => resp,
                _ => return Err(ClientError::Cache(format!("bad entry for `{}`", entry.user_id))),
            };
            self.cache.insert(entry.user_id, CacheEntry { r: entry.r, response });
        }
        Ok(())
    }

    pub fn save_cache(&self, path: impl AsRef<Path>) -> Result<(), ClientError> {
        let mut out = String::new();
        for (user_id, entry) in &self.cache {
            let line = CacheLine {
                user_id: user_id.clone(),
                r: entry.r,
                respond: encode_message(&WireMessage::Respond(entry.response.clone())),
            };
            out.push_str(&serde_json::to_string(&line).map_err(|e| ClientError::Cache(e.to_string()))?);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    fn submit<T: Transport>(
        &self,
        transport: &mut T,
        resp: &ResponsePayload,
        report: &mut LoginReport,
    ) -> Result<AuthResult, ClientError> {
        report.submissions += 1;
        match transport.round_trip(&WireMessage::Respond(resp.clone()))? {
            WireMessage::Result(r) => Ok(r),
            WireMessage::Error(code) => Err(ClientError::Server(code)),
            other => Err(ClientError::Unexpected(encode_message(&other))),
        }
    }

    /// Logs in, reusing the last successful computation when possible.
    pub fn login<T: Transport>(
        &mut self,
        transport: &mut T,
        user_id: &str,
        password: &str,
        variant: Variant,
    ) -> Result<LoginReport, ClientError> {
        let mut report = LoginReport::default();
        let pw = password.as_bytes();

        if let Some(entry) = self.cache.get(user_id).cloned() {
            if variant != Variant::Lamport && entry.response.variant == variant {
                let candidate = make_response(variant, user_id, entry.r, pw, entry.response.mac, self.hash)
                    .map_err(ProtocolError::from)?;
                let same_password = candidate == entry.response;
                let result = self.submit(transport, &candidate, &mut report)?;
                if result.is_success() {
                    report.cache_hit = same_password;
                    report.result = Some(result);
                    self.cache.insert(user_id.to_string(), CacheEntry { r: entry.r, response: candidate });
                    return Ok(report);
                }
                self.cache.remove(user_id);
                if !same_password {
                    // A different password than the one that last worked was
                    // rejected; a fresh puzzle would not change that.
                    report.result = Some(result);
                    return Ok(report);
                }
                report.stale_cache = true;
            }
        }

        let challenge = match transport.round_trip(&WireMessage::Login { user_id: user_id.to_string() })? {
            WireMessage::Challenge(ch) => ch,
            WireMessage::Error(code) => return Err(ClientError::Server(code)),
            other => return Err(ClientError::Unexpected(encode_message(&other))),
        };
        let puzzle_password = (variant == Variant::OfflineResistant).then_some(pw);
        let started = Instant::now();
        let solved = solve_puzzle(
            &challenge.puzzle_digest,
            &challenge.salt,
            challenge.k_bits,
            variant,
            puzzle_password,
            self.hash,
        );
        report.solve_time = started.elapsed();
        report.puzzle_solves += 1;
        let solution = solved?;
        report.evaluations += solution.evaluations;

        let secret = match variant {
            Variant::Lamport => {
                let index = challenge
                    .chain_index
                    .ok_or_else(|| ClientError::Unexpected("Lamport challenge without a chain index".into()))?;
                lamport_prev(pw, index, self.hash)?
            }
            _ => pw.to_vec(),
        };
        let response = make_response(variant, user_id, solution.r, &secret, challenge.mac, self.hash)
            .map_err(ProtocolError::from)?;
        let result = self.submit(transport, &response, &mut report)?;
        if result.is_success() && variant != Variant::Lamport {
            self.cache.insert(
                user_id.to_string(),
                CacheEntry {
                    r: solution.r,
                    response,
                },
            );
        }
        report.result = Some(result);
        Ok(report)
    }
}

/// Logs in over TCP with a throwaway client.
pub fn client_login(
    addr: &str,
    user_id: &str,
    password: &str,
    variant: Variant,
    hash: HashConfig,
) -> Result<LoginReport, ClientError> {
    Client::new(hash).login(&mut TcpTransport::new(addr), user_id, password, variant)
}
