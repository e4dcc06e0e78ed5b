//! Reference server.
//!
//! Each connection carries exactly one request and one reply: `LOGIN` gets a
//! `CHALLENGE`, `RESPOND` gets a `RESULT`. Nothing about an issued challenge
//! is remembered; the only shared state is the user store.

use std::io::{self, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::wire::{read_message, write_message, ErrorCode, LineError, WireMessage};
use crate::config::ServerConfig;
use crate::protocol::{
    gen_challenge, verify_response, Account, AuthResult, Challenge, ProtocolError, ResponsePayload,
};
use crate::userstore::{StoreError, UserStore};

/// Request handling shared by the TCP server and in-process callers.
pub struct ServerEngine {
    config: ServerConfig,
    store: Arc<UserStore>,
    rng: Mutex<ChaCha20Rng>,
}

impl ServerEngine {
    pub fn new(config: ServerConfig, store: Arc<UserStore>) -> Self {
        ServerEngine::with_rng(config, store, ChaCha20Rng::from_entropy())
    }

    /// Deterministic challenges, for simulations and fixtures.
    pub fn with_rng(config: ServerConfig, store: Arc<UserStore>, rng: ChaCha20Rng) -> Self {
        ServerEngine {
            config,
            store,
            rng: Mutex::new(rng),
        }
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<UserStore> {
        &self.store
    }

    /// Message 1 → message 2. Unknown users get a decoy built from a
    /// phantom account.
    pub fn issue(&self, user_id: &str) -> Result<Challenge, ProtocolError> {
        let cfg = &self.config;
        let account = match self.store.get(user_id) {
            Some(rec) => rec.account,
            None => Account::phantom(user_id, cfg.default_variant, &cfg.key, cfg.hash),
        };
        let mut rng = self.rng.lock().unwrap();
        gen_challenge(&account, cfg.params, &cfg.key, cfg.hash, &mut *rng)
    }

    /// Message 3 → message 4, applying the outcome atomically.
    pub fn check(&self, resp: &ResponsePayload) -> Result<AuthResult, StoreError> {
        let cfg = &self.config;
        let verdict = self.store.with_record(&resp.user_id, |account| {
            match verify_response(account, resp, &cfg.key, cfg.hash) {
                Ok(outcome) => (Ok(outcome.result), Some(outcome)),
                Err(e) => (Err(e), None),
            }
        });
        match verdict {
            Ok(Ok(result)) => Ok(result),
            Ok(Err(e)) => Err(e.into()),
            Err(StoreError::UnknownUser(_)) => Ok(AuthResult::Fail),
            Err(e) => Err(e),
        }
    }

    pub fn handle(&self, request: &WireMessage) -> WireMessage {
        match request {
            WireMessage::Login { user_id } => match self.issue(user_id) {
                Ok(ch) => WireMessage::Challenge(ch),
                Err(ProtocolError::ChainExhausted(_)) => WireMessage::Error(ErrorCode::ChainExhausted),
                Err(_) => WireMessage::Error(ErrorCode::Internal),
            },
            WireMessage::Respond(resp) => match self.check(resp) {
                Ok(result) => WireMessage::Result(result),
                // The account cannot log in again; to the client this is a failure.
                Err(StoreError::Protocol(ProtocolError::ChainExhausted(_))) => WireMessage::Result(AuthResult::Fail),
                Err(_) => WireMessage::Error(ErrorCode::Internal),
            },
            _ => WireMessage::Error(ErrorCode::Unexpected),
        }
    }

    /// Serves one request on an already-established stream. TLS or any
    /// other wrapper plugs in here.
    pub fn handle_stream<S: Read + Write>(&self, stream: S) -> io::Result<()> {
        let mut reader = BufReader::new(stream);
        let reply = match read_message(&mut reader) {
            Ok(Some(request)) => self.handle(&request),
            Ok(None) => return Ok(()),
            Err(LineError::Wire(e)) => WireMessage::Error(e.code),
            Err(LineError::Io(e)) => return Err(e),
        };
        write_message(reader.get_mut(), &reply)
    }
}

pub struct Server {
    listener: TcpListener,
    engine: Arc<ServerEngine>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, engine: Arc<ServerEngine>) -> io::Result<Self> {
        Ok(Server {
            listener: TcpListener::bind(addr)?,
            engine,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until the process exits.
    pub fn run(self) -> io::Result<()> {
        self.accept_loop(&AtomicBool::new(false))
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = thread::spawn(move || {
            let _ = self.accept_loop(&flag);
        });
        Ok(ServerHandle {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    fn accept_loop(&self, stop: &AtomicBool) -> io::Result<()> {
        let timeout = self.engine.config().read_timeout;
        for conn in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(_) => continue,
            };
            let engine = Arc::clone(&self.engine);
            thread::spawn(move || {
                let _ = serve_connection(&engine, stream, timeout);
            });
        }
        Ok(())
    }
}

fn serve_connection(engine: &ServerEngine, stream: TcpStream, timeout: Duration) -> io::Result<()> {
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    engine.handle_stream(&stream)?;
    stream.shutdown(std::net::Shutdown::Both)
}

/// A server running on a background thread.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}
