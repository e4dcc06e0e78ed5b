#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::Arc;

use compchall::config::ServerConfig;
use compchall::hashcodec::HashConfig;
use compchall::net::{encode_message, ServerEngine, WireMessage};
use compchall::protocol::{
    lamport_prev, make_response, solve_puzzle, PuzzleParams, ServerKey, Variant,
};
use compchall::userstore::UserStore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const GOLDEN_KEY: [u8; 32] = [0x42; 32];
pub const GOLDEN_K: u32 = 8;
pub const GOLDEN_SEED: u64 = 2024;
pub const GOLDEN_CHAIN: u32 = 5;

pub fn golden_user(variant: Variant) -> (&'static str, &'static str) {
    match variant {
        Variant::Base => ("alice", "correct horse"),
        Variant::Lamport => ("bob", "battery staple"),
        Variant::OfflineResistant => ("carol", "tr0ub4dor&3"),
    }
}

/// One honest login for `variant`, as wire lines, from a fixed key and a
/// seeded challenge generator.
pub fn golden_transcript(variant: Variant) -> Vec<String> {
    let cfg = HashConfig::default();
    let (user, pw) = golden_user(variant);
    let store = Arc::new(UserStore::in_memory(cfg, GOLDEN_K));
    store.enroll(user, pw, variant, GOLDEN_CHAIN).unwrap();
    let config = ServerConfig::new(ServerKey::from_bytes(GOLDEN_KEY), PuzzleParams::new(GOLDEN_K).unwrap());
    let engine = ServerEngine::with_rng(config, store, ChaCha20Rng::seed_from_u64(GOLDEN_SEED));

    let login = WireMessage::Login { user_id: user.into() };
    let challenge = engine.handle(&login);
    let WireMessage::Challenge(ch) = &challenge else { panic!("{challenge:?}") };
    let puzzle_pw = (variant == Variant::OfflineResistant).then_some(pw.as_bytes());
    let sol = solve_puzzle(&ch.puzzle_digest, &ch.salt, ch.k_bits, variant, puzzle_pw, cfg).unwrap();
    let secret = match variant {
        Variant::Lamport => lamport_prev(pw.as_bytes(), ch.chain_index.unwrap(), cfg).unwrap(),
        _ => pw.as_bytes().to_vec(),
    };
    let respond = WireMessage::Respond(make_response(variant, user, sol.r, &secret, ch.mac, cfg).unwrap());
    let result = engine.handle(&respond);
    [login, challenge, respond, result].iter().map(encode_message).collect()
}

pub fn write_config(dir: &Path, k: u32) -> std::path::PathBuf {
    let path = dir.join("server.toml");
    let config = ServerConfig::new(ServerKey::from_bytes([7; 32]), PuzzleParams::new(k).unwrap());
    config.write(&path).unwrap();
    path
}

/// The `compchall serve` binary on an ephemeral loopback port.
pub struct ServeProcess {
    child: Child,
    pub addr: String,
}

impl ServeProcess {
    pub fn start(config: &Path, store: &Path) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_compchall"))
            .args(["serve", "--listen", "127.0.0.1:0", "--config"])
            .arg(config)
            .arg("--store")
            .arg(store)
            .env_remove("COMPCHALL_KEY")
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn compchall serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        ServeProcess { child, addr }
    }

    pub fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for ServeProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(serde::Deserialize)]
struct CodecVector {
    note: String,
    tag: u8,
    fields: Vec<String>,
    algorithm: String,
    expected_digest: String,
}

/// Checks every pinned codec vector; returns how many were checked.
pub fn check_codec_vectors() -> Result<usize, String> {
    use compchall::hashcodec::{hash_tuple, FieldTag};
    let text = include_str!("../data/hashcodec_vectors.jsonl");
    let mut count = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: CodecVector = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let tag = FieldTag::from_byte(v.tag).ok_or(format!("{}: bad tag {}", v.note, v.tag))?;
        let fields: Vec<Vec<u8>> = v.fields.iter().map(|f| hex::decode(f).unwrap()).collect();
        let refs: Vec<&[u8]> = fields.iter().map(Vec::as_slice).collect();
        let cfg = HashConfig::from_name(&v.algorithm).map_err(|e| e.to_string())?;
        let got = hash_tuple(tag, &refs, cfg).map_err(|e| e.to_string())?.to_hex();
        if got != v.expected_digest {
            return Err(format!("{}: got {got}, want {}", v.note, v.expected_digest));
        }
        count += 1;
    }
    Ok(count)
}

pub fn pinned_transcripts() -> Vec<(Variant, Vec<String>)> {
    let text = include_str!("../data/golden_transcripts.txt");
    let mut out: Vec<(Variant, Vec<String>)> = Vec::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        match line.strip_prefix("# ") {
            Some(name) => out.push((name.parse().unwrap(), Vec::new())),
            None => out.last_mut().unwrap().1.push(line.to_string()),
        }
    }
    out
}

/// Regenerates each transcript and compares it with the pinned copy.
pub fn check_transcripts() -> Result<usize, String> {
    let pinned = pinned_transcripts();
    if pinned.len() != Variant::ALL.len() {
        return Err(format!("expected {} transcripts, found {}", Variant::ALL.len(), pinned.len()));
    }
    for (variant, lines) in &pinned {
        let fresh = golden_transcript(*variant);
        if &fresh != lines {
            return Err(format!("{variant} transcript drifted:\n{}", fresh.join("\n")));
        }
    }
    Ok(pinned.len())
}
