//! What the puzzle costs an attacker.
//!
//! The analytic side prices attacks in hash evaluations times a per-hash
//! time `t`. The simulator drives the real protocol (server engine, solver,
//! client cache) with no network and charges the same unit: every puzzle
//! candidate the attacker or user hashes advances a virtual clock by `t`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::config::ServerConfig;
use crate::hashcodec::{hash_chain, HashConfig};
use crate::net::client::{Client, ClientError};
use crate::net::server::ServerEngine;
use crate::protocol::{
    make_response, solve_puzzle, verify_response, AuthResult, Challenge, ProtocolError, PuzzleParams, ServerKey, SolveError, Variant,
    VerifyOutcome,
};
use crate::userstore::{StoreError, UserRecord, UserStore};

/// 365-day year.
pub const SECONDS_PER_YEAR: f64 = 31_536_000.0;
/// 0.005 ms per hash.
pub const DEFAULT_T_PER_HASH: f64 = 5e-6;
pub const DEFAULT_GUESSES: u64 = 10_000_000;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("dictionary is empty")]
    EmptyDictionary,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("server refused a challenge: {0:?}")]
    Refused(crate::net::wire::ErrorCode),
    #[error("report output: {0}")]
    Output(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostInputs {
    pub k_bits: u32,
    pub t_per_hash: f64,
    pub n_guesses: u64,
}

impl Default for CostInputs {
    fn default() -> Self {
        CostInputs {
            k_bits: crate::protocol::DEFAULT_K_BITS,
            t_per_hash: DEFAULT_T_PER_HASH,
            n_guesses: DEFAULT_GUESSES,
        }
    }
}

fn space(k_bits: u32) -> f64 {
    assert!(k_bits <= 32, "puzzle width above 32 bits");
    (1u64 << k_bits) as f64
}

/// Worst-case client solve time, `2^k * t`.
pub fn max_solve_time(k_bits: u32, t: f64) -> f64 {
    space(k_bits) * t
}

/// Offline attack on a base-protocol transcript: recover `r` once from the
/// puzzle, then test each guess with one hash, `2^k * t + n * t`.
pub fn offline_attack_time_base(k_bits: u32, t: f64, n_guesses: u64) -> f64 {
    space(k_bits) * t + n_guesses as f64 * t
}

/// Offline attack on an offline-resistant transcript: every guess needs
/// its own puzzle search, `2^k * n * t`.
pub fn offline_attack_time_variant(k_bits: u32, t: f64, n_guesses: u64) -> f64 {
    space(k_bits) * n_guesses as f64 * t
}

pub fn seconds_to_years(secs: f64) -> f64 {
    secs / SECONDS_PER_YEAR
}

/// The three figures for one set of inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTable {
    pub inputs: CostInputs,
    pub max_solve_secs: f64,
    pub offline_base_secs: f64,
    pub offline_variant_secs: f64,
}

impl CostTable {
    pub fn new(inputs: CostInputs) -> Self {
        let CostInputs {
            k_bits,
            t_per_hash: t,
            n_guesses,
        } = inputs;
        CostTable {
            inputs,
            max_solve_secs: max_solve_time(k_bits, t),
            offline_base_secs: offline_attack_time_base(k_bits, t, n_guesses),
            offline_variant_secs: offline_attack_time_variant(k_bits, t, n_guesses),
        }
    }

    pub fn offline_variant_years(&self) -> f64 {
        seconds_to_years(self.offline_variant_secs)
    }

    /// Renders the table, optionally restricted to one offline row.
    pub fn render(&self, only: Option<Variant>) -> String {
        let mut out = String::new();
        let i = &self.inputs;
        out += &format!("{:<30}{}\n", "k_bits", i.k_bits);
        out += &format!("{:<30}{} s\n", "t_per_hash", fmt_decimal(i.t_per_hash));
        out += &format!("{:<30}{}\n", "guesses", i.n_guesses);
        out += &format!("{:<30}{} s\n", "max solve time", fmt_decimal(self.max_solve_secs));
        if only != Some(Variant::OfflineResistant) {
            out += &format!("{:<30}{} s\n", "offline attack (base)", fmt_decimal(self.offline_base_secs));
        }
        if only != Some(Variant::Base) {
            out += &format!(
                "{:<30}{} s = {:.4} yr\n",
                "offline attack (offline)",
                fmt_decimal(self.offline_variant_secs),
                self.offline_variant_years()
            );
        }
        out
    }
}

impl fmt::Display for CostTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(None))
    }
}

/// Twelve significant digits, trailing zeros dropped.
pub fn fmt_decimal(x: f64) -> String {
    let int_digits = if x.abs() >= 1.0 { x.abs().log10().floor() as usize + 1 } else { 1 };
    let decimals = 12usize.saturating_sub(int_digits);
    let s = format!("{x:.decimals$}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttemptResult {
    Success,
    Fail,
    /// Offline-resistant puzzle had no answer under the guessed password;
    /// the guess was discarded without contacting the server.
    Rejected,
}

impl fmt::Display for AttemptResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttemptResult::Success => "success",
            AttemptResult::Fail => "fail",
            AttemptResult::Rejected => "rejected",
        })
    }
}

impl From<AuthResult> for AttemptResult {
    fn from(r: AuthResult) -> Self {
        match r {
            AuthResult::Success => AttemptResult::Success,
            AuthResult::Fail => AttemptResult::Fail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRow {
    pub attempt: u64,
    pub solve_evals: u64,
    pub result: AttemptResult,
    pub cum_virtual_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub variant: Variant,
    pub k_bits: u32,
    pub t_per_hash: f64,
    pub attempts: u64,
    pub puzzle_solves: u64,
    pub challenges_issued: u64,
    pub total_hash_evals: u64,
    pub virtual_elapsed: f64,
    pub guesses_per_second: f64,
    pub success: bool,
    /// Failed guesses that could be reused: the rejected response still
    /// verified after the failure, or the next challenge repeated its MAC.
    pub free_guesses: u64,
    pub rows: Vec<AttemptRow>,
}

impl AttackReport {
    pub fn new(variant: Variant, k_bits: u32, t_per_hash: f64) -> Self {
        AttackReport {
            variant,
            k_bits,
            t_per_hash,
            attempts: 0,
            puzzle_solves: 0,
            challenges_issued: 0,
            total_hash_evals: 0,
            virtual_elapsed: 0.0,
            guesses_per_second: 0.0,
            success: false,
            free_guesses: 0,
            rows: Vec::new(),
        }
    }

    fn record(&mut self, solve_evals: u64, result: AttemptResult) {
        self.attempts += 1;
        self.total_hash_evals += solve_evals;
        self.virtual_elapsed = self.total_hash_evals as f64 * self.t_per_hash;
        self.guesses_per_second = if self.virtual_elapsed > 0.0 {
            self.attempts as f64 / self.virtual_elapsed
        } else {
            0.0
        };
        self.success |= result == AttemptResult::Success;
        self.rows.push(AttemptRow {
            attempt: self.attempts,
            solve_evals,
            result,
            cum_virtual_secs: self.virtual_elapsed,
        });
    }

    pub fn mean_solve_evals(&self) -> f64 {
        if self.puzzle_solves == 0 {
            0.0
        } else {
            self.total_hash_evals as f64 / self.puzzle_solves as f64
        }
    }
}

/// Simulation parameters shared by both simulators.
#[derive(Debug, Clone, Copy)]
pub struct SimSetup {
    pub params: PuzzleParams,
    pub t_per_hash: f64,
    pub seed: u64,
    pub hash: HashConfig,
}

impl SimSetup {
    pub fn new(params: PuzzleParams, seed: u64) -> Self {
        SimSetup {
            params,
            t_per_hash: DEFAULT_T_PER_HASH,
            seed,
            hash: HashConfig::default(),
        }
    }

    fn engine(&self, target: &UserRecord) -> Result<ServerEngine, SimError> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        let key = ServerKey::generate(&mut rng)?;
        let store = UserStore::in_memory(self.hash, self.params.k_bits());
        store.insert_record(target.clone())?;
        let mut config = ServerConfig::new(key, self.params);
        config.hash = self.hash;
        Ok(ServerEngine::with_rng(config, Arc::new(store), rng))
    }
}

fn fetch_challenge(engine: &ServerEngine, user_id: &str, report: &mut AttackReport) -> Result<Challenge, SimError> {
    report.challenges_issued += 1;
    match engine.issue(user_id) {
        Ok(ch) => Ok(ch),
        Err(ProtocolError::ChainExhausted(_)) => Err(SimError::Refused(crate::net::wire::ErrorCode::ChainExhausted)),
        Err(e) => Err(e.into()),
    }
}

/// Guesses passwords against `target` as an attacker who knows the
/// protocol: one fresh challenge per submitted guess (a failure moves the
/// counter and kills the old MAC), and for the offline-resistant variant
/// local rejection of guesses whose puzzle has no answer.
pub fn simulate_online_attack(
    dictionary: &[String],
    target: &UserRecord,
    setup: &SimSetup,
) -> Result<AttackReport, SimError> {
    if dictionary.is_empty() {
        return Err(SimError::EmptyDictionary);
    }
    let engine = setup.engine(target)?;
    let user = target.user_id();
    let variant = target.account.variant;
    let cfg = setup.hash;
    let mut report = AttackReport::new(variant, setup.params.k_bits(), setup.t_per_hash);
    let mut challenge: Option<Challenge> = None;
    let mut failed_mac = None;

    for guess in dictionary {
        let ch = match challenge.take() {
            Some(ch) => ch,
            None => {
                let ch = fetch_challenge(&engine, user, &mut report)?;
                if failed_mac.take() == Some(ch.mac) {
                    report.free_guesses += 1;
                }
                ch
            }
        };
        let pw = guess.as_bytes();
        let puzzle_pw = (variant == Variant::OfflineResistant).then_some(pw);
        report.puzzle_solves += 1;
        let solution = match solve_puzzle(&ch.puzzle_digest, &ch.salt, ch.k_bits, variant, puzzle_pw, cfg) {
            Ok(s) => s,
            Err(SolveError::NotFound { evaluations }) => {
                // Still valid: the server never heard about this guess.
                challenge = Some(ch);
                report.record(evaluations, AttemptResult::Rejected);
                continue;
            }
            Err(e) => return Err(ProtocolError::Codec(match e {
                SolveError::Codec(c) => c,
                other => unreachable!("solver preconditions hold: {other}"),
            })
            .into()),
        };
        let secret = match (variant, ch.chain_index) {
            (Variant::Lamport, Some(i)) => hash_chain(pw, i - 1, cfg),
            _ => pw.to_vec(),
        };
        let resp = make_response(variant, user, solution.r, &secret, ch.mac, cfg).map_err(ProtocolError::from)?;
        let result = engine.check(&resp)?;
        report.record(solution.evaluations, result.into());
        if result.is_success() {
            break;
        }
        // Pure re-check against the updated record: a spent guess must stay spent.
        let server = engine.config();
        if let Some(rec) = engine.store().get(user) {
            if matches!(
                verify_response(&rec.account, &resp, &server.key, server.hash),
                Ok(VerifyOutcome { result: AuthResult::Success, .. })
            ) {
                report.free_guesses += 1;
            }
        }
        failed_mac = Some(ch.mac);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoginEvent {
    Correct,
    Wrong,
}

/// Replays a legitimate user's logins through the real client, cache
/// included. Wrong events type a mistyped password.
pub fn simulate_legit_user(
    pattern: &[LoginEvent],
    target: &UserRecord,
    password: &str,
    setup: &SimSetup,
) -> Result<AttackReport, SimError> {
    let engine = setup.engine(target)?;
    let user = target.user_id();
    let variant = target.account.variant;
    let typo = format!("{password}#typo");
    let mut client = Client::new(setup.hash);
    let mut report = AttackReport::new(variant, setup.params.k_bits(), setup.t_per_hash);
    for event in pattern {
        let pw = match event {
            LoginEvent::Correct => password,
            LoginEvent::Wrong => typo.as_str(),
        };
        match client.login(&mut &engine, user, pw, variant) {
            Ok(login) => {
                report.puzzle_solves += login.puzzle_solves as u64;
                report.challenges_issued += login.puzzle_solves as u64;
                let result = login.result.map(AttemptResult::from).unwrap_or(AttemptResult::Fail);
                report.record(login.evaluations, result);
            }
            Err(ClientError::Puzzle(SolveError::NotFound { evaluations })) => {
                report.puzzle_solves += 1;
                report.challenges_issued += 1;
                report.record(evaluations, AttemptResult::Rejected);
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// `.json` means JSON; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }
}

pub const CSV_COLUMNS: [&str; 4] = ["attempt", "solve_evals", "result", "cum_virtual_secs"];

pub fn render_csv(report: &AttackReport) -> Result<String, SimError> {
    let out = |e: csv::Error| SimError::Output(e.to_string());
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).map_err(out)?;
    for row in &report.rows {
        w.serialize(row).map_err(out)?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::Output(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| SimError::Output(e.to_string()))
}

pub fn emit_report(report: &AttackReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<(), SimError> {
    let text = match format {
        ReportFormat::Csv => render_csv(report)?,
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).map_err(|e| SimError::Output(e.to_string()))? + "\n"
        }
    };
    fs::write(path.as_ref(), text).map_err(|e| SimError::Output(format!("{}: {e}", path.as_ref().display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn max_solve_examples() {
        assert!(rel(max_solve_time(20, 5e-6), 5.24288) < 1e-12);
        assert_eq!(max_solve_time(0, 0.25), 0.25);
        assert!(rel(max_solve_time(10, 1e-3), 1.024) < 1e-12);
    }

    #[test]
    fn offline_examples() {
        assert!(rel(offline_attack_time_base(20, 5e-6, 10_000_000), 55.24288) < 1e-12);
        assert_eq!(offline_attack_time_base(7, 1e-3, 0), max_solve_time(7, 1e-3));
        assert!(rel(offline_attack_time_base(20, 5e-6, 1), 5.242885) < 1e-12);
        let secs = offline_attack_time_variant(20, 5e-6, 10_000_000);
        assert!(rel(secs, 52_428_800.0) < 1e-12);
        assert_eq!(format!("{:.4}", seconds_to_years(secs)), "1.6625");
        assert_eq!(offline_attack_time_variant(9, 2e-6, 1), max_solve_time(9, 2e-6));
    }

    #[test]
    fn decimal_formatting() {
        assert_eq!(fmt_decimal(5.24288), "5.24288");
        assert_eq!(fmt_decimal(55.24288000000001), "55.24288");
        assert_eq!(fmt_decimal(52_428_800.00000001), "52428800");
        assert_eq!(fmt_decimal(5e-6), "0.000005");
    }

    #[test]
    fn table_rows() {
        let table = CostTable::new(CostInputs::default()).render(None);
        assert!(table.contains("5.24288 s"), "{table}");
        assert!(table.contains("55.24288 s"));
        assert!(table.contains("52428800 s = 1.6625 yr"));
        let base_only = CostTable::new(CostInputs::default()).render(Some(Variant::Base));
        assert!(!base_only.contains(" yr"));
    }

    fn report_with(rows: usize) -> AttackReport {
        let mut r = AttackReport::new(Variant::Base, 4, 0.5);
        for i in 0..rows {
            r.puzzle_solves += 1;
            r.record(i as u64 + 1, if i + 1 == rows { AttemptResult::Success } else { AttemptResult::Fail });
        }
        r
    }

    #[test]
    fn csv_shapes() {
        assert_eq!(render_csv(&report_with(0)).unwrap(), "attempt,solve_evals,result,cum_virtual_secs\n");
        let csv = render_csv(&report_with(3)).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "1,1,fail,0.5");
        assert_eq!(lines[3], "3,3,success,3.0");
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let mut report = report_with(3);
        report.t_per_hash = 5e-6;
        report.record(4097, AttemptResult::Fail);
        emit_report(&report, ReportFormat::from_path(&path), &path).unwrap();
        let back: AttackReport = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn clock_is_evals_times_t() {
        let r = report_with(5);
        assert_eq!(r.virtual_elapsed, r.total_hash_evals as f64 * r.t_per_hash);
        assert_eq!(r.total_hash_evals, 15);
    }

    fn enrolled(variant: Variant, pw: &str) -> UserRecord {
        UserStore::default().enroll("alice", pw, variant, 100).unwrap()
    }

    #[test]
    fn immediate_hit() {
        for variant in Variant::ALL {
            let target = enrolled(variant, "hunter2");
            let setup = SimSetup::new(PuzzleParams::new(8).unwrap(), 1);
            let report = simulate_online_attack(&["hunter2".to_string()], &target, &setup).unwrap();
            assert_eq!(report.attempts, 1, "{variant}");
            assert!(report.success);
            assert!(report.total_hash_evals <= 256);
        }
    }

    #[test]
    fn empty_dictionary() {
        let setup = SimSetup::new(PuzzleParams::new(4).unwrap(), 1);
        assert!(matches!(
            simulate_online_attack(&[], &enrolled(Variant::Base, "x"), &setup),
            Err(SimError::EmptyDictionary)
        ));
    }

    #[test]
    fn offline_variant_rejects_locally() {
        let target = enrolled(Variant::OfflineResistant, "pw");
        let setup = SimSetup::new(PuzzleParams::new(6).unwrap(), 2);
        let dict: Vec<String> = ["a", "b", "c", "pw"].iter().map(|s| s.to_string()).collect();
        let report = simulate_online_attack(&dict, &target, &setup).unwrap();
        assert!(report.success);
        assert_eq!(report.challenges_issued, 1);
        assert_eq!(report.rows[..3].iter().map(|r| r.solve_evals).collect::<Vec<_>>(), vec![64; 3]);
        assert!(report.rows[..3].iter().all(|r| r.result == AttemptResult::Rejected));
    }

    #[test]
    fn legit_patterns() {
        use LoginEvent::*;
        let setup = SimSetup::new(PuzzleParams::new(8).unwrap(), 5);
        let base = enrolled(Variant::Base, "pw");
        assert_eq!(simulate_legit_user(&[Correct; 10], &base, "pw", &setup).unwrap().puzzle_solves, 1);
        let r = simulate_legit_user(&[Correct, Wrong, Correct], &base, "pw", &setup).unwrap();
        assert_eq!(r.puzzle_solves, 2);
        assert_eq!(
            r.rows.iter().map(|r| r.result).collect::<Vec<_>>(),
            vec![AttemptResult::Success, AttemptResult::Fail, AttemptResult::Success]
        );
        let lamport = enrolled(Variant::Lamport, "pw");
        let r = simulate_legit_user(&[Correct; 10], &lamport, "pw", &setup).unwrap();
        assert_eq!(r.puzzle_solves, 10);
        assert!(r.rows.iter().all(|r| r.result == AttemptResult::Success));
    }
}
