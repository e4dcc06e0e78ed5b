use std::sync::Arc;

use compchall::config::ServerConfig;
use compchall::hashcodec::HashConfig;
use compchall::net::{Client, ServerEngine};
use compchall::protocol::{AuthResult, FailCounter, PuzzleParams, SecretMaterial, ServerKey, Variant};
use compchall::userstore::{FaultPoint, StoreError, UserStore};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn engine(store: Arc<UserStore>, seed: u64) -> ServerEngine {
    let config = ServerConfig::new(ServerKey::from_bytes([3; 32]), PuzzleParams::new(6).unwrap());
    ServerEngine::with_rng(config, store, ChaCha20Rng::seed_from_u64(seed))
}

fn enroll(store: &UserStore) {
    store.enroll("alice", "pw-a", Variant::Base, 0).unwrap();
    store.enroll("bob", "pw-b", Variant::Lamport, 8).unwrap();
}

const SCRIPT: [(&str, &str, Variant); 6] = [
    ("alice", "pw-a", Variant::Base),
    ("alice", "nope", Variant::Base),
    ("bob", "pw-b", Variant::Lamport),
    ("bob", "pw-x", Variant::Lamport),
    ("alice", "pw-a", Variant::Base),
    ("bob", "pw-b", Variant::Lamport),
];

#[test]
fn file_backing_is_transparent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("users.store");
    let cfg = HashConfig::default();

    let memory = Arc::new(UserStore::in_memory(cfg, 6));
    enroll(&memory);
    let mem_engine = engine(Arc::clone(&memory), 1);
    let mut mem_client = Client::new(cfg);
    let mem_results: Vec<_> = SCRIPT
        .iter()
        .map(|(u, p, v)| mem_client.login(&mut &mem_engine, u, p, *v).unwrap().result)
        .collect();

    enroll(&UserStore::open(&path, cfg, 6).unwrap());
    let mut file_client = Client::new(cfg);
    let mut file_results = Vec::new();
    for (i, (u, p, v)) in SCRIPT.iter().enumerate() {
        // A fresh store and engine per login: only the file carries state.
        let store = Arc::new(UserStore::load(&path, cfg).unwrap());
        let e = engine(store, 1 + i as u64);
        file_results.push(file_client.login(&mut &e, u, p, *v).unwrap().result);
    }

    assert_eq!(mem_results, file_results);
    assert_eq!(
        mem_results,
        [true, false, true, false, true, true].map(|ok| Some(if ok { AuthResult::Success } else { AuthResult::Fail }))
    );
    let reloaded = UserStore::load(&path, cfg).unwrap();
    for user in ["alice", "bob"] {
        assert_eq!(memory.get(user).unwrap().account, reloaded.get(user).unwrap().account, "{user}");
    }
    assert_eq!(reloaded.get("alice").unwrap().account.n, FailCounter(1));
}

#[test]
fn torn_write_leaves_previous_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("users.store");
    let cfg = HashConfig::default();
    let store = Arc::new(UserStore::open(&path, cfg, 6).unwrap());
    enroll(&store);
    let before = std::fs::read(&path).unwrap();

    let e = engine(Arc::clone(&store), 9);
    store.inject_fault(Some(FaultPoint::TornWriteBeforeRename));
    let mut client = Client::new(cfg);
    // A failed commit surfaces as an internal error, never as a verdict.
    let err = client.login(&mut &e, "bob", "pw-b", Variant::Lamport).unwrap_err();
    assert!(err.to_string().contains("internal"), "{err}");
    assert_eq!(std::fs::read(&path).unwrap(), before);
    assert!(matches!(
        store.get("bob").unwrap().account.secret,
        SecretMaterial::Chain { index: 8, .. }
    ));

    // Crash and restart: the file still parses and holds the old state.
    drop(e);
    drop(store);
    let recovered = Arc::new(UserStore::load(&path, cfg).unwrap());
    assert!(matches!(
        recovered.get("bob").unwrap().account.secret,
        SecretMaterial::Chain { index: 8, .. }
    ));
    let e = engine(Arc::clone(&recovered), 10);
    assert!(client.login(&mut &e, "bob", "pw-b", Variant::Lamport).unwrap().succeeded());
    assert!(matches!(
        UserStore::load(&path, cfg).unwrap().get("bob").unwrap().account.secret,
        SecretMaterial::Chain { index: 7, .. }
    ));
}

#[test]
fn enrollment_fault_is_reported() {
    let store = UserStore::in_memory(HashConfig::default(), 6);
    store.inject_fault(Some(FaultPoint::TornWriteBeforeRename));
    assert!(matches!(
        store.enroll("alice", "pw", Variant::Base, 0),
        Err(StoreError::InjectedFault)
    ));
    assert!(store.get("alice").is_none());
}

mod transparency {
    use compchall::hashcodec::HashConfig;
    use compchall::protocol::{
        build_challenge, lamport_prev, make_response, solve_puzzle, verify_response, AuthResult,
        PuzzleParams, ServerKey, StateDelta, Variant, VerifyOutcome,
    };
    use compchall::userstore::UserStore;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn verdicts_survive_save_and_load(
            variant in prop_oneof![Just(Variant::Base), Just(Variant::Lamport), Just(Variant::OfflineResistant)],
            failures in 0u64..4,
            typed_right in any::<bool>(),
            r in 0u32..16,
            salt in any::<[u8; 16]>(),
        ) {
            let cfg = HashConfig::default();
            let key = ServerKey::from_bytes([6; 32]);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("users.store");
            let store = UserStore::open(&path, cfg, 4).unwrap();
            store.enroll("user", "pw", variant, 6).unwrap();
            let fail = VerifyOutcome { result: AuthResult::Fail, delta: StateDelta::IncrementN };
            for _ in 0..failures {
                store.with_record("user", |_| ((), Some(fail.clone()))).unwrap();
            }
            let account = store.get("user").unwrap().account;
            prop_assert_eq!(account.n.0, failures);

            let ch = build_challenge(&account, r, salt, PuzzleParams::new(4).unwrap(), &key, cfg).unwrap();
            let pw: &[u8] = if typed_right { b"pw" } else { b"px" };
            let puzzle_pw = (variant == Variant::OfflineResistant).then_some(b"pw".as_slice());
            let sol = solve_puzzle(&ch.puzzle_digest, &ch.salt, 4, variant, puzzle_pw, cfg).unwrap();
            let secret = match variant {
                Variant::Lamport => lamport_prev(pw, ch.chain_index.unwrap(), cfg).unwrap(),
                _ => pw.to_vec(),
            };
            let resp = make_response(variant, "user", sol.r, &secret, ch.mac, cfg).unwrap();

            let before = verify_response(&account, &resp, &key, cfg).unwrap();
            let loaded = UserStore::load(&path, cfg).unwrap().get("user").unwrap().account;
            let after = verify_response(&loaded, &resp, &key, cfg).unwrap();
            prop_assert_eq!(before.clone(), after);
            prop_assert_eq!(before.result.is_success(), typed_right);
        }
    }
}
