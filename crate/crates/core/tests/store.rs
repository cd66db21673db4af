mod common;

use std::fs;

use mandala_core::corpus::{self, compile_source, LISTINGS, TELLER};
use mandala_core::ledger::{genesis_digest, CrashPoint, LedgerError, LedgerState, Store};
use mandala_core::runtime::value::Value;
use mandala_core::registry::Registry;
use mandala_core::runtime::Receipt;

/// SHA-256 of the state tag followed by five zero map counts.
const GENESIS: &str = "50560611aae1b6a8cd5d963c5593c4eb6ac70d0b46075cc08bd012cbb1d03b02";

fn deploy_all(store: &mut Store) -> Vec<Receipt> {
    let mut out = Vec::new();
    for (_, src) in LISTINGS.iter().copied().chain([TELLER]) {
        let (_, bytes) = compile_source(src, &store.state().registry).unwrap();
        out.push(store.deploy(&bytes, Some("alice")).unwrap());
    }
    out
}

fn transfer(store: &mut Store, from: &str, to: &str, amount: i64) -> Receipt {
    let req = corpus::transfer_request(&store.runtime, from, to, amount, Some(from)).unwrap();
    store.call(&req).unwrap()
}

#[test]
fn fresh_store_has_the_genesis_digest() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.runtime.digest(), genesis_digest());
    assert_eq!(hex::encode(genesis_digest()), GENESIS);
    let mut empty = b"mandala-state/1".to_vec();
    empty.extend([0u8; 20]);
    assert_eq!(hex::encode(<sha2::Sha256 as sha2::Digest>::digest(&empty)), GENESIS);
    for sub in ["modules", "LOCK", "wal.log"] {
        assert!(dir.path().join(sub).exists(), "{sub}");
    }
}

#[test]
fn reopen_after_ten_transactions_matches_the_last_receipt() {
    let dir = tempfile::tempdir().unwrap();
    let last = {
        let mut store = Store::open(dir.path()).unwrap();
        deploy_all(&mut store);
        let mut last = None;
        for i in 0..10 {
            last = Some(transfer(&mut store, "alice", corpus_user(i), 10 + i as i64));
        }
        last.unwrap()
    };
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.runtime.digest(), last.digest);
    assert_eq!(corpus::balance(&store.runtime, "bob"), Some(10 + 13 + 16 + 19));
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert_eq!(manifest.lines().count(), 5);
    for (_, a) in store.state().registry.module_names() {
        assert!(dir.path().join("modules").join(format!("{}.mdlc", a.to_hex())).exists());
    }
}

fn corpus_user(i: usize) -> &'static str {
    common::USERS[1 + i % 3]
}

#[test]
fn snapshots_and_log_replay_agree_with_memory() {
    let dir = tempfile::tempdir().unwrap();
    let mut mem = common::deployed();
    let requests = common::fuzz_requests(&mut mem, 99, 150);
    {
        let mut store = Store::open(dir.path()).unwrap();
        deploy_all(&mut store);
        for req in &requests {
            let _ = store.call(req);
        }
        assert_eq!(store.runtime.digest(), mem.digest());
        assert!(dir.path().join("snapshot.bin").exists());
    }
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.runtime.digest(), mem.digest());
    assert_eq!(store.state().tx_counter(), mem.state.tx_counter());
}

#[test]
fn truncated_log_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    {
        let mut store = Store::open(dir.path()).unwrap();
        deploy_all(&mut store);
        transfer(&mut store, "alice", "bob", 5);
    }
    let wal = dir.path().join("wal.log");
    let bytes = fs::read(&wal).unwrap();
    fs::write(&wal, &bytes[..bytes.len() - 7]).unwrap();
    match Store::open(dir.path()) {
        Err(LedgerError::Corrupt(d)) => assert!(d.contains("truncated"), "{d}"),
        other => panic!("expected StoreCorrupt, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn flipped_log_byte_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    {
        let mut store = Store::open(dir.path()).unwrap();
        deploy_all(&mut store);
    }
    let wal = dir.path().join("wal.log");
    let mut bytes = fs::read(&wal).unwrap();
    let at = bytes.len() / 2;
    bytes[at] ^= 0x40;
    fs::write(&wal, &bytes).unwrap();
    let err = Store::open(dir.path()).err().expect("corrupt");
    assert!(err.to_string().starts_with("StoreCorrupt("), "{err}");
}

#[test]
fn crash_before_the_log_write_leaves_a_clean_state() {
    let dir = tempfile::tempdir().unwrap();
    let before = {
        let mut store = Store::open(dir.path()).unwrap();
        deploy_all(&mut store);
        let before = store.runtime.digest();
        store.inject_crash(CrashPoint::BeforeWal);
        let req = corpus::transfer_request(&store.runtime, "alice", "bob", 7, Some("alice")).unwrap();
        assert!(matches!(store.call(&req), Err(LedgerError::Crashed)));
        before
    };
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.runtime.digest(), before);
    assert_eq!(corpus::balance(&store.runtime, "bob"), Some(0));
}

#[test]
fn crash_after_the_log_write_keeps_the_transaction() {
    let dir = tempfile::tempdir().unwrap();
    let after = {
        let mut store = Store::open(dir.path()).unwrap();
        deploy_all(&mut store);
        store.inject_crash(CrashPoint::AfterWal);
        let req = corpus::transfer_request(&store.runtime, "alice", "bob", 7, Some("alice")).unwrap();
        assert!(matches!(store.call(&req), Err(LedgerError::Crashed)));
        store.runtime.digest()
    };
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.runtime.digest(), after);
    assert_eq!(corpus::balance(&store.runtime, "bob"), Some(7));
}

#[test]
fn second_writer_is_locked_out() {
    let dir = tempfile::tempdir().unwrap();
    let _first = Store::open(dir.path()).unwrap();
    assert!(matches!(Store::open(dir.path()), Err(LedgerError::Locked)));
}

#[test]
fn rejected_transactions_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path()).unwrap();
    deploy_all(&mut store);
    let len = fs::metadata(dir.path().join("wal.log")).unwrap().len();
    let mut req = corpus::transfer_request(&store.runtime, "alice", "bob", 7, None).unwrap();
    assert!(store.call(&req).is_err());
    req.signer = Some("alice".into());
    req.gas_limit = Some(1);
    assert!(store.call(&req).is_err());
    assert_eq!(fs::metadata(dir.path().join("wal.log")).unwrap().len(), len);
}

#[test]
fn digest_ignores_insertion_order_and_sees_every_byte() {
    let mut a = LedgerState::new();
    let mut b = LedgerState::new();
    let keys: Vec<[u8; 32]> = (0..5u8).map(|i| [i; 32]).collect();
    a.begin();
    for (i, k) in keys.iter().enumerate() {
        a.write_cell(*k, Value::uint(i as u64));
    }
    a.commit();
    b.begin();
    for (i, k) in keys.iter().enumerate().rev() {
        b.write_cell(*k, Value::uint(i as u64));
    }
    b.commit();
    assert_eq!(a.digest(), b.digest());
    b.begin();
    b.write_cell(keys[2], Value::uint(3));
    b.commit();
    assert_ne!(a.digest(), b.digest());
}

#[test]
fn abort_and_empty_commit_keep_the_digest() {
    let mut s = LedgerState::new();
    let d0 = s.digest();
    s.begin();
    for i in 0..3u8 {
        s.write_cell([i; 32], Value::uint(1));
    }
    s.abort();
    assert_eq!(s.digest(), d0);
    s.begin();
    let rec = s.commit();
    assert!(rec.cells.is_empty());
    assert_eq!(s.digest(), d0);
    s.begin();
    s.write_cell([9; 32], Value::uint(1));
    s.commit();
    let d1 = s.digest();
    s.begin();
    s.write_cell([9; 32], Value::uint(2));
    s.write_cell([9; 32], Value::uint(1));
    s.commit();
    assert_eq!(s.digest(), d1);
}

#[test]
#[should_panic(expected = "without Persist")]
fn ledger_refuses_non_persist_cells() {
    let mut s = LedgerState::new();
    s.begin();
    let v = Value::new(mandala_core::runtime::value::ValueKind::UInt(1), mandala_core::types::CapSet::new());
    s.write_cell([0; 32], v);
}
