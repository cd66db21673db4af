//! Acceptance criteria 1 to 8, one PASS/FAIL line each.

mod common;

use mandala_core::bytecode;
use mandala_core::corpus::{self, INITIAL_SUPPLY, LISTINGS, NEGATIVE};
use mandala_core::runtime::{Runtime, Status};
use mandala_core::syntax::{parse_source, pretty_print};

const FUZZ_SEED: u64 = 0x6d61_6e64_616c_61;
const MUTATION_SEED: u64 = 0x6d75_7461_6e74;

struct Outcome {
    ok: bool,
    detail: String,
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome { ok: false, detail: detail.into() }
}

fn check(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn c1_deploy() -> Outcome {
    let mut rt = Runtime::new();
    let receipts = match corpus::deploy_listings(&mut rt, "alice") {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let purse = corpus::render_purse(&rt, "alice");
    let all_ok = receipts.iter().all(|r| r.is_ok());
    check(
        all_ok && purse.as_deref() == Some("Token[MyToken](100000000)"),
        format!("{} modules deployed, alice holds {}", receipts.len(), purse.unwrap_or_else(|| "nothing".into())),
    )
}

fn c2_transfer_and_conservation() -> Outcome {
    let mut rt = Runtime::new();
    let g = match corpus::golden(&mut rt) {
        Ok(g) => g,
        Err(e) => return fail(e),
    };
    if !(g.transfer.is_ok() && g.alice == 99_999_750 && g.bob == 250) {
        return fail(format!("transfer gave {} / {}: {}", g.alice, g.bob, g.transfer.line()));
    }
    let mut rt = common::deployed();
    let rep = common::fuzz(&mut rt, FUZZ_SEED, 200);
    check(
        rep.supply_breaks == 0 && rep.txs == 200,
        format!(
            "99999750/250; supply {INITIAL_SUPPLY} held after all {} fuzz transactions ({} breaks)",
            rep.txs, rep.supply_breaks
        ),
    )
}

fn c3_negative_corpus() -> Outcome {
    let rt = match corpus::negative_fixture() {
        Ok(rt) => rt,
        Err(e) => return fail(e),
    };
    let mut wrong = Vec::new();
    for (file, code, src) in NEGATIVE {
        let got = corpus::diagnostic_codes(src, &rt.state.registry);
        if got != [code] {
            wrong.push(format!("{file}: expected {code}, got {got:?}"));
        }
    }
    check(
        wrong.is_empty() && NEGATIVE.len() >= 14,
        if wrong.is_empty() {
            format!("{} programs, each rejected with exactly its code", NEGATIVE.len())
        } else {
            wrong.join("; ")
        },
    )
}

fn c4_rollback() -> Outcome {
    let mut rt = common::deployed();
    let before = rt.digest();
    let r = corpus::transfer(&mut rt, "bob", "alice", 1).expect("accepted");
    if r.status != Status::Error(mandala_core::types::Risk::NumericUnderflow) || r.digest != before {
        return fail(format!("underflowing withdraw: {}", r.line()));
    }
    let rep = common::fuzz(&mut rt, FUZZ_SEED ^ 1, 200);
    check(
        rep.rollback_breaks == 0 && rep.errors > 0,
        format!("{} error receipts in the fuzz run, {} changed the digest", rep.errors, rep.rollback_breaks),
    )
}

fn c5_gas() -> Outcome {
    let mut rt = common::deployed();
    let mut golden = Runtime::new();
    if let Err(e) = corpus::golden(&mut golden) {
        return fail(e);
    }
    let rep = common::fuzz(&mut rt, FUZZ_SEED, 200);
    let (checked, bad) = common::audit_bounds(&rt);
    let violations = rt.stats.gas_violations + golden.stats.gas_violations + rep.gas_breaks as u64;
    check(
        violations == 0 && bad.is_empty() && checked > 0,
        format!(
            "{} invocations within bounds ({violations} over); {checked} bounds checked against path enumeration, {} disagree {:?}",
            rt.stats.invocations + golden.stats.invocations,
            bad.len(),
            bad
        ),
    )
}

fn c6_replay() -> Outcome {
    let run = || {
        let mut rt = common::deployed();
        let mut lines: Vec<String> = Vec::new();
        let g = corpus::transfer(&mut rt, "alice", "bob", 250).map(|r| r.line());
        lines.push(format!("{g:?}"));
        let rep = common::fuzz(&mut rt, FUZZ_SEED, 200);
        lines.extend(rep.lines);
        (lines, rep.final_digest)
    };
    let (a, da) = run();
    let (b, db) = run();
    check(a == b && da == db, format!("{} receipts identical, final digest {}", a.len(), hex::encode(da)))
}

fn c7_reentrancy() -> Outcome {
    let mut rt = common::deployed();
    corpus::transfer(&mut rt, "alice", "bob", 250).expect("accepted");
    common::fuzz(&mut rt, FUZZ_SEED, 200);
    let order = common::call_graph_order(&rt.state.registry);
    check(
        rt.stats.reentrancy_violations == 0 && order.is_some(),
        format!(
            "{} reentrancy assertions fired; call graph of {} functions {}",
            rt.stats.reentrancy_violations,
            order.as_ref().map_or(0, Vec::len),
            if order.is_some() { "sorts topologically" } else { "has a cycle" }
        ),
    )
}

fn c8_round_trips() -> Outcome {
    let mut problems = Vec::new();
    let mut rt = Runtime::new();
    for (file, src) in LISTINGS.iter().copied().chain([corpus::TELLER]) {
        let ast = parse_source(src).unwrap();
        let printed = pretty_print(&ast);
        match parse_source(&printed) {
            Ok(again) if pretty_print(&again) == printed => {}
            _ => problems.push(format!("{file}: print/parse")),
        }
        let (m, bytes) = corpus::compile_source(src, &rt.state.registry).unwrap();
        if bytecode::decode(&bytes).as_ref() != Ok(&m) || bytecode::encode(&m) != bytes {
            problems.push(format!("{file}: encode/decode"));
        }
        rt.deploy(&bytes, Some("alice")).unwrap();
    }
    let rep = common::mutation_audit(MUTATION_SEED, 200);
    for d in &rep.accepted_divergent {
        problems.push(format!("mutant {d:?}"));
    }
    check(
        problems.is_empty(),
        format!(
            "round trips hold; {} mutants: {} rejected, {} accepted and equivalent, {} accepted and divergent{}",
            rep.mutants,
            rep.rejected,
            rep.accepted_equivalent,
            rep.accepted_divergent.len(),
            if problems.is_empty() { String::new() } else { format!(": {}", problems.join("; ")) }
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 corpus deploys", c1_deploy),
        ("2 transfer and conservation", c2_transfer_and_conservation),
        ("3 negative corpus", c3_negative_corpus),
        ("4 rollback exactness", c4_rollback),
        ("5 gas soundness", c5_gas),
        ("6 replay determinism", c6_replay),
        ("7 no reentrancy", c7_reentrancy),
        ("8 round trips and mutation audit", c8_round_trips),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let o = f();
        println!("{} criterion {name}: {}", if o.ok { "PASS" } else { "FAIL" }, o.detail);
        if !o.ok {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
