//! Source to validated bytecode to execution, end to end.

use mandala_core::bytecode;
use mandala_core::corpus::{self, deploy_extra, deploy_listings, teller_request, total_supply, TELLER};
use mandala_core::registry::MemoryRegistry;
use mandala_core::runtime::{Runtime, Status};
use mandala_core::sema;
use mandala_core::types::Risk;
use mandala_core::validator;

const CORPUS: [&str; 4] = ["token", "purse", "purse_storage", "my_fix_supply_token"];

fn corpus_file(name: &str) -> String {
    std::fs::read_to_string(format!("{}/corpus/{name}.mdl", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn corpus_files_match_the_embedded_listings_and_validate_in_order() {
    let mut reg = MemoryRegistry::new();
    for (name, (_, embedded)) in CORPUS.iter().zip(corpus::LISTINGS) {
        let src = corpus_file(name);
        assert_eq!(src, embedded, "{name}");
        let (_, tm) = sema::check_source(&src, &reg)
            .unwrap_or_else(|d| panic!("{}", corpus::render_diags(name, &d)));
        let bc = bytecode::compile(&tm);
        let bytes = bytecode::encode(&bc);
        assert_eq!(bytecode::decode(&bytes).unwrap(), bc);
        let vm = validator::validate(&bytes, &reg).unwrap_or_else(|r| panic!("{name}: {r}"));
        reg.insert(&vm, bytes);
    }
}

#[test]
fn golden_deploys_all_succeed() {
    let mut rt = Runtime::new();
    let g = corpus::golden(&mut rt).unwrap();
    assert_eq!(g.deploys.len(), 4);
    assert!(g.deploys.iter().all(|r| r.is_ok()));
    assert_eq!(rt.stats.faults, 0);
    assert_eq!(rt.stats.gas_violations, 0);
}

#[test]
fn teller_moves_tokens_and_keeps_the_supply() {
    let mut rt = Runtime::new();
    deploy_listings(&mut rt, "alice").unwrap();
    assert!(deploy_extra(&mut rt, TELLER).unwrap().is_ok());
    let mut run = |f: &str, amount: i64| rt.call(&teller_request(&rt, f, "alice", amount).unwrap()).unwrap().0;
    assert!(run("stash", 40).is_ok());
    assert!(run("unstash", 15).is_ok());
    assert_eq!(run("unstash", 100).status, Status::Error(Risk::NumericUnderflow));
    assert_eq!(run("stash", -3).status, Status::Error(Risk::NumericUnderflow));
    assert_eq!(corpus::balance(&rt, "alice"), Some(100_000_000 - 25));
    assert_eq!(total_supply(&rt), 100_000_000);
}
