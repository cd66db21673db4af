mod common;

use mandala_core::corpus::{self, compile_source};
use mandala_core::runtime::{Arg, CallRequest, Runtime, Status, TxError};
use mandala_core::types::Risk;

const MAX: &str = "18446744073709551615";

fn deploy_src(rt: &mut Runtime, src: &str, signer: Option<&str>) -> Result<mandala_core::runtime::Receipt, TxError> {
    let (_, bytes) = compile_source(src, &rt.state.registry).unwrap_or_else(|d| panic!("{}", corpus::render_diags("src", &d)));
    rt.deploy(&bytes, signer).map(|(r, _)| r)
}

fn call(rt: &mut Runtime, module: &str, function: &str, args: Vec<Arg>) -> Result<mandala_core::runtime::Receipt, TxError> {
    let req = CallRequest {
        module: corpus::address_of(rt, module).unwrap(),
        function: function.into(),
        type_args: vec![],
        args,
        signer: None,
        gas_limit: None,
    };
    rt.call(&req).map(|(r, _)| r)
}

#[test]
fn golden_transfer_receipt_is_frozen() {
    let mut rt = Runtime::new();
    let g = corpus::golden(&mut rt).unwrap();
    assert_eq!(g.purse_after_deploy.as_deref(), Some("Token[MyToken](100000000)"));
    assert_eq!((g.alice, g.bob), (99_999_750, 250));
    assert_eq!(
        g.transfer.line(),
        "ok 656 670 00aa34075ee2b828be5fb3228f7c6b2edee3bba8540ddce6e5c27074005fe777 ()"
    );
    assert_eq!(g.deploys[3].line().split(' ').take(3).collect::<Vec<_>>(), ["ok", "366", "366"]);
    assert_eq!(corpus::total_supply(&rt), 100_000_000);
}

#[test]
fn overflowing_init_discards_the_deployment() {
    let mut rt = Runtime::new();
    for (_, src) in &corpus::LISTINGS[..3] {
        deploy_src(&mut rt, src, None).unwrap();
    }
    let before = rt.digest();
    let src = format!(
        "module MyOverflowToken {{
           public type MyToken
           public val defaultStore = Store[MyToken](Context.new[Token[MyToken]]())
           risk NumericOverflow
           init(deployer: Master ID) =>
             let u = deposit(getMyPurse(deployer, defaultStore), mint[MyToken]({MAX})) in
             deposit(getMyPurse(deployer, defaultStore), mint[MyToken]({MAX}))
         }}"
    );
    let err = deploy_src(&mut rt, &src, Some("alice")).unwrap_err();
    assert_eq!(err, TxError::DeployFailed(Risk::NumericOverflow));
    assert_eq!(err.to_string(), "DeployError(NumericOverflow)");
    assert_eq!(rt.digest(), before);
    assert!(corpus::address_of(&rt, "MyOverflowToken").is_none());
}

#[test]
fn merge_at_the_top_overflows() {
    let mut rt = Runtime::new();
    corpus::deploy_listings(&mut rt, "alice").unwrap();
    deploy_src(
        &mut rt,
        &format!(
            "module MergeProbe {{
               type Drop Persist Probe
               risk NumericOverflow
               public over() => merge(mint[Probe]({MAX}), mint[Probe](1))
               risk NumericOverflow
               public fine() => merge(mint[Probe]({MAX}), mint[Probe](0))
             }}"
        ),
        None,
    )
    .unwrap();
    let before = rt.digest();
    let r = call(&mut rt, "MergeProbe", "over", vec![]).unwrap();
    assert_eq!(r.status, Status::Error(Risk::NumericOverflow));
    assert_eq!(r.digest, before);
    let r = call(&mut rt, "MergeProbe", "fine", vec![]).unwrap();
    assert_eq!(r.ret, format!("Token[Probe]({MAX})"));
}

#[test]
fn transfer_from_an_empty_purse_underflows_without_a_trace() {
    let mut rt = Runtime::new();
    corpus::golden(&mut rt).unwrap();
    let before = rt.digest();
    let r = corpus::transfer(&mut rt, "carol", "bob", 1).unwrap();
    assert_eq!(r.status, Status::Error(Risk::NumericUnderflow));
    assert_eq!(r.digest, before);
    assert_eq!(r.ret, "-");
    assert!(r.gas_used <= r.gas_bound);
}

#[test]
fn negative_amounts_fail_the_conversion() {
    let mut rt = Runtime::new();
    corpus::golden(&mut rt).unwrap();
    let before = rt.digest();
    let r = corpus::transfer(&mut rt, "alice", "bob", -1).unwrap();
    assert_eq!(r.status, Status::Error(Risk::NumericUnderflow));
    assert_eq!(r.digest, before);
}

#[test]
fn transactions_are_rejected_before_running() {
    let mut rt = Runtime::new();
    corpus::golden(&mut rt).unwrap();
    let before = rt.digest();
    let counter = rt.state.tx_counter();

    let mut req = corpus::transfer_request(&rt, "alice", "bob", 1, None).unwrap();
    assert_eq!(rt.call(&req).unwrap_err(), TxError::MissingSigner);

    req.signer = Some("bob".into());
    assert!(matches!(rt.call(&req).unwrap_err(), TxError::SignerMismatch(_)));

    req.signer = Some("alice".into());
    req.gas_limit = Some(0);
    assert_eq!(rt.call(&req).unwrap_err(), TxError::InsufficientGasLimit { limit: 0, bound: 670 });
    req.gas_limit = Some(669);
    assert!(matches!(rt.call(&req).unwrap_err(), TxError::InsufficientGasLimit { .. }));

    let mut bad = req.clone();
    bad.function = "nope".into();
    assert!(matches!(rt.call(&bad).unwrap_err(), TxError::UnknownFunction(_)));
    bad.function = "transfer".into();
    bad.args[3] = Arg::Unit;
    assert!(matches!(rt.call(&bad).unwrap_err(), TxError::TypeMismatch(_)));
    bad.args.pop();
    assert!(matches!(rt.call(&bad).unwrap_err(), TxError::TypeMismatch(_)));
    bad = req.clone();
    bad.type_args.clear();
    assert!(matches!(rt.call(&bad).unwrap_err(), TxError::TypeMismatch(_)));

    assert_eq!(rt.digest(), before);
    assert_eq!(rt.state.tx_counter(), counter);

    req.gas_limit = Some(670);
    assert!(rt.call(&req).unwrap().0.is_ok());
}

#[test]
fn protected_functions_are_not_entry_points_and_mint_is_not_public() {
    let mut rt = Runtime::new();
    corpus::deploy_listings(&mut rt, "alice").unwrap();
    let token = corpus::address_of(&rt, "Token").unwrap();
    let req = CallRequest {
        module: token,
        function: "mint".into(),
        type_args: vec![mandala_core::runtime::parse_type("MyToken", &rt.state.registry).unwrap()],
        args: vec![Arg::UInt(5)],
        signer: None,
        gas_limit: None,
    };
    assert!(matches!(rt.call(&req).unwrap_err(), TxError::NotPublic(_)));
}

#[test]
fn deploying_twice_is_a_duplicate() {
    let mut rt = Runtime::new();
    let (_, bytes) = compile_source(corpus::LISTINGS[0].1, &rt.state.registry).unwrap();
    rt.deploy(&bytes, None).unwrap();
    let before = rt.digest();
    assert!(matches!(rt.deploy(&bytes, None).unwrap_err(), TxError::DuplicateModule(_)));
    assert_eq!(rt.digest(), before);
}

#[test]
fn init_needs_a_signer() {
    let mut rt = Runtime::new();
    for (_, src) in &corpus::LISTINGS[..3] {
        deploy_src(&mut rt, src, None).unwrap();
    }
    assert_eq!(deploy_src(&mut rt, corpus::LISTINGS[3].1, None).unwrap_err(), TxError::MissingSigner);
}

#[test]
fn try_catch_and_cycle() {
    let mut rt = Runtime::new();
    deploy_src(
        &mut rt,
        "module Flow {
           risk NumericUnderflow
           sub(a: UInt, b: UInt) => a - b
           public safeSub(a: UInt, b: UInt) => try sub(a, b) catch { NumericUnderflow(x, y) => 0 }
           risk NumericOverflow
           public steps(n: UInt) => cycle 5 from n as acc => acc + 2
         }",
        None,
    )
    .unwrap();
    let r = call(&mut rt, "Flow", "safeSub", vec![Arg::UInt(5), Arg::UInt(3)]).unwrap();
    assert_eq!(r.ret, "2");
    let r = call(&mut rt, "Flow", "safeSub", vec![Arg::UInt(3), Arg::UInt(5)]).unwrap();
    assert_eq!((r.status.clone(), r.ret.as_str()), (Status::Ok, "0"));
    assert_eq!(rt.stats.handled_risks, 1);
    let r = call(&mut rt, "Flow", "steps", vec![Arg::UInt(1)]).unwrap();
    assert_eq!(r.ret, "11");
    let r = call(&mut rt, "Flow", "steps", vec![Arg::UInt(u64::MAX - 5)]).unwrap();
    assert_eq!(r.status, Status::Error(Risk::NumericOverflow));
    let (checked, bad) = common::audit_bounds(&rt);
    assert_eq!(checked, 3);
    assert!(bad.is_empty(), "{bad:?}");
}

#[test]
fn handled_risks_roll_back_the_callee_only() {
    let mut rt = common::deployed();
    let src = "module Guard {
                 risk NumericOverflow
                 risk NumericUnderflow
                 public active tryStash(who: Master ID, store: Store[MyToken], value: Int) =>
                   try stash(who, store, value) catch {
                     NumericUnderflow(a, b, c) => (),
                     NumericOverflow(a, b, c) => ()
                   }
               }";
    deploy_src(&mut rt, src, None).unwrap();
    let guard = corpus::address_of(&rt, "Guard").unwrap();
    let req = |amount: i64| CallRequest {
        module: guard,
        function: "tryStash".into(),
        type_args: vec![],
        args: vec![
            Arg::Id("bob".into()),
            Arg::Val { module: "MyFixSupplyToken".into(), name: "defaultStore".into() },
            Arg::Int(amount),
        ],
        signer: Some("bob".into()),
        gas_limit: None,
    };
    let before = rt.digest();
    let r = rt.call(&req(10)).unwrap().0;
    assert!(r.is_ok());
    assert_eq!(r.digest, before, "the stash failed inside try and left nothing behind");
    assert_eq!(rt.stats.handled_risks, 1);
    assert_eq!(rt.stats.faults, 0);
}

#[test]
fn replays_agree() {
    let run = || {
        let mut rt = common::deployed();
        let rep = common::fuzz(&mut rt, 42, 60);
        (rep.lines, rep.final_digest)
    };
    assert_eq!(run(), run());
}
