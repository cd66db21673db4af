//! Property tests over the lexer, parser, printer, codecs, ledger and the
//! token arithmetic.

mod common;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use proptest::prelude::*;

use mandala_core::bytecode;
use mandala_core::corpus::{self, compile_source, LISTINGS};
use mandala_core::ledger::LedgerState;
use mandala_core::runtime::value::Value;
use mandala_core::runtime::{Arg, CallRequest, Runtime, Status};
use mandala_core::syntax::ast::*;
use mandala_core::syntax::{parse_source, pretty_print, tokenize_bytes};
use mandala_core::types::Risk;

fn ident(name: &str) -> Ident {
    Ident::new(name, Span::default())
}

fn path(segs: &[&str]) -> Path {
    Path { segments: segs.iter().map(|s| ident(s)).collect() }
}

fn expr(kind: ExprKind) -> Expr {
    Expr { kind, span: Span::default() }
}

fn pat(kind: PatternKind) -> Pattern {
    Pattern { kind, span: Span::default() }
}

fn lower() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["a", "b", "acc", "amount", "t", "x1"]).prop_map(String::from)
}

fn upper() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["Token", "Purse", "Some", "T", "Withdraw"]).prop_map(String::from)
}

fn type_expr() -> impl Strategy<Value = TypeExpr> {
    let leaf = (prop::collection::vec(upper(), 0..2), upper()).prop_map(|(caps, n)| TypeExpr {
        caps: caps.iter().map(|c| path(&[c])).collect(),
        kind: TypeExprKind::Named { path: path(&[&n]), args: vec![] },
        span: Span::default(),
    });
    leaf.prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            (upper(), prop::collection::vec(inner.clone(), 1..3)).prop_map(|(n, args)| TypeExpr {
                caps: vec![],
                kind: TypeExprKind::Named { path: path(&[&n]), args },
                span: Span::default(),
            }),
            prop::collection::vec(inner, 2..4).prop_map(|elems| TypeExpr {
                caps: vec![],
                kind: TypeExprKind::Tuple(elems),
                span: Span::default(),
            }),
        ]
    })
}

fn pattern() -> impl Strategy<Value = Pattern> {
    let leaf = prop_oneof![
        Just(pat(PatternKind::Wild)),
        lower().prop_map(|n| pat(PatternKind::Name(ident(&n)))),
    ];
    leaf.prop_recursive(2, 8, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(|e| pat(PatternKind::Tuple(e))),
            (upper(), prop::collection::vec(inner, 0..3)).prop_map(|(n, fields)| pat(PatternKind::Ctor {
                caps: vec![],
                path: path(&[&n]),
                type_args: None,
                fields: Some(fields),
            })),
        ]
    })
}

fn expression() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        any::<u64>().prop_map(|v| expr(ExprKind::Lit(Literal::UInt(v)))),
        // Source has no negative literals; `-` is always subtraction.
        (0..=i64::MAX).prop_map(|v| expr(ExprKind::Lit(Literal::Int(v)))),
        Just(expr(ExprKind::Unit)),
        lower().prop_map(|n| expr(ExprKind::Name(path(&[&n])))),
        (upper(), lower()).prop_map(|(m, n)| expr(ExprKind::Name(path(&[&m, &n])))),
    ];
    leaf.prop_recursive(4, 32, 3, |e| {
        let b = || e.clone().prop_map(Box::new);
        prop_oneof![
            (lower(), prop::option::of(prop::collection::vec(type_expr(), 1..3)), prop::collection::vec(e.clone(), 0..3))
                .prop_map(|(n, type_args, args)| expr(ExprKind::Apply { path: path(&[&n]), type_args, args: Some(args) })),
            (upper(), prop::collection::vec(type_expr(), 1..2))
                .prop_map(|(n, ta)| expr(ExprKind::Apply { path: path(&[&n]), type_args: Some(ta), args: None })),
            prop::collection::vec(e.clone(), 2..4).prop_map(|es| expr(ExprKind::Tuple(es))),
            (any::<bool>(), b(), b()).prop_map(|(add, lhs, rhs)| expr(ExprKind::Binary {
                op: if add { BinOp::Add } else { BinOp::Sub },
                lhs,
                rhs
            })),
            (pattern(), b(), b()).prop_map(|(pattern, bound, body)| expr(ExprKind::Let { pattern, bound, body })),
            (b(), prop::collection::vec((pattern(), e.clone()), 1..4)).prop_map(|(scrutinee, arms)| expr(ExprKind::Case {
                scrutinee,
                arms: arms.into_iter().map(|(pattern, body)| Arm { pattern, body }).collect(),
            })),
            (b(), pattern(), b()).prop_map(|(reference, binder, body)| expr(ExprKind::Modify { reference, binder, body })),
            (b(), b()).prop_map(|(cell, result)| expr(ExprKind::AndReturn { cell, result })),
            (b(), upper(), any::<bool>()).prop_map(|(inner, cap, attach)| {
                let cap = path(&[&cap]);
                expr(if attach { ExprKind::Attach { expr: inner, cap } } else { ExprKind::Detach { expr: inner, cap } })
            }),
            (0u64..100, b(), lower(), b())
                .prop_map(|(bound, init, acc, body)| expr(ExprKind::Cycle { bound, init, acc: ident(&acc), body })),
            (lower(), prop::collection::vec(e.clone(), 0..3), prop::collection::vec((lower(), e.clone()), 1..3)).prop_map(
                |(f, args, hs)| expr(ExprKind::Try {
                    call: Box::new(expr(ExprKind::Apply { path: path(&[&f]), type_args: None, args: Some(args) })),
                    handlers: hs
                        .into_iter()
                        .map(|(b, body)| Handler { risk: path(&["NumericOverflow"]), binders: vec![ident(&b)], body })
                        .collect(),
                })
            ),
        ]
    })
}

fn module_with_body(body: Expr) -> AstModule {
    let mut m = parse_source("module P { f() => () }").unwrap();
    let Decl::Fun(f) = &mut m.decls[0] else { unreachable!() };
    f.body = body;
    m
}

proptest! {
    #[test]
    fn tokenizer_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = tokenize_bytes(&bytes);
    }

    #[test]
    fn parser_never_panics(src in "[a-zA-Z0-9_(){}\\[\\],.:=>|&+\\- \n]{0,200}") {
        let _ = parse_source(&src);
    }

    #[test]
    fn parser_survives_edited_listings(which in 0..4usize, at in any::<prop::sample::Index>(), cut in 0..40usize, insert in "[(){}\\[\\]=>|a-z ]{0,4}") {
        let src = LISTINGS[which].1;
        let i = at.index(src.len());
        let j = (i + cut).min(src.len());
        if src.is_char_boundary(i) && src.is_char_boundary(j) {
            let edited = format!("{}{insert}{}", &src[..i], &src[j..]);
            let _ = parse_source(&edited);
        }
    }

    #[test]
    fn printed_expressions_parse_back_to_the_same_tree(body in expression()) {
        let m = module_with_body(body);
        let printed = pretty_print(&m);
        let again = parse_source(&printed).map_err(|e| TestCaseError::fail(format!("{e}\n{printed}")))?;
        prop_assert_eq!(&again, &m, "{}", printed);
        prop_assert_eq!(pretty_print(&again), printed);
    }

    #[test]
    fn bytecode_decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = bytecode::decode(&bytes);
    }

    #[test]
    fn decoded_mutants_re_encode_to_the_same_bytes(which in 0..4usize, at in any::<prop::sample::Index>(), byte in any::<u8>()) {
        let mut bytes = corpus_bytes()[which].clone();
        let i = at.index(bytes.len());
        bytes[i] = byte;
        if let Ok(m) = bytecode::decode(&bytes) {
            prop_assert_eq!(bytecode::encode(&m), bytes);
        }
    }

    #[test]
    fn value_codec_round_trips(v in value()) {
        let bytes = v.encode();
        prop_assert_eq!(Value::decode(&bytes).unwrap(), v);
    }

    #[test]
    fn digest_is_independent_of_write_order(
        cells in prop::collection::btree_map(any::<[u8; 32]>(), any::<u64>(), 0..12),
        rotate in any::<prop::sample::Index>(),
        split in any::<prop::sample::Index>(),
    ) {
        let entries: Vec<_> = cells.into_iter().collect();
        let mut a = LedgerState::new();
        a.begin();
        for (k, v) in &entries {
            a.write_cell(*k, Value::uint(*v));
        }
        a.commit();
        let mut shuffled = entries.clone();
        if !shuffled.is_empty() {
            let r = rotate.index(shuffled.len());
            shuffled.rotate_left(r);
            shuffled.reverse();
        }
        // The same writes split over two transactions.
        let cut = if shuffled.is_empty() { 0 } else { split.index(shuffled.len() + 1) };
        let mut b = LedgerState::new();
        for part in [&shuffled[..cut], &shuffled[cut..]] {
            b.begin();
            for (k, v) in part {
                b.write_cell(*k, Value::uint(*v));
            }
            b.commit();
        }
        prop_assert_eq!(a.digest(), b.digest());
    }
}

fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        any::<u64>().prop_map(Value::uint),
        any::<i64>().prop_map(Value::int),
        Just(Value::unit()),
        (any::<[u8; 32]>(), any::<bool>()).prop_map(|(b, m)| Value::id(b, m)),
    ];
    leaf.prop_recursive(3, 16, 4, |inner| prop::collection::vec(inner, 0..4).prop_map(Value::tuple))
}

fn corpus_bytes() -> &'static Vec<Vec<u8>> {
    static BYTES: OnceLock<Vec<Vec<u8>>> = OnceLock::new();
    BYTES.get_or_init(|| {
        let mut rt = Runtime::new();
        let mut out = Vec::new();
        for (_, src) in LISTINGS {
            let (_, bytes) = compile_source(src, &rt.state.registry).unwrap();
            rt.deploy(&bytes, Some("alice")).unwrap();
            out.push(bytes);
        }
        out
    })
}

/// The corpus plus a module exposing merge and split on plain integers.
fn arithmetic_runtime() -> &'static Runtime {
    static RT: OnceLock<Runtime> = OnceLock::new();
    RT.get_or_init(|| {
        let mut rt = Runtime::new();
        corpus::deploy_listings(&mut rt, "alice").unwrap();
        let src = "module Arith {
                     type Drop Persist Coin
                     risk NumericOverflow
                     public add(a: UInt, b: UInt) => merge(mint[Coin](a), mint[Coin](b))
                     risk NumericUnderflow
                     public sub(a: UInt, b: UInt) => split(mint[Coin](a), b)
                   }";
        let (_, bytes) = compile_source(src, &rt.state.registry).unwrap();
        rt.deploy(&bytes, None).unwrap();
        rt
    })
}

fn arith(function: &str, a: u64, b: u64) -> (Status, String) {
    let mut rt = arithmetic_runtime().clone();
    let req = CallRequest {
        module: corpus::address_of(&rt, "Arith").unwrap(),
        function: function.into(),
        type_args: vec![],
        args: vec![Arg::UInt(a), Arg::UInt(b)],
        signer: None,
        gas_limit: None,
    };
    let r = rt.call(&req).unwrap().0;
    (r.status, r.ret)
}

fn edge() -> impl Strategy<Value = u64> {
    prop_oneof![any::<u64>(), 0..16u64, (u64::MAX - 16)..=u64::MAX]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn merge_matches_checked_add(a in edge(), b in edge()) {
        let got = arith("add", a, b);
        match a.checked_add(b) {
            Some(s) => prop_assert_eq!(got, (Status::Ok, format!("Token[Coin]({s})"))),
            None => prop_assert_eq!(got.0, Status::Error(Risk::NumericOverflow)),
        }
    }

    #[test]
    fn split_matches_checked_sub(a in edge(), b in edge()) {
        let got = arith("sub", a, b);
        match a.checked_sub(b) {
            Some(d) => prop_assert_eq!(got, (Status::Ok, format!("(Token[Coin]({d}), Token[Coin]({b}))"))),
            None => prop_assert_eq!(got.0, Status::Error(Risk::NumericUnderflow)),
        }
    }
}

fn deployed_runtime() -> &'static Runtime {
    static RT: OnceLock<Runtime> = OnceLock::new();
    RT.get_or_init(common::deployed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transfers_follow_a_checked_balance_model(
        steps in prop::collection::vec((0..4usize, 0..4usize, prop_oneof![-5i64..0, 0i64..1000, 99_999_000i64..100_000_100]), 1..20)
    ) {
        let mut rt = deployed_runtime().clone();
        let mut model: BTreeMap<&str, u64> = common::USERS.iter().map(|u| (*u, 0)).collect();
        model.insert("alice", corpus::INITIAL_SUPPLY);
        for (f, t, amount) in steps {
            let (from, to) = (common::USERS[f], common::USERS[t]);
            let before = rt.digest();
            let r = corpus::transfer(&mut rt, from, to, amount).unwrap();
            let ok = u64::try_from(amount).ok().and_then(|a| model[from].checked_sub(a).map(|rest| (a, rest)));
            match ok {
                Some((a, rest)) => {
                    prop_assert!(r.is_ok(), "{from}->{to} {amount}: {}", r.line());
                    model.insert(from, rest);
                    *model.get_mut(to).unwrap() += a;
                }
                None => {
                    prop_assert_eq!(r.status, Status::Error(Risk::NumericUnderflow));
                    prop_assert_eq!(r.digest, before);
                }
            }
            prop_assert!(r.gas_used <= r.gas_bound);
            prop_assert_eq!(corpus::total_supply(&rt), corpus::INITIAL_SUPPLY as u128);
        }
        for (u, held) in model {
            prop_assert_eq!(corpus::balance(&rt, u).unwrap_or(0), held, "{}", u);
        }
    }
}
