use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use mandala_bench::{compiled, deployed};
use mandala_core::corpus::{self, compile_source, LISTINGS};
use mandala_core::ledger::Store;
use mandala_core::runtime::Runtime;
use mandala_core::syntax::parse_source;
use mandala_core::{bytecode, validator};

fn front_end(c: &mut Criterion) {
    let stages = compiled();
    let mut g = c.benchmark_group("front_end");
    for (i, (file, src)) in LISTINGS.iter().enumerate() {
        g.bench_function(format!("parse/{file}"), |b| b.iter(|| parse_source(black_box(src)).unwrap()));
        let reg = &stages[i].1;
        g.bench_function(format!("compile/{file}"), |b| b.iter(|| compile_source(black_box(src), reg).unwrap()));
    }
    g.finish();
}

fn validation(c: &mut Criterion) {
    let stages = compiled();
    let mut g = c.benchmark_group("validate");
    for ((file, _), (bytes, reg)) in LISTINGS.iter().zip(&stages) {
        g.bench_function(format!("decode/{file}"), |b| b.iter(|| bytecode::decode(black_box(bytes)).unwrap()));
        g.bench_function(*file, |b| b.iter(|| validator::validate(black_box(bytes), reg).unwrap()));
    }
    g.finish();
}

fn execution(c: &mut Criterion) {
    let mut g = c.benchmark_group("execute");
    g.bench_function("deploy_listings", |b| {
        b.iter(|| {
            let mut rt = Runtime::new();
            corpus::deploy_listings(&mut rt, "alice").unwrap()
        })
    });
    let base = deployed();
    g.bench_function("transfer", |b| {
        b.iter_batched(
            || base.clone(),
            |mut rt| corpus::transfer(&mut rt, "alice", "bob", 250).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.bench_function("transfer_underflow", |b| {
        b.iter_batched(
            || base.clone(),
            |mut rt| corpus::transfer(&mut rt, "carol", "bob", 250).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.bench_function("state_digest", |b| b.iter(|| black_box(&base).digest()));
    g.finish();
}

fn durable(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path()).unwrap();
    for (_, src) in LISTINGS {
        let (_, bytes) = compile_source(src, &store.state().registry).unwrap();
        store.deploy(&bytes, Some("alice")).unwrap();
    }
    let req = corpus::transfer_request(&store.runtime, "alice", "bob", 1, Some("alice")).unwrap();
    c.bench_function("store/transfer_with_wal", |b| b.iter(|| store.call(&req).unwrap()));
}

criterion_group!(benches, front_end, validation, execution, durable);
criterion_main!(benches);
