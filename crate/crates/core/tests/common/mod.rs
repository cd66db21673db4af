//! Oracles and harnesses shared by the integration test targets.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use mandala_core::bytecode::{self, BytecodeModule, Const, Node, Pat};
use mandala_core::corpus::{self, INITIAL_SUPPLY, LISTINGS, TELLER};
use mandala_core::registry::Registry;
use mandala_core::runtime::{CallRequest, Receipt, Runtime, Status, TxError};
use mandala_core::types::{FnRef, ModuleAddress, ModuleId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const USERS: [&str; 4] = ["alice", "bob", "carol", "dave"];

/// Listings plus the teller, deployed by alice.
pub fn deployed() -> Runtime {
    let mut rt = Runtime::new();
    corpus::deploy_listings(&mut rt, "alice").unwrap();
    corpus::deploy_extra(&mut rt, TELLER).unwrap();
    rt
}

// ---------------------------------------------------------------------------
// Gas oracle: enumerate the cost of every execution path.

/// Unit costs as published with the cost table. Kept separate from
/// `validator::gas::cost` on purpose.
mod table {
    pub const CONST: u64 = 1;
    pub const MOVE: u64 = 1;
    pub const COPY: u64 = 2;
    pub const DROP: u64 = 1;
    pub const VAL: u64 = 2;
    pub const ARITH: u64 = 1;
    pub const COERCE: u64 = 1;
    pub const CONSTRUCT: u64 = 2;
    pub const LET: u64 = 3;
    pub const MATCH: u64 = 2;
    pub const PARAM_UNPACK: u64 = 3;
    pub const CALL: u64 = 10;
    pub const CELL_READ: u64 = 50;
    pub const CELL_WRITE: u64 = 200;
    pub const ATTACH: u64 = 1;
    pub const DETACH: u64 = 1;
    pub const CYCLE: u64 = 1;
    pub const DERIVE: u64 = 5;
    pub const NEW_ID: u64 = 20;
    pub const NEW_CONTEXT: u64 = 20;
    pub const TRY: u64 = 2;
    pub const AND_RETURN: u64 = 1;
}

type Paths = BTreeSet<u64>;

fn one(c: u64) -> Paths {
    BTreeSet::from([c])
}

/// Every way of running `a` then `b`.
fn then(a: &Paths, b: &Paths) -> Paths {
    a.iter().flat_map(|x| b.iter().map(move |y| x + y)).collect()
}

fn seq<'p>(parts: impl IntoIterator<Item = &'p Paths>) -> Paths {
    parts.into_iter().fold(one(0), |acc, p| then(&acc, p))
}

pub struct PathOracle<'r> {
    registry: &'r dyn Registry,
    memo: BTreeMap<(ModuleAddress, u16), Paths>,
}

impl<'r> PathOracle<'r> {
    pub fn new(registry: &'r dyn Registry) -> Self {
        PathOracle { registry, memo: BTreeMap::new() }
    }

    fn module(&self, a: ModuleAddress) -> &'r BytecodeModule {
        self.registry.module(&a).expect("deployed")
    }

    /// Costs of every path through function `f` of `addr`, including the
    /// unpacking of destructuring parameters.
    pub fn function(&mut self, addr: ModuleAddress, f: u16) -> Paths {
        if let Some(p) = self.memo.get(&(addr, f)) {
            return p.clone();
        }
        let def = &self.module(addr).functions[f as usize];
        let unpack = def.params.iter().filter(|p| !matches!(p.pattern, Pat::Bind(_))).count() as u64 * table::PARAM_UNPACK;
        let body = self.node(addr, &def.body);
        let out: Paths = body.iter().map(|b| b + unpack).collect();
        self.memo.insert((addr, f), out.clone());
        out
    }

    pub fn val(&mut self, addr: ModuleAddress, j: usize) -> Paths {
        let init = &self.module(addr).vals[j].init;
        self.node(addr, init)
    }

    pub fn init(&mut self, addr: ModuleAddress) -> Option<Paths> {
        let i = self.module(addr).init.as_ref()?;
        let unpack = if matches!(i.param.pattern, Pat::Bind(_)) { 0 } else { table::PARAM_UNPACK };
        Some(self.node(addr, &i.body).iter().map(|b| b + unpack).collect())
    }

    fn target(&self, here: ModuleAddress, f: FnRef) -> (ModuleAddress, u16) {
        match f.module {
            ModuleId::Local => (here, f.index),
            ModuleId::Addr(a) => (a, f.index),
        }
    }

    fn call(&mut self, here: ModuleAddress, f: FnRef) -> Paths {
        let (a, i) = self.target(here, f);
        self.function(a, i)
    }

    /// A cell either holds a value or is filled by its default.
    fn cell_fill(&mut self, here: ModuleAddress, default: Option<FnRef>) -> Paths {
        let mut p = one(0);
        if let Some(d) = default {
            p.extend(self.call(here, d).iter().map(|c| c + table::CALL));
        }
        p
    }

    fn node(&mut self, here: ModuleAddress, n: &Node) -> Paths {
        match n {
            Node::Const(_) => one(table::CONST),
            Node::Move(_) => one(table::MOVE),
            Node::Copy(_) => one(table::COPY),
            Node::Val(_) => one(table::VAL),
            Node::NewId => one(table::NEW_ID),
            Node::NewContext { .. } => one(table::NEW_CONTEXT),
            Node::Drop { slots, body } => {
                let b = self.node(here, body);
                then(&one(slots.len() as u64 * table::DROP), &b)
            }
            Node::Arith { lhs, rhs, .. } => {
                let (l, r) = (self.node(here, lhs), self.node(here, rhs));
                seq([&one(table::ARITH), &l, &r])
            }
            Node::Coerce { operand, .. } => then(&one(table::COERCE), &self.node(here, operand)),
            Node::Attach { operand, .. } => then(&one(table::ATTACH), &self.node(here, operand)),
            Node::Detach { operand, .. } => then(&one(table::DETACH), &self.node(here, operand)),
            Node::Construct { fields, .. } | Node::Tuple(fields) => {
                let parts: Vec<Paths> = fields.iter().map(|f| self.node(here, f)).collect();
                then(&one(table::CONSTRUCT + fields.len() as u64), &seq(&parts))
            }
            Node::Let { bound, body, .. } => {
                let (b, r) = (self.node(here, bound), self.node(here, body));
                seq([&one(table::LET), &b, &r])
            }
            Node::Match { scrutinee, arms } => {
                let s = self.node(here, scrutinee);
                let mut any = Paths::new();
                for a in arms {
                    any.extend(self.node(here, &a.body));
                }
                seq([&one(table::MATCH + arms.len() as u64), &s, &any])
            }
            Node::Call(c) => {
                let args: Vec<Paths> = c.args.iter().map(|a| self.node(here, a)).collect();
                let callee = self.call(here, c.func);
                seq([&one(table::CALL), &seq(&args), &callee])
            }
            Node::Try { call, success_drops, handlers } => {
                let args: Vec<Paths> = call.args.iter().map(|a| self.node(here, a)).collect();
                let callee = self.call(here, call.func);
                // A raising callee stops somewhere along one of its paths;
                // its full cost is the most it can have spent.
                let mut after = one(success_drops.len() as u64 * table::DROP);
                for h in handlers {
                    after.extend(self.node(here, &h.body));
                }
                seq([&one(table::TRY + table::CALL), &seq(&args), &callee, &after])
            }
            Node::Modify { reference, default, body, .. } => {
                let r = self.node(here, reference);
                let fill = self.cell_fill(here, *default);
                let b = self.node(here, body);
                seq([&one(table::CELL_READ + table::CELL_WRITE), &r, &fill, &b])
            }
            Node::AndReturn { cell, result } => {
                let (c, r) = (self.node(here, cell), self.node(here, result));
                seq([&one(table::AND_RETURN), &c, &r])
            }
            Node::Read { reference, default } => {
                let r = self.node(here, reference);
                let fill = self.cell_fill(here, *default);
                seq([&one(table::CELL_READ), &r, &fill])
            }
            Node::Cycle { bound, init, body, .. } => {
                let i = self.node(here, init);
                let b = self.node(here, body);
                let mut acc = then(&one(table::CYCLE), &i);
                for _ in 0..*bound {
                    acc = then(&acc, &b);
                }
                acc
            }
            Node::Derive { context, id } => {
                let (c, i) = (self.node(here, context), self.node(here, id));
                seq([&one(table::DERIVE), &c, &i])
            }
        }
    }
}

/// One disagreement between a stored bound and the path oracle.
#[derive(Debug)]
pub struct GasMismatch {
    pub entry: String,
    pub stored: u64,
    pub oracle: u64,
}

/// Compare every stored bound of every deployed module with the maximum
/// path cost. Returns the number of entry points checked.
pub fn audit_bounds(rt: &Runtime) -> (usize, Vec<GasMismatch>) {
    let reg = &rt.state.registry;
    let mut oracle = PathOracle::new(reg);
    let mut checked = 0;
    let mut bad = Vec::new();
    for (name, a) in reg.module_names() {
        let m = reg.module(&a).unwrap();
        let b = reg.bounds(&a).unwrap().clone();
        let mut check = |entry: String, stored: u64, paths: Paths| {
            checked += 1;
            let worst = *paths.iter().max().unwrap();
            if worst != stored {
                bad.push(GasMismatch { entry, stored, oracle: worst });
            }
        };
        for (i, f) in m.functions.iter().enumerate() {
            check(format!("{name}.{}", f.name), b.functions[i], oracle.function(a, i as u16));
        }
        for (j, v) in m.vals.iter().enumerate() {
            check(format!("{name}.{}", v.name), b.vals[j], oracle.val(a, j));
        }
        if let (Some(stored), Some(paths)) = (b.init, oracle.init(a)) {
            check(format!("{name}.init"), stored, paths);
        }
    }
    (checked, bad)
}

// ---------------------------------------------------------------------------
// Call graph.

/// Kahn's algorithm over "f calls g" for every deployed function. Returns
/// the order, or `None` if there is a cycle.
pub fn call_graph_order(registry: &dyn Registry) -> Option<Vec<(ModuleAddress, u16)>> {
    let mut edges: BTreeMap<(ModuleAddress, u16), Vec<(ModuleAddress, u16)>> = BTreeMap::new();
    let mut indegree: BTreeMap<(ModuleAddress, u16), usize> = BTreeMap::new();
    for (_, a) in registry.module_names() {
        let m = registry.module(&a).unwrap();
        for (i, f) in m.functions.iter().enumerate() {
            let me = (a, i as u16);
            indegree.entry(me).or_insert(0);
            let mut out = Vec::new();
            f.body.callees(&mut out);
            for c in out {
                let to = match c.module {
                    ModuleId::Local => (a, c.index),
                    ModuleId::Addr(b) => (b, c.index),
                };
                edges.entry(me).or_default().push(to);
                *indegree.entry(to).or_insert(0) += 1;
            }
        }
    }
    let mut ready: VecDeque<_> = indegree.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
    let mut order = Vec::new();
    while let Some(n) = ready.pop_front() {
        order.push(n);
        for to in edges.get(&n).cloned().unwrap_or_default() {
            let d = indegree.get_mut(&to).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push_back(to);
            }
        }
    }
    (order.len() == indegree.len()).then_some(order)
}

// ---------------------------------------------------------------------------
// Randomized transaction traffic.

#[derive(Debug, Default)]
pub struct FuzzReport {
    pub lines: Vec<String>,
    pub txs: usize,
    pub errors: usize,
    pub rejected: usize,
    /// Transactions after which the summed supply differed.
    pub supply_breaks: usize,
    /// Error receipts whose digest differs from the pre-transaction one.
    pub rollback_breaks: usize,
    /// Receipts with gasUsed above gasBound.
    pub gas_breaks: usize,
    pub final_digest: [u8; 32],
}

/// `n` random transfers, stashes (withdrawals into escrow) and unstashes
/// (deposits back). Amounts sometimes exceed the balance or are negative,
/// so a share of the transactions fail.
pub fn fuzz(rt: &mut Runtime, seed: u64, n: usize) -> FuzzReport {
    fuzz_with(rt, seed, n, &mut |_| {})
}

/// The requests `fuzz` sends, after running them on `rt`.
pub fn fuzz_requests(rt: &mut Runtime, seed: u64, n: usize) -> Vec<CallRequest> {
    let mut out = Vec::new();
    fuzz_with(rt, seed, n, &mut |r| out.push(r.clone()));
    out
}

fn fuzz_with(rt: &mut Runtime, seed: u64, n: usize, sent: &mut dyn FnMut(&CallRequest)) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = FuzzReport::default();
    for _ in 0..n {
        let who = USERS[rng.random_range(0..USERS.len())];
        let held = corpus::balance(rt, who).unwrap() as i64;
        let amount = match rng.random_range(0..10) {
            0 => -rng.random_range(1..1000),
            1 => held + rng.random_range(1..1000),
            _ => rng.random_range(0..=held.clamp(0, 5_000_000)),
        };
        let req = match rng.random_range(0..4) {
            0 => corpus::teller_request(rt, "stash", who, amount),
            1 => corpus::teller_request(rt, "unstash", who, amount / 2),
            _ => corpus::transfer_request(rt, who, USERS[rng.random_range(0..USERS.len())], amount, Some(who)),
        }
        .expect("corpus deployed");
        sent(&req);
        let before = rt.digest();
        rep.txs += 1;
        match rt.call(&req) {
            Ok((r, _)) => record(&mut rep, &r, before),
            Err(e) => {
                rep.rejected += 1;
                rep.lines.push(format!("rejected {e}"));
                if rt.digest() != before {
                    rep.rollback_breaks += 1;
                }
            }
        }
        if corpus::total_supply(rt) != INITIAL_SUPPLY as u128 {
            rep.supply_breaks += 1;
        }
    }
    rep.final_digest = rt.digest();
    rep
}

fn record(rep: &mut FuzzReport, r: &Receipt, before: [u8; 32]) {
    if r.gas_used > r.gas_bound {
        rep.gas_breaks += 1;
    }
    if let Status::Error(_) = r.status {
        rep.errors += 1;
        if r.digest != before {
            rep.rollback_breaks += 1;
        }
    }
    rep.lines.push(r.line());
}

// ---------------------------------------------------------------------------
// Bytecode mutation audit.

/// What the golden suite observes, with addresses and digests left out so
/// that runs over differently addressed modules can be compared.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Observation {
    pub deploys: Vec<String>,
    pub calls: Vec<String>,
    pub balances: Vec<(String, Option<u64>, Option<u64>)>,
    pub supply: u128,
}

fn observe_call(r: Result<Receipt, TxError>) -> String {
    match r {
        Ok(r) => format!("{:?} {} {} {}", r.status, r.gas_used, r.gas_bound, r.ret),
        Err(e) => format!("rejected {e}"),
    }
}

/// The fixed transaction suite run against every accepted mutant.
pub fn golden_suite(rt: &mut Runtime) -> Observation {
    let mut calls = Vec::new();
    let steps: [(&str, &str, &str, i64); 7] = [
        ("transfer", "alice", "bob", 250),
        ("transfer", "bob", "carol", 100),
        ("transfer", "carol", "alice", 1000),
        ("transfer", "alice", "dave", -5),
        ("stash", "alice", "", 4000),
        ("unstash", "alice", "", 1500),
        ("unstash", "bob", "", 1),
    ];
    for (op, who, to, amount) in steps {
        let req = if op == "transfer" {
            corpus::transfer_request(rt, who, to, amount, Some(who))
        } else {
            corpus::teller_request(rt, op, who, amount)
        };
        match req {
            Ok(req) => calls.push(observe_call(rt.call(&req).map(|(r, _)| r))),
            Err(e) => calls.push(e),
        }
    }
    let balances = USERS
        .iter()
        .map(|u| {
            let escrow = escrow_balance(rt, u);
            (u.to_string(), corpus::balance(rt, u), escrow)
        })
        .collect();
    Observation { deploys: vec![], calls, balances, supply: corpus::total_supply(rt) }
}

fn escrow_balance(rt: &Runtime, who: &str) -> Option<u64> {
    use mandala_core::runtime::value::{cell_key, external_id, ValueKind};
    let a = corpus::address_of(rt, "Teller")?;
    let j = rt.state.registry.module(&a)?.val_index("escrow")?;
    let ValueKind::Adt { fields, .. } = &rt.state.val(&(a, j))?.kind else { return None };
    let ValueKind::Context { id, .. } = &fields.first()?.kind else { return None };
    match rt.state.cell(&cell_key(id, &external_id(who))) {
        None => Some(0),
        Some(v) => corpus::token_amount(v),
    }
}

/// Deploy the listings, with listing `k` replaced by `bytes` when given,
/// then the teller, then run the suite.
pub fn run_with(k: Option<(usize, &[u8])>) -> Result<Observation, String> {
    let mut rt = Runtime::new();
    let mut deploys = Vec::new();
    for (i, (file, src)) in LISTINGS.iter().enumerate() {
        let bytes = match k {
            Some((j, b)) if j == i => b.to_vec(),
            _ => match corpus::compile_source(src, &rt.state.registry) {
                Ok((_, b)) => b,
                Err(d) => {
                    deploys.push(format!("{file}: {}", corpus::render_diags(file, &d)));
                    continue;
                }
            },
        };
        match rt.deploy(&bytes, Some("alice")) {
            Ok((r, _)) => deploys.push(format!("{:?} {} {}", r.status, r.gas_used, r.gas_bound)),
            Err(TxError::Invalid(r)) if k.map(|(j, _)| j) == Some(i) => return Err(r.to_string()),
            Err(e) => deploys.push(format!("{file}: {e}")),
        }
    }
    match corpus::deploy_extra(&mut rt, TELLER) {
        Ok(r) => deploys.push(format!("{:?} {} {}", r.status, r.gas_used, r.gas_bound)),
        Err(e) => deploys.push(format!("teller: {}", e.lines().next().unwrap_or(""))),
    }
    let mut obs = golden_suite(&mut rt);
    obs.deploys = deploys;
    if rt.stats.faults + rt.stats.reentrancy_violations + rt.stats.gas_violations + rt.stats.effect_faults > 0 {
        obs.calls.push(format!("dynamic check fired: {:?}", rt.stats));
    }
    Ok(obs)
}

/// Mutants that only change literal values or names are programs the
/// author could have written; no validator can tell them apart.
fn data_only(original: &BytecodeModule, mutant: &BytecodeModule) -> bool {
    normalize(original.clone()) == normalize(mutant.clone())
}

fn normalize(mut m: BytecodeModule) -> BytecodeModule {
    fn node(n: &mut Node) {
        if let Node::Const(c) = n {
            *c = match c {
                Const::UInt(_) => Const::UInt(0),
                Const::Int(_) => Const::Int(0),
                Const::Unit => Const::Unit,
            };
        }
        match n {
            Node::Drop { body, .. } => node(body),
            Node::Arith { lhs, rhs, .. } => {
                node(lhs);
                node(rhs)
            }
            Node::Coerce { operand, .. } | Node::Attach { operand, .. } | Node::Detach { operand, .. } => node(operand),
            Node::Construct { fields, .. } | Node::Tuple(fields) => fields.iter_mut().for_each(node),
            Node::Let { bound, body, .. } => {
                node(bound);
                node(body)
            }
            Node::Match { scrutinee, arms } => {
                node(scrutinee);
                arms.iter_mut().for_each(|a| node(&mut a.body))
            }
            Node::Call(c) => c.args.iter_mut().for_each(node),
            Node::Try { call, handlers, .. } => {
                call.args.iter_mut().for_each(node);
                handlers.iter_mut().for_each(|h| node(&mut h.body))
            }
            Node::Modify { reference, body, .. } => {
                node(reference);
                node(body)
            }
            Node::AndReturn { cell, result } => {
                node(cell);
                node(result)
            }
            Node::Read { reference, .. } => node(reference),
            Node::Cycle { init, body, .. } => {
                node(init);
                node(body)
            }
            Node::Derive { context, id } => {
                node(context);
                node(id)
            }
            _ => {}
        }
    }
    m.name.clear();
    for t in &mut m.types {
        t.name.clear();
        t.type_params.iter_mut().for_each(String::clear);
        t.ctors.iter_mut().for_each(|c| c.name.clear());
    }
    m.caps.iter_mut().for_each(|c| c.name.clear());
    for f in &mut m.functions {
        f.name.clear();
        f.type_params.iter_mut().for_each(String::clear);
        node(&mut f.body);
    }
    for v in &mut m.vals {
        v.name.clear();
        node(&mut v.init);
    }
    if let Some(i) = &mut m.init {
        node(&mut i.body);
    }
    m
}

#[derive(Debug, Default)]
pub struct MutationReport {
    pub mutants: usize,
    pub rejected: usize,
    pub accepted_equivalent: usize,
    /// (listing, offset, old byte, new byte, what differed)
    pub accepted_divergent: Vec<(String, usize, u8, u8, String)>,
    /// Skipped because they only changed literals or names.
    pub skipped_data_only: usize,
}

/// Single-byte mutants of the listings' bytecode, drawn with a seeded RNG.
pub fn mutation_audit(seed: u64, wanted: usize) -> MutationReport {
    let baseline = run_with(None).expect("baseline");
    let mut originals = Vec::new();
    let mut reg_rt = Runtime::new();
    for (file, src) in LISTINGS {
        let (m, b) = corpus::compile_source(src, &reg_rt.state.registry).unwrap();
        reg_rt.deploy(&b, Some("alice")).unwrap();
        originals.push((file, m, b));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut rep = MutationReport::default();
    while rep.mutants < wanted {
        let k = rng.random_range(0..originals.len());
        let (file, m, bytes) = &originals[k];
        let at = rng.random_range(0..bytes.len());
        let flip: u8 = rng.random_range(1..=255);
        if !seen.insert((k, at, flip)) {
            continue;
        }
        let mut mutant = bytes.clone();
        mutant[at] ^= flip;
        if let Ok(decoded) = bytecode::decode(&mutant) {
            if data_only(m, &decoded) {
                rep.skipped_data_only += 1;
                continue;
            }
        }
        rep.mutants += 1;
        match run_with(Some((k, &mutant))) {
            Err(_) => rep.rejected += 1,
            Ok(obs) if obs == baseline => rep.accepted_equivalent += 1,
            Ok(obs) => {
                let what = diff(&baseline, &obs);
                rep.accepted_divergent.push((file.to_string(), at, bytes[at], mutant[at], what));
            }
        }
    }
    rep
}

fn diff(a: &Observation, b: &Observation) -> String {
    let mut out = Vec::new();
    for (x, y) in a.deploys.iter().zip(&b.deploys) {
        if x != y {
            out.push(format!("deploy {x} -> {y}"));
        }
    }
    for (x, y) in a.calls.iter().zip(&b.calls) {
        if x != y {
            out.push(format!("call {x} -> {y}"));
        }
    }
    if a.balances != b.balances {
        out.push(format!("balances {:?} -> {:?}", a.balances, b.balances));
    }
    if a.calls.len() != b.calls.len() {
        out.push(format!("{:?}", b.calls));
    }
    out.join("; ")
}
