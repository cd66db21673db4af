//! Static gas bounds. The interpreter charges the same constants per
//! executed node, so a bound is the cost of the most expensive path.

use crate::bytecode::{BytecodeModule, Node, Pat};
use crate::types::FnRef;
use crate::registry::Registry;
use crate::types::ModuleId;

/// Unit costs, fixed by bytecode version 1.
pub mod cost {
    pub const CONST: u64 = 1;
    pub const MOVE: u64 = 1;
    pub const COPY: u64 = 2;
    /// Per discarded slot.
    pub const DROP: u64 = 1;
    pub const VAL: u64 = 2;
    pub const ARITH: u64 = 1;
    pub const COERCE: u64 = 1;
    /// Plus one per field.
    pub const CONSTRUCT: u64 = 2;
    pub const LET: u64 = 3;
    /// Plus one per arm.
    pub const MATCH: u64 = 2;
    /// Unpacking a destructuring parameter on entry.
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

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct GasBounds {
    pub functions: Vec<u64>,
    pub vals: Vec<u64>,
    pub init: Option<u64>,
}

/// Bounds for every entry point. Assumes the module passed `check`.
pub fn bounds(m: &BytecodeModule, registry: &dyn Registry) -> GasBounds {
    let mut b = Bounder { registry, local: Vec::new() };
    for f in &m.functions {
        let unpack = f.params.iter().filter(|p| !matches!(p.pattern, Pat::Bind(_))).count() as u64;
        let n = unpack.saturating_mul(cost::PARAM_UNPACK).saturating_add(b.node(&f.body));
        b.local.push(n);
    }
    let vals = m.vals.iter().map(|v| b.node(&v.init)).collect();
    let init = m.init.as_ref().map(|i| {
        let unpack = if matches!(i.param.pattern, Pat::Bind(_)) { 0 } else { cost::PARAM_UNPACK };
        unpack.saturating_add(b.node(&i.body))
    });
    GasBounds { functions: b.local, vals, init }
}

struct Bounder<'r> {
    registry: &'r dyn Registry,
    local: Vec<u64>,
}

fn sum(xs: impl IntoIterator<Item = u64>) -> u64 {
    xs.into_iter().fold(0, u64::saturating_add)
}

impl Bounder<'_> {
    fn callee(&self, f: FnRef) -> u64 {
        match f.module {
            ModuleId::Local => self.local[f.index as usize],
            ModuleId::Addr(a) => self.registry.bounds(&a).expect("validated dependency").functions[f.index as usize],
        }
    }

    fn default_part(&self, d: Option<FnRef>) -> u64 {
        d.map_or(0, |d| cost::CALL.saturating_add(self.callee(d)))
    }

    fn node(&self, n: &Node) -> u64 {
        match n {
            Node::Const(_) => cost::CONST,
            Node::Move(_) => cost::MOVE,
            Node::Copy(_) => cost::COPY,
            Node::Drop { slots, body } => (slots.len() as u64 * cost::DROP).saturating_add(self.node(body)),
            Node::Val(_) => cost::VAL,
            Node::Arith { lhs, rhs, .. } => sum([cost::ARITH, self.node(lhs), self.node(rhs)]),
            Node::Coerce { operand, .. } => cost::COERCE.saturating_add(self.node(operand)),
            Node::Construct { fields, .. } | Node::Tuple(fields) => {
                sum([cost::CONSTRUCT, fields.len() as u64, sum(fields.iter().map(|f| self.node(f)))])
            }
            Node::Let { bound, body, .. } => sum([cost::LET, self.node(bound), self.node(body)]),
            Node::Match { scrutinee, arms } => sum([
                cost::MATCH,
                arms.len() as u64,
                self.node(scrutinee),
                arms.iter().map(|a| self.node(&a.body)).max().unwrap_or(0),
            ]),
            Node::Call(c) => sum([cost::CALL, sum(c.args.iter().map(|a| self.node(a))), self.callee(c.func)]),
            Node::Try { call, success_drops, handlers } => {
                let tail = handlers.iter().map(|h| self.node(&h.body)).fold(success_drops.len() as u64 * cost::DROP, u64::max);
                sum([
                    cost::TRY,
                    sum(call.args.iter().map(|a| self.node(a))),
                    cost::CALL,
                    self.callee(call.func),
                    tail,
                ])
            }
            Node::Modify { reference, default, body, .. } => sum([
                cost::CELL_READ,
                cost::CELL_WRITE,
                self.node(reference),
                self.default_part(*default),
                self.node(body),
            ]),
            Node::AndReturn { cell, result } => sum([cost::AND_RETURN, self.node(cell), self.node(result)]),
            Node::Read { reference, default } => {
                sum([cost::CELL_READ, self.node(reference), self.default_part(*default)])
            }
            Node::Attach { operand, .. } => cost::ATTACH.saturating_add(self.node(operand)),
            Node::Detach { operand, .. } => cost::DETACH.saturating_add(self.node(operand)),
            Node::Cycle { bound, init, body, .. } => {
                sum([cost::CYCLE, self.node(init), bound.saturating_mul(self.node(body))])
            }
            Node::Derive { context, id } => sum([cost::DERIVE, self.node(context), self.node(id)]),
            Node::NewId => cost::NEW_ID,
            Node::NewContext { .. } => cost::NEW_CONTEXT,
        }
    }
}
