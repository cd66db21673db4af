//! The four token listings and the end-to-end scenario built on them.

use crate::bytecode::{self, BytecodeModule};
use crate::registry::Registry;
use crate::runtime::value::{cell_key, external_id, render, Value, ValueKind};
use crate::runtime::{parse_type, Arg, CallRequest, Receipt, Runtime, TxError};
use crate::sema::{self, Diags};
use crate::types::ModuleAddress;

/// (file name, source) in deployment order.
pub const LISTINGS: [(&str, &str); 4] = [
    ("token.mdl", include_str!("../corpus/token.mdl")),
    ("purse.mdl", include_str!("../corpus/purse.mdl")),
    ("purse_storage.mdl", include_str!("../corpus/purse_storage.mdl")),
    ("my_fix_supply_token.mdl", include_str!("../corpus/my_fix_supply_token.mdl")),
];

/// Programs that must be rejected: (file name, expected code, source).
/// They are checked against a ledger holding the listings and [`SUPPORT`].
pub const NEGATIVE: [(&str, &str, &str); 15] = [
    ("e_cap_attach.mdl", "E-CAP-ATTACH", include_str!("../corpus/negative/e_cap_attach.mdl")),
    ("e_cap_struct.mdl", "E-CAP-STRUCT", include_str!("../corpus/negative/e_cap_struct.mdl")),
    ("e_ctor_closed.mdl", "E-CTOR-CLOSED", include_str!("../corpus/negative/e_ctor_closed.mdl")),
    ("e_eff_escalate.mdl", "E-EFF-ESCALATE", include_str!("../corpus/negative/e_eff_escalate.mdl")),
    ("e_eff_modify_impure.mdl", "E-EFF-MODIFY-IMPURE", include_str!("../corpus/negative/e_eff_modify_impure.mdl")),
    ("e_inspect.mdl", "E-INSPECT", include_str!("../corpus/negative/e_inspect.mdl")),
    ("e_lin_copy.mdl", "E-LIN-COPY", include_str!("../corpus/negative/e_lin_copy.mdl")),
    ("e_lin_drop.mdl", "E-LIN-DROP", include_str!("../corpus/negative/e_lin_drop.mdl")),
    ("e_match_nonexh.mdl", "E-MATCH-NONEXH", include_str!("../corpus/negative/e_match_nonexh.mdl")),
    ("e_rec_forward.mdl", "E-REC-FORWARD", include_str!("../corpus/negative/e_rec_forward.mdl")),
    ("e_risk_undeclared.mdl", "E-RISK-UNDECLARED", include_str!("../corpus/negative/e_risk_undeclared.mdl")),
    ("e_val_caps.mdl", "E-VAL-CAPS", include_str!("../corpus/negative/e_val_caps.mdl")),
    ("e_val_effect.mdl", "E-VAL-EFFECT", include_str!("../corpus/negative/e_val_effect.mdl")),
    ("e_vis_private.mdl", "E-VIS-PRIVATE", include_str!("../corpus/negative/e_vis_private.mdl")),
    ("e_vis_protected.mdl", "E-VIS-PROTECTED", include_str!("../corpus/negative/e_vis_protected.mdl")),
];

/// Deployed before the negative programs; gives them a private function to
/// call.
pub const SUPPORT: (&str, &str) = ("vault.support.mdl", include_str!("../corpus/negative/vault.support.mdl"));

/// Moves tokens between a signer's purse and an escrow purse; used by the
/// deposit/withdraw traffic in the fuzz runs.
pub const TELLER: (&str, &str) = ("teller.mdl", include_str!("../corpus/teller.mdl"));

pub const INITIAL_SUPPLY: u64 = 100_000_000;

/// Elaborate and compile one source file against `registry`.
pub fn compile_source(src: &str, registry: &dyn Registry) -> Result<(BytecodeModule, Vec<u8>), Diags> {
    let (_, tm) = sema::check_source(src, registry)?;
    let m = bytecode::compile(&tm);
    let bytes = bytecode::encode(&m);
    Ok((m, bytes))
}

/// Render diagnostics one per line, as `CODE file:line:col message`.
pub fn render_diags(file: &str, diags: &Diags) -> String {
    diags.iter().map(|d| d.render(file)).collect::<Vec<_>>().join("\n")
}

/// Compile and deploy the listings in order, signing with `deployer`.
pub fn deploy_listings(rt: &mut Runtime, deployer: &str) -> Result<Vec<Receipt>, String> {
    let mut out = Vec::new();
    for (file, src) in LISTINGS {
        let (_, bytes) = compile_source(src, &rt.state.registry).map_err(|d| render_diags(file, &d))?;
        let (r, _) = rt.deploy(&bytes, Some(deployer)).map_err(|e| format!("{file}: {e}"))?;
        out.push(r);
    }
    Ok(out)
}

/// Compile and deploy one extra module, unsigned.
pub fn deploy_extra(rt: &mut Runtime, (file, src): (&str, &str)) -> Result<Receipt, String> {
    let (_, bytes) = compile_source(src, &rt.state.registry).map_err(|d| render_diags(file, &d))?;
    rt.deploy(&bytes, None).map(|(r, _)| r).map_err(|e| format!("{file}: {e}"))
}

/// The listings plus [`SUPPORT`], deployed as alice.
pub fn negative_fixture() -> Result<Runtime, String> {
    let mut rt = Runtime::new();
    deploy_listings(&mut rt, "alice")?;
    deploy_extra(&mut rt, SUPPORT)?;
    Ok(rt)
}

/// Diagnostic codes reported for one source, sorted and deduplicated.
pub fn diagnostic_codes(src: &str, registry: &dyn Registry) -> Vec<&'static str> {
    match sema::check_source(src, registry) {
        Ok(_) => vec![],
        Err(d) => {
            let mut c: Vec<_> = d.iter().map(|d| d.code).collect();
            c.sort();
            c.dedup();
            c
        }
    }
}

pub fn address_of(rt: &Runtime, module: &str) -> Option<ModuleAddress> {
    rt.state.registry.resolve_name(module)
}

/// The context inside `MyFixSupplyToken.defaultStore`.
pub fn store_context(rt: &Runtime) -> Option<[u8; 32]> {
    let a = address_of(rt, "MyFixSupplyToken")?;
    let j = rt.state.registry.module(&a)?.val_index("defaultStore")?;
    let v = rt.state.val(&(a, j))?;
    match &v.kind {
        ValueKind::Adt { fields, .. } => match &fields.first()?.kind {
            ValueKind::Context { id, .. } => Some(*id),
            _ => None,
        },
        _ => None,
    }
}

/// Cell key of the purse of signer `name` in the default store.
pub fn purse_key(rt: &Runtime, name: &str) -> Option<[u8; 32]> {
    Some(cell_key(&store_context(rt)?, &external_id(name)))
}

/// Token amount held in `name`'s purse; an unwritten cell holds zero.
pub fn balance(rt: &Runtime, name: &str) -> Option<u64> {
    let key = purse_key(rt, name)?;
    match rt.state.cell(&key) {
        None => Some(0),
        Some(v) => token_amount(v),
    }
}

pub fn token_amount(v: &Value) -> Option<u64> {
    match &v.kind {
        ValueKind::Adt { fields, .. } => match fields.as_slice() {
            [Value { kind: ValueKind::UInt(n), .. }] => Some(*n),
            _ => None,
        },
        _ => None,
    }
}

/// Sum of every token amount stored in any cell.
pub fn total_supply(rt: &Runtime) -> u128 {
    rt.state.cells().filter_map(|(_, v)| token_amount(v)).map(u128::from).sum()
}

pub fn render_purse(rt: &Runtime, name: &str) -> Option<String> {
    let key = purse_key(rt, name)?;
    rt.state.cell(&key).map(|v| render(v, &rt.state.registry))
}

/// `PurseStorage.transfer[MyToken](src, to, defaultStore, amount)`.
pub fn transfer_request(rt: &Runtime, from: &str, to: &str, amount: i64, signer: Option<&str>) -> Result<CallRequest, String> {
    Ok(CallRequest {
        module: address_of(rt, "PurseStorage").ok_or("PurseStorage is not deployed")?,
        function: "transfer".into(),
        type_args: vec![parse_type("MyToken", &rt.state.registry)?],
        args: vec![
            Arg::Id(from.into()),
            Arg::Id(to.into()),
            Arg::Val { module: "MyFixSupplyToken".into(), name: "defaultStore".into() },
            Arg::Int(amount),
        ],
        signer: signer.map(str::to_string),
        gas_limit: None,
    })
}

/// `Teller.stash` (purse to escrow) or `Teller.unstash` (escrow to purse).
pub fn teller_request(rt: &Runtime, function: &str, who: &str, amount: i64) -> Result<CallRequest, String> {
    Ok(CallRequest {
        module: address_of(rt, "Teller").ok_or("Teller is not deployed")?,
        function: function.into(),
        type_args: vec![],
        args: vec![
            Arg::Id(who.into()),
            Arg::Val { module: "MyFixSupplyToken".into(), name: "defaultStore".into() },
            Arg::Int(amount),
        ],
        signer: Some(who.into()),
        gas_limit: None,
    })
}

pub fn transfer(rt: &mut Runtime, from: &str, to: &str, amount: i64) -> Result<Receipt, TxError> {
    let req = transfer_request(rt, from, to, amount, Some(from)).map_err(TxError::UnknownModule)?;
    rt.call(&req).map(|(r, _)| r)
}

/// Outcome of the golden scenario.
#[derive(Clone, Debug)]
pub struct GoldenRun {
    pub deploys: Vec<Receipt>,
    pub purse_after_deploy: Option<String>,
    pub transfer: Receipt,
    pub alice: u64,
    pub bob: u64,
}

/// Deploy the listings as alice, then transfer 250 to bob.
pub fn golden(rt: &mut Runtime) -> Result<GoldenRun, String> {
    let deploys = deploy_listings(rt, "alice")?;
    let purse_after_deploy = render_purse(rt, "alice");
    let transfer = transfer(rt, "alice", "bob", 250).map_err(|e| e.to_string())?;
    Ok(GoldenRun {
        deploys,
        purse_after_deploy,
        transfer,
        alice: balance(rt, "alice").unwrap_or(0),
        bob: balance(rt, "bob").unwrap_or(0),
    })
}
