//! `mandala`: check, compile, deploy, call and inspect modules against an
//! on-disk ledger, or run the golden corpus end to end.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};

use mandala_core::bytecode::{self, BytecodeModule};
use mandala_core::corpus::{self, compile_source, render_diags, LISTINGS};
use mandala_core::ledger::{LedgerError, Store};
use mandala_core::registry::{MemoryRegistry, Registry};
use mandala_core::runtime::args::parse_type_list;
use mandala_core::runtime::value::{render, render_type};
use mandala_core::runtime::{Arg, CallRequest, Receipt, TxError};
use mandala_core::types::{Cap, CapSet, ModuleAddress, ModuleId, SemType, Visibility};
use mandala_core::validator;

#[derive(Parser, Debug)]
#[command(name = "mandala", version, about = "Mandala compiler, validator and ledger")]
struct Cli {
    /// Ledger directory.
    #[arg(long, global = true, default_value = "mandala-store")]
    store: PathBuf,
    /// Signer asserted for the transaction.
    #[arg(long, global = true)]
    signer: Option<String>,
    /// Gas limit; defaults to the stored bound of the target.
    #[arg(long, global = true)]
    gas: Option<u64>,
    /// One result line per command.
    #[arg(long, global = true)]
    machine: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Elaborate source files in order against the store's modules.
    Check { files: Vec<PathBuf> },
    /// Compile one source file to canonical bytecode.
    Compile {
        file: PathBuf,
        /// Output path; defaults to the source path with `.mdlc`.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Validate and deploy a `.mdlc` file.
    Deploy { file: PathBuf },
    /// Call `Module.function` with optional `[TypeArgs]` and tagged arguments.
    Call {
        target: String,
        /// `[T, ...]` followed by `uint:5`, `int:-3`, `id:alice`, `val:M.v` or `unit`.
        args: Vec<String>,
    },
    /// Dump a module (name or address), a cell key, a val (`Module.val`)
    /// or a signer's purse (`purse:NAME`).
    Inspect { target: String },
    /// Deploy the listings as alice into a fresh store, transfer 250 to bob
    /// and print the final digest.
    Corpus,
}

/// How a command failed.
#[derive(Debug)]
enum Failure {
    /// Diagnostics, rejections, error receipts, missing objects: exit 1.
    Rejected(String),
    /// A receipt with an error status: exit 1, printed like a success.
    Receipt(String),
    /// The file system or the store itself: exit 2.
    Io(anyhow::Error),
}

impl From<LedgerError> for Failure {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::Tx(t) => Failure::Rejected(t.to_string()),
            other => Failure::Io(other.into()),
        }
    }
}

impl From<TxError> for Failure {
    fn from(e: TxError) -> Self {
        Failure::Rejected(e.to_string())
    }
}

/// Human lines and the single machine line of a successful command.
struct Output {
    human: Vec<String>,
    machine: String,
}

impl Output {
    fn line(s: String) -> Self {
        Output { human: vec![s.clone()], machine: s }
    }
}

type Res = Result<Output, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let machine = cli.machine;
    match run(cli) {
        Ok(out) => {
            if machine {
                println!("{}", out.machine);
            } else {
                // A closed pipe (`| head`) just ends the listing.
                let mut stdout = std::io::stdout().lock();
                for l in out.human {
                    if writeln!(stdout, "{l}").is_err() {
                        break;
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Rejected(msg)) => {
            eprintln!("{msg}");
            if machine {
                println!("error {}", msg.lines().next().unwrap_or_default());
            }
            ExitCode::from(1)
        }
        Err(Failure::Receipt(line)) => {
            println!("{line}");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            if machine {
                println!("io-error {e:#}");
            }
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Res {
    match &cli.command {
        Command::Check { files } => check(&cli, files),
        Command::Compile { file, out } => compile(&cli, file, out.as_deref()),
        Command::Deploy { file } => deploy(&cli, file),
        Command::Call { target, args } => call(&cli, target, args),
        Command::Inspect { target } => inspect(&cli, target),
        Command::Corpus => run_corpus(&cli),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Io)
}

fn open(cli: &Cli) -> Result<Store, Failure> {
    Store::open(&cli.store).map_err(Failure::from)
}

/// Registry of the store, or an empty one when no store exists yet.
fn registry(cli: &Cli) -> Result<MemoryRegistry, Failure> {
    if cli.store.exists() {
        Ok(open(cli)?.state().registry.clone())
    } else {
        Ok(MemoryRegistry::new())
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn check(cli: &Cli, files: &[PathBuf]) -> Res {
    let mut reg = registry(cli)?;
    let mut human = Vec::new();
    for path in files {
        let src = read(path)?;
        let name = file_name(path);
        let (_, bytes) = compile_source(&src, &reg).map_err(|d| Failure::Rejected(render_diags(&name, &d)))?;
        // Later files may import earlier ones.
        let vm = validator::validate(&bytes, &reg).map_err(|r| Failure::Rejected(validator::reject_line(&r)))?;
        human.push(format!("{name}: ok ({} {})", vm.module.name, vm.address));
        reg.insert(&vm, bytes);
    }
    Ok(Output { human, machine: format!("ok {}", files.len()) })
}

fn compile(cli: &Cli, file: &Path, out: Option<&Path>) -> Res {
    let src = read(file)?;
    let reg = registry(cli)?;
    let (m, bytes) = compile_source(&src, &reg).map_err(|d| Failure::Rejected(render_diags(&file_name(file), &d)))?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| file.with_extension("mdlc"));
    fs::write(&out, &bytes).with_context(|| format!("writing {}", out.display())).map_err(Failure::Io)?;
    let addr = bytecode::address(&m).to_hex();
    Ok(Output { human: vec![format!("{} -> {} ({} bytes)", m.name, out.display(), bytes.len()), addr.clone()], machine: addr })
}

fn deploy(cli: &Cli, file: &Path) -> Res {
    let bytes = fs::read(file).with_context(|| format!("reading {}", file.display())).map_err(Failure::Io)?;
    let mut store = open(cli)?;
    let r = store.deploy(&bytes, cli.signer.as_deref())?;
    receipt(r)
}

fn receipt(r: Receipt) -> Res {
    if r.is_ok() {
        Ok(Output::line(r.line()))
    } else {
        Err(Failure::Receipt(r.line()))
    }
}

fn call(cli: &Cli, target: &str, raw: &[String]) -> Res {
    let mut store = open(cli)?;
    let reg = &store.state().registry;
    let (module, function) = target
        .rsplit_once('.')
        .ok_or_else(|| Failure::Rejected(format!("expected Module.function, got `{target}`")))?;
    let module = resolve_module(reg, module).ok_or_else(|| Failure::Rejected(format!("NotFound: module {module}")))?;
    let (type_args, rest) = match raw.first() {
        Some(t) if t.starts_with('[') => (parse_type_list(t, reg).map_err(Failure::Rejected)?, &raw[1..]),
        _ => (vec![], raw),
    };
    let args = rest.iter().map(|a| Arg::parse(a)).collect::<Result<Vec<_>, _>>().map_err(Failure::Rejected)?;
    let req = CallRequest {
        module,
        function: function.to_string(),
        type_args,
        args,
        signer: cli.signer.clone(),
        gas_limit: cli.gas,
    };
    receipt(store.call(&req)?)
}

fn resolve_module(reg: &dyn Registry, s: &str) -> Option<ModuleAddress> {
    match ModuleAddress::from_hex(s) {
        Some(a) if reg.module(&a).is_some() => Some(a),
        _ => reg.resolve_name(s),
    }
}

fn inspect(cli: &Cli, target: &str) -> Res {
    let store = open(cli)?;
    let rt = &store.runtime;
    let reg = &rt.state.registry;
    let not_found = || Failure::Rejected(format!("NotFound: {target}"));

    if let Some(name) = target.strip_prefix("purse:") {
        let key = corpus::purse_key(rt, name).ok_or_else(not_found)?;
        let v = rt.state.cell(&key).ok_or_else(not_found)?;
        return Ok(Output::line(render(v, reg)));
    }
    if let Some(a) = resolve_module(reg, target) {
        let m = reg.module(&a).ok_or_else(not_found)?;
        return Ok(dump_module(reg, a, m));
    }
    if let Some(key) = hex::decode(target).ok().and_then(|b| <[u8; 32]>::try_from(b).ok()) {
        let v = rt.state.cell(&key).ok_or_else(not_found)?;
        return Ok(Output::line(render(v, reg)));
    }
    if let Some((module, val)) = target.split_once('.') {
        let a = resolve_module(reg, module).ok_or_else(not_found)?;
        let j = reg.module(&a).and_then(|m| m.val_index(val)).ok_or_else(not_found)?;
        let v = rt.state.val(&(a, j)).ok_or_else(not_found)?;
        return Ok(Output::line(render(v, reg)));
    }
    Err(not_found())
}

fn caps_text(caps: &CapSet, reg: &dyn Registry) -> String {
    caps.iter()
        .map(|c| match (c.builtin_name(), c) {
            (Some(n), _) => n.to_string(),
            (None, Cap::User(r)) => match r.module {
                ModuleId::Addr(a) => reg
                    .module(&a)
                    .and_then(|m| m.caps.get(r.index as usize))
                    .map(|d| d.name.clone())
                    .unwrap_or_else(|| format!("{}#{}", a.short(), r.index)),
                ModuleId::Local => format!("#{}", r.index),
            },
            (None, _) => unreachable!("builtins have names"),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// `t` with type variables shown by their declared names.
fn ty(t: &SemType, this: ModuleAddress, params: &[String], reg: &dyn Registry) -> String {
    let mut s = render_type(&t.resolve(this), reg);
    for (i, p) in params.iter().enumerate().rev() {
        s = s.replace(&format!("'{i}"), p);
    }
    s
}

fn dump_module(reg: &dyn Registry, a: ModuleAddress, m: &BytecodeModule) -> Output {
    let bounds = reg.bounds(&a);
    let mut h = vec![format!("module {} {a}", m.name)];
    for imp in &m.imports {
        let name = reg.module(imp).map(|m| m.name.as_str()).unwrap_or("?");
        h.push(format!("  import {name} {imp}"));
    }
    for t in &m.types {
        let mut s = format!("  type {}", t.name);
        if !t.type_params.is_empty() {
            let _ = write!(s, "[{}]", t.type_params.join(", "));
        }
        let _ = write!(s, " caps {{{}}}", caps_text(&t.caps.resolve(a), reg));
        if t.public {
            s.push_str(" public");
        }
        if t.open {
            s.push_str(" open");
        }
        h.push(s);
        for c in &t.ctors {
            let fields: Vec<_> = c.fields.iter().map(|f| ty(f, a, &t.type_params, reg)).collect();
            h.push(format!("    {}({})", c.name, fields.join(", ")));
        }
    }
    for c in &m.caps {
        h.push(format!("  capability {}{}", c.name, if c.open { " open" } else { "" }));
    }
    let mut entries = Vec::new();
    for (i, f) in m.functions.iter().enumerate() {
        let vis = match f.visibility {
            Visibility::Public => "public".to_string(),
            Visibility::Private => "private".to_string(),
            Visibility::Protected(p) => format!("protected[{}]", f.type_params.get(p as usize).map_or("?", |s| s.as_str())),
        };
        let params: Vec<_> = f.params.iter().map(|p| ty(&p.ty, a, &f.type_params, reg)).collect();
        let bound = bounds.and_then(|b| b.functions.get(i)).copied().unwrap_or_default();
        let mut s = format!("  fn {}", f.name);
        if !f.type_params.is_empty() {
            let _ = write!(s, "[{}]", f.type_params.join(", "));
        }
        let _ = write!(s, "({}) -> {} {vis} {}", params.join(", "), ty(&f.ret, a, &f.type_params, reg), f.effect.keyword());
        if !f.risks.is_empty() {
            let _ = write!(s, " risks {}", f.risks.iter().map(|r| r.name().to_string()).collect::<Vec<_>>().join(","));
        }
        let _ = write!(s, " bound {bound}");
        h.push(s);
        entries.push(format!("{}:{bound}", f.name));
    }
    for (i, v) in m.vals.iter().enumerate() {
        let bound = bounds.and_then(|b| b.vals.get(i)).copied().unwrap_or_default();
        h.push(format!("  val {}: {} bound {bound}", v.name, ty(&v.ty, a, &[], reg)));
        entries.push(format!("val.{}:{bound}", v.name));
    }
    if let Some(b) = bounds.and_then(|b| b.init) {
        h.push(format!("  init bound {b}"));
        entries.push(format!("init:{b}"));
    }
    let machine = format!(
        "module {} {a} types={} functions={} bounds={}",
        m.name,
        m.types.len(),
        m.functions.len(),
        entries.join(",")
    );
    Output { human: h, machine }
}

fn run_corpus(cli: &Cli) -> Res {
    let mut store = open(cli)?;
    let mut human = Vec::new();
    for (file, src) in LISTINGS {
        let (_, bytes) =
            compile_source(src, &store.state().registry).map_err(|d| Failure::Rejected(render_diags(file, &d)))?;
        let r = store.deploy(&bytes, Some("alice"))?;
        human.push(format!("deploy {file}: {}", r.line()));
        if !r.is_ok() {
            return Err(Failure::Rejected(human.join("\n")));
        }
    }
    human.push(format!("alice purse: {}", corpus::render_purse(&store.runtime, "alice").unwrap_or_else(|| "-".into())));
    let req = corpus::transfer_request(&store.runtime, "alice", "bob", 250, Some("alice")).map_err(Failure::Rejected)?;
    let r = store.call(&req)?;
    human.push(format!("transfer 250 alice -> bob: {}", r.line()));
    for who in ["alice", "bob"] {
        human.push(format!("{who}: {}", corpus::balance(&store.runtime, who).unwrap_or_default()));
    }
    let digest = hex::encode(store.runtime.digest());
    human.push(format!("final digest {digest}"));
    Ok(Output { human, machine: digest })
}
