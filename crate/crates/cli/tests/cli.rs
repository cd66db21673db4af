//! The `mandala` binary, driven as a subprocess.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TOKEN: &str = "06c9b6a160079ea1cc87d879c8d9e96698932f2814784ef36f4a0aa4fb059d20";
const FINAL_DIGEST: &str = "00aa34075ee2b828be5fb3228f7c6b2edee3bba8540ddce6e5c27074005fe777";
const LISTINGS: [&str; 4] = ["token", "purse", "purse_storage", "my_fix_supply_token"];
const TRANSFER: [&str; 7] =
    ["call", "PurseStorage.transfer", "[MyToken]", "id:alice", "id:bob", "val:MyFixSupplyToken.defaultStore", "uint:250"];

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/corpus")
}

struct Session {
    dir: tempfile::TempDir,
}

impl Session {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        for name in LISTINGS {
            fs::copy(corpus_dir().join(format!("{name}.mdl")), dir.path().join(format!("{name}.mdl"))).unwrap();
        }
        Session { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_mandala"))
            .current_dir(self.dir.path())
            .arg("--store")
            .arg(self.path("store"))
            .args(args)
            .output()
            .unwrap()
    }

    /// Machine mode: exit code and the single stdout line.
    fn machine(&self, args: &[&str]) -> (i32, String) {
        let mut all = vec!["--machine"];
        all.extend_from_slice(args);
        let out = self.run(&all);
        let stdout = String::from_utf8(out.stdout).unwrap();
        let lines: Vec<_> = stdout.lines().collect();
        assert_eq!(lines.len(), 1, "{args:?} printed {stdout:?}");
        (out.status.code().unwrap(), lines[0].to_string())
    }

    fn deploy_listings(&self) -> Vec<String> {
        LISTINGS
            .iter()
            .map(|name| {
                let (code, _) = self.machine(&["compile", &format!("{name}.mdl")]);
                assert_eq!(code, 0);
                let (code, line) = self.machine(&["deploy", &format!("{name}.mdlc"), "--signer", "alice"]);
                assert_eq!(code, 0, "{line}");
                line
            })
            .collect()
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn check_accepts_the_token_listing() {
    let s = Session::new();
    assert_eq!(s.run(&["check", "token.mdl"]).status.code(), Some(0));
    let all: Vec<String> = LISTINGS.iter().map(|n| format!("{n}.mdl")).collect();
    let mut args = vec!["check"];
    args.extend(all.iter().map(String::as_str));
    assert_eq!(s.machine(&args), (0, "ok 4".into()));
}

#[test]
fn check_reports_one_code_for_a_negative_program() {
    let s = Session::new();
    let file = corpus_dir().join("negative/e_lin_copy.mdl");
    let out = s.run(&["check", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("E-LIN-COPY e_lin_copy.mdl:"), "{err}");
}

#[test]
fn missing_file_is_an_io_error() {
    let s = Session::new();
    assert_eq!(s.run(&["check", "nope.mdl"]).status.code(), Some(2));
    assert_eq!(s.run(&["deploy", "nope.mdlc"]).status.code(), Some(2));
}

#[test]
fn compile_prints_the_address_and_is_deterministic() {
    let s = Session::new();
    assert_eq!(s.machine(&["compile", "token.mdl"]), (0, TOKEN.into()));
    let first = fs::read(s.path("token.mdlc")).unwrap();
    s.machine(&["compile", "token.mdl", "-o", "again.mdlc"]);
    assert_eq!(fs::read(s.path("again.mdlc")).unwrap(), first);
}

#[test]
fn compiling_without_dependencies_reports_the_missing_import() {
    let s = Session::new();
    let out = s.run(&["compile", "my_fix_supply_token.mdl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("E-IMPORT-MISSING"), "{}", stderr(&out));
}

#[test]
fn deploy_transfer_and_inspect() {
    let s = Session::new();
    let receipts = s.deploy_listings();
    assert_eq!(
        receipts[3],
        "ok 366 366 2dde9a475d1b19f5c42fbb7c784a934f5b476855b387fcc3370733976c9f69d4 \
         92115f38bd06bd899c4455b0eea90c8e2f1c3b79e629883e21f184dd3998a495"
    );
    assert_eq!(s.machine(&["inspect", "purse:alice"]), (0, "Token[MyToken](100000000)".into()));
    assert_eq!(
        s.machine(&["inspect", "Token"]),
        (0, format!("module Token {TOKEN} types=1 functions=4 bounds=merge:12,split:18,mint:4,zero:4"))
    );
    assert_eq!(s.machine(&["inspect", TOKEN]).1, s.machine(&["inspect", "Token"]).1);

    // Failed commands first; each leaves the state as it was, so the
    // transfer afterwards still lands on the golden digest.
    let (code, line) = s.machine(&TRANSFER);
    assert_eq!((code, line.as_str()), (1, "error TxRejected(MissingSigner)"));
    let mut low = TRANSFER.to_vec();
    low.extend(["--signer", "alice", "--gas", "669"]);
    let (code, line) = s.machine(&low);
    assert_eq!(code, 1);
    assert!(line.starts_with("error TxRejected(InsufficientGasLimit)"), "{line}");
    let (code, line) = s.machine(&["deploy", "my_fix_supply_token.mdlc", "--signer", "alice"]);
    assert_eq!(code, 1);
    assert!(line.starts_with("error DuplicateModule"), "{line}");
    let mut carol = TRANSFER.to_vec();
    carol[3] = "id:carol";
    carol.extend(["--signer", "carol"]);
    let (code, line) = s.machine(&carol);
    assert_eq!(code, 1);
    assert!(line.starts_with("error:NumericUnderflow "), "{line}");

    let mut ok = TRANSFER.to_vec();
    ok.extend(["--signer", "alice"]);
    assert_eq!(s.machine(&ok), (0, format!("ok 656 670 {FINAL_DIGEST} ()")));
    assert_eq!(s.machine(&["inspect", "purse:bob"]), (0, "Token[MyToken](250)".into()));
}

#[test]
fn tampered_bytecode_is_rejected_at_deploy() {
    let s = Session::new();
    s.machine(&["compile", "token.mdl"]);
    let bytes = fs::read(s.path("token.mdlc")).unwrap();
    fs::write(s.path("cut.mdlc"), &bytes[..bytes.len() - 1]).unwrap();
    let (code, line) = s.machine(&["deploy", "cut.mdlc"]);
    assert_eq!(code, 1);
    assert!(line.starts_with("error V-DECODE"), "{line}");
    // Clearing the declared risks of merge (the first function).
    let m = mandala_core::bytecode::decode(&bytes).unwrap();
    let mut m2 = m.clone();
    m2.functions[0].risks.clear();
    fs::write(s.path("norisk.mdlc"), mandala_core::bytecode::encode(&m2)).unwrap();
    let (code, line) = s.machine(&["deploy", "norisk.mdlc"]);
    assert_eq!(code, 1);
    assert!(line.starts_with("error V-RISK"), "{line}");
}

#[test]
fn inspect_unknown_objects() {
    let s = Session::new();
    s.deploy_listings();
    for target in ["Nope", &"00".repeat(32), "Token.nope", "purse"] {
        let (code, line) = s.machine(&["inspect", target]);
        assert_eq!((code, line), (1, format!("error NotFound: {target}")));
    }
}

#[test]
fn corpus_prints_the_pinned_digest_once() {
    let s = Session::new();
    assert_eq!(s.machine(&["corpus"]), (0, FINAL_DIGEST.into()));
    let (code, line) = s.machine(&["corpus"]);
    assert_eq!(code, 1);
    assert!(line.starts_with("error DuplicateModule"), "{line}");
}

#[test]
fn second_process_on_a_busy_store_is_an_io_error() {
    let s = Session::new();
    s.deploy_listings();
    let _held = mandala_core::ledger::Store::open(s.path("store")).unwrap();
    let (code, line) = s.machine(&["inspect", "Token"]);
    assert_eq!(code, 2);
    assert!(line.starts_with("io-error"), "{line}");
}

#[test]
fn machine_session_matches_the_golden_transcript() {
    let s = Session::new();
    let mut transcript = String::new();
    let mut step = |args: &[&str]| {
        let (code, line) = s.machine(args);
        transcript.push_str(&format!("{code} {line}\n"));
    };
    step(&["check", "token.mdl", "purse.mdl", "purse_storage.mdl", "my_fix_supply_token.mdl"]);
    for name in LISTINGS {
        step(&["compile", &format!("{name}.mdl")]);
        step(&["deploy", &format!("{name}.mdlc"), "--signer", "alice"]);
    }
    for target in ["Token", "Purse", "PurseStorage", "MyFixSupplyToken", "purse:alice", "MyFixSupplyToken.defaultStore"] {
        step(&["inspect", target]);
    }
    let mut t = TRANSFER.to_vec();
    step(&t);
    t.extend(["--signer", "alice"]);
    step(&t);
    step(&t);
    step(&["inspect", "purse:bob"]);
    let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/session.txt")).unwrap();
    assert_eq!(transcript, golden);
}
