//! On-disk store: `modules/<address>.mdlc`, `wal.log`, `snapshot.bin`,
//! `manifest.txt` and `LOCK`.
//!
//! Every committed transaction appends one WAL record
//! `[u32 length][payload][sha256(payload)]` and fsyncs before returning.
//! Every `SNAPSHOT_EVERY` commits the whole state is written to
//! `snapshot.bin` (same record format) and the log is truncated. Records
//! carry the transaction counter, so records already covered by a snapshot
//! are skipped on replay.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::state::{read_bounds, write_bounds, CommitRecord, LedgerState, ModuleRecord};
use crate::bytecode::codec::{DecodeError, Reader, Writer};
use crate::registry::Registry;
use crate::runtime::value::{write_value, Value};
use crate::runtime::{CallRequest, Receipt, Runtime, TxError};
use crate::types::ModuleAddress;

pub const SNAPSHOT_EVERY: u32 = 64;
const SNAPSHOT_MAGIC: &[u8; 4] = b"MDLS";

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("StoreCorrupt({0})")]
    Corrupt(String),
    #[error("store is locked by another process")]
    Locked,
    #[error("simulated crash")]
    Crashed,
}

/// Where `persist` stops when a crash is being simulated.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CrashPoint {
    /// Nothing of the transaction reaches the disk.
    BeforeWal,
    /// The WAL record is durable; snapshot and manifest are not updated.
    AfterWal,
}

pub struct Store {
    dir: PathBuf,
    pub runtime: Runtime,
    wal: File,
    _lock: File,
    since_snapshot: u32,
    crash: Option<CrashPoint>,
}

fn corrupt(e: impl ToString) -> LedgerError {
    LedgerError::Corrupt(e.to_string())
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> Result<Store, LedgerError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("modules"))?;
        let lock = OpenOptions::new().create(true).truncate(false).write(true).open(dir.join("LOCK"))?;
        if lock.try_lock().is_err() {
            return Err(LedgerError::Locked);
        }
        let mut state = LedgerState::new();
        let snap = dir.join("snapshot.bin");
        if snap.exists() {
            let bytes = fs::read(&snap)?;
            let payload = check_snapshot(&bytes)?;
            let rec = decode_record(payload, &dir)?;
            state.apply(&rec).map_err(corrupt)?;
        }
        let wal_path = dir.join("wal.log");
        let mut since_snapshot = 0;
        if wal_path.exists() {
            let bytes = fs::read(&wal_path)?;
            let mut pos = 0;
            while pos < bytes.len() {
                let payload = frame_at(&bytes, &mut pos)?;
                let rec = decode_record(payload, &dir)?;
                if rec.counter <= state.tx_counter() {
                    continue;
                }
                if rec.counter != state.tx_counter() + 1 {
                    return Err(corrupt(format!("log skips from {} to {}", state.tx_counter(), rec.counter)));
                }
                state.apply(&rec).map_err(corrupt)?;
                since_snapshot += 1;
            }
        }
        let wal = OpenOptions::new().create(true).append(true).open(&wal_path)?;
        Ok(Store { dir, runtime: Runtime::from_state(state), wal, _lock: lock, since_snapshot, crash: None })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn state(&self) -> &LedgerState {
        &self.runtime.state
    }

    /// Make the next `persist` stop at `p`. The store must be dropped and
    /// reopened afterwards, as after a real crash.
    pub fn inject_crash(&mut self, p: CrashPoint) {
        self.crash = Some(p);
    }

    pub fn deploy(&mut self, bytes: &[u8], signer: Option<&str>) -> Result<Receipt, LedgerError> {
        let (receipt, rec) = self.runtime.deploy(bytes, signer)?;
        self.persist(&rec)?;
        Ok(receipt)
    }

    pub fn call(&mut self, req: &CallRequest) -> Result<Receipt, LedgerError> {
        let (receipt, rec) = self.runtime.call(req)?;
        self.persist(&rec)?;
        Ok(receipt)
    }

    fn persist(&mut self, rec: &CommitRecord) -> Result<(), LedgerError> {
        if self.crash == Some(CrashPoint::BeforeWal) {
            return Err(LedgerError::Crashed);
        }
        for m in &rec.modules {
            let path = self.module_path(&m.address);
            if !path.exists() {
                write_atomic(&path, &m.bytes)?;
            }
        }
        let payload = encode_record(rec);
        let mut frame = Vec::with_capacity(payload.len() + 36);
        frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        frame.extend_from_slice(&payload);
        frame.extend_from_slice(&Sha256::digest(&payload));
        self.wal.write_all(&frame)?;
        self.wal.sync_data()?;
        if self.crash == Some(CrashPoint::AfterWal) {
            return Err(LedgerError::Crashed);
        }
        if !rec.modules.is_empty() {
            self.write_manifest()?;
        }
        self.since_snapshot += 1;
        if self.since_snapshot >= SNAPSHOT_EVERY {
            self.snapshot()?;
        }
        Ok(())
    }

    /// Write the full state to `snapshot.bin` and truncate the log.
    pub fn snapshot(&mut self) -> Result<(), LedgerError> {
        let state = &self.runtime.state;
        let rec = CommitRecord {
            counter: state.tx_counter(),
            modules: state
                .modules_in_order()
                .into_iter()
                .map(|a| {
                    let d = state.registry.deployed(&a).expect("listed");
                    ModuleRecord { address: a, bytes: d.bytes.as_ref().clone(), bounds: d.bounds.clone() }
                })
                .collect(),
            cells: state.cells().map(|(k, v)| (*k, v.clone())).collect(),
            vals: state.vals().map(|(k, v)| (*k, v.clone())).collect(),
        };
        let payload = encode_record(&rec);
        let mut bytes = SNAPSHOT_MAGIC.to_vec();
        bytes.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&payload);
        bytes.extend_from_slice(&Sha256::digest(&payload));
        write_atomic(&self.dir.join("snapshot.bin"), &bytes)?;
        self.wal.set_len(0)?;
        self.wal.sync_all()?;
        self.since_snapshot = 0;
        Ok(())
    }

    fn module_path(&self, a: &ModuleAddress) -> PathBuf {
        self.dir.join("modules").join(format!("{}.mdlc", a.to_hex()))
    }

    fn write_manifest(&self) -> io::Result<()> {
        let mut s = String::new();
        for (n, a) in self.runtime.state.registry.module_names() {
            s.push_str(&format!("{n} {}\n", a.to_hex()));
        }
        write_atomic(&self.dir.join("manifest.txt"), s.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

fn check_snapshot(bytes: &[u8]) -> Result<&[u8], LedgerError> {
    if bytes.len() < 44 || &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(corrupt("snapshot header"));
    }
    let len = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
    if bytes.len() != 12 + len + 32 {
        return Err(corrupt("snapshot length"));
    }
    let payload = &bytes[12..12 + len];
    if Sha256::digest(payload).as_slice() != &bytes[12 + len..] {
        return Err(corrupt("snapshot checksum"));
    }
    Ok(payload)
}

fn frame_at<'b>(bytes: &'b [u8], pos: &mut usize) -> Result<&'b [u8], LedgerError> {
    let at = *pos;
    if bytes.len() - at < 4 {
        return Err(corrupt(format!("truncated log record at byte {at}")));
    }
    let len = u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    if bytes.len() - at - 4 < len + 32 {
        return Err(corrupt(format!("truncated log record at byte {at}")));
    }
    let payload = &bytes[at + 4..at + 4 + len];
    if Sha256::digest(payload).as_slice() != &bytes[at + 4 + len..at + 36 + len] {
        return Err(corrupt(format!("checksum mismatch in log record at byte {at}")));
    }
    *pos = at + 36 + len;
    Ok(payload)
}

/// Module bytes are not inlined; they live in `modules/`.
pub fn encode_record(rec: &CommitRecord) -> Vec<u8> {
    let mut w = Writer::new();
    w.u64(rec.counter);
    w.u32(rec.modules.len() as u32);
    for m in &rec.modules {
        w.bytes(&m.address.0);
        write_bounds(&mut w, &m.bounds);
    }
    w.u32(rec.cells.len() as u32);
    for (k, v) in &rec.cells {
        w.bytes(k);
        write_value(&mut w, v);
    }
    w.u32(rec.vals.len() as u32);
    for ((a, i), v) in &rec.vals {
        w.bytes(&a.0);
        w.u16(*i);
        write_value(&mut w, v);
    }
    w.buf
}

fn decode_record(payload: &[u8], dir: &Path) -> Result<CommitRecord, LedgerError> {
    let mut r = Reader::new(payload);
    let rec = read_record(&mut r, dir)?;
    if !r.is_empty() {
        return Err(corrupt("trailing bytes in record"));
    }
    Ok(rec)
}

fn read_record(r: &mut Reader, dir: &Path) -> Result<CommitRecord, LedgerError> {
    let dec = |e: DecodeError| corrupt(e);
    let counter = r.u64().map_err(dec)?;
    let mut rec = CommitRecord { counter, ..Default::default() };
    for _ in 0..r.u32().map_err(dec)? {
        let address = ModuleAddress(r.array32().map_err(dec)?);
        let bounds = read_bounds(r).map_err(dec)?;
        let path = dir.join("modules").join(format!("{}.mdlc", address.to_hex()));
        let bytes = fs::read(&path).map_err(|e| corrupt(format!("module {}: {e}", address.short())))?;
        rec.modules.push(ModuleRecord { address, bytes, bounds });
    }
    for _ in 0..r.u32().map_err(dec)? {
        let k = r.array32().map_err(dec)?;
        rec.cells.push((k, read_value(r)?));
    }
    for _ in 0..r.u32().map_err(dec)? {
        let a = ModuleAddress(r.array32().map_err(dec)?);
        let i = r.u16().map_err(dec)?;
        rec.vals.push(((a, i), read_value(r)?));
    }
    Ok(rec)
}

fn read_value(r: &mut Reader) -> Result<Value, LedgerError> {
    crate::runtime::value::read_value(r, 0).map_err(corrupt)
}
