//! Durable building blocks: a checksummed append-only record log and an
//! ordered key-value store persisted through it.
//!
//! Record frame: `u32 len | u32 crc32(payload) | payload`, little-endian.
//! On open, the log is scanned and any torn or corrupt tail is truncated,
//! so a batch is either fully present or absent after a crash.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Read;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result, StorageError};
use crate::fault::{FailPoint, FaultKind};

const FRAME_HEADER: usize = 8;

/// How hard a store pushes each write to the device.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiskConfig {
    /// `fdatasync` after every append.
    pub fsync: bool,
    /// Extra delay after the sync, modelling a slower device than the host's.
    pub sync_delay: Duration,
}

impl DiskConfig {
    /// No syncing at all; for tests that only care about contents.
    pub const fn volatile() -> Self {
        DiskConfig {
            fsync: false,
            sync_delay: Duration::ZERO,
        }
    }

    pub const fn durable() -> Self {
        DiskConfig {
            fsync: true,
            sync_delay: Duration::ZERO,
        }
    }

    pub fn with_sync_delay(mut self, delay: Duration) -> Self {
        self.sync_delay = delay;
        self
    }
}

impl Default for DiskConfig {
    fn default() -> Self {
        Self::durable()
    }
}

pub struct Record {
    pub offset: u64,
    pub payload: Vec<u8>,
}

pub struct RecordLog {
    path: PathBuf,
    file: File,
    len: u64,
    /// Length to truncate back to before the next append, after a torn write.
    torn_from: Option<u64>,
    disk: DiskConfig,
}

impl RecordLog {
    /// Opens (creating if needed) and replays the log.
    pub fn open(path: &Path, disk: DiskConfig) -> Result<(Self, Vec<Record>)> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)?;
        let (records, valid_len) = scan_frames(&buf);
        if valid_len < buf.len() as u64 {
            log::warn!(
                "{}: truncating {} bytes of torn tail",
                path.display(),
                buf.len() as u64 - valid_len
            );
            file.set_len(valid_len)?;
            file.sync_all()?;
        }
        Ok((
            RecordLog {
                path: path.to_path_buf(),
                file,
                len: valid_len,
                torn_from: None,
                disk,
            },
            records,
        ))
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn reader(&self) -> Result<File> {
        Ok(self.file.try_clone()?)
    }

    /// Appends one record and returns its offset.
    pub fn append(&mut self, payload: &[u8], fp: &FailPoint, target: &'static str) -> Result<u64> {
        if let Some(len) = self.torn_from.take() {
            self.file.set_len(len)?;
        }
        let frame = frame(payload);
        let offset = self.len;
        match fp.check() {
            Some(FaultKind::Error) => return Err(StorageError::Injected(target).into()),
            Some(FaultKind::TornWrite) => {
                let half = &frame[..frame.len() / 2];
                self.file.write_all_at(half, offset)?;
                self.file.sync_data()?;
                self.torn_from = Some(offset);
                return Err(StorageError::Injected(target).into());
            }
            None => {}
        }
        self.file.write_all_at(&frame, offset)?;
        self.sync()?;
        self.len += frame.len() as u64;
        Ok(offset)
    }

    fn sync(&self) -> Result<()> {
        if self.disk.fsync {
            self.file.sync_data()?;
        }
        if !self.disk.sync_delay.is_zero() {
            std::thread::sleep(self.disk.sync_delay);
        }
        Ok(())
    }
}

fn frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + FRAME_HEADER);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Reads the record starting at `offset` from `file`.
pub fn read_record_at(file: &File, offset: u64) -> Result<Vec<u8>> {
    let mut header = [0u8; FRAME_HEADER];
    file.read_exact_at(&mut header, offset)?;
    let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    let crc = u32::from_le_bytes(header[4..].try_into().unwrap());
    let mut payload = vec![0u8; len];
    file.read_exact_at(&mut payload, offset + FRAME_HEADER as u64)?;
    if crc32fast::hash(&payload) != crc {
        return Err(StorageError::Corrupt(format!("checksum mismatch at offset {offset}")).into());
    }
    Ok(payload)
}

fn scan_frames(buf: &[u8]) -> (Vec<Record>, u64) {
    let mut records = Vec::new();
    let mut pos = 0usize;
    while buf.len() - pos >= FRAME_HEADER {
        let len = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(buf[pos + 4..pos + 8].try_into().unwrap());
        let start = pos + FRAME_HEADER;
        let Some(end) = start.checked_add(len).filter(|e| *e <= buf.len()) else {
            break;
        };
        let payload = &buf[start..end];
        if crc32fast::hash(payload) != crc {
            break;
        }
        records.push(Record {
            offset: pos as u64,
            payload: payload.to_vec(),
        });
        pos = end;
    }
    (records, pos as u64)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BatchOp {
    Put(Vec<u8>, Vec<u8>),
    Delete(Vec<u8>),
}

/// Ordered in-memory map whose batches are logged before they become
/// visible.
pub struct KvStore {
    name: &'static str,
    map: RwLock<BTreeMap<Vec<u8>, Vec<u8>>>,
    log: Mutex<RecordLog>,
    failpoint: FailPoint,
}

impl KvStore {
    pub fn open(path: &Path, disk: DiskConfig, name: &'static str) -> Result<Self> {
        let (log, records) = RecordLog::open(path, disk)?;
        let mut map = BTreeMap::new();
        for r in records {
            for op in decode_batch(&r.payload)? {
                apply(&mut map, op);
            }
        }
        Ok(KvStore {
            name,
            map: RwLock::new(map),
            log: Mutex::new(log),
            failpoint: FailPoint::new(),
        })
    }

    pub fn failpoint(&self) -> &FailPoint {
        &self.failpoint
    }

    pub fn get(&self, key: &[u8]) -> Option<Vec<u8>> {
        self.map.read().unwrap().get(key).cloned()
    }

    /// Looks up several keys under one read lock.
    pub fn get_many<'a>(&self, keys: impl IntoIterator<Item = &'a [u8]>) -> Vec<Option<Vec<u8>>> {
        let map = self.map.read().unwrap();
        keys.into_iter().map(|k| map.get(k).cloned()).collect()
    }

    pub fn scan_prefix(&self, prefix: &[u8]) -> Vec<(Vec<u8>, Vec<u8>)> {
        let map = self.map.read().unwrap();
        map.range(prefix.to_vec()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// All entries in key order.
    pub fn dump(&self) -> Vec<(Vec<u8>, Vec<u8>)> {
        let map = self.map.read().unwrap();
        map.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Atomically applies `ops`: logged first, then made visible in one step.
    pub fn write(&self, ops: Vec<BatchOp>) -> Result<()> {
        let payload = encode_batch(&ops);
        let mut log = self.log.lock().unwrap();
        log.append(&payload, &self.failpoint, self.name)?;
        let mut map = self.map.write().unwrap();
        for op in ops {
            apply(&mut map, op);
        }
        Ok(())
    }
}

fn apply(map: &mut BTreeMap<Vec<u8>, Vec<u8>>, op: BatchOp) {
    match op {
        BatchOp::Put(k, v) => {
            map.insert(k, v);
        }
        BatchOp::Delete(k) => {
            map.remove(&k);
        }
    }
}

fn encode_batch(ops: &[BatchOp]) -> Vec<u8> {
    let mut e = Encoder::new();
    e.u32(ops.len() as u32);
    for op in ops {
        match op {
            BatchOp::Put(k, v) => e.u8(1).bytes(k).bytes(v),
            BatchOp::Delete(k) => e.u8(0).bytes(k),
        };
    }
    e.finish()
}

fn decode_batch(buf: &[u8]) -> Result<Vec<BatchOp>> {
    let mut d = Decoder::new(buf);
    let n = d.u32()? as usize;
    let mut ops = Vec::with_capacity(n.min(buf.len()));
    for _ in 0..n {
        let op = match d.u8()? {
            1 => BatchOp::Put(d.bytes()?.to_vec(), d.bytes()?.to_vec()),
            0 => BatchOp::Delete(d.bytes()?.to_vec()),
            t => return Err(Error::Decode(format!("bad batch op {t}"))),
        };
        ops.push(op);
    }
    d.finish()?;
    Ok(ops)
}
