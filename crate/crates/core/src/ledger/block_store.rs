use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use crate::codec::{decode_block, encode_block};
use crate::crypto::header_hash;
use crate::error::{Error, Result, StorageError};
use crate::fault::FailPoint;
use crate::storage::{read_record_at, DiskConfig, RecordLog};
use crate::types::{Block, Digest};

const BLOCKS_FILE: &str = "blocks.dat";
const INDEX_FILE: &str = "blocks.idx";

struct Tip {
    offsets: Vec<u64>,
    last_hash: Digest,
}

/// Append-only block file plus an index of record offsets.
///
/// `blocks.dat` holds one framed, serialized block per record;
/// `blocks.idx` holds one little-endian `u64` offset per block. The index
/// is rebuilt from the block file if the two disagree on open.
pub struct BlockStore {
    dir: PathBuf,
    writer: Mutex<(RecordLog, File)>,
    reader: File,
    tip: RwLock<Tip>,
    failpoint: FailPoint,
}

impl BlockStore {
    pub fn open(dir: &Path, disk: DiskConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let (log, records) = RecordLog::open(&dir.join(BLOCKS_FILE), disk)?;
        let offsets: Vec<u64> = records.iter().map(|r| r.offset).collect();
        let mut last_hash = Digest::ZERO;
        for (i, r) in records.iter().enumerate() {
            let b = decode_block(&r.payload)?;
            if b.number != i as u64 {
                return Err(StorageError::Corrupt(format!(
                    "block file holds block {} at position {i}",
                    b.number
                ))
                .into());
            }
            if i + 1 == records.len() {
                last_hash = header_hash(&b);
            }
        }
        let index = sync_index(&dir.join(INDEX_FILE), &offsets)?;
        Ok(BlockStore {
            dir: dir.to_path_buf(),
            reader: log.reader()?,
            writer: Mutex::new((log, index)),
            tip: RwLock::new(Tip { offsets, last_hash }),
            failpoint: FailPoint::new(),
        })
    }

    pub fn failpoint(&self) -> &FailPoint {
        &self.failpoint
    }

    /// Number of the last appended block.
    pub fn height(&self) -> Option<u64> {
        let n = self.tip.read().unwrap().offsets.len() as u64;
        n.checked_sub(1)
    }

    /// Header hash of the last block, or zero for an empty ledger.
    pub fn last_header_hash(&self) -> Digest {
        self.tip.read().unwrap().last_hash
    }

    pub fn append_block(&self, block: &Block) -> Result<()> {
        let mut w = self.writer.lock().unwrap();
        let expected = self.height().map_or(0, |h| h + 1);
        if block.number != expected {
            return Err(Error::Protocol(format!(
                "ledger expects block {expected}, got {}",
                block.number
            )));
        }
        let (log, index) = &mut *w;
        let offset = log.append(&encode_block(block), &self.failpoint, "ledger")?;
        index.write_all(&offset.to_le_bytes())?;
        let mut tip = self.tip.write().unwrap();
        tip.offsets.push(offset);
        tip.last_hash = header_hash(block);
        Ok(())
    }

    pub fn get_block(&self, number: u64) -> Result<Block> {
        let offset = {
            let tip = self.tip.read().unwrap();
            *tip.offsets.get(number as usize).ok_or(Error::NotFound(number))?
        };
        decode_block(&read_record_at(&self.reader, offset)?)
    }

    /// Raw bytes of the block file.
    pub fn file_bytes(&self) -> Result<Vec<u8>> {
        let _w = self.writer.lock().unwrap();
        Ok(std::fs::read(self.dir.join(BLOCKS_FILE))?)
    }
}

/// Makes `path` hold exactly `offsets`, rewriting it if it does not, and
/// returns it opened for appending.
fn sync_index(path: &Path, offsets: &[u64]) -> Result<File> {
    let mut existing = Vec::new();
    if let Ok(mut f) = File::open(path) {
        f.read_to_end(&mut existing)?;
    }
    let wanted: Vec<u8> = offsets.iter().flat_map(|o| o.to_le_bytes()).collect();
    if existing != wanted {
        if !existing.is_empty() {
            log::warn!("{}: rebuilding block index", path.display());
        }
        std::fs::write(path, &wanted)?;
    }
    Ok(OpenOptions::new().append(true).create(true).open(path)?)
}
