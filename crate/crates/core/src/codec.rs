//! Canonical binary encoding.
//!
//! Integers are little-endian, byte strings are prefixed with a `u32`
//! length, and fields appear in declaration order. A serialized block is
//!
//! ```text
//! u64      number
//! [u8;32]  prev_hash
//! [u8;32]  data_hash
//! u32      tx_count
//! tx_count x (u32 len, envelope)
//! tx_count x u8 validation code
//! ```
//!
//! where an envelope is `tx_id, chaincode_id, payload, reads, writes,
//! endorsements`. Validation codes live outside the envelopes so the data
//! hash does not change when the peer marks transactions.

use crate::error::{Error, Result};
use crate::policy::EndorsementPolicy;
use crate::types::{
    Block, ChaincodeInfo, Digest, Endorsement, Key, KeyRead, KeyWrite, ReadSet, Transaction,
    ValidationCode, Version, WriteSet,
};

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn raw(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(len_u32(v.len()));
        self.raw(v)
    }

    pub fn str(&mut self, v: &str) -> &mut Self {
        self.bytes(v.as_bytes())
    }

    pub fn key(&mut self, k: &Key) -> &mut Self {
        self.str(&k.namespace).bytes(&k.name)
    }

    pub fn version(&mut self, v: &Version) -> &mut Self {
        self.u64(v.block_height).u32(v.tx_index)
    }

    pub fn read_set(&mut self, rs: &ReadSet) -> &mut Self {
        self.u32(len_u32(rs.entries.len()));
        for r in &rs.entries {
            self.key(&r.key);
            match &r.version {
                Some(v) => self.u8(1).version(v),
                None => self.u8(0),
            };
        }
        self
    }

    pub fn write_set(&mut self, ws: &WriteSet) -> &mut Self {
        self.u32(len_u32(ws.entries.len()));
        for w in &ws.entries {
            self.key(&w.key);
            match &w.value {
                Some(v) => self.u8(1).bytes(v),
                None => self.u8(0),
            };
        }
        self
    }

    pub fn endorsement(&mut self, e: &Endorsement) -> &mut Self {
        self.str(&e.org_id).str(&e.signer_id).raw(&e.tag)
    }

    /// The endorsed content: everything but the endorsements themselves.
    pub fn proposal(&mut self, tx: &Transaction) -> &mut Self {
        self.str(&tx.tx_id)
            .str(&tx.chaincode_id)
            .bytes(&tx.payload)
            .read_set(&tx.read_set)
            .write_set(&tx.write_set)
    }

    pub fn envelope(&mut self, tx: &Transaction) -> &mut Self {
        self.proposal(tx);
        self.u32(len_u32(tx.endorsements.len()));
        for e in &tx.endorsements {
            self.endorsement(e);
        }
        self
    }

    pub fn policy(&mut self, p: &EndorsementPolicy) -> &mut Self {
        match p {
            EndorsementPolicy::SignedBy(org) => self.u8(0).str(org),
            EndorsementPolicy::And(c) => {
                self.u8(1).u32(len_u32(c.len()));
                c.iter().for_each(|p| {
                    self.policy(p);
                });
                self
            }
            EndorsementPolicy::Or(c) => {
                self.u8(2).u32(len_u32(c.len()));
                c.iter().for_each(|p| {
                    self.policy(p);
                });
                self
            }
            EndorsementPolicy::OutOf(m, c) => {
                self.u8(3).u32(len_u32(*m)).u32(len_u32(c.len()));
                c.iter().for_each(|p| {
                    self.policy(p);
                });
                self
            }
        }
    }
}

fn len_u32(n: usize) -> u32 {
    u32::try_from(n).expect("length exceeds u32")
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Decoder { buf, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn finish(self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::Decode(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )))
        }
    }

    pub fn raw(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|end| *end <= self.buf.len())
            .ok_or_else(|| Error::Decode(format!("need {n} bytes at offset {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.raw(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.raw(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.raw(8)?.try_into().unwrap()))
    }

    pub fn array32(&mut self) -> Result<[u8; 32]> {
        Ok(self.raw(32)?.try_into().unwrap())
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.raw(n)
    }

    pub fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|e| Error::Decode(e.to_string()))
    }

    /// Reads a collection length, rejecting counts that cannot fit in the
    /// remaining input (each element takes at least `min_elem` bytes).
    fn count(&mut self, min_elem: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        let remaining = self.buf.len() - self.pos;
        if n.saturating_mul(min_elem) > remaining {
            return Err(Error::Decode(format!("count {n} exceeds input")));
        }
        Ok(n)
    }

    pub fn key(&mut self) -> Result<Key> {
        Ok(Key {
            namespace: self.string()?,
            name: self.bytes()?.to_vec(),
        })
    }

    pub fn version(&mut self) -> Result<Version> {
        Ok(Version {
            block_height: self.u64()?,
            tx_index: self.u32()?,
        })
    }

    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Decode(format!("bad flag byte {b}"))),
        }
    }

    pub fn read_set(&mut self) -> Result<ReadSet> {
        let n = self.count(9)?;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let key = self.key()?;
            let version = if self.flag()? {
                Some(self.version()?)
            } else {
                None
            };
            entries.push(KeyRead { key, version });
        }
        Ok(ReadSet { entries })
    }

    pub fn write_set(&mut self) -> Result<WriteSet> {
        let n = self.count(9)?;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let key = self.key()?;
            let value = if self.flag()? {
                Some(self.bytes()?.to_vec())
            } else {
                None
            };
            entries.push(KeyWrite { key, value });
        }
        Ok(WriteSet { entries })
    }

    pub fn envelope(&mut self) -> Result<Transaction> {
        let tx_id = self.string()?;
        let chaincode_id = self.string()?;
        let payload = self.bytes()?.to_vec();
        let read_set = self.read_set()?;
        let write_set = self.write_set()?;
        let n = self.count(40)?;
        let mut endorsements = Vec::with_capacity(n);
        for _ in 0..n {
            endorsements.push(Endorsement {
                org_id: self.string()?,
                signer_id: self.string()?,
                tag: self.array32()?,
            });
        }
        Ok(Transaction {
            tx_id,
            chaincode_id,
            payload,
            read_set,
            write_set,
            endorsements,
            validation_code: ValidationCode::NotValidated,
        })
    }

    pub fn policy(&mut self) -> Result<EndorsementPolicy> {
        self.policy_at_depth(0)
    }

    fn policy_at_depth(&mut self, depth: usize) -> Result<EndorsementPolicy> {
        if depth > 64 {
            return Err(Error::Decode("policy nested too deeply".into()));
        }
        let tag = self.u8()?;
        let p = match tag {
            0 => EndorsementPolicy::SignedBy(self.string()?),
            1 | 2 => {
                let n = self.count(5)?;
                let c = (0..n)
                    .map(|_| self.policy_at_depth(depth + 1))
                    .collect::<Result<Vec<_>>>()?;
                if tag == 1 {
                    EndorsementPolicy::And(c)
                } else {
                    EndorsementPolicy::Or(c)
                }
            }
            3 => {
                let m = self.u32()? as usize;
                let n = self.count(5)?;
                let c = (0..n)
                    .map(|_| self.policy_at_depth(depth + 1))
                    .collect::<Result<Vec<_>>>()?;
                EndorsementPolicy::OutOf(m, c)
            }
            t => return Err(Error::Decode(format!("bad policy tag {t}"))),
        };
        Ok(p)
    }
}

pub fn encode_envelope(tx: &Transaction) -> Vec<u8> {
    let mut e = Encoder::new();
    e.envelope(tx);
    e.finish()
}

pub fn encode_block(block: &Block) -> Vec<u8> {
    let mut e = Encoder::new();
    e.u64(block.number)
        .raw(&block.prev_hash.0)
        .raw(&block.data_hash.0)
        .u32(len_u32(block.transactions.len()));
    for tx in &block.transactions {
        e.bytes(&encode_envelope(tx));
    }
    for tx in &block.transactions {
        e.u8(tx.validation_code.as_u8());
    }
    e.finish()
}

pub fn decode_block(buf: &[u8]) -> Result<Block> {
    let mut d = Decoder::new(buf);
    let number = d.u64()?;
    let prev_hash = Digest(d.array32()?);
    let data_hash = Digest(d.array32()?);
    let n = d.count(5)?;
    let mut transactions = Vec::with_capacity(n);
    for _ in 0..n {
        let env = d.bytes()?;
        let mut inner = Decoder::new(env);
        let tx = inner.envelope()?;
        inner.finish()?;
        transactions.push(tx);
    }
    for tx in &mut transactions {
        let b = d.u8()?;
        tx.validation_code = ValidationCode::from_u8(b)
            .ok_or_else(|| Error::Decode(format!("bad validation code {b}")))?;
    }
    d.finish()?;
    Ok(Block {
        number,
        prev_hash,
        data_hash,
        transactions,
    })
}

pub fn encode_chaincode_info(info: &ChaincodeInfo) -> Vec<u8> {
    let mut e = Encoder::new();
    e.str(&info.chaincode_id)
        .str(&info.version)
        .policy(&info.policy);
    e.finish()
}

pub fn decode_chaincode_info(buf: &[u8]) -> Result<ChaincodeInfo> {
    let mut d = Decoder::new(buf);
    let info = ChaincodeInfo {
        chaincode_id: d.string()?,
        version: d.string()?,
        policy: d.policy()?,
    };
    d.finish()?;
    Ok(info)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tx() -> Transaction {
        let mut read_set = ReadSet::default();
        read_set.push(Key::new("smallbank", "checking/1"), Some(Version::new(3, 1)));
        read_set.push(Key::new("smallbank", "savings/1"), None);
        let mut write_set = WriteSet::default();
        write_set.put(Key::new("smallbank", "checking/1"), vec![1, 2, 3]);
        write_set.delete(Key::new("smallbank", "savings/1"));
        Transaction {
            tx_id: "tx-1".into(),
            chaincode_id: "smallbank".into(),
            payload: b"deposit".to_vec(),
            read_set,
            write_set,
            endorsements: vec![Endorsement {
                org_id: "Org1".into(),
                signer_id: "peer0.Org1".into(),
                tag: [7; 32],
            }],
            validation_code: ValidationCode::MvccConflict,
        }
    }

    #[test]
    fn block_round_trips_with_codes() {
        let block = Block {
            number: 9,
            prev_hash: Digest([1; 32]),
            data_hash: Digest([2; 32]),
            transactions: vec![sample_tx(), sample_tx()],
        };
        let bytes = encode_block(&block);
        assert_eq!(decode_block(&bytes).unwrap(), block);
    }

    #[test]
    fn truncated_block_is_rejected() {
        let block = Block {
            number: 1,
            prev_hash: Digest::ZERO,
            data_hash: Digest::ZERO,
            transactions: vec![sample_tx()],
        };
        let bytes = encode_block(&block);
        for cut in [0, 10, bytes.len() - 1] {
            assert!(decode_block(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_block(&extra).is_err());
    }

    #[test]
    fn envelope_layout_is_length_prefixed_little_endian() {
        let mut tx = sample_tx();
        tx.read_set = ReadSet::default();
        tx.write_set = WriteSet::default();
        tx.endorsements.clear();
        tx.tx_id = "t".into();
        tx.chaincode_id = "c".into();
        tx.payload.clear();
        assert_eq!(
            encode_envelope(&tx),
            vec![1, 0, 0, 0, b't', 1, 0, 0, 0, b'c', 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]
        );
    }

    #[test]
    fn chaincode_info_round_trips() {
        let info = ChaincodeInfo {
            chaincode_id: "smallbank".into(),
            version: "1.0".into(),
            policy: EndorsementPolicy::OutOf(
                1,
                vec![
                    EndorsementPolicy::all_of(&["A", "B"]),
                    EndorsementPolicy::any_of(&["C"]),
                ],
            ),
        };
        let bytes = encode_chaincode_info(&info);
        assert_eq!(decode_chaincode_info(&bytes).unwrap(), info);
    }
}
