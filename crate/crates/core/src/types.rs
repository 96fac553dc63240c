//! Domain types shared by every pipeline stage.
//!
//! Everything here is plain data. The only field that changes after
//! construction is [`Transaction::validation_code`], which the pipeline
//! writes once per stage.

use std::fmt;

use crate::policy::EndorsementPolicy;

/// Namespace reserved for chaincode definitions.
pub const SYSTEM_NAMESPACE: &str = "lscc";

/// A 256-bit digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", hex::encode(&self.0[..8]))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// Provenance of a committed value: the block and the position of the
/// transaction inside it that last wrote the key.
///
/// Ordered lexicographically by `(block_height, tx_index)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Version {
    pub block_height: u64,
    pub tx_index: u32,
}

impl Version {
    pub const fn new(block_height: u64, tx_index: u32) -> Self {
        Version {
            block_height,
            tx_index,
        }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.block_height, self.tx_index)
    }
}

/// A state key scoped to a chaincode namespace.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key {
    pub namespace: String,
    pub name: Vec<u8>,
}

impl Key {
    pub fn new(namespace: impl Into<String>, name: impl Into<Vec<u8>>) -> Self {
        Key {
            namespace: namespace.into(),
            name: name.into(),
        }
    }

    /// The system-namespace key holding the definition of `chaincode_id`.
    pub fn chaincode_definition(chaincode_id: &str) -> Self {
        Key::new(SYSTEM_NAMESPACE, chaincode_id.as_bytes())
    }

    pub fn is_system(&self) -> bool {
        self.namespace == SYSTEM_NAMESPACE
    }

    /// Namespaces must be non-empty and free of NUL bytes; names non-empty.
    pub fn is_well_formed(&self) -> bool {
        !self.namespace.is_empty() && !self.namespace.contains('\0') && !self.name.is_empty()
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.namespace, String::from_utf8_lossy(&self.name))
    }
}

/// One read performed during endorsement. `version == None` is the nil
/// version: the key did not exist when it was read.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KeyRead {
    pub key: Key,
    pub version: Option<Version>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ReadSet {
    pub entries: Vec<KeyRead>,
}

impl ReadSet {
    pub fn push(&mut self, key: Key, version: Option<Version>) {
        self.entries.push(KeyRead { key, version });
    }

    pub fn keys(&self) -> impl Iterator<Item = &Key> {
        self.entries.iter().map(|r| &r.key)
    }
}

/// One update; `value == None` deletes the key.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KeyWrite {
    pub key: Key,
    pub value: Option<Vec<u8>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct WriteSet {
    pub entries: Vec<KeyWrite>,
}

impl WriteSet {
    pub fn put(&mut self, key: Key, value: impl Into<Vec<u8>>) {
        self.entries.push(KeyWrite {
            key,
            value: Some(value.into()),
        });
    }

    pub fn delete(&mut self, key: Key) {
        self.entries.push(KeyWrite { key, value: None });
    }

    pub fn keys(&self) -> impl Iterator<Item = &Key> {
        self.entries.iter().map(|w| &w.key)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Endorsement {
    pub org_id: String,
    pub signer_id: String,
    pub tag: [u8; 32],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
#[repr(u8)]
pub enum ValidationCode {
    #[default]
    NotValidated = 0,
    Valid = 1,
    BadSyntax = 2,
    PolicyFailure = 3,
    UnknownChaincode = 4,
    MvccConflict = 5,
}

impl ValidationCode {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => ValidationCode::NotValidated,
            1 => ValidationCode::Valid,
            2 => ValidationCode::BadSyntax,
            3 => ValidationCode::PolicyFailure,
            4 => ValidationCode::UnknownChaincode,
            5 => ValidationCode::MvccConflict,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub tx_id: String,
    pub chaincode_id: String,
    pub payload: Vec<u8>,
    pub read_set: ReadSet,
    pub write_set: WriteSet,
    pub endorsements: Vec<Endorsement>,
    pub validation_code: ValidationCode,
}

impl Transaction {
    pub fn is_valid(&self) -> bool {
        self.validation_code == ValidationCode::Valid
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub number: u64,
    pub prev_hash: Digest,
    pub data_hash: Digest,
    pub transactions: Vec<Transaction>,
}

impl Block {
    /// Write sets of the transactions marked valid, tagged with their index.
    pub fn valid_writes(&self) -> Vec<(u32, &WriteSet)> {
        self.transactions
            .iter()
            .enumerate()
            .filter(|(_, tx)| tx.is_valid())
            .map(|(i, tx)| (i as u32, &tx.write_set))
            .collect()
    }

    pub fn codes(&self) -> Vec<ValidationCode> {
        self.transactions.iter().map(|t| t.validation_code).collect()
    }

    pub fn num_valid(&self) -> usize {
        self.transactions.iter().filter(|t| t.is_valid()).count()
    }
}

/// Chaincode definition as stored in the system namespace.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChaincodeInfo {
    pub chaincode_id: String,
    pub version: String,
    pub policy: EndorsementPolicy,
}
