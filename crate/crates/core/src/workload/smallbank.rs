//! Smallbank operations and their simulated execution at an endorser.

use crate::crypto::{make_endorsement, proposal_digest};
use crate::types::{Key, ReadSet, Transaction, ValidationCode, Version, WriteSet};

/// Read access to the state an endorser simulates against: the committed
/// version and balance of a key.
pub type StateView<'a> = &'a dyn Fn(&Key) -> Option<(Version, i64)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SmallbankOp {
    CreateAccount { id: u64 },
    /// Savings to savings between two customers.
    TransferMoney { from: u64, to: u64, amount: i64 },
    /// Into checking.
    DepositCash { id: u64, amount: i64 },
    /// Out of checking; overdrawing the combined balance costs a penalty of 1.
    WriteCheck { id: u64, amount: i64 },
    /// Moves both balances of `from` into the checking account of `to`.
    Amalgamate { from: u64, to: u64 },
    QueryBalance { id: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AppError {
    #[error("account {0} already exists")]
    AccountExists(u64),
    #[error("account {0} does not exist")]
    NoSuchAccount(u64),
    #[error("insufficient funds in account {0}")]
    InsufficientFunds(u64),
    #[error("amount must be non-negative")]
    NegativeAmount,
    #[error("source and destination are the same account")]
    SameAccount,
}

pub const OP_KINDS: usize = 6;

impl SmallbankOp {
    /// Index in the op mix weights.
    pub fn kind(&self) -> usize {
        match self {
            SmallbankOp::CreateAccount { .. } => 0,
            SmallbankOp::TransferMoney { .. } => 1,
            SmallbankOp::DepositCash { .. } => 2,
            SmallbankOp::WriteCheck { .. } => 3,
            SmallbankOp::Amalgamate { .. } => 4,
            SmallbankOp::QueryBalance { .. } => 5,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SmallbankOp::CreateAccount { .. } => "create_account",
            SmallbankOp::TransferMoney { .. } => "transfer_money",
            SmallbankOp::DepositCash { .. } => "deposit_cash",
            SmallbankOp::WriteCheck { .. } => "write_check",
            SmallbankOp::Amalgamate { .. } => "amalgamate",
            SmallbankOp::QueryBalance { .. } => "query_balance",
        }
    }

    /// Invocation arguments as carried in the transaction payload.
    pub fn payload(&self) -> Vec<u8> {
        let args = match *self {
            SmallbankOp::CreateAccount { id } | SmallbankOp::QueryBalance { id } => format!("{id}"),
            SmallbankOp::TransferMoney { from, to, amount } => format!("{from},{to},{amount}"),
            SmallbankOp::DepositCash { id, amount } | SmallbankOp::WriteCheck { id, amount } => {
                format!("{id},{amount}")
            }
            SmallbankOp::Amalgamate { from, to } => format!("{from},{to}"),
        };
        format!("{}({args})", self.name()).into_bytes()
    }
}

pub fn checking_key(namespace: &str, id: u64) -> Key {
    Key::new(namespace, format!("checking/{id}"))
}

pub fn savings_key(namespace: &str, id: u64) -> Key {
    Key::new(namespace, format!("savings/{id}"))
}

pub fn encode_balance(v: i64) -> Vec<u8> {
    v.to_le_bytes().to_vec()
}

pub fn decode_balance(raw: &[u8]) -> Option<i64> {
    raw.try_into().ok().map(i64::from_le_bytes)
}

struct Sim<'a> {
    view: StateView<'a>,
    reads: ReadSet,
    writes: WriteSet,
}

impl Sim<'_> {
    fn read(&mut self, key: Key, owner: u64) -> Result<i64, AppError> {
        match (self.view)(&key) {
            Some((v, bal)) => {
                self.reads.push(key, Some(v));
                Ok(bal)
            }
            None => Err(AppError::NoSuchAccount(owner)),
        }
    }

    fn write(&mut self, key: Key, bal: i64) {
        self.writes.put(key, encode_balance(bal));
    }
}

/// Executes `op` against `view` and returns the endorsed transaction.
///
/// Every key read is recorded with the version seen; absent keys are read
/// with a nil version. The transaction carries one endorsement per org in
/// `orgs`.
pub fn endorse(
    tx_id: &str,
    namespace: &str,
    op: &SmallbankOp,
    view: StateView<'_>,
    orgs: &[String],
    initial_balance: i64,
) -> Result<Transaction, AppError> {
    let mut sim = Sim {
        view,
        reads: ReadSet::default(),
        writes: WriteSet::default(),
    };
    let chk = |id| checking_key(namespace, id);
    let sav = |id| savings_key(namespace, id);
    match *op {
        SmallbankOp::CreateAccount { id } => {
            for k in [chk(id), sav(id)] {
                if let Some((v, _)) = (sim.view)(&k) {
                    sim.reads.push(k, Some(v));
                    return Err(AppError::AccountExists(id));
                }
                sim.reads.push(k.clone(), None);
                sim.write(k, initial_balance);
            }
        }
        SmallbankOp::TransferMoney { from, to, amount } => {
            if amount < 0 {
                return Err(AppError::NegativeAmount);
            }
            if from == to {
                return Err(AppError::SameAccount);
            }
            let a = sim.read(sav(from), from)?;
            let b = sim.read(sav(to), to)?;
            if a < amount {
                return Err(AppError::InsufficientFunds(from));
            }
            sim.write(sav(from), a - amount);
            sim.write(sav(to), b + amount);
        }
        SmallbankOp::DepositCash { id, amount } => {
            if amount < 0 {
                return Err(AppError::NegativeAmount);
            }
            let c = sim.read(chk(id), id)?;
            sim.write(chk(id), c + amount);
        }
        SmallbankOp::WriteCheck { id, amount } => {
            if amount < 0 {
                return Err(AppError::NegativeAmount);
            }
            let c = sim.read(chk(id), id)?;
            let s = sim.read(sav(id), id)?;
            let penalty = if c + s < amount { 1 } else { 0 };
            sim.write(chk(id), c - amount - penalty);
        }
        SmallbankOp::Amalgamate { from, to } => {
            if from == to {
                return Err(AppError::SameAccount);
            }
            let s = sim.read(sav(from), from)?;
            let c = sim.read(chk(from), from)?;
            let dest = sim.read(chk(to), to)?;
            sim.write(sav(from), 0);
            sim.write(chk(from), 0);
            sim.write(chk(to), dest + s + c);
        }
        SmallbankOp::QueryBalance { id } => {
            sim.read(chk(id), id)?;
            sim.read(sav(id), id)?;
        }
    }
    let mut tx = Transaction {
        tx_id: tx_id.to_string(),
        chaincode_id: namespace.to_string(),
        payload: op.payload(),
        read_set: sim.reads,
        write_set: sim.writes,
        endorsements: Vec::new(),
        validation_code: ValidationCode::NotValidated,
    };
    sign(&mut tx, orgs);
    Ok(tx)
}

pub fn signer_of(org: &str) -> String {
    format!("peer0.{org}")
}

/// Replaces the endorsements with valid ones from each of `orgs`.
pub fn sign<S: AsRef<str>>(tx: &mut Transaction, orgs: &[S]) {
    let digest = proposal_digest(tx);
    tx.endorsements = orgs
        .iter()
        .map(|o| make_endorsement(o.as_ref(), &signer_of(o.as_ref()), &digest))
        .collect();
}
