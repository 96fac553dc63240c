//! Block ledger and history database.

mod block_store;
mod history;

pub use block_store::BlockStore;
pub use history::{composite_key, HistoryDb, HistoryEntry};
