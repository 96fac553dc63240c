//! Hashing and the keyed-hash endorsement tags.
//!
//! Endorsement "signatures" are SHA-256 tags over the proposal digest and
//! the signer identity; verification recomputes the tag.

use std::time::{Duration, Instant};

use sha2::{Digest as _, Sha256};

use crate::codec::{encode_envelope, Encoder};
use crate::types::{Block, Digest, Endorsement, Transaction};

const ENDORSEMENT_DOMAIN: &[u8] = b"valphase/endorsement/v1";

pub fn digest(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Hash over `u32 count` followed by each length-prefixed envelope.
pub fn compute_data_hash(transactions: &[Transaction]) -> Digest {
    let mut h = Sha256::new();
    h.update((transactions.len() as u32).to_le_bytes());
    for tx in transactions {
        let env = encode_envelope(tx);
        h.update((env.len() as u32).to_le_bytes());
        h.update(&env);
    }
    Digest(h.finalize().into())
}

/// Hash of `(number, prev_hash, data_hash)`; the next block's `prev_hash`.
pub fn header_hash(block: &Block) -> Digest {
    let mut e = Encoder::new();
    e.u64(block.number)
        .raw(&block.prev_hash.0)
        .raw(&block.data_hash.0);
    digest(&e.finish())
}

/// Digest of the endorsed content of a transaction (everything but the
/// endorsements).
pub fn proposal_digest(tx: &Transaction) -> Digest {
    let mut e = Encoder::new();
    e.proposal(tx);
    digest(&e.finish())
}

pub fn endorsement_tag(payload_digest: &Digest, signer_id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(ENDORSEMENT_DOMAIN);
    h.update((signer_id.len() as u32).to_le_bytes());
    h.update(signer_id.as_bytes());
    h.update(payload_digest.0);
    h.finalize().into()
}

pub fn make_endorsement(org_id: &str, signer_id: &str, payload_digest: &Digest) -> Endorsement {
    Endorsement {
        org_id: org_id.to_string(),
        signer_id: signer_id.to_string(),
        tag: endorsement_tag(payload_digest, signer_id),
    }
}

pub fn verify_endorsement(e: &Endorsement, payload_digest: &Digest) -> bool {
    endorsement_tag(payload_digest, &e.signer_id) == e.tag
}

/// Busy-waits for `cost`, modelling signature verification CPU time.
pub fn burn_cpu(cost: Duration) {
    if cost.is_zero() {
        return;
    }
    let until = Instant::now() + cost;
    while Instant::now() < until {
        std::hint::spin_loop();
    }
}
