//! SHA-256 helpers for payload fidelity checks.

use sha2::{Digest, Sha256};

pub type PayloadHash = [u8; 32];

pub fn payload_hash(bytes: &[u8]) -> PayloadHash {
    Sha256::digest(bytes).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of a multiset of payloads: the hash of their sorted hashes, so
/// delivery order does not matter.
pub fn multiset_digest<I: IntoIterator<Item = PayloadHash>>(hashes: I) -> String {
    let mut all: Vec<PayloadHash> = hashes.into_iter().collect();
    all.sort_unstable();
    let mut h = Sha256::new();
    for x in &all {
        h.update(x);
    }
    hex(&h.finalize())
}

/// Digest of an ordered sequence of payloads.
pub fn sequence_digest<'a, I: IntoIterator<Item = &'a PayloadHash>>(hashes: I) -> String {
    let mut h = Sha256::new();
    for x in hashes {
        h.update(x);
    }
    hex(&h.finalize())
}
