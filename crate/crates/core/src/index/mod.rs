//! B-tree index keyed by order-revealing ciphertexts.
//!
//! The tree never sees a decryption key: ordering comes entirely from the
//! public ORE comparison, with the row id as tie-breaker so duplicate
//! plaintexts iterate deterministically. Deletion is tombstone-based with an
//! offline rebuild.

mod btree;

pub use btree::{CipherBTree, OreKey, DEFAULT_FANOUT};

use thiserror::Error;

use crate::crypto::CryptoError;
use crate::wire::WireError;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("ciphertext layout mismatch in comparator")]
    Layout(#[from] CryptoError),
    #[error("range bounds are inverted")]
    InvertedBounds,
    #[error("operation requires a non-empty tree")]
    EmptyTree,
    #[error("index file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("index file format: {0}")]
    Wire(#[from] WireError),
}

/// Three-way sign comparison over ORE ciphertexts, the primitive behind the
/// five predicate operators (<, <=, =, >=, >).
pub fn comparator(
    a: &crate::crypto::OreCipher,
    b: &crate::crypto::OreCipher,
) -> Result<i8, IndexError> {
    use std::cmp::Ordering::*;
    Ok(match crate::crypto::ore_compare(a, b)? {
        Less => -1,
        Equal => 0,
        Greater => 1,
    })
}
