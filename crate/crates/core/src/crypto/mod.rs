//! Ciphertext schemes: additive and multiplicative homomorphic masking,
//! block-wise order-revealing encryption, deterministic AES, and randomized
//! authenticated encryption, plus per-column key derivation.
//!
//! All operations are pure functions of immutable inputs; keys never change
//! after derivation.

pub mod aead;
pub mod ahe;
pub mod keys;
pub mod mhe;
pub mod modp;
pub mod ore;

pub use aead::{det_decrypt, det_encrypt, rnd_decrypt, rnd_encrypt, DetCipher, RndCipher};
pub use ahe::{sahe_add, sahe_add_plain, sahe_decrypt, sahe_encrypt, sahe_sub, AheCipher};
pub use keys::{derive_column_key, ColumnKey, MasterKey, Scheme};
pub use mhe::{smhe_decrypt, smhe_div, smhe_encrypt, smhe_mul, smhe_mul_plain, MheCipher};
pub use ore::{ore_compare, ore_decrypt, ore_encrypt, OreCipher, OreWidth};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("key scheme mismatch: expected {expected:?}, found {found:?}")]
    SchemeMismatch { expected: Scheme, found: Scheme },
    #[error("modulus mismatch between operands ({left} vs {right})")]
    ModulusMismatch { left: u32, right: u32 },
    #[error("plaintext out of range for the scheme")]
    ValueOutOfRange,
    #[error("divisor is not invertible")]
    NonInvertibleDivisor,
    #[error("ciphertext block layouts differ")]
    LayoutMismatch,
    #[error("authentication failure")]
    AuthFailure,
    #[error("column label must be non-empty")]
    EmptyLabel,
}

/// One entry in a homomorphic ciphertext's nonce multiset. `inverted`
/// records whether the mask entered through a subtraction/division, so
/// decryption can strip it with the right sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonceRef {
    pub id: u64,
    pub inverted: bool,
}

impl NonceRef {
    pub fn fresh(id: u64) -> NonceRef {
        NonceRef {
            id,
            inverted: false,
        }
    }

    pub fn flip(&self) -> NonceRef {
        NonceRef {
            id: self.id,
            inverted: !self.inverted,
        }
    }
}
