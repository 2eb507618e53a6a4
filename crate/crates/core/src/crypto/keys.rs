//! Master key and per-column key derivation.

use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::Sha256;

use super::modp;
use super::CryptoError;

type HmacSha256 = Hmac<Sha256>;

/// Encryption scheme assigned to a column ciphertext.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Scheme {
    /// Additive homomorphic (sum / subtract over ciphertexts).
    Ahe,
    /// Multiplicative homomorphic (product / quotient over ciphertexts).
    Mhe,
    /// Order-revealing (public comparison).
    Ore,
    /// Deterministic (equality, grouping).
    Det,
    /// Randomized authenticated encryption (the single TEE-mode copy).
    Rnd,
}

impl Scheme {
    pub fn tag(self) -> u8 {
        match self {
            Scheme::Ahe => 1,
            Scheme::Mhe => 2,
            Scheme::Ore => 3,
            Scheme::Det => 4,
            Scheme::Rnd => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Scheme> {
        Some(match tag {
            1 => Scheme::Ahe,
            2 => Scheme::Mhe,
            3 => Scheme::Ore,
            4 => Scheme::Det,
            5 => Scheme::Rnd,
            _ => return None,
        })
    }
}

/// Client-held root secret. Never serialized into any server-side artifact.
#[derive(Clone)]
pub struct MasterKey {
    secret: [u8; 32],
}

impl MasterKey {
    pub fn generate(rng: &mut impl RngCore) -> MasterKey {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        MasterKey { secret }
    }

    pub fn from_bytes(secret: [u8; 32]) -> MasterKey {
        MasterKey { secret }
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.secret
    }
}

impl std::fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MasterKey(..)")
    }
}

/// Per-(column, scheme) key derived from the master key.
#[derive(Clone)]
pub struct ColumnKey {
    pub scheme: Scheme,
    key_bytes: [u8; 32],
    pub column_label: Vec<u8>,
}

impl ColumnKey {
    pub fn key_bytes(&self) -> &[u8; 32] {
        &self.key_bytes
    }

    /// Reassembles a key from stored parts, e.g. when unsealing.
    pub fn from_parts(scheme: Scheme, key_bytes: [u8; 32], column_label: Vec<u8>) -> ColumnKey {
        ColumnKey {
            scheme,
            key_bytes,
            column_label,
        }
    }
}

impl std::fmt::Debug for ColumnKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ColumnKey({:?}, label={:?})", self.scheme, self.column_label)
    }
}

fn hmac(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key length");
    for p in parts {
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}

/// HKDF-style extract-then-expand derivation of a column key.
///
/// Deterministic in (master, label, scheme); distinct labels or schemes yield
/// independent keys.
pub fn derive_column_key(
    master: &MasterKey,
    label: &[u8],
    scheme: Scheme,
) -> Result<ColumnKey, CryptoError> {
    if label.is_empty() {
        return Err(CryptoError::EmptyLabel);
    }
    let prk = hmac(b"cipherdb/column-key/v1", &[master.as_bytes()]);
    let key_bytes = hmac(&prk, &[label, &[scheme.tag()], &[0x01]]);
    Ok(ColumnKey {
        scheme,
        key_bytes,
        column_label: label.to_vec(),
    })
}

/// Keyed PRF over a 64-bit nonce, reduced into Z_p. Used as the masking
/// function for the homomorphic schemes.
pub fn prf_mask(key: &ColumnKey, nonce: u64) -> u128 {
    let out = hmac(&key.key_bytes, &[b"mask", &nonce.to_le_bytes()]);
    let mut word = [0u8; 16];
    word.copy_from_slice(&out[..16]);
    modp::reduce(u128::from_le_bytes(word))
}

/// PRF variant guaranteed nonzero, for multiplicative masks.
pub fn prf_mask_invertible(key: &ColumnKey, nonce: u64) -> u128 {
    let m = prf_mask(key, nonce);
    if m == 0 {
        1
    } else {
        m
    }
}

/// Raw keyed PRF bytes for sub-schemes that need their own expansion.
pub fn prf_bytes(key: &ColumnKey, parts: &[&[u8]]) -> [u8; 32] {
    hmac(&key.key_bytes, parts)
}
