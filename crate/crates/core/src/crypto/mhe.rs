//! Symmetric multiplicative homomorphic encryption.
//!
//! Mirrors the additive scheme with multiplication in Z_p: a fresh
//! ciphertext is `(m · F_k(nonce)) mod p` and the nonce multiset carries
//! the same cardinality leakage. Masks are drawn nonzero so every mask is
//! invertible modulo the prime.

use super::keys::{prf_mask_invertible, ColumnKey, Scheme};
use super::modp;
use super::{CryptoError, NonceRef};
use crate::wire::{Reader, Writer, WireError};

pub const MHE_WIRE_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MheCipher {
    pub masked_product: u128,
    pub nonces: Vec<NonceRef>,
    pub modulus_id: u32,
}

fn check_scheme(k: &ColumnKey) -> Result<(), CryptoError> {
    if k.scheme != Scheme::Mhe {
        return Err(CryptoError::SchemeMismatch {
            expected: Scheme::Mhe,
            found: k.scheme,
        });
    }
    Ok(())
}

fn check_modulus(a: &MheCipher, b: &MheCipher) -> Result<(), CryptoError> {
    if a.modulus_id != b.modulus_id {
        return Err(CryptoError::ModulusMismatch {
            left: a.modulus_id,
            right: b.modulus_id,
        });
    }
    Ok(())
}

pub fn smhe_encrypt(m: u128, k: &ColumnKey, nonce: u64) -> Result<MheCipher, CryptoError> {
    check_scheme(k)?;
    if m >= modp::P {
        return Err(CryptoError::ValueOutOfRange);
    }
    Ok(MheCipher {
        masked_product: modp::mul_mod(m, prf_mask_invertible(k, nonce)),
        nonces: vec![NonceRef::fresh(nonce)],
        modulus_id: modp::MODULUS_ID,
    })
}

pub fn smhe_decrypt(c: &MheCipher, k: &ColumnKey) -> Result<u128, CryptoError> {
    check_scheme(k)?;
    let mut m = c.masked_product;
    for n in &c.nonces {
        let mask = prf_mask_invertible(k, n.id);
        m = if n.inverted {
            modp::mul_mod(m, mask)
        } else {
            modp::mul_mod(m, modp::inv_mod(mask).expect("mask is nonzero"))
        };
    }
    Ok(m)
}

pub fn smhe_mul(a: &MheCipher, b: &MheCipher) -> Result<MheCipher, CryptoError> {
    check_modulus(a, b)?;
    let mut nonces = a.nonces.clone();
    nonces.extend_from_slice(&b.nonces);
    Ok(MheCipher {
        masked_product: modp::mul_mod(a.masked_product, b.masked_product),
        nonces,
        modulus_id: a.modulus_id,
    })
}

/// Ciphertext division. Fails when the divisor's masked value is zero,
/// i.e. the divisor plaintext is zero.
pub fn smhe_div(a: &MheCipher, b: &MheCipher) -> Result<MheCipher, CryptoError> {
    check_modulus(a, b)?;
    let inv = modp::inv_mod(b.masked_product).ok_or(CryptoError::NonInvertibleDivisor)?;
    let mut nonces = a.nonces.clone();
    nonces.extend(b.nonces.iter().map(NonceRef::flip));
    Ok(MheCipher {
        masked_product: modp::mul_mod(a.masked_product, inv),
        nonces,
        modulus_id: a.modulus_id,
    })
}

/// MLP: multiplies by a plaintext constant. The nonce multiset is unchanged.
pub fn smhe_mul_plain(a: &MheCipher, m: u128) -> Result<MheCipher, CryptoError> {
    if m >= modp::P {
        return Err(CryptoError::ValueOutOfRange);
    }
    Ok(MheCipher {
        masked_product: modp::mul_mod(a.masked_product, m),
        nonces: a.nonces.clone(),
        modulus_id: a.modulus_id,
    })
}

impl MheCipher {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MHE_WIRE_VERSION);
        w.u128(self.masked_product).u32(self.modulus_id);
        w.u32(self.nonces.len() as u32);
        for n in &self.nonces {
            w.u64(n.id).u8(n.inverted as u8);
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<MheCipher, WireError> {
        let mut r = Reader::new(buf, MHE_WIRE_VERSION)?;
        let masked_product = r.u128()?;
        let modulus_id = r.u32()?;
        let count = r.u32()? as usize;
        let mut nonces = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let id = r.u64()?;
            let inverted = match r.u8()? {
                0 => false,
                1 => true,
                _ => return Err(WireError::Malformed("nonce sign")),
            };
            nonces.push(NonceRef { id, inverted });
        }
        r.done()?;
        Ok(MheCipher {
            masked_product,
            nonces,
            modulus_id,
        })
    }
}
