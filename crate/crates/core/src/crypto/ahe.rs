//! Symmetric additive homomorphic encryption.
//!
//! A fresh ciphertext is `(m + F_k(nonce)) mod p` together with its nonce.
//! Combining ciphertexts adds the masked values and concatenates the nonce
//! multisets; decryption strips every mask with multiplicity. The nonce
//! multiset cardinality is the scheme's leakage: it equals the number of
//! fresh ciphertexts combined into the result.

use super::keys::{prf_mask, ColumnKey, Scheme};
use super::modp;
use super::{CryptoError, NonceRef};
use crate::wire::{Reader, Writer, WireError};

pub const AHE_WIRE_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AheCipher {
    pub masked_sum: u128,
    pub nonces: Vec<NonceRef>,
    pub modulus_id: u32,
}

fn check_scheme(k: &ColumnKey) -> Result<(), CryptoError> {
    if k.scheme != Scheme::Ahe {
        return Err(CryptoError::SchemeMismatch {
            expected: Scheme::Ahe,
            found: k.scheme,
        });
    }
    Ok(())
}

fn check_modulus(a: &AheCipher, b: &AheCipher) -> Result<(), CryptoError> {
    if a.modulus_id != b.modulus_id {
        return Err(CryptoError::ModulusMismatch {
            left: a.modulus_id,
            right: b.modulus_id,
        });
    }
    Ok(())
}

pub fn sahe_encrypt(m: u128, k: &ColumnKey, nonce: u64) -> Result<AheCipher, CryptoError> {
    check_scheme(k)?;
    let m = if m >= modp::P {
        return Err(CryptoError::ValueOutOfRange);
    } else {
        m
    };
    Ok(AheCipher {
        masked_sum: modp::add_mod(m, prf_mask(k, nonce)),
        nonces: vec![NonceRef::fresh(nonce)],
        modulus_id: modp::MODULUS_ID,
    })
}

pub fn sahe_decrypt(c: &AheCipher, k: &ColumnKey) -> Result<u128, CryptoError> {
    check_scheme(k)?;
    let mut m = c.masked_sum;
    for n in &c.nonces {
        let mask = prf_mask(k, n.id);
        m = if n.inverted {
            modp::add_mod(m, mask)
        } else {
            modp::sub_mod(m, mask)
        };
    }
    Ok(m)
}

pub fn sahe_add(a: &AheCipher, b: &AheCipher) -> Result<AheCipher, CryptoError> {
    check_modulus(a, b)?;
    let mut nonces = a.nonces.clone();
    nonces.extend_from_slice(&b.nonces);
    Ok(AheCipher {
        masked_sum: modp::add_mod(a.masked_sum, b.masked_sum),
        nonces,
        modulus_id: a.modulus_id,
    })
}

pub fn sahe_sub(a: &AheCipher, b: &AheCipher) -> Result<AheCipher, CryptoError> {
    check_modulus(a, b)?;
    let mut nonces = a.nonces.clone();
    nonces.extend(b.nonces.iter().map(NonceRef::flip));
    Ok(AheCipher {
        masked_sum: modp::sub_mod(a.masked_sum, b.masked_sum),
        nonces,
        modulus_id: a.modulus_id,
    })
}

/// ADP: adds a plaintext constant. The nonce multiset is unchanged.
pub fn sahe_add_plain(a: &AheCipher, m: u128) -> Result<AheCipher, CryptoError> {
    if m >= modp::P {
        return Err(CryptoError::ValueOutOfRange);
    }
    Ok(AheCipher {
        masked_sum: modp::add_mod(a.masked_sum, m),
        nonces: a.nonces.clone(),
        modulus_id: a.modulus_id,
    })
}

impl AheCipher {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(AHE_WIRE_VERSION);
        w.u128(self.masked_sum).u32(self.modulus_id);
        w.u32(self.nonces.len() as u32);
        for n in &self.nonces {
            w.u64(n.id).u8(n.inverted as u8);
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<AheCipher, WireError> {
        let mut r = Reader::new(buf, AHE_WIRE_VERSION)?;
        let masked_sum = r.u128()?;
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
        Ok(AheCipher {
            masked_sum,
            nonces,
            modulus_id,
        })
    }
}
