//! Block-wise order-revealing encryption.
//!
//! The plaintext is split into 8-bit blocks, most significant first. Block i
//! is masked as `(F_k(i, prefix) + b_i) mod 512` where the PRF input covers
//! all more-significant blocks. Two ciphertexts under the same key agree on
//! every block up to the first differing plaintext block, and the masked
//! difference at that block reveals the sign of the comparison; comparison
//! therefore needs no key and leaks at most the index of the first
//! differing block. A per-ciphertext random nonce makes the serialized form
//! nondeterministic without entering the comparison.

use std::cmp::Ordering;

use rand::RngCore;

use super::keys::{prf_bytes, ColumnKey, Scheme};
use super::CryptoError;
use crate::wire::{Reader, Writer, WireError};

pub const ORE_WIRE_VERSION: u8 = 1;

const BLOCK_MOD: u16 = 512;
const BLOCK_BITS: u32 = 8;

/// Plaintext bit width supported by the scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum OreWidth {
    W8,
    W32,
    W64,
}

impl OreWidth {
    pub fn bits(self) -> u32 {
        match self {
            OreWidth::W8 => 8,
            OreWidth::W32 => 32,
            OreWidth::W64 => 64,
        }
    }

    pub fn block_count(self) -> usize {
        (self.bits() / BLOCK_BITS) as usize
    }

    pub fn max_value(self) -> u64 {
        match self {
            OreWidth::W64 => u64::MAX,
            w => (1u64 << w.bits()) - 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OreCipher {
    /// Per-block masked comparison tokens, most significant block first.
    pub blocks: Vec<u16>,
    pub block_count: u8,
    /// Randomizer; distinguishes encryptions of equal plaintexts but plays
    /// no part in comparison.
    pub nonce: [u8; 12],
}

fn block_of(m: u64, width: OreWidth, index: usize) -> u8 {
    let shift = (width.block_count() - 1 - index) as u32 * BLOCK_BITS;
    ((m >> shift) & 0xff) as u8
}

fn block_mask(k: &ColumnKey, index: usize, prefix: &[u8]) -> u16 {
    let out = prf_bytes(k, &[b"ore-block", &(index as u32).to_le_bytes(), prefix]);
    u16::from_le_bytes([out[0], out[1]]) % BLOCK_MOD
}

pub fn ore_encrypt(
    m: u64,
    k: &ColumnKey,
    width: OreWidth,
    rng: &mut impl RngCore,
) -> Result<OreCipher, CryptoError> {
    if k.scheme != Scheme::Ore {
        return Err(CryptoError::SchemeMismatch {
            expected: Scheme::Ore,
            found: k.scheme,
        });
    }
    if m > width.max_value() {
        return Err(CryptoError::ValueOutOfRange);
    }
    let count = width.block_count();
    let mut blocks = Vec::with_capacity(count);
    let mut prefix: Vec<u8> = Vec::with_capacity(count);
    for i in 0..count {
        let b = block_of(m, width, i);
        let masked = (block_mask(k, i, &prefix) + b as u16) % BLOCK_MOD;
        blocks.push(masked);
        prefix.push(b);
    }
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    Ok(OreCipher {
        blocks,
        block_count: count as u8,
        nonce,
    })
}

/// Key-free comparison; agrees with the plaintext order.
pub fn ore_compare(a: &OreCipher, b: &OreCipher) -> Result<Ordering, CryptoError> {
    if a.block_count != b.block_count || a.blocks.len() != b.blocks.len() {
        return Err(CryptoError::LayoutMismatch);
    }
    for (x, y) in a.blocks.iter().zip(&b.blocks) {
        if x != y {
            let d = (x + BLOCK_MOD - y) % BLOCK_MOD;
            // d = b_a - b_b mod 512 with |b_a - b_b| <= 255, so the range
            // determines the sign unambiguously.
            return Ok(if d <= 255 {
                Ordering::Greater
            } else {
                Ordering::Less
            });
        }
    }
    Ok(Ordering::Equal)
}

/// Key-holder decryption: peel blocks most significant first, rebuilding the
/// PRF prefix as plaintext blocks are recovered.
pub fn ore_decrypt(c: &OreCipher, k: &ColumnKey, width: OreWidth) -> Result<u64, CryptoError> {
    if k.scheme != Scheme::Ore {
        return Err(CryptoError::SchemeMismatch {
            expected: Scheme::Ore,
            found: k.scheme,
        });
    }
    if c.block_count as usize != width.block_count() {
        return Err(CryptoError::LayoutMismatch);
    }
    let mut prefix: Vec<u8> = Vec::with_capacity(c.blocks.len());
    let mut m: u64 = 0;
    for (i, masked) in c.blocks.iter().enumerate() {
        let b = (masked + BLOCK_MOD - block_mask(k, i, &prefix)) % BLOCK_MOD;
        if b > 255 {
            return Err(CryptoError::AuthFailure);
        }
        m = (m << BLOCK_BITS) | b as u64;
        prefix.push(b as u8);
    }
    Ok(m)
}

impl OreCipher {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ORE_WIRE_VERSION);
        w.u8(self.block_count);
        w.raw(&self.nonce);
        for b in &self.blocks {
            w.u16(*b);
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<OreCipher, WireError> {
        let mut r = Reader::new(buf, ORE_WIRE_VERSION)?;
        let block_count = r.u8()?;
        let nonce: [u8; 12] = r.raw(12)?.try_into().unwrap();
        let mut blocks = Vec::with_capacity(block_count as usize);
        for _ in 0..block_count {
            let b = r.u16()?;
            if b >= BLOCK_MOD {
                return Err(WireError::Malformed("ore block out of range"));
            }
            blocks.push(b);
        }
        r.done()?;
        Ok(OreCipher {
            blocks,
            block_count,
            nonce,
        })
    }
}
