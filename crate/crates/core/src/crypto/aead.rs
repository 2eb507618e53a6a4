//! Deterministic and randomized AES-GCM ciphertexts.
//!
//! `DetCipher` fixes the nonce (derived from the key) so equal plaintexts
//! collide, which is the scheme's documented leakage. `RndCipher` draws a
//! fresh 12-byte nonce per encryption and is the single stored copy for
//! TEE-mode columns; its 16-byte tag authenticates the payload.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use rand::RngCore;

use super::keys::{prf_bytes, ColumnKey, Scheme};
use super::CryptoError;
use crate::wire::{Reader, Writer, WireError};

pub const DET_WIRE_VERSION: u8 = 1;
pub const RND_WIRE_VERSION: u8 = 1;

const TAG_LEN: usize = 16;
const NONCE_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DetCipher {
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RndCipher {
    pub nonce: [u8; NONCE_LEN],
    pub body: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

fn cipher_for(k: &ColumnKey) -> Aes256Gcm {
    Aes256Gcm::new_from_slice(k.key_bytes()).expect("32-byte key")
}

fn check_scheme(k: &ColumnKey, want: Scheme) -> Result<(), CryptoError> {
    if k.scheme != want {
        return Err(CryptoError::SchemeMismatch {
            expected: want,
            found: k.scheme,
        });
    }
    Ok(())
}

pub fn det_encrypt(m: &[u8], k: &ColumnKey) -> Result<DetCipher, CryptoError> {
    check_scheme(k, Scheme::Det)?;
    // Fixed per-key nonce: nonce reuse is what makes the scheme deterministic.
    let nd = prf_bytes(k, &[b"det-nonce"]);
    let nonce = Nonce::from_slice(&nd[..NONCE_LEN]);
    let bytes = cipher_for(k)
        .encrypt(nonce, Payload { msg: m, aad: b"det" })
        .map_err(|_| CryptoError::AuthFailure)?;
    Ok(DetCipher { bytes })
}

pub fn det_decrypt(c: &DetCipher, k: &ColumnKey) -> Result<Vec<u8>, CryptoError> {
    check_scheme(k, Scheme::Det)?;
    let nd = prf_bytes(k, &[b"det-nonce"]);
    let nonce = Nonce::from_slice(&nd[..NONCE_LEN]);
    cipher_for(k)
        .decrypt(nonce, Payload { msg: &c.bytes, aad: b"det" })
        .map_err(|_| CryptoError::AuthFailure)
}

pub fn rnd_encrypt(m: &[u8], k: &ColumnKey, rng: &mut impl RngCore) -> Result<RndCipher, CryptoError> {
    check_scheme(k, Scheme::Rnd)?;
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let out = cipher_for(k)
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: m, aad: b"rnd" })
        .map_err(|_| CryptoError::AuthFailure)?;
    let (body, tag) = out.split_at(out.len() - TAG_LEN);
    Ok(RndCipher {
        nonce,
        body: body.to_vec(),
        tag: tag.try_into().unwrap(),
    })
}

pub fn rnd_decrypt(c: &RndCipher, k: &ColumnKey) -> Result<Vec<u8>, CryptoError> {
    check_scheme(k, Scheme::Rnd)?;
    let mut joined = c.body.clone();
    joined.extend_from_slice(&c.tag);
    cipher_for(k)
        .decrypt(
            Nonce::from_slice(&c.nonce),
            Payload { msg: &joined, aad: b"rnd" },
        )
        .map_err(|_| CryptoError::AuthFailure)
}

impl DetCipher {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(DET_WIRE_VERSION);
        w.bytes(&self.bytes);
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<DetCipher, WireError> {
        let mut r = Reader::new(buf, DET_WIRE_VERSION)?;
        let bytes = r.bytes()?.to_vec();
        r.done()?;
        Ok(DetCipher { bytes })
    }
}

impl RndCipher {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(RND_WIRE_VERSION);
        w.raw(&self.nonce);
        w.bytes(&self.body);
        w.raw(&self.tag);
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<RndCipher, WireError> {
        let mut r = Reader::new(buf, RND_WIRE_VERSION)?;
        let nonce: [u8; NONCE_LEN] = r.raw(NONCE_LEN)?.try_into().unwrap();
        let body = r.bytes()?.to_vec();
        let tag: [u8; TAG_LEN] = r.raw(TAG_LEN)?.try_into().unwrap();
        r.done()?;
        Ok(RndCipher { nonce, body, tag })
    }
}
