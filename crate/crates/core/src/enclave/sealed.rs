//! Sealing provisioned column keys to disk.
//!
//! Keys survive enclave restarts by being wrapped under a platform sealing
//! key (a fixed simulation constant standing in for the CPU-fused one) with
//! authenticated encryption, so a flipped bit anywhere in the file refuses
//! to load.

use std::path::Path;

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce};
use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::Sha256;

use crate::crypto::{ColumnKey, Scheme};
use crate::wire::{Reader, Writer};

use super::state::EnclaveState;
use super::EnclaveError;

const SEALED_VERSION: u8 = 1;
/// Simulation stand-in for the platform-fused sealing secret.
const PLATFORM_SEAL_SECRET: &[u8] = b"cipherdb/platform-seal-secret/v1";

fn sealing_key() -> [u8; 32] {
    let mut mac =
        <Hmac<Sha256> as Mac>::new_from_slice(PLATFORM_SEAL_SECRET).expect("any key length");
    mac.update(b"seal-key");
    mac.finalize().into_bytes().into()
}

fn encode_keys(keys: impl Iterator<Item = ColumnKey>, count: usize) -> Vec<u8> {
    let mut w = Writer::new(1);
    w.u32(count as u32);
    for key in keys {
        w.bytes(&key.column_label);
        w.u8(key.scheme.tag());
        w.raw(key.key_bytes());
    }
    w.finish()
}

/// Writes the enclave's provisioned keys to `path`, sealed to the platform.
pub fn seal_keys_to_file(state: &mut EnclaveState, path: &Path) -> Result<(), EnclaveError> {
    if !state.keys_provisioned() {
        return Err(EnclaveError::KeysMissing);
    }
    let mut keys: Vec<ColumnKey> = state.keys.values().cloned().collect();
    keys.sort_by(|a, b| (&a.column_label, a.scheme).cmp(&(&b.column_label, b.scheme)));
    let count = keys.len();
    let plain = encode_keys(keys.into_iter(), count);

    let cipher = Aes256Gcm::new_from_slice(&sealing_key()).unwrap();
    let mut nonce = [0u8; 12];
    state.rng.fill_bytes(&mut nonce);
    let body = cipher
        .encrypt(Nonce::from_slice(&nonce), plain.as_slice())
        .map_err(|_| EnclaveError::Sealed("encryption failed".into()))?;

    let mut w = Writer::new(SEALED_VERSION);
    w.raw(&nonce);
    w.bytes(&body);
    std::fs::write(path, w.finish()).map_err(|e| EnclaveError::Sealed(e.to_string()))?;
    state.sealed = true;
    Ok(())
}

/// Loads and unseals keys from `path`, installing them into the enclave.
/// Returns the number of keys restored.
pub fn load_sealed_keys(state: &mut EnclaveState, path: &Path) -> Result<usize, EnclaveError> {
    let buf = std::fs::read(path).map_err(|e| EnclaveError::Sealed(e.to_string()))?;
    let mut r =
        Reader::new(&buf, SEALED_VERSION).map_err(|e| EnclaveError::Sealed(e.to_string()))?;
    let nonce: [u8; 12] = r
        .raw(12)
        .map_err(|e| EnclaveError::Sealed(e.to_string()))?
        .try_into()
        .unwrap();
    let body = r.bytes().map_err(|e| EnclaveError::Sealed(e.to_string()))?;
    r.done().map_err(|e| EnclaveError::Sealed(e.to_string()))?;

    let cipher = Aes256Gcm::new_from_slice(&sealing_key()).unwrap();
    let plain = cipher
        .decrypt(Nonce::from_slice(&nonce), body)
        .map_err(|_| EnclaveError::Sealed("integrity check failed".into()))?;

    let mut r = Reader::new(&plain, 1).map_err(|e| EnclaveError::Sealed(e.to_string()))?;
    let count = r.u32().map_err(|e| EnclaveError::Sealed(e.to_string()))? as usize;
    let mut restored = Vec::with_capacity(count);
    for _ in 0..count {
        let label = r
            .bytes()
            .map_err(|e| EnclaveError::Sealed(e.to_string()))?
            .to_vec();
        let tag = r.u8().map_err(|e| EnclaveError::Sealed(e.to_string()))?;
        let scheme = Scheme::from_tag(tag)
            .ok_or_else(|| EnclaveError::Sealed(format!("unknown scheme tag {tag}")))?;
        let key_bytes: [u8; 32] = r
            .raw(32)
            .map_err(|e| EnclaveError::Sealed(e.to_string()))?
            .try_into()
            .unwrap();
        restored.push(ColumnKey::from_parts(scheme, key_bytes, label));
    }
    r.done().map_err(|e| EnclaveError::Sealed(e.to_string()))?;

    for key in restored {
        state.install_key(key);
    }
    state.sealed = true;
    Ok(count)
}
