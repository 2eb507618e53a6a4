//! Trusted bridging functions: decrypt randomized operands, compute in
//! plaintext, re-encrypt the result under the requested scheme.

use crate::crypto::{
    ore_encrypt, rnd_decrypt, rnd_encrypt, sahe_encrypt, smhe_encrypt, OreWidth, RndCipher, Scheme,
};

use super::state::EnclaveState;
use super::EnclaveError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
}

impl CmpOp {
    pub fn eval(self, a: u64, b: u64) -> bool {
        match self {
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BridgeOp {
    Cmp(CmpOp),
    Add,
    Sub,
    Mul,
    Div,
}

/// Encryption mode of the result to be produced inside the enclave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultTag {
    /// Comparison outcome, returned as a plain boolean.
    PlainBool,
    Ahe,
    Mhe,
    Rnd,
    Ore(OreWidth),
}

#[derive(Debug, Clone)]
pub struct BridgeTask {
    pub task_id: u64,
    pub op: BridgeOp,
    pub result_tag: ResultTag,
    /// Column whose keys cover the operands and the result.
    pub column_label: Vec<u8>,
    pub operands: Vec<RndCipher>,
}

#[derive(Debug, Clone)]
pub enum BridgeResult {
    Bool(bool),
    Ahe(crate::crypto::AheCipher),
    Mhe(crate::crypto::MheCipher),
    Rnd(RndCipher),
    Ore(crate::crypto::OreCipher),
}

impl BridgeResult {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            BridgeResult::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

/// Decodes the 8-byte little-endian payload of a randomized ciphertext.
fn decode_value(plain: &[u8]) -> Result<u64, EnclaveError> {
    let bytes: [u8; 8] = plain.try_into().map_err(|_| EnclaveError::BadOperand)?;
    Ok(u64::from_le_bytes(bytes))
}

/// Looks the ciphertext up in the within-enclave cache, decrypting and
/// inserting on a miss. A hit costs nothing on the virtual clock.
pub fn cache_lookup_or_decrypt(
    state: &mut EnclaveState,
    c: &RndCipher,
    label: &[u8],
) -> Result<u64, EnclaveError> {
    if !state.keys_provisioned() {
        return Err(EnclaveError::KeysMissing);
    }
    let cache_key = c.to_bytes();
    if state.config.cache_enabled {
        if let Some(v) = state.cache.get(&cache_key) {
            return Ok(v);
        }
    }
    let key = state
        .key_for(label, Scheme::Rnd)
        .ok_or_else(|| EnclaveError::UnknownColumn(String::from_utf8_lossy(label).into_owned()))?
        .clone();
    let plain = rnd_decrypt(c, &key)?;
    let value = decode_value(&plain)?;
    state.charge(state.config.decrypt_cost_micros);
    if state.config.cache_enabled {
        // Cache entries live in secure memory; account them like any other
        // allocation so a hot cache contributes to paging pressure.
        state.cache_insert_accounted(cache_key, value);
    }
    Ok(value)
}

/// Executes one bridging task. `charge_entry` is false when the caller has
/// already paid the batched entry cost.
pub fn ecall_bridge(
    state: &mut EnclaveState,
    task: &BridgeTask,
    charge_entry: bool,
) -> Result<(BridgeResult, u64), EnclaveError> {
    if !state.keys_provisioned() {
        return Err(EnclaveError::KeysMissing);
    }
    let start = state.now();
    if charge_entry {
        state.charge_entry();
    }

    // Scratch for the call's operands, freed on exit.
    let scratch: u64 = task
        .operands
        .iter()
        .map(|c| c.to_bytes().len() as u64)
        .sum();
    let scratch_id = state.alloc(scratch);

    let result = bridge_compute(state, task);

    state.free(scratch_id);
    let duration = state.now() - start;
    result.map(|r| (r, duration))
}

fn bridge_compute(state: &mut EnclaveState, task: &BridgeTask) -> Result<BridgeResult, EnclaveError> {
    let mut values = Vec::with_capacity(task.operands.len());
    for c in &task.operands {
        values.push(cache_lookup_or_decrypt(state, c, &task.column_label)?);
    }
    if values.len() != 2 {
        return Err(EnclaveError::BadOperand);
    }
    state.charge(state.config.compute_cost_micros);
    let (a, b) = (values[0], values[1]);

    let out = match task.op {
        BridgeOp::Cmp(cmp) => BridgeResult::Bool(cmp.eval(a, b)),
        BridgeOp::Add | BridgeOp::Sub | BridgeOp::Mul | BridgeOp::Div => {
            let value = match task.op {
                BridgeOp::Add => a.wrapping_add(b),
                BridgeOp::Sub => a.wrapping_sub(b),
                BridgeOp::Mul => a.wrapping_mul(b),
                BridgeOp::Div => {
                    if b == 0 {
                        return Err(EnclaveError::BadOperand);
                    }
                    a / b
                }
                _ => unreachable!(),
            };
            state.charge(state.config.encrypt_cost_micros);
            encrypt_result(state, value, task.result_tag, &task.column_label)?
        }
    };
    // Moving the result out of secure memory is a fixed copy cost.
    state.charge(state.config.copyout_cost_micros);
    Ok(out)
}

fn encrypt_result(
    state: &mut EnclaveState,
    value: u64,
    tag: ResultTag,
    label: &[u8],
) -> Result<BridgeResult, EnclaveError> {
    let missing =
        || EnclaveError::UnknownColumn(String::from_utf8_lossy(label).into_owned());
    Ok(match tag {
        ResultTag::PlainBool => BridgeResult::Bool(value != 0),
        ResultTag::Ahe => {
            let key = state.key_for(label, Scheme::Ahe).ok_or_else(missing)?.clone();
            let nonce = state.fresh_nonce();
            BridgeResult::Ahe(sahe_encrypt(value as u128, &key, nonce)?)
        }
        ResultTag::Mhe => {
            let key = state.key_for(label, Scheme::Mhe).ok_or_else(missing)?.clone();
            let nonce = state.fresh_nonce();
            BridgeResult::Mhe(smhe_encrypt(value as u128, &key, nonce)?)
        }
        ResultTag::Rnd => {
            let key = state.key_for(label, Scheme::Rnd).ok_or_else(missing)?.clone();
            let mut rng = state.rng.clone();
            let c = rnd_encrypt(&value.to_le_bytes(), &key, &mut rng)?;
            state.rng = rng;
            BridgeResult::Rnd(c)
        }
        ResultTag::Ore(width) => {
            let key = state.key_for(label, Scheme::Ore).ok_or_else(missing)?.clone();
            let mut rng = state.rng.clone();
            let c = ore_encrypt(value, &key, width, &mut rng)?;
            state.rng = rng;
            BridgeResult::Ore(c)
        }
    })
}
