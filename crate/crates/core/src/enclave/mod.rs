//! Deterministic simulation of a trusted enclave.
//!
//! Costs are virtual microseconds charged to a per-state clock: a fixed
//! entry cost per enclave call, per-operand decrypt/compute/encrypt costs,
//! and a linear paging penalty once resident secure memory exceeds the
//! budget. Nothing here depends on wall-clock time, so runs are
//! reproducible bit-for-bit.

mod attest;
mod bridge;
mod cache;
mod pool;
mod probe;
mod sealed;
mod state;

pub use attest::{attest_and_provision, AttestClient, AttestError, AttestOutcome, ColumnListing, Phase};
pub use bridge::{
    cache_lookup_or_decrypt, ecall_bridge, BridgeOp, BridgeResult, BridgeTask, CmpOp, ResultTag,
};
pub use cache::PlainCache;
pub use pool::{CompletedTask, PoolStats, SubmitOutcome, TaskPool};
pub use probe::{run_probe, ProbeKind, ProbeSample};
pub use sealed::{load_sealed_keys, seal_keys_to_file};
pub use state::{EnclaveConfig, EnclaveState};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnclaveError {
    #[error("column keys are not provisioned")]
    KeysMissing,
    #[error("no key for column {0:?}")]
    UnknownColumn(String),
    #[error("operand authentication failure")]
    Auth(#[from] crate::crypto::CryptoError),
    #[error("malformed operand payload")]
    BadOperand,
    #[error("sealed key file: {0}")]
    Sealed(String),
    #[error("attestation: {0}")]
    Attest(#[from] AttestError),
}
