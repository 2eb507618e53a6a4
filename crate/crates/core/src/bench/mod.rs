//! Benchmark harness: deterministic dataset generation, a shared
//! operation stream executed under five modes (plaintext reference,
//! software ciphertext operators, static enclave with and without task
//! pooling, and the self-adaptive switch), and report emission.
//!
//! All timings come from the enclave simulator's virtual clock, so runs
//! are bit-reproducible for a given seed and configuration.

mod dataset;
mod report;
mod run;
mod spec;

pub use dataset::{
    gen_row, generate_dataset, generate_plain_rows, rows_at_scale, schema_for, storage_bytes,
    synthetic_schema, tpcc_schema, GeneratedDb, TableSchema,
};
pub use report::{
    expansion_ratios, probe_csv, render_summary, summary_csv, REPORT_SCHEMA_VERSION,
};
pub use run::{op_stream, run_suite, run_workload, PathShare, RunOutcome, RunReport};
pub use spec::{Mode, WorkloadKind, WorkloadSpec, MAX_WORKER_PARALLELISM};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid workload spec: {0}")]
    BadSpec(&'static str),
    #[error("i/o: {0}")]
    Io(String),
    #[error("schema: {0}")]
    Schema(#[from] crate::schema::SchemaError),
    #[error("engine: {0}")]
    Engine(#[from] crate::engine::EngineError),
    #[error("attestation: {0}")]
    Attest(#[from] crate::enclave::AttestError),
    #[error("mode {mode} diverged from the plaintext reference at read {op_index}")]
    ResultMismatch { mode: &'static str, op_index: usize },
}
