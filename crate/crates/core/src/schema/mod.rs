//! Client-side schema management and query rewriting.
//!
//! The client holds the master key, assigns anonymous identifiers to
//! tables and columns, chooses the scheme set per column, turns plaintext
//! statements into ciphertext statements, and decrypts result sets. The
//! server never sees a plaintext name, literal, or key.

mod ast;
mod catalog;
mod rewrite;
mod value;

pub use ast::{AggFn, PredOp, Predicate, Projection, SelectQuery, Statement, UpdateSet};
pub use catalog::{Catalog, ColumnDef, ColumnSpec, DataKind, ProvisionMode, TableSpec};
pub use rewrite::{
    table_layout, Capability, ClientSession, EncryptedRow, EncryptedValue, FieldSlot, QueryMode,
    RewrittenAssignment, RewrittenPredicate, RewrittenProjection, RewrittenQuery,
    RewrittenStatement,
};
pub use value::Value;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("duplicate table {0:?}")]
    DuplicateTable(String),
    #[error("duplicate column {0:?}")]
    DuplicateColumn(String),
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("column {column:?} expects {expected}, got {found}")]
    TypeMismatch {
        column: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("sensitive numeric columns hold non-negative values; {column:?} got {value}")]
    NegativeSensitive { column: String, value: i64 },
    #[error("value for column {column:?} does not fit the ciphertext domain")]
    OutOfRange { column: String },
    #[error("column {column:?} lacks scheme {scheme:?} required by the query")]
    MissingScheme {
        column: String,
        scheme: crate::crypto::Scheme,
    },
    #[error("operation unsupported for column {column:?}: {reason}")]
    Unsupported { column: String, reason: &'static str },
    #[error("crypto: {0}")]
    Crypto(#[from] crate::crypto::CryptoError),
    #[error("catalog file: {0}")]
    Catalog(String),
}
