//! Encrypted query-processing engine with a hybrid execution model:
//! software ciphertext operators (homomorphic, order-revealing,
//! deterministic), an ORE-keyed cipher B-tree index, a simulated trusted
//! enclave with paging costs, and a self-adaptive per-operation switch
//! between the two paths.

pub mod bench;
pub mod crypto;
pub mod enclave;
pub mod engine;
pub mod index;
pub mod schema;
pub mod switch;
pub mod wire;
