//! Secure-memory accounting and the virtual clock.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::crypto::{ColumnKey, Scheme};

use super::cache::PlainCache;

/// Tunables for the simulated enclave. All sizes in bytes, all costs in
/// virtual microseconds. Absent fields in a serialized config fall back to
/// the defaults.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EnclaveConfig {
    /// Secure-memory budget. Desk-scale default is 8 MB so paging regimes
    /// are reachable in seconds; `epc_128mb` restores the hardware figure.
    pub epc_budget_bytes: u64,
    /// Entry cost charged per enclave call (batched calls share one).
    pub ecall_fixed_cost_micros: u64,
    /// Linear paging slope: charged duration is
    /// `base × (1 + factor × overflow_fraction)`, so a working set of twice
    /// the budget doubles the cost.
    pub page_fault_penalty_factor: f64,
    pub cache_capacity_entries: usize,
    pub pool_batch_size: usize,
    pub pool_window_micros: u64,
    /// Submissions beyond this many pending tasks degenerate to direct calls.
    pub pool_capacity: usize,
    pub worker_count: usize,
    pub probe_interval_micros: u64,
    pub probe_data_elements: usize,
    /// Per-operand decrypt cost inside the enclave.
    pub decrypt_cost_micros: u64,
    /// Re-encryption cost for the result.
    pub encrypt_cost_micros: u64,
    pub compute_cost_micros: u64,
    /// Fixed cost of copying a result out of secure memory.
    pub copyout_cost_micros: u64,
    /// Secure-memory scratch pinned per open TEE session.
    pub session_scratch_bytes: u64,
    pub cache_enabled: bool,
}

impl Default for EnclaveConfig {
    fn default() -> EnclaveConfig {
        EnclaveConfig {
            epc_budget_bytes: 8 * 1024 * 1024,
            ecall_fixed_cost_micros: 15,
            page_fault_penalty_factor: 1.0,
            cache_capacity_entries: 4096,
            pool_batch_size: 32,
            pool_window_micros: 1_000,
            pool_capacity: 128,
            worker_count: 4,
            probe_interval_micros: 200_000,
            probe_data_elements: 8192,
            decrypt_cost_micros: 2,
            encrypt_cost_micros: 2,
            compute_cost_micros: 1,
            copyout_cost_micros: 1,
            session_scratch_bytes: 512 * 1024,
            cache_enabled: true,
        }
    }
}

impl EnclaveConfig {
    /// Preset matching the hardware EPC size.
    pub fn epc_128mb() -> EnclaveConfig {
        EnclaveConfig {
            epc_budget_bytes: 128 * 1024 * 1024,
            ..EnclaveConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.epc_budget_bytes == 0
            || self.ecall_fixed_cost_micros == 0
            || self.pool_batch_size == 0
            || self.pool_window_micros == 0
            || self.worker_count == 0
            || self.cache_capacity_entries == 0
        {
            return Err("enclave config fields must be positive".into());
        }
        if self.page_fault_penalty_factor < 1.0 {
            return Err("page_fault_penalty_factor must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Allocation {
    size: u64,
    last_touch: u64,
}

/// The shared enclave: memory accounting, provisioned keys, the
/// cipher-to-plain cache, and the deterministic clock.
pub struct EnclaveState {
    pub config: EnclaveConfig,
    clock_micros: u64,
    resident_bytes: u64,
    pages: HashMap<u64, Allocation>,
    next_alloc_id: u64,
    pub(super) cache: PlainCache,
    pub(super) keys: HashMap<(Vec<u8>, Scheme), ColumnKey>,
    pub sealed: bool,
    pub(super) rng: ChaCha8Rng,
    pub(super) nonce_counter: u64,
    pub ecall_entries_charged: u64,
    pub(super) session_sk: Option<[u8; 32]>,
    cache_allocs: HashMap<Vec<u8>, u64>,
}

impl EnclaveState {
    pub fn new(config: EnclaveConfig, seed: u64) -> EnclaveState {
        config.validate().expect("valid enclave config");
        let cache = PlainCache::new(config.cache_capacity_entries);
        EnclaveState {
            config,
            clock_micros: 0,
            resident_bytes: 0,
            pages: HashMap::new(),
            next_alloc_id: 1,
            cache,
            keys: HashMap::new(),
            sealed: false,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xe17c_1abe),
            nonce_counter: 1 << 32,
            ecall_entries_charged: 0,
            session_sk: None,
            cache_allocs: HashMap::new(),
        }
    }

    pub fn now(&self) -> u64 {
        self.clock_micros
    }

    pub fn resident_bytes(&self) -> u64 {
        self.resident_bytes
    }

    pub fn keys_provisioned(&self) -> bool {
        !self.keys.is_empty()
    }

    pub fn session_key(&self) -> Option<[u8; 32]> {
        self.session_sk
    }

    pub(super) fn install_key(&mut self, key: ColumnKey) {
        self.keys
            .insert((key.column_label.clone(), key.scheme), key);
    }

    pub fn key_for(&self, label: &[u8], scheme: Scheme) -> Option<&ColumnKey> {
        self.keys.get(&(label.to_vec(), scheme))
    }

    /// Reserves secure memory, returning the allocation id.
    pub fn alloc(&mut self, size: u64) -> u64 {
        let id = self.next_alloc_id;
        self.next_alloc_id += 1;
        self.pages.insert(
            id,
            Allocation {
                size,
                last_touch: self.clock_micros,
            },
        );
        self.resident_bytes += size;
        id
    }

    pub fn free(&mut self, id: u64) {
        if let Some(a) = self.pages.remove(&id) {
            self.resident_bytes -= a.size;
        }
    }

    pub fn touch(&mut self, id: u64) {
        let now = self.clock_micros;
        if let Some(a) = self.pages.get_mut(&id) {
            a.last_touch = now;
        }
    }

    /// Current paging multiplier; 1.0 while under budget.
    pub fn penalty_factor(&self) -> f64 {
        if self.resident_bytes <= self.config.epc_budget_bytes {
            1.0
        } else {
            let overflow = (self.resident_bytes - self.config.epc_budget_bytes) as f64
                / self.config.epc_budget_bytes as f64;
            1.0 + self.config.page_fault_penalty_factor * overflow
        }
    }

    /// Charges `base` virtual microseconds scaled by the paging state and
    /// returns the charged duration.
    pub fn charge(&mut self, base: u64) -> u64 {
        let charged = (base as f64 * self.penalty_factor()).round() as u64;
        self.clock_micros += charged;
        charged
    }

    /// Advances the clock without paging scaling (untrusted-side time).
    pub fn advance(&mut self, micros: u64) {
        self.clock_micros += micros;
    }

    /// Charges the fixed enclave entry cost; exposed so batched enclave
    /// work outside the bridge (e.g. an in-enclave sort) can pay it too.
    pub fn charge_entry(&mut self) -> u64 {
        self.ecall_entries_charged += 1;
        self.charge(self.config.ecall_fixed_cost_micros)
    }

    pub(super) fn fresh_nonce(&mut self) -> u64 {
        self.nonce_counter += 1;
        self.nonce_counter
    }

    /// Inserts a cache entry while keeping its bytes on the books; an
    /// evicted entry's allocation is released.
    pub(super) fn cache_insert_accounted(&mut self, key: Vec<u8>, value: u64) {
        let entry_bytes = (key.len() + 16) as u64;
        if let Some(evicted) = self.cache.insert(key.clone(), value) {
            if let Some(id) = self.cache_allocs.remove(&evicted) {
                self.free(id);
            }
        }
        if !self.cache_allocs.contains_key(&key) {
            let id = self.alloc(entry_bytes);
            self.cache_allocs.insert(key, id);
        }
    }

    /// Audit walk: recomputes resident bytes from live allocations.
    pub fn audit_resident_bytes(&self) -> u64 {
        self.pages.values().map(|a| a.size).sum()
    }

    pub fn cache_stats(&self) -> (u64, u64) {
        (self.cache.hits(), self.cache.misses())
    }
}
