//! Workload and mode descriptions for the benchmark harness.

use serde::{Deserialize, Serialize};

use crate::schema::{ProvisionMode, QueryMode};

/// Workers the simulated host can run truly in parallel; QPS stops scaling
/// past this point and extra sessions only add secure-memory pressure.
pub const MAX_WORKER_PARALLELISM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    /// New-order-style writes plus stock-level-style reads over the
    /// nine-table retail schema.
    TpccLike,
    /// Single-table comparison-heavy workload.
    Synthetic,
}

impl WorkloadKind {
    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::TpccLike => "tpcc_like",
            WorkloadKind::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Option<WorkloadKind> {
        match s {
            "tpcc_like" => Some(WorkloadKind::TpccLike),
            "synthetic" => Some(WorkloadKind::Synthetic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// Row-count multiplier; scale 1 is 3×10^5 order_line rows.
    pub scale: f64,
    /// Fraction of operations that are reads, in [0, 1].
    pub read_write_ratio: f64,
    /// Worker sessions; each pins enclave scratch while open.
    pub concurrency: usize,
    /// Total operation count.
    pub ops: usize,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(0.0..=1.0).contains(&self.read_write_ratio) {
            return Err("read_write_ratio must lie in [0, 1]");
        }
        if !(self.scale > 0.0) {
            return Err("scale must be positive");
        }
        if self.concurrency == 0 {
            return Err("concurrency must be at least 1");
        }
        if self.ops == 0 {
            return Err("ops must be at least 1");
        }
        Ok(())
    }
}

/// The five execution modes under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Plaintext,
    Software,
    StaticTee,
    StaticTeePool,
    Adaptive,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Plaintext,
        Mode::Software,
        Mode::StaticTee,
        Mode::StaticTeePool,
        Mode::Adaptive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Plaintext => "plaintext",
            Mode::Software => "software",
            Mode::StaticTee => "static_tee",
            Mode::StaticTeePool => "static_tee_pool",
            Mode::Adaptive => "adaptive",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Column provisioning for this mode; `None` marks the plaintext
    /// reference, where no column is treated as sensitive.
    pub fn provision(self) -> Option<ProvisionMode> {
        match self {
            Mode::Plaintext => None,
            Mode::Software => Some(ProvisionMode::Software),
            Mode::StaticTee | Mode::StaticTeePool => Some(ProvisionMode::Tee),
            Mode::Adaptive => Some(ProvisionMode::Adaptive),
        }
    }

    pub fn query_mode(self) -> QueryMode {
        match self {
            // Plaintext predicates all rewrite to plain filters; the query
            // mode is inert.
            Mode::Plaintext | Mode::Software => QueryMode::Software,
            Mode::StaticTee | Mode::StaticTeePool => QueryMode::StaticTee,
            Mode::Adaptive => QueryMode::Adaptive,
        }
    }

    pub fn uses_enclave(self) -> bool {
        matches!(self, Mode::StaticTee | Mode::StaticTeePool | Mode::Adaptive)
    }

    pub fn uses_pool(self) -> bool {
        self == Mode::StaticTeePool
    }
}
