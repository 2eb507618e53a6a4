//! Per-call metrics ring buffer.

use std::collections::VecDeque;

use crate::switch::{OpKind, Path};

#[derive(Debug, Clone, Copy)]
pub struct MetricRecord {
    pub at_micros: u64,
    pub kind: OpKind,
    pub path: Path,
    pub micros: u64,
}

/// Bounded ring of operator timings; old entries fall off the front.
pub struct MetricsRing {
    records: VecDeque<MetricRecord>,
    capacity: usize,
    /// Totals survive eviction.
    pub total_calls: u64,
    pub total_micros: u64,
    pub tee_calls: u64,
    pub software_calls: u64,
}

impl MetricsRing {
    pub fn new(capacity: usize) -> MetricsRing {
        MetricsRing {
            records: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            total_calls: 0,
            total_micros: 0,
            tee_calls: 0,
            software_calls: 0,
        }
    }

    pub fn push(&mut self, record: MetricRecord) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.total_calls += 1;
        self.total_micros += record.micros;
        match record.path {
            Path::Tee => self.tee_calls += 1,
            Path::Software => self.software_calls += 1,
        }
        self.records.push_back(record);
    }

    pub fn records(&self) -> impl Iterator<Item = &MetricRecord> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Share of calls of `kind` that took the enclave path, over the
    /// retained window.
    pub fn tee_share(&self, filter: impl Fn(OpKind) -> bool) -> f64 {
        let mut total = 0u64;
        let mut tee = 0u64;
        for r in &self.records {
            if filter(r.kind) {
                total += 1;
                if r.path == Path::Tee {
                    tee += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            tee as f64 / total as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("at_micros,op,path,micros\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.at_micros,
                r.kind.name(),
                r.path.name(),
                r.micros
            ));
        }
        out
    }
}
