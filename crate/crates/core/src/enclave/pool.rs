//! Two-stage batched task pool for enclave calls.
//!
//! Submissions accumulate in an untrusted-side pending pool. When the batch
//! size is reached or the time window elapses, all pending tasks move
//! wholesale into the processing pool and execute under a single charged
//! entry cost. A full pending pool degenerates the submission into a direct
//! call. The pending and processing stages never share state, mirroring the
//! two-lock-domain constraint of real enclaves.

use super::bridge::{ecall_bridge, BridgeResult, BridgeTask};
use super::state::EnclaveState;
use super::EnclaveError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmitOutcome {
    /// Queued into the pending pool.
    Queued,
    /// Pool was full; executed as a direct call.
    Degenerate,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PoolStats {
    pub submitted: u64,
    pub completed: u64,
    pub batches: u64,
    pub degenerate_calls: u64,
}

#[derive(Debug, Clone)]
pub struct CompletedTask {
    pub task_id: u64,
    pub result: BridgeResult,
    pub duration_micros: u64,
}

pub struct TaskPool {
    pending: Vec<BridgeTask>,
    completed: Vec<CompletedTask>,
    window_start: u64,
    stats: PoolStats,
}

impl TaskPool {
    pub fn new() -> TaskPool {
        TaskPool {
            pending: Vec::new(),
            completed: Vec::new(),
            window_start: 0,
            stats: PoolStats::default(),
        }
    }

    pub fn stats(&self) -> PoolStats {
        self.stats
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn submit(
        &mut self,
        state: &mut EnclaveState,
        task: BridgeTask,
    ) -> Result<SubmitOutcome, EnclaveError> {
        self.stats.submitted += 1;
        if self.pending.is_empty() {
            self.window_start = state.now();
        }
        if self.pending.len() >= state.config.pool_capacity {
            // Degenerates to a normal call; still a correct result.
            let (result, duration_micros) = ecall_bridge(state, &task, true)?;
            self.completed.push(CompletedTask {
                task_id: task.task_id,
                result,
                duration_micros,
            });
            self.stats.degenerate_calls += 1;
            self.stats.completed += 1;
            return Ok(SubmitOutcome::Degenerate);
        }
        self.pending.push(task);
        if self.pending.len() >= state.config.pool_batch_size
            || state.now().saturating_sub(self.window_start) >= state.config.pool_window_micros
        {
            self.flush(state)?;
        }
        Ok(SubmitOutcome::Queued)
    }

    /// Moves the pending pool into processing and runs it under one entry
    /// cost.
    fn flush(&mut self, state: &mut EnclaveState) -> Result<(), EnclaveError> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let processing = std::mem::take(&mut self.pending);
        let batch_len = processing.len() as u64;
        self.stats.batches += 1;
        let entry = state.charge_entry();
        for task in processing {
            let (result, work) = ecall_bridge(state, &task, false)?;
            self.completed.push(CompletedTask {
                task_id: task.task_id,
                result,
                // The shared entry cost is spread over the batch.
                duration_micros: work + entry / batch_len.max(1),
            });
            self.stats.completed += 1;
        }
        Ok(())
    }

    /// Flushes any window remainder and hands back everything completed.
    pub fn drain(&mut self, state: &mut EnclaveState) -> Result<Vec<CompletedTask>, EnclaveError> {
        self.flush(state)?;
        Ok(std::mem::take(&mut self.completed))
    }

    /// Completed tasks collected so far without forcing a flush.
    pub fn take_completed(&mut self) -> Vec<CompletedTask> {
        std::mem::take(&mut self.completed)
    }
}

impl Default for TaskPool {
    fn default() -> Self {
        TaskPool::new()
    }
}
