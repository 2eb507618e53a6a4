//! Untrusted server-side executor.
//!
//! Stores encrypted tables, plans and runs rewritten statements through
//! ciphertext operators, and routes enclave-bound calls through the
//! bridge — directly or via the batching task pool. Predicate filters are
//! ordered cheapest-first and an ORE-covered comparison predicate upgrades
//! the scan to a ciphertext index scan.

mod metrics;
mod storage;

pub use metrics::{MetricRecord, MetricsRing};
pub use storage::StoredTable;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::ops::Bound;
use std::path::{Path as FsPath, PathBuf};

use thiserror::Error;

use crate::crypto::{ore_compare, sahe_add, AheCipher, CryptoError, OreCipher, RndCipher, Scheme};
use crate::enclave::{
    ecall_bridge, run_probe, BridgeOp, BridgeResult, BridgeTask, CmpOp, EnclaveConfig,
    EnclaveError, EnclaveState, ProbeKind, ResultTag, TaskPool,
};
use crate::index::IndexError;
use crate::schema::{
    AggFn, Capability, EncryptedRow, EncryptedValue, FieldSlot, PredOp, QueryMode,
    RewrittenAssignment, RewrittenPredicate, RewrittenQuery, Value,
};
use crate::switch::{CostModelParams, OpKind, Path, PathState, ProbeWindow, SwitchError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("storage i/o: {0}")]
    Io(String),
    #[error("row layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("no slot for column {0:?} under {1:?}")]
    MissingSlot(String, Option<Scheme>),
    #[error("udf kind {0:?} is not registered")]
    Unregistered(OpKind),
    #[error("udf kind {0:?} has no {1:?} implementation")]
    PathUnavailable(OpKind, Path),
    #[error("udf kind {0:?} already registered")]
    DuplicateUdf(OpKind),
    #[error("malformed query: {0}")]
    BadQuery(&'static str),
    #[error("crypto: {0}")]
    Crypto(#[from] CryptoError),
    #[error("index: {0}")]
    Index(#[from] IndexError),
    #[error("enclave: {0}")]
    Enclave(#[from] EnclaveError),
    #[error("dispatch: {0}")]
    Switch(#[from] SwitchError),
}

/// Which implementations a registered UDF kind offers.
#[derive(Debug, Clone, Copy)]
pub struct UdfPaths {
    pub software: bool,
    pub tee: bool,
}

/// Scan strategy chosen by the planner.
#[derive(Debug, Clone)]
pub enum ScanChoice {
    Seq,
    /// Ciphertext index scan driven by predicate `pred_idx`.
    Index {
        anon_column: String,
        lower: Bound<OreCipher>,
        upper: Bound<OreCipher>,
        pred_idx: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub scan: ScanChoice,
    /// Remaining predicates as indices into the query, cost-ascending.
    pub filter_order: Vec<usize>,
    /// Estimated cost per entry of `filter_order`.
    pub filter_costs: Vec<u64>,
}

/// A stale-copy refresh the client must perform after an additive update.
#[derive(Debug, Clone)]
pub struct RefreshRequest {
    pub row_id: u64,
    pub anon_column: String,
    /// The authoritative new ciphertext (AHE on the software path, RND on
    /// the enclave path); the client decrypts it and re-encrypts every slot.
    pub new_value: EncryptedValue,
}

#[derive(Debug, Default)]
pub struct UpdateOutcome {
    pub matched: Vec<u64>,
    pub pending_refresh: Vec<RefreshRequest>,
}

/// Cost constants for plan ordering; only the relative ordering is
/// contractual. `PLAN_COST_HE` prices homomorphic aggregate folds.
pub const PLAN_COST_PLAIN: u64 = 1;
pub const PLAN_COST_DET: u64 = 2;
pub const PLAN_COST_HE: u64 = 20;
pub const PLAN_COST_ORE: u64 = 50;
pub const PLAN_COST_TEE: u64 = 200;

pub struct Engine {
    dir: PathBuf,
    tables: HashMap<String, StoredTable>,
    pub enclave: EnclaveState,
    pub pool: TaskPool,
    pub dispatcher: PathState,
    pub cost_params: CostModelParams,
    pub probe_window: ProbeWindow,
    pub metrics: MetricsRing,
    udfs: HashMap<OpKind, UdfPaths>,
    next_task_id: u64,
    /// Route enclave calls through the batching pool.
    pub use_pool: bool,
    tee_sessions: HashMap<u64, u64>,
    next_session_id: u64,
}

fn pred_op_kind(op: PredOp) -> (OpKind, CmpOp) {
    match op {
        PredOp::Gt => (OpKind::CmpGt, CmpOp::Gt),
        PredOp::Ge => (OpKind::CmpGe, CmpOp::Ge),
        PredOp::Lt => (OpKind::CmpLt, CmpOp::Lt),
        PredOp::Le => (OpKind::CmpLe, CmpOp::Le),
        PredOp::Eq => (OpKind::CmpEq, CmpOp::Eq),
    }
}

fn cmp_plain(a: &Value, b: &Value) -> Result<Ordering, EngineError> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Ok(x.cmp(y)),
        (Value::Decimal(x), Value::Decimal(y)) => x
            .partial_cmp(y)
            .ok_or(EngineError::BadQuery("non-finite decimal")),
        (Value::Text(x), Value::Text(y)) => Ok(x.cmp(y)),
        _ => Err(EngineError::BadQuery("mismatched plaintext comparison")),
    }
}

impl Engine {
    pub fn new(dir: &FsPath, config: EnclaveConfig, seed: u64) -> Engine {
        let mut enclave = EnclaveState::new(config, seed);
        // Baseline probe on the empty enclave anchors the cost model.
        let n = enclave.config.probe_data_elements;
        let baseline = run_probe(ProbeKind::Mixed, n, &mut enclave);
        let cost_params = CostModelParams::defaults(baseline.duration_micros as f64);
        let mut udfs = HashMap::new();
        for kind in OpKind::ALL {
            udfs.insert(
                kind,
                UdfPaths {
                    software: true,
                    tee: true,
                },
            );
        }
        Engine {
            dir: dir.to_path_buf(),
            tables: HashMap::new(),
            enclave,
            pool: TaskPool::new(),
            dispatcher: PathState::new(),
            cost_params,
            probe_window: ProbeWindow::new(16),
            metrics: MetricsRing::new(1 << 16),
            udfs,
            next_task_id: 1,
            use_pool: false,
            tee_sessions: HashMap::new(),
            next_session_id: 1,
        }
    }

    /// Replaces the default registration of one UDF kind.
    pub fn register_udf(&mut self, kind: OpKind, paths: UdfPaths) -> Result<(), EngineError> {
        if self.udfs.contains_key(&kind) {
            return Err(EngineError::DuplicateUdf(kind));
        }
        self.udfs.insert(kind, paths);
        Ok(())
    }

    pub fn unregister_udf(&mut self, kind: OpKind) {
        self.udfs.remove(&kind);
    }

    fn require_udf(&self, kind: OpKind, path: Path) -> Result<(), EngineError> {
        let paths = self.udfs.get(&kind).ok_or(EngineError::Unregistered(kind))?;
        let ok = match path {
            Path::Software => paths.software,
            Path::Tee => paths.tee,
        };
        if ok {
            Ok(())
        } else {
            Err(EngineError::PathUnavailable(kind, path))
        }
    }

    pub fn create_table(
        &mut self,
        anon_name: &str,
        layout: Vec<FieldSlot>,
    ) -> Result<(), EngineError> {
        let table = StoredTable::create(&self.dir, anon_name, layout)?;
        self.tables.insert(anon_name.to_string(), table);
        Ok(())
    }

    pub fn open_table(&mut self, anon_name: &str) -> Result<(), EngineError> {
        let table = StoredTable::open(&self.dir, anon_name)?;
        self.tables.insert(anon_name.to_string(), table);
        Ok(())
    }

    pub fn table(&self, anon_name: &str) -> Result<&StoredTable, EngineError> {
        self.tables
            .get(anon_name)
            .ok_or_else(|| EngineError::UnknownTable(anon_name.to_string()))
    }

    fn table_mut(&mut self, anon_name: &str) -> Result<&mut StoredTable, EngineError> {
        self.tables
            .get_mut(anon_name)
            .ok_or_else(|| EngineError::UnknownTable(anon_name.to_string()))
    }

    pub fn insert(&mut self, anon_table: &str, row: EncryptedRow) -> Result<u64, EngineError> {
        self.table_mut(anon_table)?.insert(row)
    }

    /// Runs one probe inside the enclave and feeds the dispatcher.
    pub fn run_probe(&mut self) -> crate::enclave::ProbeSample {
        let n = self.enclave.config.probe_data_elements;
        let sample = run_probe(ProbeKind::Mixed, n, &mut self.enclave);
        self.probe_window.push(sample);
        self.dispatcher.absorb_probes(&self.probe_window, &self.cost_params);
        sample
    }

    /// Pins per-session enclave scratch, as a live worker session would.
    pub fn open_tee_session(&mut self) -> u64 {
        let id = self.next_session_id;
        self.next_session_id += 1;
        let alloc = self.enclave.alloc(self.enclave.config.session_scratch_bytes);
        self.tee_sessions.insert(id, alloc);
        id
    }

    pub fn close_tee_session(&mut self, session: u64) {
        if let Some(alloc) = self.tee_sessions.remove(&session) {
            self.enclave.free(alloc);
        }
    }

    pub fn now(&self) -> u64 {
        self.enclave.now()
    }

    fn record(&mut self, kind: OpKind, path: Path, at: u64, micros: u64) {
        self.metrics.push(MetricRecord {
            at_micros: at,
            kind,
            path,
            micros,
        });
    }

    /// Charges a software operator on the shared clock (untrusted CPU: no
    /// paging scaling) and records it.
    fn charge_software(&mut self, kind: OpKind, micros: u64) {
        let at = self.enclave.now();
        self.enclave.advance(micros);
        self.record(kind, Path::Software, at, micros);
    }

    /// Observed enclave durations include the fixed entry cost, which the
    /// dispatcher already prices separately as `c_fixed`; strip it so the
    /// fed-back figure is the calculation component alone.
    fn tee_calc_observed(&self, elapsed_micros: u64) -> u64 {
        elapsed_micros.saturating_sub(self.cost_params.c_fixed.round() as u64)
    }

    fn software_cost(&self, kind: OpKind) -> u64 {
        self.cost_params
            .software_calc
            .get(&kind)
            .copied()
            .unwrap_or(1.0)
            .round() as u64
    }

    fn fresh_task_id(&mut self) -> u64 {
        self.next_task_id += 1;
        self.next_task_id
    }

    fn c_runtime_estimate(&self) -> u64 {
        let ratio = (self.cost_params.c_fixed + 6.0)
            / self.cost_params.probe_baseline_micros.max(1.0);
        crate::switch::estimate_c_runtime(&self.probe_window, &self.cost_params, ratio).round()
            as u64
    }

    // ------------------------------------------------------------------
    // Planner
    // ------------------------------------------------------------------

    fn predicate_cost(&self, p: &RewrittenPredicate) -> u64 {
        match p.capability {
            Capability::PlainFilter => PLAN_COST_PLAIN,
            Capability::DetEqual => PLAN_COST_DET,
            Capability::OreCompare => PLAN_COST_ORE,
            Capability::TeeBridge => PLAN_COST_TEE + self.c_runtime_estimate(),
            Capability::AdaptiveCompare => {
                PLAN_COST_ORE.min(PLAN_COST_TEE + self.c_runtime_estimate())
            }
        }
    }

    /// Chooses the scan and orders the remaining filters cheapest-first.
    pub fn plan(&self, q: &RewrittenQuery) -> Result<Plan, EngineError> {
        let table = self.table(&q.anon_table)?;
        // First ORE-covered comparison predicate over an indexed column
        // drives an index scan.
        let mut scan = ScanChoice::Seq;
        for (i, p) in q.predicates.iter().enumerate() {
            let Some(lit) = p.ore.as_ref() else { continue };
            if !table.has_index(&p.anon_column) {
                continue;
            }
            let (lower, upper) = match p.op {
                PredOp::Gt => (Bound::Excluded(lit.clone()), Bound::Unbounded),
                PredOp::Ge => (Bound::Included(lit.clone()), Bound::Unbounded),
                PredOp::Lt => (Bound::Unbounded, Bound::Excluded(lit.clone())),
                PredOp::Le => (Bound::Unbounded, Bound::Included(lit.clone())),
                PredOp::Eq => (Bound::Included(lit.clone()), Bound::Included(lit.clone())),
            };
            scan = ScanChoice::Index {
                anon_column: p.anon_column.clone(),
                lower,
                upper,
                pred_idx: i,
            };
            break;
        }
        let consumed = match &scan {
            ScanChoice::Index { pred_idx, .. } => Some(*pred_idx),
            ScanChoice::Seq => None,
        };
        let mut order: Vec<usize> = (0..q.predicates.len())
            .filter(|i| Some(*i) != consumed)
            .collect();
        order.sort_by_key(|i| self.predicate_cost(&q.predicates[*i]));
        let costs = order
            .iter()
            .map(|i| self.predicate_cost(&q.predicates[*i]))
            .collect();
        Ok(Plan {
            scan,
            filter_order: order,
            filter_costs: costs,
        })
    }

    // ------------------------------------------------------------------
    // Field access helpers
    // ------------------------------------------------------------------

    fn slot_value(
        table: &StoredTable,
        row_id: u64,
        anon_column: &str,
        scheme: Option<Scheme>,
    ) -> Result<EncryptedValue, EngineError> {
        let slot = table
            .slot_of(anon_column, scheme)
            .ok_or_else(|| EngineError::MissingSlot(anon_column.to_string(), scheme))?;
        let row = table
            .row(row_id)
            .ok_or_else(|| EngineError::LayoutMismatch(format!("no row {row_id}")))?;
        Ok(row[slot].clone())
    }

    fn collect_rnd(
        &self,
        anon_table: &str,
        ids: &[u64],
        anon_column: &str,
    ) -> Result<Vec<(u64, RndCipher)>, EngineError> {
        let table = self.table(anon_table)?;
        ids.iter()
            .map(|id| {
                match Self::slot_value(table, *id, anon_column, Some(Scheme::Rnd))? {
                    EncryptedValue::Rnd(c) => Ok((*id, c)),
                    _ => Err(EngineError::LayoutMismatch("rnd slot".into())),
                }
            })
            .collect()
    }

    fn collect_ore(
        &self,
        anon_table: &str,
        ids: &[u64],
        anon_column: &str,
    ) -> Result<Vec<(u64, OreCipher)>, EngineError> {
        let table = self.table(anon_table)?;
        ids.iter()
            .map(|id| {
                match Self::slot_value(table, *id, anon_column, Some(Scheme::Ore))? {
                    EncryptedValue::Ore(c) => Ok((*id, c)),
                    _ => Err(EngineError::LayoutMismatch("ore slot".into())),
                }
            })
            .collect()
    }

    /// The field used to return a column's value to the client, preferring
    /// decryptable encodings.
    fn recovery_value(
        table: &StoredTable,
        row_id: u64,
        anon_column: &str,
    ) -> Result<EncryptedValue, EngineError> {
        for scheme in [
            None,
            Some(Scheme::Det),
            Some(Scheme::Rnd),
            Some(Scheme::Ahe),
            Some(Scheme::Ore),
            Some(Scheme::Mhe),
        ] {
            if table.slot_of(anon_column, scheme).is_some() {
                return Self::slot_value(table, row_id, anon_column, scheme);
            }
        }
        Err(EngineError::MissingSlot(anon_column.to_string(), None))
    }

    // ------------------------------------------------------------------
    // Enclave call helpers
    // ------------------------------------------------------------------

    fn bridge_direct(
        &mut self,
        kind: OpKind,
        task: BridgeTask,
    ) -> Result<BridgeResult, EngineError> {
        let at = self.enclave.now();
        let (result, micros) = ecall_bridge(&mut self.enclave, &task, true)?;
        self.record(kind, Path::Tee, at, micros);
        Ok(result)
    }

    /// Runs a batch of same-kind comparison tasks on the enclave path,
    /// through the pool when enabled.
    fn tee_compare_batch(
        &mut self,
        kind: OpKind,
        cmp: CmpOp,
        label: &[u8],
        pairs: Vec<(u64, RndCipher)>,
        literal: &RndCipher,
    ) -> Result<Vec<(u64, bool)>, EngineError> {
        let mut out = Vec::with_capacity(pairs.len());
        if self.use_pool {
            let mut id_map = HashMap::new();
            for (row_id, cipher) in pairs {
                let task_id = self.fresh_task_id();
                id_map.insert(task_id, row_id);
                let task = BridgeTask {
                    task_id,
                    op: BridgeOp::Cmp(cmp),
                    result_tag: ResultTag::PlainBool,
                    column_label: label.to_vec(),
                    operands: vec![cipher, literal.clone()],
                };
                self.pool.submit(&mut self.enclave, task)?;
            }
            for done in self.pool.drain(&mut self.enclave)? {
                let row_id = id_map
                    .get(&done.task_id)
                    .copied()
                    .ok_or(EngineError::BadQuery("unknown pooled task"))?;
                let at = self.enclave.now();
                self.record(kind, Path::Tee, at, done.duration_micros);
                let b = done
                    .result
                    .as_bool()
                    .ok_or(EngineError::BadQuery("comparison returned non-boolean"))?;
                out.push((row_id, b));
            }
        } else {
            for (row_id, cipher) in pairs {
                let task = BridgeTask {
                    task_id: self.fresh_task_id(),
                    op: BridgeOp::Cmp(cmp),
                    result_tag: ResultTag::PlainBool,
                    column_label: label.to_vec(),
                    operands: vec![cipher, literal.clone()],
                };
                let result = self.bridge_direct(kind, task)?;
                let b = result
                    .as_bool()
                    .ok_or(EngineError::BadQuery("comparison returned non-boolean"))?;
                out.push((row_id, b));
            }
        }
        Ok(out)
    }

    // ------------------------------------------------------------------
    // Filtering
    // ------------------------------------------------------------------

    fn eval_software_compare(
        &mut self,
        anon_table: &str,
        ids: &[u64],
        p: &RewrittenPredicate,
    ) -> Result<Vec<u64>, EngineError> {
        let (kind, _) = pred_op_kind(p.op);
        self.require_udf(kind, Path::Software)?;
        let cost = self.software_cost(kind);
        if let Some(det_lit) = &p.det {
            // Deterministic equality: ciphertext byte equality.
            let table = self.table(anon_table)?;
            let mut keep = Vec::new();
            for id in ids {
                let field = Self::slot_value(table, *id, &p.anon_column, Some(Scheme::Det))?;
                let EncryptedValue::Det(c) = field else {
                    return Err(EngineError::LayoutMismatch("det slot".into()));
                };
                if (c == *det_lit) == (p.op == PredOp::Eq) {
                    keep.push(*id);
                }
            }
            let total = ids.len() as u64 * PLAN_COST_DET;
            self.charge_software(kind, total);
            return Ok(keep);
        }
        let ore_lit = p
            .ore
            .as_ref()
            .ok_or(EngineError::BadQuery("software compare without ORE literal"))?
            .clone();
        let pairs = self.collect_ore(anon_table, ids, &p.anon_column)?;
        let mut keep = Vec::new();
        for (id, cipher) in pairs {
            let ord = ore_compare(&cipher, &ore_lit)?;
            self.charge_software(kind, cost);
            if p.op.eval(ord) {
                keep.push(id);
            }
        }
        Ok(keep)
    }

    fn eval_tee_compare(
        &mut self,
        anon_table: &str,
        ids: &[u64],
        p: &RewrittenPredicate,
    ) -> Result<Vec<u64>, EngineError> {
        let (kind, cmp) = pred_op_kind(p.op);
        self.require_udf(kind, Path::Tee)?;
        let literal = p
            .rnd
            .as_ref()
            .ok_or(EngineError::BadQuery("tee compare without RND literal"))?
            .clone();
        let pairs = self.collect_rnd(anon_table, ids, &p.anon_column)?;
        let label = p.anon_column.as_bytes().to_vec();
        let results = self.tee_compare_batch(kind, cmp, &label, pairs, &literal)?;
        Ok(results.into_iter().filter(|(_, b)| *b).map(|(id, _)| id).collect())
    }

    fn eval_predicate(
        &mut self,
        anon_table: &str,
        ids: Vec<u64>,
        p: &RewrittenPredicate,
    ) -> Result<Vec<u64>, EngineError> {
        match p.capability {
            Capability::PlainFilter => {
                let lit = p
                    .plain
                    .as_ref()
                    .ok_or(EngineError::BadQuery("plain filter without literal"))?
                    .clone();
                let table = self.table(anon_table)?;
                let mut keep = Vec::new();
                for id in &ids {
                    let field = Self::slot_value(table, *id, &p.anon_column, None)?;
                    let EncryptedValue::Plain(v) = field else {
                        return Err(EngineError::LayoutMismatch("plain slot".into()));
                    };
                    if p.op.eval(cmp_plain(&v, &lit)?) {
                        keep.push(*id);
                    }
                }
                let total = ids.len() as u64 * PLAN_COST_PLAIN;
                let (kind, _) = pred_op_kind(p.op);
                self.charge_software(kind, total);
                Ok(keep)
            }
            Capability::DetEqual | Capability::OreCompare => {
                self.eval_software_compare(anon_table, &ids, p)
            }
            Capability::TeeBridge => self.eval_tee_compare(anon_table, &ids, p),
            Capability::AdaptiveCompare => {
                let (kind, _) = pred_op_kind(p.op);
                // Per-call decisions: each comparison is dispatched, run,
                // and fed back before the next one is priced, so the
                // in-flight term reflects genuinely outstanding work.
                let mut keep = Vec::new();
                for id in &ids {
                    let at = self.enclave.now();
                    let path = self.dispatcher.dispatch(at, kind, None, &self.cost_params);
                    let one = [*id];
                    let kept = match path {
                        Path::Software => {
                            let kept = self.eval_software_compare(anon_table, &one, p)?;
                            self.dispatcher.feedback(kind, path, self.software_cost(kind))?;
                            kept
                        }
                        Path::Tee => {
                            let before = self.enclave.now();
                            let kept = self.eval_tee_compare(anon_table, &one, p)?;
                            let calc = self.tee_calc_observed(self.enclave.now() - before);
                            self.dispatcher.feedback(kind, path, calc)?;
                            kept
                        }
                    };
                    keep.extend(kept);
                }
                keep.sort_unstable();
                Ok(keep)
            }
        }
    }

    // ------------------------------------------------------------------
    // Ordering and aggregation
    // ------------------------------------------------------------------

    fn order_ids(
        &mut self,
        anon_table: &str,
        ids: Vec<u64>,
        anon_column: &str,
        ascending: bool,
        mode: QueryMode,
    ) -> Result<Vec<u64>, EngineError> {
        if ids.len() <= 1 {
            return Ok(ids);
        }
        let table = self.table(anon_table)?;
        let n = ids.len() as u64;
        let compares = n * (64 - n.leading_zeros() as u64).max(1);
        // Plain column: ordinary sort.
        if table.slot_of(anon_column, None).is_some() {
            let mut keyed: Vec<(u64, Value)> = Vec::new();
            for id in &ids {
                let EncryptedValue::Plain(v) = Self::slot_value(table, *id, anon_column, None)?
                else {
                    return Err(EngineError::LayoutMismatch("plain slot".into()));
                };
                keyed.push((*id, v));
            }
            keyed.sort_by(|a, b| cmp_plain(&a.1, &b.1).unwrap_or(Ordering::Equal));
            if !ascending {
                keyed.reverse();
            }
            self.charge_software(OpKind::CmpLt, compares * PLAN_COST_PLAIN);
            return Ok(keyed.into_iter().map(|(id, _)| id).collect());
        }
        let software_possible = table.slot_of(anon_column, Some(Scheme::Ore)).is_some();
        let use_software = match mode {
            QueryMode::Software => true,
            QueryMode::StaticTee => false,
            QueryMode::Adaptive => {
                if software_possible {
                    let at = self.enclave.now();
                    let path =
                        self.dispatcher
                            .dispatch(at, OpKind::CmpLt, None, &self.cost_params);
                    let soft = path == Path::Software;
                    // One decision covers the whole sort.
                    self.dispatcher.feedback(OpKind::CmpLt, path, 0)?;
                    soft
                } else {
                    false
                }
            }
        };
        if use_software {
            let mut keyed = self.collect_ore(anon_table, &ids, anon_column)?;
            let mut err = None;
            keyed.sort_by(|a, b| match ore_compare(&a.1, &b.1) {
                Ok(ord) => ord,
                Err(e) => {
                    err = Some(e);
                    Ordering::Equal
                }
            });
            if let Some(e) = err {
                return Err(e.into());
            }
            if !ascending {
                keyed.reverse();
            }
            let cost = self.software_cost(OpKind::CmpLt);
            self.charge_software(OpKind::CmpLt, compares * cost);
            Ok(keyed.into_iter().map(|(id, _)| id).collect())
        } else {
            // Enclave-side sort: decrypt the batch inside the enclave,
            // order it there, and return the permutation.
            self.require_udf(OpKind::CmpLt, Path::Tee)?;
            let pairs = self.collect_rnd(anon_table, &ids, anon_column)?;
            let at = self.enclave.now();
            let label = anon_column.as_bytes().to_vec();
            self.enclave.charge_entry();
            let mut keyed = Vec::with_capacity(pairs.len());
            for (id, cipher) in pairs {
                let v = crate::enclave::cache_lookup_or_decrypt(
                    &mut self.enclave,
                    &cipher,
                    &label,
                )?;
                keyed.push((id, v));
            }
            keyed.sort_by_key(|(_, v)| *v);
            self.enclave
                .charge(compares * self.enclave.config.compute_cost_micros);
            if !ascending {
                keyed.reverse();
            }
            let micros = self.enclave.now() - at;
            self.record(OpKind::CmpLt, Path::Tee, at, micros);
            Ok(keyed.into_iter().map(|(id, _)| id).collect())
        }
    }

    fn aggregate_sum(
        &mut self,
        anon_table: &str,
        ids: &[u64],
        anon_column: &str,
        mode: QueryMode,
    ) -> Result<EncryptedValue, EngineError> {
        self.require_udf(OpKind::Add, Path::Software)
            .or_else(|_| self.require_udf(OpKind::Add, Path::Tee))?;
        let table = self.table(anon_table)?;
        // Plaintext column: ordinary summation. Exact for integers; decimal
        // sums go through floating point and are for plain columns only.
        if table.slot_of(anon_column, None).is_some() {
            let mut acc: Option<Value> = None;
            for id in ids {
                let EncryptedValue::Plain(v) = Self::slot_value(table, *id, anon_column, None)?
                else {
                    return Err(EngineError::LayoutMismatch("plain slot".into()));
                };
                acc = Some(match (acc, v) {
                    (None, v) => v,
                    (Some(Value::Int(a)), Value::Int(b)) => Value::Int(a + b),
                    (Some(Value::Decimal(a)), Value::Decimal(b)) => Value::Decimal(a + b),
                    _ => return Err(EngineError::BadQuery("mismatched plaintext addition")),
                });
            }
            let total = ids.len() as u64 * PLAN_COST_PLAIN;
            self.charge_software(OpKind::Add, total);
            return acc
                .map(EncryptedValue::Plain)
                .ok_or(EngineError::BadQuery("sum over empty input"));
        }
        let software_possible = table.slot_of(anon_column, Some(Scheme::Ahe)).is_some();
        let use_software = match mode {
            QueryMode::Software => true,
            QueryMode::StaticTee => false,
            QueryMode::Adaptive => {
                if software_possible {
                    let at = self.enclave.now();
                    let path =
                        self.dispatcher
                            .dispatch(at, OpKind::Add, Some(Scheme::Ahe), &self.cost_params);
                    self.dispatcher.feedback(OpKind::Add, path, 0)?;
                    path == Path::Software
                } else {
                    false
                }
            }
        };
        if use_software {
            self.require_udf(OpKind::Add, Path::Software)?;
            let table = self.table(anon_table)?;
            let mut acc: Option<AheCipher> = None;
            let mut fields = Vec::with_capacity(ids.len());
            for id in ids {
                match Self::slot_value(table, *id, anon_column, Some(Scheme::Ahe))? {
                    EncryptedValue::Ahe(c) => fields.push(c),
                    _ => return Err(EngineError::LayoutMismatch("ahe slot".into())),
                }
            }
            let cost = self.software_cost(OpKind::Add);
            for c in fields {
                acc = Some(match acc {
                    None => c,
                    Some(a) => {
                        let sum = sahe_add(&a, &c)?;
                        self.charge_software(OpKind::Add, cost);
                        sum
                    }
                });
            }
            acc.map(EncryptedValue::Ahe)
                .ok_or(EngineError::BadQuery("sum over empty input"))
        } else {
            self.require_udf(OpKind::Add, Path::Tee)?;
            let pairs = self.collect_rnd(anon_table, ids, anon_column)?;
            let label = anon_column.as_bytes().to_vec();
            let mut iter = pairs.into_iter();
            let mut acc = iter
                .next()
                .ok_or(EngineError::BadQuery("sum over empty input"))?
                .1;
            for (_, c) in iter {
                let task = BridgeTask {
                    task_id: self.fresh_task_id(),
                    op: BridgeOp::Add,
                    result_tag: ResultTag::Rnd,
                    column_label: label.clone(),
                    operands: vec![acc, c],
                };
                match self.bridge_direct(OpKind::Add, task)? {
                    BridgeResult::Rnd(c) => acc = c,
                    _ => return Err(EngineError::BadQuery("bridge add returned wrong tag")),
                }
            }
            Ok(EncryptedValue::Rnd(acc))
        }
    }

    fn aggregate_extreme(
        &mut self,
        anon_table: &str,
        ids: &[u64],
        anon_column: &str,
        want_max: bool,
        mode: QueryMode,
    ) -> Result<EncryptedValue, EngineError> {
        if ids.is_empty() {
            return Err(EngineError::BadQuery("min/max over empty input"));
        }
        // Ascending sort puts the maximum last; descending puts the minimum
        // last.
        let ordered = self.order_ids(anon_table, ids.to_vec(), anon_column, want_max, mode)?;
        let winner = *ordered.last().expect("non-empty");
        let table = self.table(anon_table)?;
        Self::recovery_value(table, winner, anon_column)
    }

    // ------------------------------------------------------------------
    // Statement execution
    // ------------------------------------------------------------------

    fn scan_ids(&mut self, q: &RewrittenQuery, plan: &Plan) -> Result<Vec<u64>, EngineError> {
        match &plan.scan {
            ScanChoice::Seq => Ok(self.table(&q.anon_table)?.row_ids().to_vec()),
            ScanChoice::Index {
                anon_column,
                lower,
                upper,
                ..
            } => {
                let table = self.table(&q.anon_table)?;
                let index = table
                    .indexes
                    .get(anon_column)
                    .ok_or_else(|| EngineError::MissingSlot(anon_column.clone(), Some(Scheme::Ore)))?;
                let lo = match lower {
                    Bound::Included(c) => Bound::Included(c),
                    Bound::Excluded(c) => Bound::Excluded(c),
                    Bound::Unbounded => Bound::Unbounded,
                };
                let hi = match upper {
                    Bound::Included(c) => Bound::Included(c),
                    Bound::Excluded(c) => Bound::Excluded(c),
                    Bound::Unbounded => Bound::Unbounded,
                };
                let ids = index.range_scan(lo, hi)?;
                // Index traversal comparisons are software ORE compares.
                let cost = self.software_cost(OpKind::CmpLt);
                let touched = (ids.len() as u64).max(1)
                    + (table.len() as u64).max(2).ilog2() as u64;
                self.charge_software(OpKind::CmpLt, touched * cost / 4);
                Ok(ids)
            }
        }
    }

    pub fn execute_select(
        &mut self,
        q: &RewrittenQuery,
    ) -> Result<Vec<Vec<EncryptedValue>>, EngineError> {
        let plan = self.plan(q)?;
        let mut ids = self.scan_ids(q, &plan)?;
        for &i in &plan.filter_order {
            if ids.is_empty() {
                break;
            }
            ids = self.eval_predicate(&q.anon_table, ids, &q.predicates[i])?;
        }
        ids.sort_unstable();

        let has_agg = q.projection.iter().any(|p| p.agg.is_some());
        if has_agg {
            if q.projection.iter().any(|p| p.agg.is_none()) {
                return Err(EngineError::BadQuery(
                    "mixed aggregate and plain projection",
                ));
            }
            if ids.is_empty() {
                return Ok(Vec::new());
            }
            let mut row = Vec::new();
            for p in &q.projection {
                let field = match p.agg.expect("aggregate") {
                    AggFn::Sum => self.aggregate_sum(&q.anon_table, &ids, &p.anon_column, q.mode)?,
                    AggFn::Min => {
                        self.aggregate_extreme(&q.anon_table, &ids, &p.anon_column, false, q.mode)?
                    }
                    AggFn::Max => {
                        self.aggregate_extreme(&q.anon_table, &ids, &p.anon_column, true, q.mode)?
                    }
                };
                row.push(field);
            }
            return Ok(vec![row]);
        }

        if let Some((col, asc)) = &q.order_by {
            ids = self.order_ids(&q.anon_table, ids, col, *asc, q.mode)?;
        }
        if let Some(limit) = q.limit {
            ids.truncate(limit);
        }
        let table = self.table(&q.anon_table)?;
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let mut row = Vec::with_capacity(q.projection.len());
            for p in &q.projection {
                row.push(Self::recovery_value(table, id, &p.anon_column)?);
            }
            out.push(row);
        }
        Ok(out)
    }

    pub fn execute_update(
        &mut self,
        anon_table: &str,
        mode: QueryMode,
        sets: &[RewrittenAssignment],
        predicates: &[RewrittenPredicate],
    ) -> Result<UpdateOutcome, EngineError> {
        // Reuse the select machinery for row matching.
        let probe_query = RewrittenQuery {
            anon_table: anon_table.to_string(),
            mode,
            projection: Vec::new(),
            predicates: predicates.to_vec(),
            order_by: None,
            limit: None,
        };
        let plan = self.plan(&probe_query)?;
        let mut ids = self.scan_ids(&probe_query, &plan)?;
        for &i in &plan.filter_order {
            if ids.is_empty() {
                break;
            }
            ids = self.eval_predicate(anon_table, ids, &probe_query.predicates[i])?;
        }
        ids.sort_unstable();

        let mut outcome = UpdateOutcome {
            matched: ids.clone(),
            pending_refresh: Vec::new(),
        };
        for set in sets {
            match set {
                RewrittenAssignment::Replace { anon_column, values } => {
                    for id in &ids {
                        self.apply_replace(anon_table, *id, anon_column, values)?;
                    }
                }
                RewrittenAssignment::AddPlain { anon_column, delta } => {
                    for id in &ids {
                        self.apply_add_plain(anon_table, *id, anon_column, delta)?;
                    }
                }
                RewrittenAssignment::AddHe { anon_column, delta } => {
                    for id in &ids {
                        let r = self.apply_add_he(anon_table, *id, anon_column, delta)?;
                        outcome.pending_refresh.push(r);
                    }
                }
                RewrittenAssignment::AddTee { anon_column, delta } => {
                    for id in &ids {
                        self.apply_add_tee(anon_table, *id, anon_column, delta)?;
                    }
                }
                RewrittenAssignment::AddBoth {
                    anon_column,
                    delta_he,
                    delta_rnd,
                } => {
                    for id in &ids {
                        let at = self.enclave.now();
                        let path = self.dispatcher.dispatch(
                            at,
                            OpKind::Add,
                            Some(Scheme::Rnd),
                            &self.cost_params,
                        );
                        match path {
                            Path::Software => {
                                let r =
                                    self.apply_add_he(anon_table, *id, anon_column, delta_he)?;
                                let cost = self.software_cost(OpKind::Add);
                                self.dispatcher.feedback(OpKind::Add, path, cost)?;
                                outcome.pending_refresh.push(r);
                            }
                            Path::Tee => {
                                let before = self.enclave.now();
                                let new_rnd =
                                    self.apply_add_tee(anon_table, *id, anon_column, delta_rnd)?;
                                let calc = self.tee_calc_observed(self.enclave.now() - before);
                                self.dispatcher.feedback(OpKind::Add, path, calc)?;
                                // Sibling software copies are stale too.
                                outcome.pending_refresh.push(RefreshRequest {
                                    row_id: *id,
                                    anon_column: anon_column.clone(),
                                    new_value: EncryptedValue::Rnd(new_rnd),
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(outcome)
    }

    fn apply_replace(
        &mut self,
        anon_table: &str,
        row_id: u64,
        anon_column: &str,
        values: &[EncryptedValue],
    ) -> Result<(), EngineError> {
        let table = self.table(anon_table)?;
        let mut changes = Vec::new();
        for value in values {
            let slot = table
                .slot_of(anon_column, value.scheme())
                .ok_or_else(|| EngineError::MissingSlot(anon_column.to_string(), value.scheme()))?;
            changes.push((slot, value.clone()));
        }
        self.table_mut(anon_table)?.update_row(row_id, &changes)
    }

    fn apply_add_plain(
        &mut self,
        anon_table: &str,
        row_id: u64,
        anon_column: &str,
        delta: &Value,
    ) -> Result<(), EngineError> {
        let table = self.table(anon_table)?;
        let slot = table
            .slot_of(anon_column, None)
            .ok_or_else(|| EngineError::MissingSlot(anon_column.to_string(), None))?;
        let EncryptedValue::Plain(current) = Self::slot_value(table, row_id, anon_column, None)?
        else {
            return Err(EngineError::LayoutMismatch("plain slot".into()));
        };
        let sum = match (&current, delta) {
            (Value::Int(a), Value::Int(b)) => Value::Int(a + b),
            (Value::Decimal(a), Value::Decimal(b)) => Value::Decimal(a + b),
            _ => return Err(EngineError::BadQuery("mismatched plaintext addition")),
        };
        self.charge_software(OpKind::Add, PLAN_COST_PLAIN);
        self.table_mut(anon_table)?
            .update_row(row_id, &[(slot, EncryptedValue::Plain(sum))])
    }

    fn apply_add_he(
        &mut self,
        anon_table: &str,
        row_id: u64,
        anon_column: &str,
        delta: &AheCipher,
    ) -> Result<RefreshRequest, EngineError> {
        self.require_udf(OpKind::Add, Path::Software)?;
        let table = self.table(anon_table)?;
        let slot = table
            .slot_of(anon_column, Some(Scheme::Ahe))
            .ok_or_else(|| EngineError::MissingSlot(anon_column.to_string(), Some(Scheme::Ahe)))?;
        let EncryptedValue::Ahe(current) = Self::slot_value(table, row_id, anon_column, Some(Scheme::Ahe))?
        else {
            return Err(EngineError::LayoutMismatch("ahe slot".into()));
        };
        let sum = sahe_add(&current, delta)?;
        let cost = self.software_cost(OpKind::Add);
        self.charge_software(OpKind::Add, cost);
        self.table_mut(anon_table)?
            .update_row(row_id, &[(slot, EncryptedValue::Ahe(sum.clone()))])?;
        Ok(RefreshRequest {
            row_id,
            anon_column: anon_column.to_string(),
            new_value: EncryptedValue::Ahe(sum),
        })
    }

    fn apply_add_tee(
        &mut self,
        anon_table: &str,
        row_id: u64,
        anon_column: &str,
        delta: &RndCipher,
    ) -> Result<RndCipher, EngineError> {
        self.require_udf(OpKind::Add, Path::Tee)?;
        let table = self.table(anon_table)?;
        let slot = table
            .slot_of(anon_column, Some(Scheme::Rnd))
            .ok_or_else(|| EngineError::MissingSlot(anon_column.to_string(), Some(Scheme::Rnd)))?;
        let EncryptedValue::Rnd(current) = Self::slot_value(table, row_id, anon_column, Some(Scheme::Rnd))?
        else {
            return Err(EngineError::LayoutMismatch("rnd slot".into()));
        };
        let task = BridgeTask {
            task_id: self.fresh_task_id(),
            op: BridgeOp::Add,
            result_tag: ResultTag::Rnd,
            column_label: anon_column.as_bytes().to_vec(),
            operands: vec![current, delta.clone()],
        };
        let BridgeResult::Rnd(new_rnd) = self.bridge_direct(OpKind::Add, task)? else {
            return Err(EngineError::BadQuery("bridge add returned wrong tag"));
        };
        self.table_mut(anon_table)?
            .update_row(row_id, &[(slot, EncryptedValue::Rnd(new_rnd.clone()))])?;
        Ok(new_rnd)
    }

    /// Applies a client-supplied refresh of a column's slots after an
    /// additive update.
    pub fn apply_refresh(
        &mut self,
        anon_table: &str,
        row_id: u64,
        assignment: &RewrittenAssignment,
    ) -> Result<(), EngineError> {
        match assignment {
            RewrittenAssignment::Replace { anon_column, values } => {
                self.apply_replace(anon_table, row_id, anon_column, values)
            }
            _ => Err(EngineError::BadQuery("refresh must be a replacement")),
        }
    }
}
