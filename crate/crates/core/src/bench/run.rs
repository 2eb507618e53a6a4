//! Workload execution: a deterministic operation stream shared by every
//! mode, the per-mode run loop, and report assembly.

use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::enclave::{EnclaveConfig, ProbeSample};
use crate::schema::{
    AggFn, PredOp, RewrittenStatement, SelectQuery, Statement, UpdateSet, Value,
};
use crate::switch::DecisionRecord;

use super::dataset::{gen_row, generate_dataset, schema_for, storage_bytes, GeneratedDb};
use super::spec::{Mode, WorkloadKind, WorkloadSpec, MAX_WORKER_PARALLELISM};
use super::BenchError;

/// Per-kind enclave-path share over the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathShare {
    pub op: String,
    pub calls: u64,
    pub tee_share: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub qps: f64,
    pub tps: f64,
    pub latency_p50_micros: u64,
    pub latency_p95_micros: u64,
    pub latency_mean_micros: f64,
    pub storage_bytes: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub cache_hit_rate: f64,
    /// Share of comparison calls that took the enclave path.
    pub tee_share_compare: f64,
    pub path_share: Vec<PathShare>,
    /// (at, duration) pairs of the periodic probes, virtual microseconds.
    pub probe_trace: Vec<(u64, u64)>,
    pub reads: u64,
    pub writes: u64,
    pub elapsed_micros: u64,
    /// Hash of the canonically ordered decrypted result sets; equal
    /// digests mean multiset-equal results.
    pub result_digest: String,
}

/// A finished run: the report plus the raw material behind it.
pub struct RunOutcome {
    pub report: RunReport,
    /// Decrypted result rows per read operation, canonically sorted.
    pub results: Vec<Vec<Vec<Value>>>,
    pub decisions: Vec<DecisionRecord>,
    pub probes: Vec<ProbeSample>,
}

/// The deterministic operation stream; depends only on the workload spec, never on
/// the mode, so every mode answers the same logical workload.
pub fn op_stream(spec: &WorkloadSpec) -> Vec<Statement> {
    let mut rng = StdRng::seed_from_u64(spec.seed ^ 0x0b_5eed);
    let mut ops = Vec::with_capacity(spec.ops);
    let mut reads = 0usize;
    let mut writes = 0usize;
    let schema = schema_for(spec.kind);
    for _ in 0..spec.ops {
        let is_read = rng.gen_bool(spec.read_write_ratio);
        let stmt = match spec.kind {
            WorkloadKind::Synthetic => {
                if is_read {
                    // Equality-only point reads; the comparison operator is
                    // the unit under study.
                    let k = rng.gen_range(0..1_000);
                    reads += 1;
                    Statement::Select(
                        SelectQuery::from("synth")
                            .column("id")
                            .column("val")
                            .filter("val", PredOp::Eq, Value::Int(k)),
                    )
                } else {
                    writes += 1;
                    Statement::Update {
                        table: "synth".into(),
                        sets: vec![UpdateSet::AddAssign {
                            column: "grp".into(),
                            delta: Value::Int(1),
                        }],
                        predicates: vec![crate::schema::Predicate {
                            column: "val".into(),
                            op: PredOp::Eq,
                            literal: Value::Int(rng.gen_range(0..1_000)),
                        }],
                    }
                }
            }
            WorkloadKind::TpccLike => {
                if is_read {
                    let stmt = match reads % 4 {
                        // Equality read on a bounded-range column.
                        0 => Statement::Select(
                            SelectQuery::from("order_line")
                                .column("ol_number")
                                .column("ol_amount")
                                .filter(
                                    "ol_quantity",
                                    PredOp::Eq,
                                    Value::Int(rng.gen_range(1..=100)),
                                ),
                        ),
                        // Stock-level-style range read.
                        1 => Statement::Select(
                            SelectQuery::from("stock")
                                .column("s_i_id")
                                .filter(
                                    "s_quantity",
                                    PredOp::Lt,
                                    Value::Int(rng.gen_range(1..=100)),
                                ),
                        ),
                        // Aggregate over an integer column (exact in every
                        // mode).
                        2 => Statement::Select(
                            SelectQuery::from("order_line")
                                .aggregate(AggFn::Sum, "ol_quantity")
                                .aggregate(AggFn::Max, "ol_quantity")
                                .filter(
                                    "ol_quantity",
                                    PredOp::Ge,
                                    Value::Int(rng.gen_range(50..=100)),
                                ),
                        ),
                        // Top-k by amount; projecting only the ordered
                        // column keeps ties mode-independent.
                        _ => Statement::Select(
                            SelectQuery::from("order_line")
                                .column("ol_amount")
                                .order_by("ol_amount", false)
                                .limit(5),
                        ),
                    };
                    reads += 1;
                    stmt
                } else {
                    let stmt = if writes % 2 == 0 {
                        let order_line = schema
                            .iter()
                            .find(|t| t.name == "order_line")
                            .expect("order_line in schema");
                        Statement::Insert {
                            table: "order_line".into(),
                            values: gen_row(&mut rng, order_line),
                        }
                    } else {
                        Statement::Update {
                            table: "stock".into(),
                            sets: vec![UpdateSet::AddAssign {
                                column: "s_ytd".into(),
                                delta: Value::Int(rng.gen_range(1..=50)),
                            }],
                            predicates: vec![crate::schema::Predicate {
                                column: "s_quantity".into(),
                                op: PredOp::Eq,
                                literal: Value::Int(rng.gen_range(1..=100)),
                            }],
                        }
                    };
                    writes += 1;
                    stmt
                }
            }
        };
        ops.push(stmt);
    }
    ops
}

fn canonical_sort(rows: &mut [Vec<Value>]) {
    rows.sort_by_cached_key(|r| serde_json::to_string(r).expect("values serialize"));
}

fn digest(results: &[Vec<Vec<Value>>]) -> String {
    let mut h = Sha256::new();
    for result in results {
        h.update((result.len() as u64).to_le_bytes());
        for row in result {
            h.update(serde_json::to_string(row).expect("values serialize").as_bytes());
            h.update([0u8]);
        }
    }
    hex::encode(h.finalize())
}

fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

/// Runs the full operation stream against one mode's store.
pub fn run_workload(db: &mut GeneratedDb, spec: &WorkloadSpec) -> Result<RunOutcome, BenchError> {
    spec.validate().map_err(BenchError::BadSpec)?;
    let mode = db.mode;
    db.engine.use_pool = mode.uses_pool();

    // Each worker session pins enclave scratch for the whole run.
    let mut sessions = Vec::new();
    if mode.uses_enclave() {
        for _ in 0..spec.concurrency {
            sessions.push(db.engine.open_tee_session());
        }
    }

    let ops = op_stream(spec);
    let t0 = db.engine.now();
    let mut last_probe = t0;
    let probe_interval = db.engine.enclave.config.probe_interval_micros;
    let mut probes = Vec::new();
    let mut latencies = Vec::with_capacity(ops.len());
    let (mut reads, mut writes) = (0u64, 0u64);
    let mut results = Vec::new();

    for stmt in &ops {
        if mode.uses_enclave() && db.engine.now() - last_probe >= probe_interval {
            probes.push(db.engine.run_probe());
            last_probe = db.engine.now();
        }
        let start = db.engine.now();
        match db.session.rewrite(stmt, mode.query_mode())? {
            RewrittenStatement::Select(q) => {
                let rows = db.engine.execute_select(&q)?;
                let mut plain = db.session.decrypt_results(stmt.table(), &q, &rows)?;
                canonical_sort(&mut plain);
                results.push(plain);
                reads += 1;
            }
            RewrittenStatement::Insert { anon_table, row } => {
                db.engine.insert(&anon_table, row)?;
                writes += 1;
            }
            RewrittenStatement::Update {
                anon_table,
                mode: qm,
                sets,
                predicates,
                ..
            } => {
                let outcome = db.engine.execute_update(&anon_table, qm, &sets, &predicates)?;
                // Client round trip: re-encrypt stale sibling copies.
                let plain_table = stmt.table();
                for r in &outcome.pending_refresh {
                    let v = db
                        .session
                        .decrypt_value(plain_table, &r.anon_column, &r.new_value)?;
                    let plain_col = db
                        .session
                        .catalog
                        .table(plain_table)?
                        .column_by_anon(&r.anon_column)
                        .ok_or(BenchError::BadSpec("refresh names unknown column"))?
                        .plain_name
                        .clone();
                    let replace = db.session.reencrypt_column(plain_table, &plain_col, &v)?;
                    db.engine.apply_refresh(&anon_table, r.row_id, &replace)?;
                }
                writes += 1;
            }
        }
        latencies.push(db.engine.now() - start);
    }

    for s in sessions {
        db.engine.close_tee_session(s);
    }

    let elapsed = db.engine.now() - t0;
    let parallelism = spec.concurrency.min(MAX_WORKER_PARALLELISM) as f64;
    // The virtual clock accumulates serial work; concurrent workers divide
    // it, up to the host's parallelism.
    let wall_secs = (elapsed as f64 / parallelism / 1e6).max(1e-9);

    let mut sorted = latencies.clone();
    sorted.sort_unstable();
    let mean = if latencies.is_empty() {
        0.0
    } else {
        latencies.iter().sum::<u64>() as f64 / latencies.len() as f64
    };

    let (hits, misses) = db.engine.enclave.cache_stats();
    let mut path_share = Vec::new();
    for kind in crate::switch::OpKind::ALL {
        let calls = db
            .engine
            .metrics
            .records()
            .filter(|r| r.kind == kind)
            .count() as u64;
        if calls > 0 {
            path_share.push(PathShare {
                op: kind.name().to_string(),
                calls,
                tee_share: db.engine.metrics.tee_share(|k| k == kind),
            });
        }
    }

    let report = RunReport {
        mode,
        qps: reads as f64 / wall_secs,
        tps: writes as f64 / wall_secs,
        latency_p50_micros: percentile(&sorted, 0.50),
        latency_p95_micros: percentile(&sorted, 0.95),
        latency_mean_micros: mean,
        storage_bytes: storage_bytes(db)?,
        cache_hits: hits,
        cache_misses: misses,
        cache_hit_rate: if hits + misses == 0 {
            0.0
        } else {
            hits as f64 / (hits + misses) as f64
        },
        tee_share_compare: db.engine.metrics.tee_share(|k| k.is_compare()),
        path_share,
        probe_trace: probes.iter().map(|p| (p.at_micros, p.duration_micros)).collect(),
        reads,
        writes,
        elapsed_micros: elapsed,
        result_digest: digest(&results),
    };
    Ok(RunOutcome {
        report,
        results,
        decisions: db.engine.dispatcher.decisions().to_vec(),
        probes,
    })
}

/// Generates and runs the workload for each requested mode under
/// `root/<mode>`, gating every encrypted mode's decrypted results against
/// the plaintext reference. Returns outcomes in the order requested, with
/// the plaintext reference first if it was not requested explicitly.
pub fn run_suite(
    root: &Path,
    spec: &WorkloadSpec,
    config: &EnclaveConfig,
    modes: &[Mode],
) -> Result<Vec<RunOutcome>, BenchError> {
    let mut order: Vec<Mode> = Vec::new();
    if !modes.contains(&Mode::Plaintext) {
        order.push(Mode::Plaintext);
    }
    order.extend_from_slice(modes);
    // Plaintext runs first so its digest can gate the rest.
    order.sort_by_key(|m| *m != Mode::Plaintext);

    let mut reference: Option<Vec<Vec<Vec<Value>>>> = None;
    let mut outcomes = Vec::new();
    for mode in order {
        let dir = root.join(mode.name());
        std::fs::create_dir_all(&dir).map_err(|e| BenchError::Io(e.to_string()))?;
        let mut db = generate_dataset(&dir, mode, spec, config.clone())?;
        let outcome = run_workload(&mut db, spec)?;
        match &reference {
            None => reference = Some(outcome.results.clone()),
            Some(want) => {
                for (i, (got, want)) in outcome.results.iter().zip(want.iter()).enumerate() {
                    if got != want {
                        return Err(BenchError::ResultMismatch {
                            mode: mode.name(),
                            op_index: i,
                        });
                    }
                }
                if outcome.results.len() != want.len() {
                    return Err(BenchError::ResultMismatch {
                        mode: mode.name(),
                        op_index: want.len().min(outcome.results.len()),
                    });
                }
            }
        }
        outcomes.push(outcome);
    }
    Ok(outcomes)
}
