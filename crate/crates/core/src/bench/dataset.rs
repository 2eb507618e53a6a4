//! Dataset generation: a nine-table retail schema with the conventional
//! column counts (9, 11, 21, 8, 9, 3, 10, 17, 5 — 93 columns in all) plus
//! a single-table synthetic schema, populated deterministically from the
//! workload seed.

use std::collections::BTreeMap;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::crypto::MasterKey;
use crate::enclave::{attest_and_provision, AttestClient, EnclaveConfig};
use crate::engine::Engine;
use crate::schema::{table_layout, ClientSession, ColumnDef, DataKind, Statement, Value};

use super::spec::{Mode, WorkloadKind, WorkloadSpec};
use super::BenchError;

/// One logical table: name, rows at scale 1, and column definitions.
pub struct TableSchema {
    pub name: &'static str,
    pub base_rows: u64,
    pub columns: Vec<ColumnDef>,
}

fn col(name: &str, kind: DataKind) -> ColumnDef {
    ColumnDef::new(name, kind, true)
}

const DEC2: DataKind = DataKind::Decimal { scale: 2 };

/// The retail schema. Every column is sensitive; the mode decides which
/// ciphertext copies exist.
pub fn tpcc_schema() -> Vec<TableSchema> {
    use DataKind::{Int, Text};
    vec![
        TableSchema {
            name: "warehouse",
            base_rows: 100,
            columns: vec![
                col("w_id", Int),
                col("w_name", Text),
                col("w_street_1", Text),
                col("w_street_2", Text),
                col("w_city", Text),
                col("w_state", Text),
                col("w_zip", Text),
                col("w_tax", DEC2),
                col("w_ytd", DEC2),
            ],
        },
        TableSchema {
            name: "district",
            base_rows: 1_000,
            columns: vec![
                col("d_id", Int),
                col("d_w_id", Int),
                col("d_name", Text),
                col("d_street_1", Text),
                col("d_street_2", Text),
                col("d_city", Text),
                col("d_state", Text),
                col("d_zip", Text),
                col("d_tax", DEC2),
                col("d_ytd", DEC2),
                col("d_next_o_id", Int),
            ],
        },
        TableSchema {
            name: "customer",
            base_rows: 30_000,
            columns: vec![
                col("c_id", Int),
                col("c_d_id", Int),
                col("c_w_id", Int),
                col("c_first", Text),
                col("c_middle", Text),
                col("c_last", Text),
                col("c_street_1", Text),
                col("c_street_2", Text),
                col("c_city", Text),
                col("c_state", Text),
                col("c_zip", Text),
                col("c_phone", Text),
                col("c_since", Int),
                col("c_credit", Text),
                col("c_credit_lim", DEC2),
                col("c_discount", DEC2),
                col("c_balance", DEC2),
                col("c_ytd_payment", DEC2),
                col("c_payment_cnt", Int),
                col("c_delivery_cnt", Int),
                col("c_data", Text),
            ],
        },
        TableSchema {
            name: "history",
            base_rows: 30_000,
            columns: vec![
                col("h_c_id", Int),
                col("h_c_d_id", Int),
                col("h_c_w_id", Int),
                col("h_d_id", Int),
                col("h_w_id", Int),
                col("h_date", Int),
                col("h_amount", DEC2),
                col("h_data", Text),
            ],
        },
        TableSchema {
            name: "orders",
            base_rows: 30_000,
            columns: vec![
                col("o_id", Int),
                col("o_d_id", Int),
                col("o_w_id", Int),
                col("o_c_id", Int),
                col("o_entry_d", Int),
                col("o_carrier_id", Int),
                col("o_ol_cnt", Int),
                col("o_all_local", Int),
                col("o_comment", Text),
            ],
        },
        TableSchema {
            name: "new_order",
            base_rows: 9_000,
            columns: vec![col("no_o_id", Int), col("no_d_id", Int), col("no_w_id", Int)],
        },
        TableSchema {
            name: "order_line",
            base_rows: 300_000,
            columns: vec![
                col("ol_o_id", Int),
                col("ol_d_id", Int),
                col("ol_w_id", Int),
                col("ol_number", Int),
                col("ol_i_id", Int),
                col("ol_supply_w_id", Int),
                col("ol_delivery_d", Int),
                col("ol_quantity", Int),
                col("ol_amount", DEC2),
                col("ol_dist_info", Text),
            ],
        },
        TableSchema {
            name: "stock",
            base_rows: 100_000,
            columns: vec![
                col("s_i_id", Int),
                col("s_w_id", Int),
                col("s_quantity", Int),
                col("s_dist_01", Text),
                col("s_dist_02", Text),
                col("s_dist_03", Text),
                col("s_dist_04", Text),
                col("s_dist_05", Text),
                col("s_dist_06", Text),
                col("s_dist_07", Text),
                col("s_dist_08", Text),
                col("s_dist_09", Text),
                col("s_dist_10", Text),
                col("s_ytd", Int),
                col("s_order_cnt", Int),
                col("s_remote_cnt", Int),
                col("s_data", Text),
            ],
        },
        TableSchema {
            name: "item",
            base_rows: 100_000,
            columns: vec![
                col("i_id", Int),
                col("i_im_id", Int),
                col("i_name", Text),
                col("i_price", DEC2),
                col("i_data", Text),
            ],
        },
    ]
}

pub fn synthetic_schema() -> Vec<TableSchema> {
    use DataKind::Int;
    vec![TableSchema {
        name: "synth",
        base_rows: 10_000,
        columns: vec![col("id", Int), col("val", Int), col("grp", Int)],
    }]
}

pub fn schema_for(kind: WorkloadKind) -> Vec<TableSchema> {
    match kind {
        WorkloadKind::TpccLike => tpcc_schema(),
        WorkloadKind::Synthetic => synthetic_schema(),
    }
}

pub fn rows_at_scale(base_rows: u64, scale: f64) -> u64 {
    ((base_rows as f64 * scale).round() as u64).max(1)
}

/// Deterministic value for one column; ranges keep sensitive values
/// non-negative and give bounded-range columns predictable selectivity.
pub fn gen_value(rng: &mut StdRng, name: &str, kind: &DataKind) -> Value {
    match kind {
        DataKind::Int => {
            let v = if name.contains("quantity") {
                rng.gen_range(1..=100)
            } else if name == "val" {
                rng.gen_range(0..1_000)
            } else {
                rng.gen_range(0..10_000)
            };
            Value::Int(v)
        }
        DataKind::Decimal { .. } => {
            // Multiples of 0.01 survive scaled-integer round trips exactly.
            Value::Decimal(rng.gen_range(0..1_000_000) as f64 / 100.0)
        }
        DataKind::Text => Value::Text(format!("txt{:06}", rng.gen_range(0..1_000_000u32))),
    }
}

pub fn gen_row(rng: &mut StdRng, table: &TableSchema) -> Vec<Value> {
    table
        .columns
        .iter()
        .map(|c| gen_value(rng, &c.name, &c.data_kind))
        .collect()
}

/// All plaintext rows for one dataset; identical across modes by
/// construction (same seed, no mode input).
pub fn generate_plain_rows(spec: &WorkloadSpec) -> BTreeMap<String, Vec<Vec<Value>>> {
    let mut rng = StdRng::seed_from_u64(spec.seed ^ 0xda7a_5e7);
    let mut out = BTreeMap::new();
    for table in schema_for(spec.kind) {
        let n = rows_at_scale(table.base_rows, spec.scale);
        let rows = (0..n).map(|_| gen_row(&mut rng, &table)).collect();
        out.insert(table.name.to_string(), rows);
    }
    out
}

/// One mode's populated store: the client session holding keys and the
/// engine holding only ciphertext (or plaintext, for the reference mode).
pub struct GeneratedDb {
    pub mode: Mode,
    pub session: ClientSession,
    pub engine: Engine,
    pub table_names: Vec<String>,
}

/// Builds, encrypts, and loads the dataset for one mode under `dir`, and
/// provisions the enclave when the mode uses it.
pub fn generate_dataset(
    dir: &Path,
    mode: Mode,
    spec: &WorkloadSpec,
    config: EnclaveConfig,
) -> Result<GeneratedDb, BenchError> {
    spec.validate().map_err(BenchError::BadSpec)?;
    let mut rng = StdRng::seed_from_u64(spec.seed ^ 0x9a57_e4);
    let master = MasterKey::generate(&mut rng);
    let mut session = ClientSession::new(master, spec.seed);
    let mut engine = Engine::new(dir, config, spec.seed);

    let mut table_names = Vec::new();
    for table in schema_for(spec.kind) {
        let defs: Vec<ColumnDef> = match mode.provision() {
            Some(_) => table.columns.clone(),
            // Plaintext reference: nothing is sensitive.
            None => table
                .columns
                .iter()
                .map(|c| ColumnDef::new(&c.name, c.data_kind.clone(), false))
                .collect(),
        };
        let provision = mode.provision().unwrap_or(crate::schema::ProvisionMode::Software);
        let anon = session.register_table(table.name, provision, &defs)?;
        let spec_t = session.catalog.table(table.name)?.clone();
        engine.create_table(&anon, table_layout(&spec_t))?;
        table_names.push(table.name.to_string());
        let _ = anon;
    }

    if mode.uses_enclave() {
        let listing = session.enclave_column_listing();
        let mut client = AttestClient::new(session.master_key().clone(), listing);
        attest_and_provision(&mut client, &mut engine.enclave, |_, f| f)?;
    }

    for (name, rows) in generate_plain_rows(spec) {
        for values in rows {
            let stmt = Statement::Insert {
                table: name.clone(),
                values,
            };
            let crate::schema::RewrittenStatement::Insert { anon_table, row } =
                session.rewrite(&stmt, mode.query_mode())?
            else {
                unreachable!("insert rewrites to insert");
            };
            engine.insert(&anon_table, row)?;
        }
    }

    Ok(GeneratedDb {
        mode,
        session,
        engine,
        table_names,
    })
}

/// On-disk bytes across all tables of one store.
pub fn storage_bytes(db: &GeneratedDb) -> Result<u64, BenchError> {
    let mut total = 0;
    for name in &db.table_names {
        let anon = db.session.catalog.table(name)?.anon_name.clone();
        total += db.engine.table(&anon)?.storage_bytes();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retail_schema_has_conventional_column_counts() {
        let counts: Vec<usize> = tpcc_schema().iter().map(|t| t.columns.len()).collect();
        assert_eq!(counts, vec![9, 11, 21, 8, 9, 3, 10, 17, 5]);
        assert_eq!(counts.iter().sum::<usize>(), 93);
        // Every column is sensitive, so software mode ORE-covers all 93.
        assert!(tpcc_schema().iter().all(|t| t.columns.iter().all(|c| c.sensitive)));
    }

    #[test]
    fn order_line_scales_to_three_hundred_thousand_rows() {
        let order_line = tpcc_schema().into_iter().find(|t| t.name == "order_line").unwrap();
        assert_eq!(rows_at_scale(order_line.base_rows, 1.0), 300_000);
        assert_eq!(rows_at_scale(order_line.base_rows, 0.01), 3_000);
    }

    #[test]
    fn same_seed_generates_identical_plaintext() {
        let spec = WorkloadSpec {
            kind: WorkloadKind::TpccLike,
            scale: 0.001,
            read_write_ratio: 1.0,
            concurrency: 1,
            ops: 1,
            seed: 42,
        };
        let a = generate_plain_rows(&spec);
        let b = generate_plain_rows(&spec);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
