//! Harness contracts: cross-mode transparency at small scale, seeded
//! determinism, storage expansion ordering, and report shape.

use tempfile::TempDir;

use cipherdb_core::bench::{
    expansion_ratios, generate_dataset, op_stream, run_suite, run_workload, summary_csv, Mode,
    WorkloadKind, WorkloadSpec,
};
use cipherdb_core::enclave::EnclaveConfig;

fn tiny_spec(seed: u64) -> WorkloadSpec {
    WorkloadSpec {
        kind: WorkloadKind::TpccLike,
        scale: 0.001,
        read_write_ratio: 0.8,
        concurrency: 2,
        ops: 24,
        seed,
    }
}

#[test]
fn op_stream_is_deterministic_and_mode_free() {
    let a = op_stream(&tiny_spec(5));
    let b = op_stream(&tiny_spec(5));
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    let c = op_stream(&tiny_spec(6));
    assert_ne!(format!("{a:?}"), format!("{c:?}"));
}

#[test]
fn all_modes_agree_with_plaintext_reference() {
    let root = TempDir::new().unwrap();
    let spec = tiny_spec(11);
    let outcomes = run_suite(root.path(), &spec, &EnclaveConfig::default(), &Mode::ALL)
        .expect("suite runs");
    assert_eq!(outcomes.len(), 5);
    let reference = &outcomes[0];
    assert_eq!(reference.report.mode, Mode::Plaintext);
    for o in &outcomes[1..] {
        assert_eq!(
            o.report.result_digest, reference.report.result_digest,
            "mode {} diverged",
            o.report.mode.name()
        );
    }
    // Every mode answered the whole stream.
    for o in &outcomes {
        assert_eq!(o.report.reads + o.report.writes, spec.ops as u64);
    }
}

#[test]
fn storage_expansion_orders_software_above_tee_above_plain() {
    let root = TempDir::new().unwrap();
    let spec = WorkloadSpec {
        ops: 1,
        read_write_ratio: 1.0,
        ..tiny_spec(13)
    };
    let outcomes = run_suite(
        root.path(),
        &spec,
        &EnclaveConfig::default(),
        &[Mode::Plaintext, Mode::Software, Mode::StaticTee],
    )
    .unwrap();
    let reports: Vec<_> = outcomes.iter().map(|o| o.report.clone()).collect();
    let ratios = expansion_ratios(&reports).expect("plaintext baseline present");
    let get = |m: Mode| ratios.iter().find(|(x, _)| *x == m).unwrap().1;
    assert!(get(Mode::Plaintext) == 1.0);
    assert!(get(Mode::StaticTee) > 1.0);
    assert!(get(Mode::Software) > get(Mode::StaticTee));
}

#[test]
fn same_seed_reproduces_reports_bit_for_bit() {
    let spec = tiny_spec(17);
    let mut digests = Vec::new();
    for _ in 0..2 {
        let dir = TempDir::new().unwrap();
        let mut db =
            generate_dataset(dir.path(), Mode::Software, &spec, EnclaveConfig::default()).unwrap();
        let o = run_workload(&mut db, &spec).unwrap();
        digests.push((
            o.report.result_digest.clone(),
            o.report.elapsed_micros,
            o.report.qps.to_bits(),
            o.report.storage_bytes,
        ));
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn summary_csv_has_versioned_header_and_one_row_per_mode() {
    let root = TempDir::new().unwrap();
    let spec = WorkloadSpec {
        ops: 4,
        ..tiny_spec(19)
    };
    let outcomes = run_suite(
        root.path(),
        &spec,
        &EnclaveConfig::default(),
        &[Mode::Plaintext, Mode::Adaptive],
    )
    .unwrap();
    let reports: Vec<_> = outcomes.iter().map(|o| o.report.clone()).collect();
    let csv = summary_csv(&reports);
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("schema_version,mode,qps,tps"));
    assert_eq!(lines.len(), 1 + reports.len());
    assert!(lines[1].starts_with("1,plaintext,"));
    assert!(lines[2].starts_with("1,adaptive,"));
}
