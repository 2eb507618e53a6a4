//! `cipherdb` — benchmark harness for the hybrid encrypted query engine.
//!
//! Subcommands: `gen` materializes encrypted datasets, `run` executes the
//! workload across modes with a plaintext correctness gate, `report`
//! re-renders a previous run, and `attest-demo` walks the attestation
//! protocol honestly and under tampering.
//!
//! All timings are virtual-clock microseconds from the enclave simulator,
//! so runs are reproducible for a given seed and configuration. The exit
//! code is 0 only when every correctness gate passes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use cipherdb_core::bench::{
    generate_dataset, probe_csv, render_summary, run_suite, storage_bytes, summary_csv, Mode,
    RunReport, WorkloadKind, WorkloadSpec,
};
use cipherdb_core::crypto::{MasterKey, Scheme};
use cipherdb_core::enclave::{attest_and_provision, AttestClient, EnclaveConfig, EnclaveState};

#[derive(Parser)]
#[command(
    name = "cipherdb",
    about = "Benchmark harness for the hybrid encrypted query engine",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the encrypted dataset for each requested mode.
    Gen(RunArgs),
    /// Run the workload across modes; decrypted results are gated against
    /// the plaintext reference and any divergence fails the run.
    Run(RunArgs),
    /// Re-render the summary of a previous `run` from its reports.json.
    Report {
        /// Directory a previous `run` wrote into.
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
    },
    /// Demonstrate remote attestation: honest sessions provision keys,
    /// tampered sessions fail closed.
    AttestDemo {
        /// Honest and tampered sessions to run.
        #[arg(long, default_value_t = 5)]
        sessions: u64,
        #[arg(long, default_value_t = 0xa77e57)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Output directory for datasets and reports.
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// Modes to run; repeat the flag or omit it for all five.
    #[arg(long = "mode", value_parser = parse_mode)]
    modes: Vec<Mode>,
    #[command(flatten)]
    workload: WorkloadArgs,
    #[command(flatten)]
    enclave: EnclaveArgs,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| {
        format!(
            "unknown mode {s:?}; expected one of {}",
            Mode::ALL.map(|m| m.name()).join(", ")
        )
    })
}

fn parse_kind(s: &str) -> Result<WorkloadKind, String> {
    WorkloadKind::parse(s).ok_or_else(|| format!("unknown kind {s:?}; expected tpcc_like or synthetic"))
}

/// One flag per workload field.
#[derive(Args)]
struct WorkloadArgs {
    /// Workload shape: tpcc_like or synthetic.
    #[arg(long, default_value = "tpcc_like", value_parser = parse_kind)]
    kind: WorkloadKind,
    /// Row-count multiplier; 1.0 is 300,000 order_line rows.
    #[arg(long, default_value_t = 0.005)]
    scale: f64,
    /// Fraction of operations that are reads, in [0, 1].
    #[arg(long, default_value_t = 0.8)]
    read_write_ratio: f64,
    /// Worker sessions; each pins enclave scratch while open.
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// Total operations in the stream.
    #[arg(long, default_value_t = 64)]
    ops: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl WorkloadArgs {
    fn spec(&self) -> WorkloadSpec {
        WorkloadSpec {
            kind: self.kind,
            scale: self.scale,
            read_write_ratio: self.read_write_ratio,
            concurrency: self.concurrency,
            ops: self.ops,
            seed: self.seed,
        }
    }
}

/// Enclave tunables: a JSON config file (flag or `CIPHERDB_CONFIG`), then
/// one override flag per field.
#[derive(Args)]
struct EnclaveArgs {
    /// JSON file with enclave config fields; absent fields keep defaults.
    #[arg(long, env = "CIPHERDB_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long)]
    epc_budget_bytes: Option<u64>,
    #[arg(long)]
    ecall_fixed_cost_micros: Option<u64>,
    #[arg(long)]
    page_fault_penalty_factor: Option<f64>,
    #[arg(long)]
    cache_capacity_entries: Option<usize>,
    #[arg(long)]
    pool_batch_size: Option<usize>,
    #[arg(long)]
    pool_window_micros: Option<u64>,
    #[arg(long)]
    pool_capacity: Option<usize>,
    #[arg(long)]
    worker_count: Option<usize>,
    #[arg(long)]
    probe_interval_micros: Option<u64>,
    #[arg(long)]
    probe_data_elements: Option<usize>,
    #[arg(long)]
    decrypt_cost_micros: Option<u64>,
    #[arg(long)]
    encrypt_cost_micros: Option<u64>,
    #[arg(long)]
    compute_cost_micros: Option<u64>,
    #[arg(long)]
    copyout_cost_micros: Option<u64>,
    #[arg(long)]
    session_scratch_bytes: Option<u64>,
    #[arg(long)]
    cache_enabled: Option<bool>,
}

impl EnclaveArgs {
    fn resolve(&self) -> Result<EnclaveConfig, String> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("reading config {}: {e}", path.display()))?;
                serde_json::from_str(&text)
                    .map_err(|e| format!("parsing config {}: {e}", path.display()))?
            }
            None => EnclaveConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),+ $(,)?) => {
                $(if let Some(v) = self.$field { config.$field = v; })+
            };
        }
        apply!(
            epc_budget_bytes,
            ecall_fixed_cost_micros,
            page_fault_penalty_factor,
            cache_capacity_entries,
            pool_batch_size,
            pool_window_micros,
            pool_capacity,
            worker_count,
            probe_interval_micros,
            probe_data_elements,
            decrypt_cost_micros,
            encrypt_cost_micros,
            compute_cost_micros,
            copyout_cost_micros,
            session_scratch_bytes,
            cache_enabled,
        );
        config.validate()?;
        Ok(config)
    }
}

fn modes_or_all(modes: &[Mode]) -> Vec<Mode> {
    if modes.is_empty() {
        Mode::ALL.to_vec()
    } else {
        modes.to_vec()
    }
}

fn cmd_gen(args: &RunArgs) -> Result<(), String> {
    let spec = args.workload.spec();
    spec.validate()?;
    let config = args.enclave.resolve()?;
    let mut plain_bytes = None;
    for mode in modes_or_all(&args.modes) {
        let dir = args.out.join(mode.name());
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let db = generate_dataset(&dir, mode, &spec, config.clone())
            .map_err(|e| format!("{mode:?}: {e}", mode = mode.name()))?;
        let bytes = storage_bytes(&db).map_err(|e| e.to_string())?;
        if mode == Mode::Plaintext {
            plain_bytes = Some(bytes);
        }
        let ratio = plain_bytes
            .filter(|&p| p > 0)
            .map(|p| format!(" ({:.2}x plaintext)", bytes as f64 / p as f64))
            .unwrap_or_default();
        println!("{:<16} {:>12} bytes{ratio}", mode.name(), bytes);
    }
    Ok(())
}

fn write_reports(out: &Path, reports: &[RunReport]) -> Result<(), String> {
    let json = serde_json::to_string_pretty(reports).map_err(|e| e.to_string())?;
    std::fs::write(out.join("reports.json"), json).map_err(|e| e.to_string())?;
    std::fs::write(out.join("summary.csv"), summary_csv(reports)).map_err(|e| e.to_string())?;
    for r in reports {
        if !r.probe_trace.is_empty() {
            std::fs::write(out.join(format!("probes_{}.csv", r.mode.name())), probe_csv(r))
                .map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), String> {
    let spec = args.workload.spec();
    spec.validate()?;
    let config = args.enclave.resolve()?;
    let modes = modes_or_all(&args.modes);
    std::fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;

    // The suite aborts on the first decrypted-result divergence from the
    // plaintext reference; that error propagates to a nonzero exit.
    let outcomes = run_suite(&args.out, &spec, &config, &modes).map_err(|e| e.to_string())?;
    let reports: Vec<RunReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    write_reports(&args.out, &reports)?;
    print!("{}", render_summary(&reports));
    println!(
        "correctness gate: {} mode(s) matched the plaintext reference",
        reports.len().saturating_sub(1)
    );
    Ok(())
}

fn cmd_report(out: &Path) -> Result<(), String> {
    let path = out.join("reports.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("reading {}: {e} (run `cipherdb run` first)", path.display()))?;
    let reports: Vec<RunReport> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    std::fs::write(out.join("summary.csv"), summary_csv(&reports)).map_err(|e| e.to_string())?;
    print!("{}", render_summary(&reports));
    Ok(())
}

fn cmd_attest_demo(sessions: u64, seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let master = MasterKey::generate(&mut rng);
    let listing = vec![
        (b"orders.total".to_vec(), vec![Scheme::Rnd, Scheme::Ore]),
        (b"orders.qty".to_vec(), vec![Scheme::Ahe]),
    ];

    let mut client = AttestClient::new(master.clone(), listing.clone());
    for s in 0..sessions {
        client.reset_session();
        let mut state = EnclaveState::new(EnclaveConfig::default(), seed.wrapping_add(s));
        let out = attest_and_provision(&mut client, &mut state, |_, f| f)
            .map_err(|e| format!("honest session {s} failed: {e}"))?;
        if out.client_sk != out.enclave_sk || !state.keys_provisioned() {
            return Err(format!("honest session {s} did not converge"));
        }
        println!(
            "honest session {s}: shared key established, {} column keys provisioned",
            out.provisioned_columns
        );
    }

    for s in 0..sessions {
        let mut client = AttestClient::new(master.clone(), listing.clone());
        let mut state =
            EnclaveState::new(EnclaveConfig::default(), seed.wrapping_add(1_000_000 + s));
        let frame = rng.gen_range(0..7usize);
        let pick: u64 = rng.gen();
        let bit = rng.gen_range(0..8u32);
        let result = attest_and_provision(&mut client, &mut state, |idx, mut f| {
            if idx == frame {
                let pos = (pick % f.len() as u64) as usize;
                f[pos] ^= 1 << bit;
            }
            f
        });
        match result {
            Err(e) if !state.keys_provisioned() && state.session_key().is_none() => {
                println!("tampered session {s} (frame {frame}): failed closed — {e}");
            }
            Err(_) => return Err(format!("tampered session {s} failed but left key material")),
            Ok(_) => return Err(format!("tampered session {s} was accepted")),
        }
    }
    println!("attestation demo: {sessions} honest ok, {sessions} tampered rejected");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn run_flags_cover_every_workload_field() {
        let cli = Cli::parse_from([
            "cipherdb",
            "run",
            "--kind",
            "synthetic",
            "--scale",
            "0.5",
            "--read-write-ratio",
            "0.25",
            "--concurrency",
            "8",
            "--ops",
            "99",
            "--seed",
            "7",
            "--mode",
            "plaintext",
            "--mode",
            "adaptive",
        ]);
        let Command::Run(args) = cli.command else {
            panic!("expected run");
        };
        let spec = args.workload.spec();
        assert_eq!(spec.kind, WorkloadKind::Synthetic);
        assert_eq!(spec.scale, 0.5);
        assert_eq!(spec.read_write_ratio, 0.25);
        assert_eq!(spec.concurrency, 8);
        assert_eq!(spec.ops, 99);
        assert_eq!(spec.seed, 7);
        assert_eq!(args.modes, vec![Mode::Plaintext, Mode::Adaptive]);
    }

    #[test]
    fn enclave_flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"epc_budget_bytes": 1048576, "cache_enabled": false}"#).unwrap();
        let cli = Cli::parse_from([
            "cipherdb",
            "gen",
            "--config",
            path.to_str().unwrap(),
            "--ecall-fixed-cost-micros",
            "99",
        ]);
        let Command::Gen(args) = cli.command else {
            panic!("expected gen");
        };
        let config = args.enclave.resolve().unwrap();
        // From the file:
        assert_eq!(config.epc_budget_bytes, 1_048_576);
        assert!(!config.cache_enabled);
        // From the flag:
        assert_eq!(config.ecall_fixed_cost_micros, 99);
        // Untouched default:
        assert_eq!(config.pool_batch_size, EnclaveConfig::default().pool_batch_size);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(parse_mode("warp_drive").is_err());
        assert!(parse_kind("tpcd").is_err());
        let cli = Cli::parse_from(["cipherdb", "run", "--epc-budget-bytes", "0"]);
        let Command::Run(args) = cli.command else {
            panic!("expected run");
        };
        assert!(args.enclave.resolve().is_err());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args),
        Command::Report { out } => cmd_report(out),
        Command::AttestDemo { sessions, seed } => cmd_attest_demo(*sessions, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
