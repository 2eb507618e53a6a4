//! Report rendering: a versioned CSV schema plus a plain-text summary
//! table.

use super::run::RunReport;
use super::spec::Mode;

/// Bump when a column is added, removed, or re-ordered.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Summary CSV, one row per mode run.
///
/// Columns: `schema_version, mode, qps, tps, p50_micros, p95_micros,
/// mean_micros, storage_bytes, expansion_ratio, cache_hit_rate,
/// tee_share_compare, reads, writes, elapsed_micros, result_digest`.
/// `expansion_ratio` is empty when no plaintext baseline is present.
pub fn summary_csv(reports: &[RunReport]) -> String {
    let ratios = expansion_ratios(reports);
    let mut out = String::from(
        "schema_version,mode,qps,tps,p50_micros,p95_micros,mean_micros,\
         storage_bytes,expansion_ratio,cache_hit_rate,tee_share_compare,\
         reads,writes,elapsed_micros,result_digest\n",
    );
    for r in reports {
        let ratio = ratios
            .as_ref()
            .and_then(|rs| rs.iter().find(|(m, _)| *m == r.mode))
            .map(|(_, x)| format!("{x:.3}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{:.3},{:.3},{},{},{:.3},{},{},{:.4},{:.4},{},{},{},{}\n",
            REPORT_SCHEMA_VERSION,
            r.mode.name(),
            r.qps,
            r.tps,
            r.latency_p50_micros,
            r.latency_p95_micros,
            r.latency_mean_micros,
            r.storage_bytes,
            ratio,
            r.cache_hit_rate,
            r.tee_share_compare,
            r.reads,
            r.writes,
            r.elapsed_micros,
            r.result_digest,
        ));
    }
    out
}

/// Encrypted-bytes / plaintext-bytes per mode; `None` without a plaintext
/// run to anchor the denominator.
pub fn expansion_ratios(reports: &[RunReport]) -> Option<Vec<(Mode, f64)>> {
    let plain = reports
        .iter()
        .find(|r| r.mode == Mode::Plaintext)
        .map(|r| r.storage_bytes)?;
    if plain == 0 {
        return None;
    }
    Some(
        reports
            .iter()
            .map(|r| (r.mode, r.storage_bytes as f64 / plain as f64))
            .collect(),
    )
}

/// Probe trace CSV for one run: `at_micros,duration_micros`.
pub fn probe_csv(report: &RunReport) -> String {
    let mut out = String::from("at_micros,duration_micros\n");
    for (at, d) in &report.probe_trace {
        out.push_str(&format!("{at},{d}\n"));
    }
    out
}

/// Human-readable summary table.
pub fn render_summary(reports: &[RunReport]) -> String {
    let ratios = expansion_ratios(reports);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>10} {:>10} {:>9} {:>9} {:>12} {:>8} {:>9} {:>9}\n",
        "mode", "qps", "tps", "p50us", "p95us", "storage", "expand", "cache%", "tee-cmp%"
    ));
    for r in reports {
        let ratio = ratios
            .as_ref()
            .and_then(|rs| rs.iter().find(|(m, _)| *m == r.mode))
            .map(|(_, x)| format!("{x:.2}x"))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<16} {:>10.1} {:>10.1} {:>9} {:>9} {:>12} {:>8} {:>8.1}% {:>8.1}%\n",
            r.mode.name(),
            r.qps,
            r.tps,
            r.latency_p50_micros,
            r.latency_p95_micros,
            r.storage_bytes,
            ratio,
            100.0 * r.cache_hit_rate,
            100.0 * r.tee_share_compare,
        ));
    }
    out
}
