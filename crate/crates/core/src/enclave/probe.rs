//! Micro-benchmark probe: a fixed task run inside the enclave whose
//! duration reveals the current paging regime.

use super::state::EnclaveState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    BinarySearch,
    QuickSort,
    /// Quick sort followed by binary searches; the default task.
    Mixed,
}

#[derive(Debug, Clone, Copy)]
pub struct ProbeSample {
    pub at_micros: u64,
    pub duration_micros: u64,
    pub kind: ProbeKind,
    pub data_size: usize,
}

/// Base cost of the probe task on an unloaded enclave, in virtual
/// microseconds. The access pattern is modeled as random, so the whole
/// working set counts against the page budget.
fn base_cost(kind: ProbeKind, n: usize) -> u64 {
    let n_f = n.max(2) as f64;
    let log_n = n_f.log2();
    let micros = match kind {
        // n searches at log n steps apiece.
        ProbeKind::BinarySearch => n_f * log_n * 0.004,
        ProbeKind::QuickSort => n_f * log_n * 0.006,
        ProbeKind::Mixed => n_f * log_n * 0.010,
    };
    micros.round().max(1.0) as u64
}

/// Runs the probe task with its working set resident, returning the sample.
/// The duration reflects the enclave's current paging state.
pub fn run_probe(kind: ProbeKind, data_size: usize, state: &mut EnclaveState) -> ProbeSample {
    let start = state.now();
    state.charge_entry();
    let working_set = (data_size as u64) * 8;
    let alloc = state.alloc(working_set);
    state.charge(base_cost(kind, data_size));
    state.free(alloc);
    ProbeSample {
        at_micros: start,
        duration_micros: state.now() - start,
        kind,
        data_size,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enclave::EnclaveConfig;

    fn provisionless_state() -> EnclaveState {
        EnclaveState::new(EnclaveConfig::default(), 1)
    }

    #[test]
    fn under_budget_probe_is_baseline() {
        let mut state = provisionless_state();
        let baseline = run_probe(ProbeKind::Mixed, 8192, &mut state);
        let again = run_probe(ProbeKind::Mixed, 8192, &mut state);
        assert_eq!(baseline.duration_micros, again.duration_micros);
    }

    #[test]
    fn over_budget_probe_slows_down() {
        let mut state = provisionless_state();
        let baseline = run_probe(ProbeKind::Mixed, 8192, &mut state);
        // Pin a working set at twice the budget.
        let hog = state.alloc(2 * state.config.epc_budget_bytes);
        let loaded = run_probe(ProbeKind::Mixed, 8192, &mut state);
        state.free(hog);
        assert!(
            loaded.duration_micros as f64 >= 1.5 * baseline.duration_micros as f64,
            "loaded {} vs baseline {}",
            loaded.duration_micros,
            baseline.duration_micros
        );
    }

    #[test]
    fn cost_monotone_in_resident_bytes() {
        let mut state = provisionless_state();
        let mut last = 0;
        for mult in 1..=6u64 {
            let hog = state.alloc(mult * state.config.epc_budget_bytes / 2);
            let s = run_probe(ProbeKind::Mixed, 8192, &mut state);
            state.free(hog);
            assert!(s.duration_micros >= last);
            last = s.duration_micros;
        }
    }
}
