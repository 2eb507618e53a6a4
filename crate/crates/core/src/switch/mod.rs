//! Self-adaptive path switching between software ciphertext operators and
//! enclave offload.
//!
//! Each operator call is priced on both paths:
//!
//! - software: `C_soft = C_calc + C_decide`
//! - enclave:  `C_tee  = C_fixed + C_calc + C_runtime + C_decide`
//!
//! where `C_decide` grows with the number of in-flight calls of the same
//! kind on the same path and `C_runtime` is inferred from the probe
//! history: once the windowed median probe duration exceeds the recorded
//! baseline, the residual — scaled to the operator's own enclave time — is
//! charged against the enclave path. The cheaper path wins; ties go to
//! software.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::crypto::Scheme;
use crate::enclave::ProbeSample;

/// Operator kinds subject to path dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    CmpGt,
    CmpGe,
    CmpLt,
    CmpLe,
    CmpEq,
    Add,
    Sub,
    Mul,
    Div,
}

impl OpKind {
    pub const ALL: [OpKind; 9] = [
        OpKind::CmpGt,
        OpKind::CmpGe,
        OpKind::CmpLt,
        OpKind::CmpLe,
        OpKind::CmpEq,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
    ];

    pub fn is_compare(self) -> bool {
        matches!(
            self,
            OpKind::CmpGt | OpKind::CmpGe | OpKind::CmpLt | OpKind::CmpLe | OpKind::CmpEq
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::CmpGt => "cmp_gt",
            OpKind::CmpGe => "cmp_ge",
            OpKind::CmpLt => "cmp_lt",
            OpKind::CmpLe => "cmp_le",
            OpKind::CmpEq => "cmp_eq",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Path {
    Software,
    Tee,
}

impl Path {
    pub fn name(self) -> &'static str {
        match self {
            Path::Software => "software",
            Path::Tee => "tee",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Normal,
    Replacement,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Normal => "normal",
            Regime::Replacement => "replacement",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SwitchError {
    #[error("completion without a matching dispatch for {kind:?} on {path:?}")]
    UnmatchedCompletion { kind: OpKind, path: Path },
}

/// Static cost-model inputs, in virtual microseconds.
#[derive(Debug, Clone)]
pub struct CostModelParams {
    /// Seed `C_calc` per kind on the software path.
    pub software_calc: HashMap<OpKind, f64>,
    /// Seed `C_calc` per kind on the enclave path; the result scheme keys a
    /// refinement since re-encryption dominates arithmetic results.
    pub tee_calc: HashMap<(OpKind, Option<Scheme>), f64>,
    /// Enclave startup/entry cost `C_fixed`.
    pub c_fixed: f64,
    /// Linear `C_decide` coefficient per in-flight same-kind same-path call.
    pub decide_unit_cost: f64,
    /// Probe duration recorded at startup on an unloaded enclave.
    pub probe_baseline_micros: f64,
    /// Replacement threshold factor τ; the regime flips when the windowed
    /// median exceeds τ × baseline.
    pub tau: f64,
    /// Sliding probe window length.
    pub window_len: usize,
}

impl CostModelParams {
    /// Seeds matching the simulator's default enclave cost constants: an
    /// unloaded enclave comparison (entry + decrypt + compute + copy-out)
    /// undercuts the software operator, so comparisons offload until paging
    /// sets in.
    pub fn defaults(probe_baseline_micros: f64) -> CostModelParams {
        let mut software_calc = HashMap::new();
        let mut tee_calc = HashMap::new();
        for kind in OpKind::ALL {
            software_calc.insert(kind, if kind.is_compare() { 30.0 } else { 20.0 });
            tee_calc.insert((kind, None), 6.0);
        }
        // Arithmetic results re-encrypt inside the enclave.
        for kind in [OpKind::Add, OpKind::Sub, OpKind::Mul, OpKind::Div] {
            for scheme in [Scheme::Ahe, Scheme::Mhe, Scheme::Ore, Scheme::Rnd] {
                tee_calc.insert((kind, Some(scheme)), 8.0);
            }
        }
        CostModelParams {
            software_calc,
            tee_calc,
            c_fixed: 15.0,
            decide_unit_cost: 0.5,
            probe_baseline_micros,
            tau: 1.5,
            window_len: 16,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.tau <= 1.0 {
            return Err("tau must exceed 1".into());
        }
        let non_negative = self.c_fixed >= 0.0
            && self.decide_unit_cost >= 0.0
            && self.probe_baseline_micros >= 0.0
            && self.software_calc.values().all(|c| *c >= 0.0)
            && self.tee_calc.values().all(|c| *c >= 0.0);
        if !non_negative {
            return Err("cost parameters must be non-negative".into());
        }
        Ok(())
    }

    fn tee_calc_for(&self, kind: OpKind, result: Option<Scheme>) -> Option<f64> {
        self.tee_calc
            .get(&(kind, result))
            .or_else(|| self.tee_calc.get(&(kind, None)))
            .copied()
    }
}

/// Bounded, time-ordered probe history.
#[derive(Debug, Default)]
pub struct ProbeWindow {
    samples: VecDeque<ProbeSample>,
    capacity: usize,
}

impl ProbeWindow {
    pub fn new(capacity: usize) -> ProbeWindow {
        ProbeWindow {
            samples: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, sample: ProbeSample) {
        debug_assert!(
            self.samples
                .back()
                .map_or(true, |last| last.at_micros <= sample.at_micros),
            "probe samples must arrive in time order"
        );
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
    }

    pub fn samples(&self) -> impl Iterator<Item = &ProbeSample> {
        self.samples.iter()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn median_duration(&self) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        let mut durations: Vec<u64> = self.samples.iter().map(|s| s.duration_micros).collect();
        durations.sort_unstable();
        let mid = durations.len() / 2;
        Some(if durations.len() % 2 == 1 {
            durations[mid] as f64
        } else {
            (durations[mid - 1] + durations[mid]) as f64 / 2.0
        })
    }
}

/// Classifies the paging regime from the probe window. An empty window is
/// the cold-start case and reads as Normal.
pub fn classify_regime(window: &ProbeWindow, params: &CostModelParams) -> Regime {
    match window.median_duration() {
        Some(median) if median > params.tau * params.probe_baseline_micros => Regime::Replacement,
        _ => Regime::Normal,
    }
}

/// Estimates `C_runtime` for an operator whose in-enclave time relates to
/// the probe's by `ratio`: the median's excess over baseline, scaled down
/// to the operator.
pub fn estimate_c_runtime(window: &ProbeWindow, params: &CostModelParams, ratio: f64) -> f64 {
    let median = match window.median_duration() {
        Some(m) => m,
        None => return 0.0,
    };
    (median - params.probe_baseline_micros).max(0.0) * ratio
}

#[derive(Debug, Clone)]
pub struct DecisionRecord {
    pub at_micros: u64,
    pub kind: OpKind,
    pub c_soft: f64,
    pub c_tee: f64,
    pub path: Path,
    pub regime: Regime,
}

/// Live dispatch state: in-flight counters, observed-cost smoothing, the
/// current runtime estimate, and the decision log.
pub struct PathState {
    in_flight: HashMap<(OpKind, Path), u64>,
    /// Exponentially smoothed observed `C_calc` per (kind, path).
    observed_calc: HashMap<(OpKind, Path), f64>,
    pub regime: Regime,
    /// Current residual (median − baseline), before per-op scaling.
    probe_residual_micros: f64,
    pub ema_alpha: f64,
    decisions: Vec<DecisionRecord>,
    dispatched: u64,
    completed: u64,
}

impl PathState {
    pub fn new() -> PathState {
        PathState {
            in_flight: HashMap::new(),
            observed_calc: HashMap::new(),
            regime: Regime::Normal,
            probe_residual_micros: 0.0,
            ema_alpha: 0.2,
            decisions: Vec::new(),
            dispatched: 0,
            completed: 0,
        }
    }

    /// Folds the latest probe window into the regime flag and the runtime
    /// residual.
    pub fn absorb_probes(&mut self, window: &ProbeWindow, params: &CostModelParams) {
        self.regime = classify_regime(window, params);
        self.probe_residual_micros = estimate_c_runtime(window, params, 1.0);
    }

    pub fn in_flight(&self, kind: OpKind, path: Path) -> u64 {
        self.in_flight.get(&(kind, path)).copied().unwrap_or(0)
    }

    fn calc_for(&self, kind: OpKind, path: Path, seed: f64) -> f64 {
        self.observed_calc.get(&(kind, path)).copied().unwrap_or(seed)
    }

    /// Prices both paths for one call and returns the cheaper, recording
    /// the decision and raising the in-flight counter. Kinds registered on
    /// only one path are forced there.
    pub fn dispatch(
        &mut self,
        at_micros: u64,
        kind: OpKind,
        result: Option<Scheme>,
        params: &CostModelParams,
    ) -> Path {
        let soft_seed = params.software_calc.get(&kind).copied();
        let tee_seed = params.tee_calc_for(kind, result);
        let (c_soft, c_tee, path) = match (soft_seed, tee_seed) {
            (Some(s), Some(t)) => {
                let c_soft = self.calc_for(kind, Path::Software, s)
                    + params.decide_unit_cost * self.in_flight(kind, Path::Software) as f64;
                let in_enclave = params.c_fixed + self.calc_for(kind, Path::Tee, t);
                let ratio = if params.probe_baseline_micros > 0.0 {
                    in_enclave / params.probe_baseline_micros
                } else {
                    0.0
                };
                let c_runtime = self.probe_residual_micros * ratio;
                let c_tee = in_enclave
                    + c_runtime
                    + params.decide_unit_cost * self.in_flight(kind, Path::Tee) as f64;
                // Ties break toward software: the failure mode is cheaper.
                let path = if c_tee < c_soft { Path::Tee } else { Path::Software };
                (c_soft, c_tee, path)
            }
            (Some(s), None) => (s, f64::INFINITY, Path::Software),
            (None, Some(t)) => (f64::INFINITY, params.c_fixed + t, Path::Tee),
            (None, None) => (0.0, f64::INFINITY, Path::Software),
        };
        *self.in_flight.entry((kind, path)).or_insert(0) += 1;
        self.dispatched += 1;
        self.decisions.push(DecisionRecord {
            at_micros,
            kind,
            c_soft,
            c_tee,
            path,
            regime: self.regime,
        });
        path
    }

    /// Completion feedback: releases the in-flight slot and folds the
    /// observed duration into the smoothed `C_calc`.
    pub fn feedback(
        &mut self,
        kind: OpKind,
        path: Path,
        duration_micros: u64,
    ) -> Result<(), SwitchError> {
        let slot = self
            .in_flight
            .get_mut(&(kind, path))
            .filter(|n| **n > 0)
            .ok_or(SwitchError::UnmatchedCompletion { kind, path })?;
        *slot -= 1;
        self.completed += 1;
        let observed = duration_micros as f64;
        self.observed_calc
            .entry((kind, path))
            .and_modify(|c| *c = (1.0 - self.ema_alpha) * *c + self.ema_alpha * observed)
            .or_insert(observed);
        Ok(())
    }

    /// True once every dispatch has been matched by a completion.
    pub fn quiescent(&self) -> bool {
        self.dispatched == self.completed
    }

    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    pub fn take_decisions(&mut self) -> Vec<DecisionRecord> {
        std::mem::take(&mut self.decisions)
    }

    /// Decision log as CSV with a header row.
    pub fn decisions_csv(&self) -> String {
        let mut out = String::from("at_micros,kind,c_soft,c_tee,path,regime\n");
        for d in &self.decisions {
            out.push_str(&format!(
                "{},{},{:.3},{:.3},{},{}\n",
                d.at_micros,
                d.kind.name(),
                d.c_soft,
                d.c_tee,
                d.path.name(),
                d.regime.name()
            ));
        }
        out
    }
}

impl Default for PathState {
    fn default() -> Self {
        PathState::new()
    }
}
