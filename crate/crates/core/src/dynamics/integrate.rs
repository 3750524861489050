use serde::Serialize;

use crate::dynamics::systems::{DomainViolation, EscSystem};
use crate::error::{Error, Result};

pub const DEFAULT_STEPS_PER_PERIOD: usize = 64;
pub const MIN_STEPS_PER_PERIOD: usize = 32;
pub const MIN_ADAPTIVE_STEP: f64 = 1e-14;
pub const DEFAULT_MAX_STEPS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum TruncationReason {
    EpigraphViolation { gap: f64 },
    NonPositiveShift { value: f64 },
    NonFinite,
    PhaseStepUnderflow { step: f64 },
    StepBudget { steps: usize },
}

impl TruncationReason {
    /// Domain violations and non-finite states count as aborts; step limits do not.
    pub fn is_abort(&self) -> bool {
        !matches!(self, TruncationReason::PhaseStepUnderflow { .. } | TruncationReason::StepBudget { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            TruncationReason::EpigraphViolation { .. } => "epigraph violation",
            TruncationReason::NonPositiveShift { .. } => "non-positive shifted cost",
            TruncationReason::NonFinite => "non-finite state",
            TruncationReason::PhaseStepUnderflow { .. } => "phase-step underflow",
            TruncationReason::StepBudget { .. } => "step budget exhausted",
        }
    }
}

impl From<DomainViolation> for TruncationReason {
    fn from(v: DomainViolation) -> Self {
        match v {
            DomainViolation::Epigraph { gap } => TruncationReason::EpigraphViolation { gap },
            DomainViolation::NonPositiveShift { value } => TruncationReason::NonPositiveShift { value },
            DomainViolation::NonFinite => TruncationReason::NonFinite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Truncated { at: f64, cause: TruncationReason },
}

impl Termination {
    pub fn is_completed(&self) -> bool {
        matches!(self, Termination::Completed)
    }

    pub fn truncation(&self) -> Option<TruncationReason> {
        match self {
            Termination::Completed => None,
            Termination::Truncated { cause, .. } => Some(*cause),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub t_end: f64,
    pub steps_per_period: usize,
    /// Upper bound on accepted steps; hitting it truncates the run.
    pub max_steps: usize,
}

impl IntegrationOptions {
    pub fn new(t_end: f64, steps_per_period: usize) -> Self {
        Self { t_end, steps_per_period, max_steps: DEFAULT_MAX_STEPS }
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidParameter(format!("t_end must be positive and finite, got {}", self.t_end)));
        }
        if self.steps_per_period < MIN_STEPS_PER_PERIOD {
            return Err(Error::InvalidParameter(format!(
                "steps_per_period must be at least {MIN_STEPS_PER_PERIOD}, got {}",
                self.steps_per_period
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Receives every accepted sample, including the initial one.
pub trait Observer {
    fn observe(&mut self, t: f64, state: &[f64], input: &[f64]);
}

impl<F: FnMut(f64, &[f64], &[f64])> Observer for F {
    fn observe(&mut self, t: f64, state: &[f64], input: &[f64]) {
        self(t, state, input)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Plant input logged at each sample (first RK stage of the step that starts there).
    pub inputs: Vec<Vec<f64>>,
    pub rhs_evaluations: usize,
    pub termination: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.t.last().expect("trajectory holds the initial state")
    }

    /// Index of the last sample with `t ≤ time`.
    pub fn index_at(&self, time: f64) -> usize {
        match self.t.partition_point(|&s| s <= time) {
            0 => 0,
            k => k - 1,
        }
    }

    /// Largest absolute input component at each sample.
    pub fn input_magnitudes(&self) -> Vec<f64> {
        self.inputs.iter().map(|u| u.iter().fold(0.0_f64, |a, v| a.max(v.abs()))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunStats {
    pub samples: usize,
    pub rhs_evaluations: usize,
    pub final_time: f64,
    pub termination: Termination,
}

/// Integrates and keeps every sample in memory.
pub fn integrate(system: &dyn EscSystem, state0: &[f64], opts: IntegrationOptions) -> Result<Trajectory> {
    let mut t = Vec::new();
    let mut states = Vec::new();
    let mut inputs = Vec::new();
    let stats = integrate_with(system, state0, opts, &mut |time: f64, s: &[f64], u: &[f64]| {
        t.push(time);
        states.push(s.to_vec());
        inputs.push(u.to_vec());
    })?;
    Ok(Trajectory { t, states, inputs, rhs_evaluations: stats.rhs_evaluations, termination: stats.termination })
}

/// Keeps every `stride`-th sample plus the last one, doubling `stride` (and
/// dropping every other stored sample) whenever `capacity` is reached.
#[derive(Debug, Clone)]
pub struct ThinningRecorder {
    capacity: usize,
    stride: usize,
    seen: usize,
    t: Vec<f64>,
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
    last: Option<(f64, Vec<f64>, Vec<f64>)>,
}

impl ThinningRecorder {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(2),
            stride: 1,
            seen: 0,
            t: Vec::new(),
            states: Vec::new(),
            inputs: Vec::new(),
            last: None,
        }
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    fn halve(&mut self) {
        fn keep_even<T>(v: &mut Vec<T>) {
            let mut k = 0;
            v.retain(|_| {
                k += 1;
                k % 2 == 1
            });
        }
        keep_even(&mut self.t);
        keep_even(&mut self.states);
        keep_even(&mut self.inputs);
        self.stride *= 2;
    }

    pub fn into_trajectory(mut self, stats: &RunStats) -> Trajectory {
        if let Some((t, s, u)) = self.last.take() {
            if self.t.last() != Some(&t) {
                self.t.push(t);
                self.states.push(s);
                self.inputs.push(u);
            }
        }
        Trajectory {
            t: self.t,
            states: self.states,
            inputs: self.inputs,
            rhs_evaluations: stats.rhs_evaluations,
            termination: stats.termination,
        }
    }
}

impl Observer for ThinningRecorder {
    fn observe(&mut self, t: f64, state: &[f64], input: &[f64]) {
        if self.seen % self.stride == 0 {
            if self.t.len() == self.capacity {
                self.halve();
            }
            if self.seen % self.stride == 0 {
                self.t.push(t);
                self.states.push(state.to_vec());
                self.inputs.push(input.to_vec());
            }
        }
        self.seen += 1;
        match &mut self.last {
            Some((lt, ls, lu)) => {
                *lt = t;
                ls.copy_from_slice(state);
                lu.copy_from_slice(input);
            }
            None => self.last = Some((t, state.to_vec(), input.to_vec())),
        }
    }
}

/// Integrates keeping at most about `capacity` samples.
pub fn integrate_thinned(system: &dyn EscSystem, state0: &[f64], opts: IntegrationOptions, capacity: usize) -> Result<Trajectory> {
    let mut rec = ThinningRecorder::new(capacity);
    let stats = integrate_with(system, state0, opts, &mut rec)?;
    Ok(rec.into_trajectory(&stats))
}

/// Classical RK4.
///
/// Systems without a phase rate use the fixed step
/// `t_end / ceil(t_end / (T_min / steps_per_period))`. Systems that report a
/// phase rate use `min(T_min, 2π/rate) / steps_per_period`, clipped to land on
/// `t_end`; a step below [`MIN_ADAPTIVE_STEP`] truncates the run.
pub fn integrate_with(
    system: &dyn EscSystem,
    state0: &[f64],
    opts: IntegrationOptions,
    observer: &mut dyn Observer,
) -> Result<RunStats> {
    opts.validate()?;
    let dim = system.state_dim();
    if state0.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: state0.len() });
    }
    system.check_state(state0).map_err(crate::dynamics::systems::violation_error)?;

    let base = system.fastest_period() / opts.steps_per_period as f64;
    let fixed_steps = (opts.t_end / base).ceil().max(1.0) as usize;
    let fixed_h = opts.t_end / fixed_steps as f64;
    let adaptive = system.phase_rate(state0).is_some();

    let m = system.input_dim();
    let mut ws = Workspace::new(dim, m);
    let mut state = state0.to_vec();
    let mut time = 0.0;
    let mut evaluations = 0usize;
    let mut steps = 0usize;

    let termination = loop {
        // k1 doubles as the logged input for this sample
        if let Err(v) = system.rhs(time, &state, &mut ws.k1, &mut ws.u) {
            observer.observe(time, &state, &vec![f64::NAN; m]);
            break Termination::Truncated { at: time, cause: v.into() };
        }
        evaluations += 1;
        observer.observe(time, &state, &ws.u);

        let remaining = opts.t_end - time;
        if remaining <= fixed_h * 1e-9 || (!adaptive && steps == fixed_steps) {
            break Termination::Completed;
        }
        if steps >= opts.max_steps {
            break Termination::Truncated { at: time, cause: TruncationReason::StepBudget { steps } };
        }

        let h = if adaptive {
            let rate = system.phase_rate(&state).unwrap_or(f64::INFINITY);
            let h = base.min(2.0 * std::f64::consts::PI / (opts.steps_per_period as f64 * rate));
            if !(h >= MIN_ADAPTIVE_STEP) {
                break Termination::Truncated { at: time, cause: TruncationReason::PhaseStepUnderflow { step: h } };
            }
            h.min(remaining)
        } else {
            fixed_h
        };

        match ws.rk4_tail(system, time, &state, h) {
            Ok(n) => evaluations += n,
            Err(v) => break Termination::Truncated { at: time, cause: v.into() },
        }
        if let Err(v) = system.check_state(&ws.next) {
            break Termination::Truncated { at: time, cause: v.into() };
        }
        std::mem::swap(&mut state, &mut ws.next);
        steps += 1;
        time = if !adaptive { steps as f64 * fixed_h } else if h == remaining { opts.t_end } else { time + h };
    };

    Ok(RunStats { samples: steps + 1, rhs_evaluations: evaluations, final_time: time, termination })
}

struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    next: Vec<f64>,
    u: Vec<f64>,
    scratch_u: Vec<f64>,
}

impl Workspace {
    fn new(dim: usize, m: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
            next: vec![0.0; dim],
            u: vec![0.0; m],
            scratch_u: vec![0.0; m],
        }
    }

    /// Stages 2-4 given `k1`; writes the new state into `next`.
    fn rk4_tail(&mut self, sys: &dyn EscSystem, t: f64, s: &[f64], h: f64) -> std::result::Result<usize, DomainViolation> {
        let half = 0.5 * h;
        for i in 0..s.len() {
            self.tmp[i] = s[i] + half * self.k1[i];
        }
        sys.rhs(t + half, &self.tmp, &mut self.k2, &mut self.scratch_u)?;
        for i in 0..s.len() {
            self.tmp[i] = s[i] + half * self.k2[i];
        }
        sys.rhs(t + half, &self.tmp, &mut self.k3, &mut self.scratch_u)?;
        for i in 0..s.len() {
            self.tmp[i] = s[i] + h * self.k3[i];
        }
        sys.rhs(t + h, &self.tmp, &mut self.k4, &mut self.scratch_u)?;
        for i in 0..s.len() {
            self.next[i] = s[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        if self.next.iter().all(|v| v.is_finite()) {
            Ok(3)
        } else {
            Err(DomainViolation::NonFinite)
        }
    }
}
