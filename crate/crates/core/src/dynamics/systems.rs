//! Right-hand sides of the four extremum seeking systems.
//!
//! Every controller here holds an [`Objective`] (value and gradient of `J`)
//! and nothing else about the cost: the minimizer and the minimum value are
//! not reachable from this module.

use std::sync::Arc;

use crate::cost::Objective;
use crate::dynamics::dither::{Channel, Component, DitherBank};
use crate::error::{Error, Result};
use crate::generators::GeneratingPair;

/// Why a state cannot be advanced.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainViolation {
    /// `z − J(x) ≤ 0`.
    Epigraph { gap: f64 },
    /// `J(x) − offset ≤ 0` for the shifted-cost baseline.
    NonPositiveShift { value: f64 },
    NonFinite,
}

/// An ODE `ẋ = f(t, x)` with a logged input vector.
pub trait EscSystem: Send + Sync {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    /// Writes the state derivative and the instantaneous plant input.
    fn rhs(&self, t: f64, state: &[f64], dstate: &mut [f64], input: &mut [f64]) -> std::result::Result<(), DomainViolation>;

    fn check_state(&self, state: &[f64]) -> std::result::Result<(), DomainViolation>;

    /// Step that resolves the fastest oscillation for fixed-step integration.
    fn fastest_period(&self) -> f64;

    /// Rate of phase advance for systems whose frequency is state dependent.
    fn phase_rate(&self, _state: &[f64]) -> Option<f64> {
        None
    }
}

/// Point of the strict epigraph `θ = (x, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpigraphState {
    pub x: Vec<f64>,
    pub z: f64,
}

impl EpigraphState {
    pub fn new(x: Vec<f64>, z: f64) -> Self {
        Self { x, z }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.push(self.z);
        v
    }

    pub fn from_slice(s: &[f64]) -> Self {
        let (x, z) = s.split_at(s.len() - 1);
        Self { x: x.to_vec(), z: z[0] }
    }
}

/// State of the adaptive-frequency baseline `(x, z, Ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuttnerState {
    pub x: Vec<f64>,
    pub z: f64,
    pub phase: f64,
}

impl SuttnerState {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.push(self.z);
        v.push(self.phase);
        v
    }

    pub fn from_slice(s: &[f64]) -> Self {
        let n = s.len() - 2;
        Self { x: s[..n].to_vec(), z: s[n], phase: s[n + 1] }
    }
}

fn epigraph_gap(objective: &dyn Objective, x: &[f64], z: f64) -> std::result::Result<f64, DomainViolation> {
    let y = z - objective.value(x);
    if !y.is_finite() {
        return Err(DomainViolation::NonFinite);
    }
    if y <= 0.0 {
        return Err(DomainViolation::Epigraph { gap: y });
    }
    Ok(y)
}

/// The epigraph-augmented dither system
///
/// ```text
/// ẋ_j = F1(y)·u_(j,1)(t) + F2(y)·u_(j,2)(t),   ż = −y,   y = z − J(x)
/// ```
#[derive(Clone)]
pub struct ProposedSystem {
    objective: Arc<dyn Objective>,
    pair: GeneratingPair,
    bank: DitherBank,
}

impl ProposedSystem {
    pub fn new(objective: Arc<dyn Objective>, pair: GeneratingPair, bank: DitherBank) -> Result<Self> {
        if !pair.is_c1() {
            return Err(Error::PairNotC1(pair.family_tag().to_string()));
        }
        if bank.inputs() != objective.dim() {
            return Err(Error::DimensionMismatch { expected: objective.dim(), got: bank.inputs() });
        }
        Ok(Self { objective, pair, bank })
    }

    pub fn objective(&self) -> &dyn Objective {
        self.objective.as_ref()
    }

    pub fn pair(&self) -> &GeneratingPair {
        &self.pair
    }

    pub fn bank(&self) -> &DitherBank {
        &self.bank
    }

    pub fn with_bank(&self, bank: DitherBank) -> Result<Self> {
        Self::new(Arc::clone(&self.objective), self.pair, bank)
    }

    /// `y = z − J(x)`.
    pub fn gap(&self, state: &[f64]) -> f64 {
        let n = self.objective.dim();
        state[n] - self.objective.value(&state[..n])
    }

    /// Drift `f0(θ) = −y·e_(n+1)`.
    pub fn drift(&self, state: &[f64], out: &mut [f64]) {
        let n = self.objective.dim();
        out.iter_mut().for_each(|v| *v = 0.0);
        out[n] = -self.gap(state);
    }

    /// Channel field `f_(j,s)(θ) = F_s(y)·e_j`.
    pub fn channel_field(&self, ch: Channel, state: &[f64], out: &mut [f64]) {
        let (f1, f2) = self.pair.eval(self.gap(state));
        out.iter_mut().for_each(|v| *v = 0.0);
        out[ch.input] = match ch.component {
            Component::Sine => f1,
            Component::Cosine => f2,
        };
    }

    /// Typed evaluation: state derivative and plant input at `(θ, t)`.
    pub fn derivative(&self, theta: &EpigraphState, t: f64) -> Result<(EpigraphState, Vec<f64>)> {
        let s = theta.to_vec();
        let mut ds = vec![0.0; s.len()];
        let mut u = vec![0.0; self.input_dim()];
        self.rhs(t, &s, &mut ds, &mut u).map_err(violation_error)?;
        Ok((EpigraphState::from_slice(&ds), u))
    }
}

impl std::fmt::Debug for ProposedSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProposedSystem").field("pair", &self.pair).field("bank", &self.bank).finish()
    }
}

pub(crate) fn violation_error(v: DomainViolation) -> Error {
    match v {
        DomainViolation::Epigraph { gap } => Error::EpigraphBoundary { gap },
        DomainViolation::NonPositiveShift { value } => {
            Error::Refused(format!("shifted cost value {value:e} is not positive"))
        }
        DomainViolation::NonFinite => Error::NonFinite("state derivative".into()),
    }
}

impl EscSystem for ProposedSystem {
    fn name(&self) -> &'static str {
        "proposed"
    }

    fn state_dim(&self) -> usize {
        self.objective.dim() + 1
    }

    fn input_dim(&self) -> usize {
        self.objective.dim()
    }

    fn rhs(&self, t: f64, state: &[f64], dstate: &mut [f64], input: &mut [f64]) -> std::result::Result<(), DomainViolation> {
        let n = self.objective.dim();
        let y = epigraph_gap(self.objective.as_ref(), &state[..n], state[n])?;
        let (f1, f2) = self.pair.eval(y);
        for j in 0..n {
            let u = f1 * self.bank.dither(Channel::sine(j), t) + f2 * self.bank.dither(Channel::cosine(j), t);
            dstate[j] = u;
            input[j] = u;
        }
        dstate[n] = -y;
        Ok(())
    }

    fn check_state(&self, state: &[f64]) -> std::result::Result<(), DomainViolation> {
        let n = self.objective.dim();
        epigraph_gap(self.objective.as_ref(), &state[..n], state[n]).map(|_| ())
    }

    fn fastest_period(&self) -> f64 {
        self.bank.fastest_period()
    }
}

/// Averaged dynamics `ẋ = −∇J(x)`, `ż = −z + J(x)`.
#[derive(Clone)]
pub struct LieApproxSystem {
    objective: Arc<dyn Objective>,
    reference_period: f64,
}

impl LieApproxSystem {
    /// `reference_period` sets the step so that grids line up with a dithered run.
    pub fn new(objective: Arc<dyn Objective>, reference_period: f64) -> Result<Self> {
        if !(reference_period > 0.0) {
            return Err(Error::InvalidParameter(format!("reference period must be positive, got {reference_period}")));
        }
        Ok(Self { objective, reference_period })
    }

    pub fn derivative(&self, theta: &EpigraphState) -> EpigraphState {
        let s = theta.to_vec();
        let mut ds = vec![0.0; s.len()];
        let mut u = vec![0.0; self.input_dim()];
        self.eval(&s, &mut ds, &mut u);
        EpigraphState::from_slice(&ds)
    }

    fn eval(&self, state: &[f64], dstate: &mut [f64], input: &mut [f64]) {
        let n = self.objective.dim();
        self.objective.gradient(&state[..n], &mut dstate[..n]);
        for j in 0..n {
            dstate[j] = -dstate[j];
            input[j] = dstate[j];
        }
        dstate[n] = -(state[n] - self.objective.value(&state[..n]));
    }
}

impl EscSystem for LieApproxSystem {
    fn name(&self) -> &'static str {
        "lie_approx"
    }

    fn state_dim(&self) -> usize {
        self.objective.dim() + 1
    }

    fn input_dim(&self) -> usize {
        self.objective.dim()
    }

    fn rhs(&self, _t: f64, state: &[f64], dstate: &mut [f64], input: &mut [f64]) -> std::result::Result<(), DomainViolation> {
        self.eval(state, dstate, input);
        if dstate.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(DomainViolation::NonFinite)
        }
    }

    fn check_state(&self, state: &[f64]) -> std::result::Result<(), DomainViolation> {
        if state.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(DomainViolation::NonFinite)
        }
    }

    fn fastest_period(&self) -> f64 {
        self.reference_period
    }
}

/// Shifted-cost baseline `ẋ_j = Σ_s (−1)^s F_s(J(x) − offset)·u_(j,s)(t)`.
///
/// With the argument increasing in `J` the alternating sign is what makes the
/// average descend: the averaged field is `−(F1F2' − F1'F2)·∇J`.
#[derive(Clone)]
pub struct GrushkovskayaSystem {
    objective: Arc<dyn Objective>,
    pair: GeneratingPair,
    bank: DitherBank,
    offset: f64,
}

impl GrushkovskayaSystem {
    pub fn new(objective: Arc<dyn Objective>, pair: GeneratingPair, bank: DitherBank, offset: f64) -> Result<Self> {
        if bank.inputs() != objective.dim() {
            return Err(Error::DimensionMismatch { expected: objective.dim(), got: bank.inputs() });
        }
        Ok(Self { objective, pair, bank, offset })
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn derivative(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut dx = vec![0.0; x.len()];
        let mut u = vec![0.0; x.len()];
        self.rhs(t, x, &mut dx, &mut u).map_err(violation_error)?;
        Ok(dx)
    }

    /// Per-channel fields with the alternating sign folded in.
    pub fn channel_field(&self, ch: Channel, x: &[f64], out: &mut [f64]) {
        let (f1, f2) = self.pair.eval(self.objective.value(x) - self.offset);
        out.iter_mut().for_each(|v| *v = 0.0);
        out[ch.input] = match ch.component {
            Component::Sine => -f1,
            Component::Cosine => f2,
        };
    }
}

impl EscSystem for GrushkovskayaSystem {
    fn name(&self) -> &'static str {
        "grushkovskaya"
    }

    fn state_dim(&self) -> usize {
        self.objective.dim()
    }

    fn input_dim(&self) -> usize {
        self.objective.dim()
    }

    fn rhs(&self, t: f64, state: &[f64], dstate: &mut [f64], input: &mut [f64]) -> std::result::Result<(), DomainViolation> {
        let value = self.objective.value(state) - self.offset;
        if !value.is_finite() {
            return Err(DomainViolation::NonFinite);
        }
        if value <= 0.0 {
            return Err(DomainViolation::NonPositiveShift { value });
        }
        let (f1, f2) = self.pair.eval(value);
        for j in 0..state.len() {
            let u = -f1 * self.bank.dither(Channel::sine(j), t) + f2 * self.bank.dither(Channel::cosine(j), t);
            dstate[j] = u;
            input[j] = u;
        }
        Ok(())
    }

    fn check_state(&self, state: &[f64]) -> std::result::Result<(), DomainViolation> {
        let value = self.objective.value(state) - self.offset;
        if !value.is_finite() {
            Err(DomainViolation::NonFinite)
        } else if value <= 0.0 {
            Err(DomainViolation::NonPositiveShift { value })
        } else {
            Ok(())
        }
    }

    fn fastest_period(&self) -> f64 {
        self.bank.fastest_period()
    }
}

/// Adaptive-frequency baseline
///
/// ```text
/// ẋ_j = √ω_j / y² · sin(ω_j Ω + 1/y),   ż = −y,   Ω̇ = 1/y⁵
/// ```
///
/// with `ω_j` the bank multipliers; for a single input with `ω_1 = 1` this is
/// the scalar law `ẋ = sin(Ω + 1/y)/y²`.
#[derive(Clone)]
pub struct SuttnerSystem {
    objective: Arc<dyn Objective>,
    bank: DitherBank,
}

impl SuttnerSystem {
    pub fn new(objective: Arc<dyn Objective>, bank: DitherBank) -> Result<Self> {
        if bank.inputs() != objective.dim() {
            return Err(Error::DimensionMismatch { expected: objective.dim(), got: bank.inputs() });
        }
        Ok(Self { objective, bank })
    }

    pub fn derivative(&self, state: &SuttnerState) -> Result<(SuttnerState, Vec<f64>)> {
        let s = state.to_vec();
        let mut ds = vec![0.0; s.len()];
        let mut u = vec![0.0; self.input_dim()];
        self.rhs(0.0, &s, &mut ds, &mut u).map_err(violation_error)?;
        Ok((SuttnerState::from_slice(&ds), u))
    }

    /// `Ω̇ = y^(−5)`.
    pub fn phase_speed(&self, state: &[f64]) -> f64 {
        let n = self.objective.dim();
        let y = state[n] - self.objective.value(&state[..n]);
        y.powi(-5)
    }
}

impl EscSystem for SuttnerSystem {
    fn name(&self) -> &'static str {
        "suttner"
    }

    fn state_dim(&self) -> usize {
        self.objective.dim() + 2
    }

    fn input_dim(&self) -> usize {
        self.objective.dim()
    }

    fn rhs(&self, _t: f64, state: &[f64], dstate: &mut [f64], input: &mut [f64]) -> std::result::Result<(), DomainViolation> {
        let n = self.objective.dim();
        let y = epigraph_gap(self.objective.as_ref(), &state[..n], state[n])?;
        let phase = state[n + 1];
        let amplitude = 1.0 / (y * y);
        for j in 0..n {
            let m = self.bank.multipliers()[j] as f64;
            let u = m.sqrt() * amplitude * (m * phase + 1.0 / y).sin();
            dstate[j] = u;
            input[j] = u;
        }
        dstate[n] = -y;
        dstate[n + 1] = y.powi(-5);
        if dstate.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(DomainViolation::NonFinite)
        }
    }

    fn check_state(&self, state: &[f64]) -> std::result::Result<(), DomainViolation> {
        let n = self.objective.dim();
        epigraph_gap(self.objective.as_ref(), &state[..n], state[n]).map(|_| ())
    }

    fn fastest_period(&self) -> f64 {
        self.bank.fastest_period()
    }

    /// Phase speed of the sinusoid from the `Ω` and `1/y` arguments, with
    /// `|ẏ|` approximated by its drift part `y`.
    fn phase_rate(&self, state: &[f64]) -> Option<f64> {
        let n = self.objective.dim();
        let y = state[n] - self.objective.value(&state[..n]);
        if !(y > 0.0) {
            return None;
        }
        let mmax = *self.bank.multipliers().iter().max().expect("non-empty") as f64;
        Some(mmax * y.powi(-5) + 1.0 / y)
    }
}
