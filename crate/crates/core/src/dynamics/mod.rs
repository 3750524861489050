//! Dither signals, the controller right-hand sides and a fixed-step RK4 integrator.

mod dither;
mod integrate;
mod systems;

pub use dither::{Channel, Component, DitherBank, DitherBounds};
pub use integrate::{
    integrate, integrate_thinned, integrate_with, IntegrationOptions, Observer, RunStats, Termination, ThinningRecorder,
    Trajectory, TruncationReason,
    DEFAULT_MAX_STEPS, DEFAULT_STEPS_PER_PERIOD, MIN_ADAPTIVE_STEP, MIN_STEPS_PER_PERIOD,
};
pub use systems::{
    DomainViolation, EpigraphState, EscSystem, GrushkovskayaSystem, LieApproxSystem, ProposedSystem, SuttnerState,
    SuttnerSystem,
};
