//! Experiment configuration and batch runner.
//!
//! A configuration file describes one experiment: the cost, the generating
//! pair, the dither bank, initial state, practical-set constants, the
//! integration horizon and which systems to run side by side. The runner
//! writes one CSV per system plus `summary.json`; `sweep_omega` repeats the
//! proposed system over a list of base frequencies; `validate_conditions`
//! produces a PASS/FAIL report of the standing conditions.

mod config;
mod run;
mod validate;

pub use config::{
    a1_grid, AnalysisSection, AutoKeyword, CostSection, DitherSection, Experiment, ExperimentConfig,
    GrushkovskayaSection, InitialSection, IntegrationSection, OutputSection, PairSection, SetSection, SystemKind,
    Y0Setting, OUTPUT_ENV,
};
pub use run::{
    run_experiment, simulate, sweep_omega, write_trajectory_csv, EnvelopeSummary, ExitStatus, ExperimentSummary,
    PhaseSpeedSummary, RunStatus, SweepRow, SweepTable, SystemSummary, FULL_STORAGE_LIMIT,
};
pub use validate::{
    validate_conditions, ConditionCheck, ValidationReport, A1_GROWTH, C1_VANISHING, C1_WRONSKIAN, C2_BOUNDS,
    OMEGA_STAR, WRONSKIAN_TOL, Y0_BOUND,
};
