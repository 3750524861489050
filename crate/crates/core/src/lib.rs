//! Extremum seeking control with vanishing dither oscillations.
//!
//! The controller augments the plant state `x` with an auxiliary `z` kept
//! strictly above the cost graph and drives `x` with sinusoidal dithers
//! shaped by `(F1, F2)(z − J(x))`. As `z − J(x) → 0` the control amplitude
//! vanishes while the averaged dynamics remain the gradient flow
//! `ẋ = −∇J`, `ż = −(z − J)`.
//!
//! - [`cost`]: objectives, minimizer metadata and growth-condition checks.
//! - [`generators`]: generating pairs and condition checkers.
//! - [`dynamics`]: dithers, controller right-hand sides, RK4 integration.
//! - [`analysis`]: practical sets, averaging decomposition, metrics.
//! - [`cli`]: experiment configuration and batch runner.

pub mod analysis;
pub mod cli;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod generators;

pub use error::{Error, Result};
