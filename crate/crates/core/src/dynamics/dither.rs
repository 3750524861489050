//! Sinusoidal dithers and their closed-form (iterated) antiderivatives.
//!
//! For input `j` with frequency `k_j = ω_j·ω` and amplitude `A_j = 2√(π k_j)`:
//!
//! ```text
//! u_(j,1)(t) = −A_j sin(2π k_j t)        U_(j,1)(t) = cos(2π k_j t)/√(π k_j)
//! u_(j,2)(t) =  A_j cos(2π k_j t)        U_(j,2)(t) = sin(2π k_j t)/√(π k_j)
//! ```
//!
//! The sine channel carries a minus sign so that the averaged epigraph
//! dynamics descend along `−∇J` under the unit-Wronskian convention
//! `F1F2' − F1'F2 = 1` (with `+sin` the same pairs average to ascent).
//! All antiderivatives are the zero-mean (periodic) ones. The iterated
//! integral `U_(λ1,λ2)` integrates `v_(λ1,λ2) + U_λ1·u_λ2`, where the constant
//! `v` cancels the mean of the product:
//!
//! ```text
//! v = −1   for λ1 = (j,1), λ2 = (j,2)
//! v = +1   for λ1 = (j,2), λ2 = (j,1)
//! v =  0   otherwise
//! ```

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

/// Sine (`s = 1`) or cosine (`s = 2`) component of an input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Component {
    Sine,
    Cosine,
}

impl Component {
    pub fn index(self) -> u8 {
        match self {
            Component::Sine => 1,
            Component::Cosine => 2,
        }
    }
}

/// A dither channel `λ = (j, s)`; `input` is zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Channel {
    pub input: usize,
    pub component: Component,
}

impl Channel {
    pub fn sine(input: usize) -> Self {
        Self { input, component: Component::Sine }
    }

    pub fn cosine(input: usize) -> Self {
        Self { input, component: Component::Cosine }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Trig {
    Sin,
    Cos,
}

/// `coef·trig(2π q t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Harmonic {
    coef: f64,
    trig: Trig,
    q: f64,
}

/// Frequency-scaled bounds: `|U_λ| ≤ single/√ω`, `|U_(λ1,λ2)| ≤ double/ω`,
/// `|U_(λ1,λ2)·u_λ3| ≤ double_times_dither/√ω`, for every `t` and `ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DitherBounds {
    pub single: f64,
    pub double: f64,
    pub double_times_dither: f64,
}

impl DitherBounds {
    /// One constant covering all three bounds.
    pub fn a(&self) -> f64 {
        self.single.max(self.double).max(self.double_times_dither)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DitherBank {
    omega: f64,
    multipliers: Vec<u32>,
}

impl DitherBank {
    pub fn new(omega: f64, multipliers: Vec<u32>) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::InvalidParameter(format!("base frequency must be positive, got {omega}")));
        }
        if multipliers.is_empty() {
            return Err(Error::InvalidParameter("at least one frequency multiplier is required".into()));
        }
        if multipliers.iter().any(|&m| m == 0) {
            return Err(Error::InvalidParameter("frequency multipliers must be positive integers".into()));
        }
        let mut sorted = multipliers.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!("frequency multipliers must be distinct, got {multipliers:?}")));
        }
        Ok(Self { omega, multipliers })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn multipliers(&self) -> &[u32] {
        &self.multipliers
    }

    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::new(omega, self.multipliers.clone())
    }

    /// Number of inputs `n`.
    pub fn inputs(&self) -> usize {
        self.multipliers.len()
    }

    /// All channels in `(j, s)` lexicographic order.
    pub fn channels(&self) -> Vec<Channel> {
        (0..self.inputs()).flat_map(|j| [Channel::sine(j), Channel::cosine(j)]).collect()
    }

    /// `k_j = ω_j·ω`.
    pub fn frequency(&self, input: usize) -> f64 {
        self.multipliers[input] as f64 * self.omega
    }

    pub fn amplitude(&self, input: usize) -> f64 {
        2.0 * (PI * self.frequency(input)).sqrt()
    }

    /// Period of input `j`.
    pub fn period(&self, input: usize) -> f64 {
        1.0 / self.frequency(input)
    }

    /// `1/(max_j ω_j · ω)`.
    pub fn fastest_period(&self) -> f64 {
        let kmax = *self.multipliers.iter().max().expect("non-empty") as f64;
        1.0 / (kmax * self.omega)
    }

    pub fn dither(&self, ch: Channel, t: f64) -> f64 {
        let k = self.frequency(ch.input);
        let (s, c) = (2.0 * PI * k * t).sin_cos();
        match ch.component {
            Component::Sine => -self.amplitude(ch.input) * s,
            Component::Cosine => self.amplitude(ch.input) * c,
        }
    }

    /// Zero-mean antiderivative `U_λ(t)`.
    pub fn integral(&self, ch: Channel, t: f64) -> f64 {
        let k = self.frequency(ch.input);
        let (s, c) = (2.0 * PI * k * t).sin_cos();
        let scale = 1.0 / (PI * k).sqrt();
        match ch.component {
            Component::Sine => scale * c,
            Component::Cosine => scale * s,
        }
    }

    /// Mean-cancelling constant `v_(λ1,λ2)`.
    pub fn v(&self, l1: Channel, l2: Channel) -> f64 {
        if l1.input != l2.input {
            return 0.0;
        }
        match (l1.component, l2.component) {
            (Component::Sine, Component::Cosine) => -1.0,
            (Component::Cosine, Component::Sine) => 1.0,
            _ => 0.0,
        }
    }

    /// `β = (1/T)∫₀ᵀ u_λ2(τ) ∫₀^τ u_λ1(σ) dσ dτ`, the coefficient of the Lie
    /// bracket `[f_λ1, f_λ2]` in the averaged system. Equals `−v_(λ1,λ2)`
    /// because each `u` has zero mean.
    pub fn beta(&self, l1: Channel, l2: Channel) -> f64 {
        -self.v(l1, l2)
    }

    /// `U_λ1·u_λ2` expanded into harmonics; returns the oscillatory part and
    /// the constant (mean) part.
    fn product_harmonics(&self, l1: Channel, l2: Channel) -> ([Harmonic; 2], f64) {
        let ka = self.frequency(l1.input);
        let kb = self.frequency(l2.input);
        let scale = self.amplitude(l2.input) / (PI * ka).sqrt();
        let plus = kb + ka;
        let minus = kb - ka;
        let h = |coef: f64, trig, q| Harmonic { coef: scale * coef, trig, q };
        // U_(a,1) ∝ cos α, U_(a,2) ∝ sin α; u_(b,1) ∝ −sin β, u_(b,2) ∝ cos β
        let terms = match (l1.component, l2.component) {
            (Component::Sine, Component::Sine) => [h(-0.5, Trig::Sin, plus), h(-0.5, Trig::Sin, minus)],
            (Component::Sine, Component::Cosine) => [h(0.5, Trig::Cos, plus), h(0.5, Trig::Cos, minus)],
            (Component::Cosine, Component::Sine) => [h(0.5, Trig::Cos, plus), h(-0.5, Trig::Cos, minus)],
            (Component::Cosine, Component::Cosine) => [h(0.5, Trig::Sin, plus), h(-0.5, Trig::Sin, minus)],
        };
        let mut out = terms;
        let mut mean = 0.0;
        for term in out.iter_mut() {
            if term.q == 0.0 {
                if term.trig == Trig::Cos {
                    mean += term.coef;
                }
                term.coef = 0.0;
            }
        }
        (out, mean)
    }

    /// Zero-mean iterated antiderivative `U_(λ1,λ2)(t)`.
    pub fn iterated_integral(&self, l1: Channel, l2: Channel, t: f64) -> f64 {
        let (terms, mean) = self.product_harmonics(l1, l2);
        debug_assert!((mean + self.v(l1, l2)).abs() < 1e-12, "v table out of sync with the dithers");
        terms
            .iter()
            .filter(|h| h.coef != 0.0)
            .map(|h| {
                let w = 2.0 * PI * h.q;
                match h.trig {
                    Trig::Sin => -h.coef * (w * t).cos() / w,
                    Trig::Cos => h.coef * (w * t).sin() / w,
                }
            })
            .sum()
    }

    /// `(U_λ1(t), U_(λ1,λ2)(t))`.
    pub fn iterated_dither_integrals(&self, l1: Channel, l2: Channel, t: f64) -> (f64, f64) {
        (self.integral(l1, t), self.iterated_integral(l1, l2, t))
    }

    /// Closed-form bound constants. The double integral is bounded by the sum
    /// of its harmonic amplitudes.
    pub fn bounds(&self) -> DitherBounds {
        let mmin = *self.multipliers.iter().min().expect("non-empty") as f64;
        let mmax = *self.multipliers.iter().max().expect("non-empty") as f64;
        let single = 1.0 / (PI * mmin).sqrt();
        let channels = self.channels();
        let mut double: f64 = 0.0;
        for &l1 in &channels {
            for &l2 in &channels {
                let (terms, _) = self.product_harmonics(l1, l2);
                let amp: f64 = terms
                    .iter()
                    .filter(|h| h.coef != 0.0)
                    .map(|h| h.coef.abs() / (2.0 * PI * h.q.abs()))
                    .sum();
                double = double.max(amp * self.omega);
            }
        }
        let double_times_dither = double * 2.0 * (PI * mmax).sqrt();
        DitherBounds { single, double, double_times_dither }
    }
}
