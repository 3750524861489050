//! Iterated Lie derivatives by nested central differences, and the
//! averaging decomposition of `g(θ(t))` along a dithered trajectory
//!
//! ```text
//! F^g  = L0 g + Σ v(λ1,λ2)·L_λ2 L_λ1 g
//! R1^g = Σ L_λ g·U_λ − Σ L_λ2 L_λ1 g·U_(λ1,λ2)
//! R2^g = −Σ L0 L_λ g·U_λ + Σ L0 L_λ2 L_λ1 g·U_(λ1,λ2) + Σ L_λ3 L_λ2 L_λ1 g·U_(λ1,λ2)·u_λ3
//! ```
//!
//! so that `g(θ(t2)) = g(θ(t1)) + R1(t2) − R1(t1) + ∫ (F^g + R2) dt`.

use serde::Serialize;

use crate::dynamics::{Channel, DitherBank, EscSystem, ProposedSystem};

/// Vector fields `f0, f_λ` of a control-affine system `θ̇ = f0 + Σ f_λ u_λ(t)`.
pub trait ControlAffineFields: Sync {
    fn state_dim(&self) -> usize;
    fn bank(&self) -> &DitherBank;
    fn drift(&self, theta: &[f64], out: &mut [f64]);
    fn field(&self, ch: Channel, theta: &[f64], out: &mut [f64]);
}

impl ControlAffineFields for ProposedSystem {
    fn state_dim(&self) -> usize {
        EscSystem::state_dim(self)
    }

    fn bank(&self) -> &DitherBank {
        ProposedSystem::bank(self)
    }

    fn drift(&self, theta: &[f64], out: &mut [f64]) {
        ProposedSystem::drift(self, theta, out)
    }

    fn field(&self, ch: Channel, theta: &[f64], out: &mut [f64]) {
        self.channel_field(ch, theta, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Drift,
    Input(Channel),
}

/// Sixth-order central weights for offsets `±1, ±2, ±3`.
const STENCIL: [(f64, f64); 3] = [(1.0, 45.0 / 60.0), (2.0, -9.0 / 60.0), (3.0, 1.0 / 60.0)];

/// Largest stencil spacing used by [`default_step`].
pub const MAX_STEP: f64 = 2e-2;

/// Spacing that keeps every nested stencil point well inside the epigraph
/// and resolves the pair's own variation `ρ = |F'(y)|/|F(y)|`:
/// `min(MAX_STEP, 0.02 / ((1 + ‖∇J‖)·max(1/y, ρ)))`.
pub fn default_step(gap: f64, grad_norm: f64, pair_rate: f64) -> f64 {
    MAX_STEP.min(0.02 / ((1.0 + grad_norm) * gap.recip().max(pair_rate)))
}

/// [`default_step`] at `θ` for the given system.
pub fn lie_step(system: &ProposedSystem, theta: &[f64]) -> f64 {
    let n = system.objective().dim();
    let gap = system.gap(theta);
    let grad = system.objective().gradient_vec(&theta[..n]);
    let grad_norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    default_step(gap, grad_norm, system.pair().jet(gap).relative_rate())
}

/// `L_fk ⋯ L_f1 g (θ)` for `chain = [f1, …, fk]`.
///
/// Each level is a sixth-order central difference of spacing `step` along
/// the unit direction of its field, scaled by the field norm; a level whose
/// field vanishes contributes zero.
pub fn lie_derivative(
    fields: &dyn ControlAffineFields,
    chain: &[Field],
    g: &dyn Fn(&[f64]) -> f64,
    theta: &[f64],
    step: f64,
) -> f64 {
    let Some((&outer, inner)) = chain.split_last() else {
        return g(theta);
    };
    let dim = fields.state_dim();
    let mut f = vec![0.0; dim];
    match outer {
        Field::Drift => fields.drift(theta, &mut f),
        Field::Input(ch) => fields.field(ch, theta, &mut f),
    }
    let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    if !norm.is_finite() {
        return f64::NAN;
    }
    let mut p = theta.to_vec();
    let mut at = |offset: f64| {
        for i in 0..dim {
            p[i] = theta[i] + offset * step * f[i] / norm;
        }
        lie_derivative(fields, inner, g, &p, step)
    };
    // differences first, so a locally constant function gives exactly zero
    let mut acc = 0.0;
    for (k, w) in STENCIL {
        acc += w * (at(k) - at(-k));
    }
    norm * acc / step
}

/// Every Lie derivative the decomposition needs at one point, indexed by
/// position in `bank.channels()`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LieTable {
    pub l0: f64,
    /// `L_λ g`.
    pub l: Vec<f64>,
    /// `L0 L_λ g`.
    pub l0l: Vec<f64>,
    /// `ll[a][b] = L_b L_a g`.
    pub ll: Vec<Vec<f64>>,
    /// `L0 L_b L_a g`.
    pub l0ll: Vec<Vec<f64>>,
    /// `lll[a][b][c] = L_c L_b L_a g`.
    pub lll: Vec<Vec<Vec<f64>>>,
}

impl LieTable {
    pub fn compute(fields: &dyn ControlAffineFields, g: &dyn Fn(&[f64]) -> f64, theta: &[f64], step: f64) -> Self {
        let channels: Vec<Field> = fields.bank().channels().into_iter().map(Field::Input).collect();
        let k = channels.len();
        let d = |chain: &[Field]| lie_derivative(fields, chain, g, theta, step);
        let l0 = d(&[Field::Drift]);
        let mut l = vec![0.0; k];
        let mut l0l = vec![0.0; k];
        let mut ll = vec![vec![0.0; k]; k];
        let mut l0ll = vec![vec![0.0; k]; k];
        let mut lll = vec![vec![vec![0.0; k]; k]; k];
        for a in 0..k {
            l[a] = d(&[channels[a]]);
            l0l[a] = d(&[channels[a], Field::Drift]);
            for b in 0..k {
                ll[a][b] = d(&[channels[a], channels[b]]);
                l0ll[a][b] = d(&[channels[a], channels[b], Field::Drift]);
                for c in 0..k {
                    lll[a][b][c] = d(&[channels[a], channels[b], channels[c]]);
                }
            }
        }
        Self { l0, l, l0l, ll, l0ll, lll }
    }

    pub fn is_finite(&self) -> bool {
        self.l0.is_finite()
            && self.l.iter().chain(&self.l0l).all(|v| v.is_finite())
            && self.ll.iter().chain(&self.l0ll).flatten().all(|v| v.is_finite())
            && self.lll.iter().flatten().flatten().all(|v| v.is_finite())
    }

    /// `F^g = L0 g + Σ v·L_λ2 L_λ1 g`.
    pub fn averaged(&self, bank: &DitherBank) -> f64 {
        let ch = bank.channels();
        let mut f = self.l0;
        for (a, &ca) in ch.iter().enumerate() {
            for (b, &cb) in ch.iter().enumerate() {
                f += bank.v(ca, cb) * self.ll[a][b];
            }
        }
        f
    }
}

/// Pieces of the decomposition at one `(θ, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaOneBreakdown {
    pub f_g: f64,
    pub r1: f64,
    pub r2: f64,
    pub terms: LemmaOneTerms,
}

/// Individual sums making up `F^g`, `R1` and `R2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaOneTerms {
    pub drift: f64,
    pub bracket: f64,
    pub r1_first_order: f64,
    pub r1_second_order: f64,
    pub r2_drift_first: f64,
    pub r2_drift_second: f64,
    pub r2_third_order: f64,
}

impl LemmaOneBreakdown {
    pub fn is_finite(&self) -> bool {
        self.f_g.is_finite() && self.r1.is_finite() && self.r2.is_finite()
    }
}

/// Combines a [`LieTable`] with the dither values at time `t`.
pub fn assemble(table: &LieTable, bank: &DitherBank, t: f64) -> LemmaOneBreakdown {
    let ch = bank.channels();
    let u: Vec<f64> = ch.iter().map(|&c| bank.dither(c, t)).collect();
    let big_u: Vec<f64> = ch.iter().map(|&c| bank.integral(c, t)).collect();
    let mut terms = LemmaOneTerms {
        drift: table.l0,
        bracket: 0.0,
        r1_first_order: 0.0,
        r1_second_order: 0.0,
        r2_drift_first: 0.0,
        r2_drift_second: 0.0,
        r2_third_order: 0.0,
    };
    for a in 0..ch.len() {
        terms.r1_first_order += table.l[a] * big_u[a];
        terms.r2_drift_first -= table.l0l[a] * big_u[a];
        for b in 0..ch.len() {
            let u12 = bank.iterated_integral(ch[a], ch[b], t);
            terms.bracket += bank.v(ch[a], ch[b]) * table.ll[a][b];
            terms.r1_second_order -= table.ll[a][b] * u12;
            terms.r2_drift_second += table.l0ll[a][b] * u12;
            for c in 0..ch.len() {
                terms.r2_third_order += table.lll[a][b][c] * u12 * u[c];
            }
        }
    }
    LemmaOneBreakdown {
        f_g: terms.drift + terms.bracket,
        r1: terms.r1_first_order + terms.r1_second_order,
        r2: terms.r2_drift_first + terms.r2_drift_second + terms.r2_third_order,
        terms,
    }
}

/// Decomposition of `g` at `(θ, t)` for the given system.
pub fn lemma1_terms(
    fields: &dyn ControlAffineFields,
    g: &dyn Fn(&[f64]) -> f64,
    theta: &[f64],
    t: f64,
    step: f64,
) -> LemmaOneBreakdown {
    let table = LieTable::compute(fields, g, theta, step);
    assemble(&table, fields.bank(), t)
}
