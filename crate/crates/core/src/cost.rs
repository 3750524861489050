//! Cost functions, their gradients, and empirical checks of the power-like
//! growth condition
//!
//! ```text
//! κ·J̃(x)^(2−1/m) ≤ ‖∇J(x)‖² ≤ γ·J̃(x)^(2−1/m),   J̃(x) = J(x) − J(x*)
//! ```
//!
//! Control laws only ever see an [`Objective`]: the value and the gradient.
//! The minimizer and the minimum value live on [`CostModel`] as validation
//! metadata and are read by analysis code only.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// The measurable part of a cost: `J` and `∇J`.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    fn gradient_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient(x, &mut g);
        g
    }
}

/// `J(x) = ½·curvature·‖x − center‖² + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticShifted {
    pub center: Vec<f64>,
    pub curvature: f64,
    pub offset: f64,
}

impl Objective for QuadraticShifted {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        0.5 * self.curvature * r2 + self.offset
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = self.curvature * (a - c);
        }
    }
}

/// `J(x) = coefficient·‖x − center‖⁴ + offset`. Satisfies the growth
/// condition with `m = 2` but not with `m = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quartic {
    pub center: Vec<f64>,
    pub coefficient: f64,
    pub offset: f64,
}

impl Objective for Quartic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        self.coefficient * r2 * r2 + self.offset
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = 4.0 * self.coefficient * r2 * (a - c);
        }
    }
}

/// Two-dimensional `J(u, v) = (a − u)² + b·(v − u²)² + offset`, minimized at `(a, a²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RosenbrockLike {
    pub a: f64,
    pub b: f64,
    pub offset: f64,
}

impl Objective for RosenbrockLike {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (u, v) = (x[0], x[1]);
        (self.a - u).powi(2) + self.b * (v - u * u).powi(2) + self.offset
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let (u, v) = (x[0], x[1]);
        out[0] = -2.0 * (self.a - u) - 4.0 * self.b * u * (v - u * u);
        out[1] = 2.0 * self.b * (v - u * u);
    }
}

/// Closed ball `D` on which the cost is declared.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Domain {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!("domain radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        distance(x, &self.center) <= self.radius * (1.0 + 1e-12)
    }

    /// Tensor grid with `points_per_dim` nodes per axis on the bounding box,
    /// restricted to the ball.
    pub fn grid(&self, points_per_dim: usize) -> Vec<Vec<f64>> {
        let n = self.dim();
        let k = points_per_dim.max(2);
        let total = k.pow(n as u32);
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let p: Vec<f64> = idx
                .iter()
                .zip(&self.center)
                .map(|(&i, &c)| c - self.radius + 2.0 * self.radius * i as f64 / (k - 1) as f64)
                .collect();
            if self.contains(&p) {
                out.push(p);
            }
            for d in idx.iter_mut() {
                *d += 1;
                if *d < k {
                    break;
                }
                *d = 0;
            }
        }
        out
    }
}

/// Empirical growth constants on a sampled domain.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct A1Certificate {
    pub m: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub domain_radius: f64,
}

impl A1Certificate {
    /// `2 − 1/m`.
    pub fn power(&self) -> f64 {
        2.0 - 1.0 / self.m
    }
}

/// Why a growth certificate could not be issued.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct A1Infeasible {
    pub m: f64,
    pub ratio: f64,
    pub at: Vec<f64>,
    pub reason: String,
}

impl fmt::Display for A1Infeasible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m = {}: {} (ratio {:e} at {:?})", self.m, self.reason, self.ratio, self.at)
    }
}

/// Ratio below which the lower growth constant counts as zero.
pub const DEGENERATE_RATIO: f64 = 1e-12;

/// Default nodes per axis for [`Domain::grid`] in condition checks.
pub const DEFAULT_GRID_POINTS: usize = 1000;

/// A cost function together with its validation-only metadata.
#[derive(Clone)]
pub struct CostModel {
    objective: Arc<dyn Objective>,
    x_star: Vec<f64>,
    j_star: f64,
    m: f64,
    domain: Domain,
    a1: Option<A1Certificate>,
}

impl fmt::Debug for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostModel")
            .field("dim", &self.dim())
            .field("x_star", &self.x_star)
            .field("j_star", &self.j_star)
            .field("m", &self.m)
            .field("domain", &self.domain)
            .field("a1", &self.a1)
            .finish()
    }
}

impl CostModel {
    /// Checks that `∇J(x*)` vanishes to 1e-9.
    pub fn new(objective: Arc<dyn Objective>, x_star: Vec<f64>, j_star: f64, m: f64, domain: Domain) -> Result<Self> {
        let n = objective.dim();
        if x_star.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x_star.len() });
        }
        if domain.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: domain.dim() });
        }
        if !(m >= 1.0) {
            return Err(Error::InvalidParameter(format!("growth exponent m must be >= 1, got {m}")));
        }
        let norm = norm(&objective.gradient_vec(&x_star));
        if !(norm <= 1e-9) {
            return Err(Error::MinimizerNotCritical { norm });
        }
        Ok(Self { objective, x_star, j_star, m, domain, a1: None })
    }

    pub fn quadratic_shifted(center: Vec<f64>, curvature: f64, offset: f64, domain: Domain) -> Result<Self> {
        if !(curvature > 0.0) {
            return Err(Error::InvalidParameter(format!("curvature must be positive, got {curvature}")));
        }
        let x_star = center.clone();
        Self::new(Arc::new(QuadraticShifted { center, curvature, offset }), x_star, offset, 1.0, domain)
    }

    pub fn quartic(center: Vec<f64>, coefficient: f64, offset: f64, domain: Domain) -> Result<Self> {
        if !(coefficient > 0.0) {
            return Err(Error::InvalidParameter(format!("coefficient must be positive, got {coefficient}")));
        }
        let x_star = center.clone();
        Self::new(Arc::new(Quartic { center, coefficient, offset }), x_star, offset, 2.0, domain)
    }

    pub fn rosenbrock_like(a: f64, b: f64, offset: f64, domain: Domain) -> Result<Self> {
        if !(b > 0.0) {
            return Err(Error::InvalidParameter(format!("b must be positive, got {b}")));
        }
        Self::new(Arc::new(RosenbrockLike { a, b, offset }), vec![a, a * a], offset, 1.0, domain)
    }

    /// The cost as seen by a controller.
    pub fn objective(&self) -> Arc<dyn Objective> {
        Arc::clone(&self.objective)
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.objective.value(x)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.objective.gradient_vec(x)
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    pub fn j_star(&self) -> f64 {
        self.j_star
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Growth exponent used by the practical sets.
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn with_m(mut self, m: f64) -> Result<Self> {
        if !(m >= 1.0) {
            return Err(Error::InvalidParameter(format!("growth exponent m must be >= 1, got {m}")));
        }
        self.m = m;
        self.a1 = None;
        Ok(self)
    }

    pub fn a1(&self) -> Option<&A1Certificate> {
        self.a1.as_ref()
    }

    pub fn with_certificate(mut self, cert: A1Certificate) -> Self {
        self.m = cert.m;
        self.a1 = Some(cert);
        self
    }

    /// Copy with replaced minimizer metadata and no construction checks.
    /// Used by the audit that control laws never read the metadata.
    pub fn with_poisoned_metadata(&self, x_star: Vec<f64>, j_star: f64) -> Self {
        Self { x_star, j_star, ..self.clone() }
    }

    /// `J̃(x) = J(x) − J(x*)`.
    pub fn eval_shifted(&self, x: &[f64]) -> f64 {
        self.eval(x) - self.j_star
    }
}

/// `J̃(x) = J(x) − J(x*)`.
pub fn eval_shifted(model: &CostModel, x: &[f64]) -> f64 {
    model.eval_shifted(x)
}

/// Central-difference gradient with step `h` on every axis.
pub fn finite_diff_gradient(model: &CostModel, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let fp = model.eval(&probe);
            probe[i] = x[i] - h;
            let fm = model.eval(&probe);
            probe[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn growth_ratio(model: &CostModel, x: &[f64], power: f64) -> f64 {
    let g = model.grad(x);
    let g2: f64 = g.iter().map(|v| v * v).sum();
    g2 / model.eval_shifted(x).powf(power)
}

/// Infimum and supremum of `‖∇J‖² / J̃^(2−1/m)` over `grid`. Points closer
/// than 1e-12 to the minimizer are skipped.
pub fn estimate_a1_constants(model: &CostModel, m: f64, grid: &[Vec<f64>]) -> std::result::Result<A1Certificate, A1Infeasible> {
    let infeasible = |ratio: f64, at: Vec<f64>, reason: &str| A1Infeasible { m, ratio, at, reason: reason.to_string() };
    if !(m >= 1.0) {
        return Err(infeasible(f64::NAN, vec![], "exponent m must be >= 1"));
    }
    let power = 2.0 - 1.0 / m;
    let mut lo = (f64::INFINITY, Vec::new());
    let mut hi = (f64::NEG_INFINITY, Vec::new());
    for x in grid {
        if distance(x, model.x_star()) <= 1e-12 {
            continue;
        }
        let shifted = model.eval_shifted(x);
        if !(shifted > 0.0) {
            return Err(infeasible(0.0, x.clone(), "J(x) <= J(x*) away from the minimizer"));
        }
        let r = growth_ratio(model, x, power);
        if !r.is_finite() {
            return Err(infeasible(r, x.clone(), "non-finite growth ratio"));
        }
        if r < lo.0 {
            lo = (r, x.clone());
        }
        if r > hi.0 {
            hi = (r, x.clone());
        }
    }
    if lo.1.is_empty() {
        return Err(infeasible(f64::NAN, vec![], "empty grid"));
    }
    if lo.0 < DEGENERATE_RATIO {
        return Err(infeasible(lo.0, lo.1, "lower growth constant degenerates"));
    }
    let radius = grid.iter().map(|x| distance(x, model.x_star())).fold(0.0, f64::max);
    Ok(A1Certificate { m, kappa: lo.0, gamma: hi.0, domain_radius: radius })
}

/// Relative accuracy below which `J̃ = J − J(x*)` is not trusted.
const SHIFT_RESOLUTION: f64 = 1e6 * f64::EPSILON;

/// Probes the growth ratio at `x* ± r·e_i` for `r = radius·10^(−k)`,
/// `k = 1..=6`, skipping points where `J̃` is lost to rounding against
/// `|J(x*)|`. The certificate is reported as degenerate (wrong exponent)
/// when the ratio leaves `[κ/2, 2γ]` or changes by more than a factor 2
/// between the two probes closest to the minimizer.
pub fn probe_a1_degeneracy(model: &CostModel, cert: &A1Certificate) -> std::result::Result<(), A1Infeasible> {
    let power = cert.power();
    let n = model.dim();
    let scale = model.domain().radius;
    let floor = SHIFT_RESOLUTION * model.j_star().abs().max(1.0);
    let fail = |ratio: f64, at: Vec<f64>, reason: &str| A1Infeasible { m: cert.m, ratio, at, reason: reason.into() };
    for axis in 0..n {
        for sign in [-1.0, 1.0] {
            let probes: Vec<(f64, Vec<f64>)> = (1..=6)
                .map(|k| {
                    let mut x = model.x_star().to_vec();
                    x[axis] += sign * scale * 10f64.powi(-k);
                    x
                })
                .take_while(|x| model.eval_shifted(x) > floor)
                .map(|x| (growth_ratio(model, &x, power), x))
                .collect();
            for (ratio, x) in &probes {
                if !(*ratio >= 0.5 * cert.kappa) {
                    return Err(fail(*ratio, x.clone(), "lower growth constant shrinks toward the minimizer"));
                }
                if !(*ratio <= 2.0 * cert.gamma) {
                    return Err(fail(*ratio, x.clone(), "upper growth constant blows up toward the minimizer"));
                }
            }
            if let [.., (outer, _), (inner, x)] = probes.as_slice() {
                let drift = inner / outer;
                if !(0.5..=2.0).contains(&drift) {
                    let reason = if drift < 1.0 { "growth ratio keeps shrinking" } else { "growth ratio keeps growing" };
                    return Err(fail(*inner, x.clone(), &format!("{reason} toward the minimizer")));
                }
            }
        }
    }
    Ok(())
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}
