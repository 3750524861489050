//! Constraint functions `g1, g2, g3`, the practical sets they cut out, and
//! the closed forms of their derivatives along the averaged flow.

use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::cost::CostModel;
use crate::error::{Error, Result};

/// Margin added to [`y0_lower_bound`] when `y0` is resolved automatically.
pub const AUTO_Y0_MARGIN: f64 = 1e-3;

/// `(1 + √(1 + 8κε)) / (2κ)`.
pub fn y0_lower_bound(kappa: f64, epsilon: f64) -> f64 {
    (1.0 + (1.0 + 8.0 * kappa * epsilon).sqrt()) / (2.0 * kappa)
}

/// Constants of
///
/// ```text
/// g1 = J̃(x) − J0
/// g2 = z − J(x*) − z0
/// g3 = tanh(J̃(x)^(2−1/m)) / (z − J(x)) − y0
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PracticalSetSpec {
    pub j0: f64,
    pub z0: f64,
    pub y0: f64,
    pub epsilon: f64,
    pub delta: f64,
}

/// Sublevel at which membership is tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Zero,
    Epsilon,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Membership {
    pub member: bool,
    pub in_epigraph: bool,
    pub values: Option<[f64; 3]>,
    /// 1-based indices of constraints above the level.
    pub violated: Vec<usize>,
    /// 1-based indices of constraints within `δ` below the level.
    pub near_active: Vec<usize>,
}

impl PracticalSetSpec {
    /// `delta` defaults to `ε/2`.
    pub fn new(j0: f64, z0: f64, y0: f64, epsilon: f64, delta: Option<f64>) -> Result<Self> {
        let delta = delta.unwrap_or(0.5 * epsilon);
        let spec = Self { j0, z0, y0, epsilon, delta };
        let problems = spec.problems();
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    /// Resolves `y0` to `y0_lower_bound(κ, ε) + AUTO_Y0_MARGIN`.
    pub fn with_auto_y0(j0: f64, z0: f64, kappa: f64, epsilon: f64, delta: Option<f64>) -> Result<Self> {
        Self::new(j0, z0, y0_lower_bound(kappa, epsilon) + AUTO_Y0_MARGIN, epsilon, delta)
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("J0", self.j0), ("z0", self.z0), ("y0", self.y0), ("epsilon", self.epsilon)] {
            if !(v > 0.0) || !v.is_finite() {
                out.push(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.z0 > self.j0) {
            out.push(format!("z0 ({}) must exceed J0 ({})", self.z0, self.j0));
        }
        if !(self.delta > 0.0 && self.delta < self.epsilon) {
            out.push(format!("delta ({}) must lie in (0, epsilon = {})", self.delta, self.epsilon));
        }
        out
    }

    /// Checks the `y0` bound against the cost's growth certificate and that
    /// the sublevel set `{J̃ ≤ J0}` sits inside the cost domain.
    pub fn validate_for(&self, cost: &CostModel) -> Result<()> {
        let mut problems = Vec::new();
        if let Some(cert) = cost.a1() {
            let bound = y0_lower_bound(cert.kappa, self.epsilon);
            if !(self.y0 > bound) {
                problems.push(format!("y0 = {} is not above the lower bound {bound} (kappa = {})", self.y0, cert.kappa));
            }
        }
        if let Some(x) = level_set_escape(cost, self.j0) {
            problems.push(format!("sublevel set J~ <= {} reaches the domain boundary at {x:?}", self.j0));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::HypothesesUnmet(problems.join("; ")))
        }
    }

    pub fn level_value(&self, level: Level) -> f64 {
        match level {
            Level::Zero => 0.0,
            Level::Epsilon => self.epsilon,
        }
    }
}

/// A boundary point of the domain where `J̃ ≤ level`, if any is found.
fn level_set_escape(cost: &CostModel, level: f64) -> Option<Vec<f64>> {
    let d = cost.domain();
    let n = d.dim();
    let mut directions: Vec<Vec<f64>> = Vec::new();
    for axis in 0..n {
        for s in [-1.0, 1.0] {
            let mut v = vec![0.0; n];
            v[axis] = s;
            directions.push(v);
        }
    }
    if n > 1 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..512 {
            let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let norm = crate::cost::norm(&v);
            if norm > 1e-3 {
                directions.push(v.iter().map(|a| a / norm).collect());
            }
        }
    }
    directions.into_iter().find_map(|dir| {
        let x: Vec<f64> = d.center.iter().zip(&dir).map(|(c, u)| c + d.radius * u).collect();
        (cost.eval_shifted(&x) <= level).then_some(x)
    })
}


/// `J̃^(2−1/m)`, clamping round-off negatives of `J̃` to zero.
fn shaped(cost: &CostModel, x: &[f64]) -> f64 {
    cost.eval_shifted(x).max(0.0).powf(2.0 - 1.0 / cost.m())
}

/// `(g1, g2, g3)` at `θ = (x, z)`.
pub fn eval_g(spec: &PracticalSetSpec, cost: &CostModel, theta: &[f64]) -> Result<[f64; 3]> {
    let n = cost.dim();
    if theta.len() != n + 1 {
        return Err(Error::DimensionMismatch { expected: n + 1, got: theta.len() });
    }
    let (x, z) = (&theta[..n], theta[n]);
    let j = cost.eval(x);
    let y = z - j;
    if !(y > 0.0) {
        return Err(Error::EpigraphBoundary { gap: y });
    }
    let g1 = j - cost.j_star() - spec.j0;
    let g2 = z - cost.j_star() - spec.z0;
    let g3 = shaped(cost, x).tanh() / y - spec.y0;
    Ok([g1, g2, g3])
}

/// Single constraint `g_which` (1-based), `NaN` off the strict epigraph.
pub fn eval_gi(spec: &PracticalSetSpec, cost: &CostModel, theta: &[f64], which: usize) -> f64 {
    let n = cost.dim();
    let (x, z) = (&theta[..n], theta[n]);
    match which {
        1 => cost.eval(x) - cost.j_star() - spec.j0,
        2 => z - cost.j_star() - spec.z0,
        3 => {
            let y = z - cost.eval(x);
            if y > 0.0 {
                shaped(cost, x).tanh() / y - spec.y0
            } else {
                f64::NAN
            }
        }
        _ => panic!("constraint index {which} out of range 1..=3"),
    }
}

pub fn in_delta(spec: &PracticalSetSpec, cost: &CostModel, theta: &[f64], level: Level) -> Membership {
    let lv = spec.level_value(level);
    match eval_g(spec, cost, theta) {
        Err(_) => Membership { member: false, in_epigraph: false, values: None, violated: vec![], near_active: vec![] },
        Ok(g) => {
            let violated: Vec<usize> = (0..3).filter(|&i| g[i] > lv).map(|i| i + 1).collect();
            let near_active: Vec<usize> =
                (0..3).filter(|&i| g[i] <= lv && g[i] > lv - spec.delta).map(|i| i + 1).collect();
            Membership { member: violated.is_empty(), in_epigraph: true, values: Some(g), violated, near_active }
        }
    }
}

/// `F^{g_i}` along `ẋ = −∇J`, `ż = −(z − J)`:
///
/// ```text
/// F^{g1} = −‖∇J‖²
/// F^{g2} = −z + J
/// F^{g3} = η/y − η‖∇J‖²/y² − p·J̃^(1−1/m)·η'‖∇J‖²/y,   η = tanh(J̃^p), p = 2 − 1/m
/// ```
pub fn closed_form_fg(_spec: &PracticalSetSpec, cost: &CostModel, theta: &[f64], which: usize) -> Result<f64> {
    let n = cost.dim();
    if theta.len() != n + 1 {
        return Err(Error::DimensionMismatch { expected: n + 1, got: theta.len() });
    }
    if !(1..=3).contains(&which) {
        return Err(Error::InvalidParameter(format!("constraint index {which} out of range 1..=3")));
    }
    let (x, z) = (&theta[..n], theta[n]);
    let j = cost.eval(x);
    let y = z - j;
    if !(y > 0.0) {
        return Err(Error::EpigraphBoundary { gap: y });
    }
    let grad2: f64 = cost.grad(x).iter().map(|g| g * g).sum();
    Ok(match which {
        1 => -grad2,
        2 => -y,
        _ => {
            let m = cost.m();
            let p = 2.0 - 1.0 / m;
            let jt = cost.eval_shifted(x).max(0.0);
            let eta = jt.powf(p).tanh();
            let eta_prime = 1.0 - eta * eta;
            eta / y - eta * grad2 / (y * y) - p * jt.powf(1.0 - 1.0 / m) * eta_prime * grad2 / y
        }
    })
}

/// Bounds that keep sampled points away from the singular boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingFloor {
    /// Minimum `z − J(x)`.
    pub min_gap: f64,
    /// Minimum `J̃(x)`.
    pub min_shifted_cost: f64,
}

impl Default for SamplingFloor {
    fn default() -> Self {
        Self { min_gap: 1e-2, min_shifted_cost: 1e-3 }
    }
}

const MAX_REJECTIONS: usize = 2000;

fn sample_x<R: Rng>(cost: &CostModel, rng: &mut R, j_max: f64, floor: &SamplingFloor) -> Option<Vec<f64>> {
    let d = cost.domain();
    for _ in 0..MAX_REJECTIONS {
        let x: Vec<f64> = d.center.iter().map(|c| c + d.radius * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        if !d.contains(&x) {
            continue;
        }
        let jt = cost.eval_shifted(&x);
        if jt <= j_max && jt >= floor.min_shifted_cost {
            return Some(x);
        }
    }
    None
}

/// Draws `count` points of `Δ_level` (or fewer if rejection fails).
///
/// `x` is uniform on the cost domain restricted to `J̃ ≤ J0 + level`; the gap
/// `y` is uniform on the interval that the remaining two constraints allow.
pub fn sample_delta<R: Rng>(
    spec: &PracticalSetSpec,
    cost: &CostModel,
    level: Level,
    count: usize,
    floor: &SamplingFloor,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let lv = spec.level_value(level);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < count * 50 {
        attempts += 1;
        let Some(x) = sample_x(cost, rng, spec.j0 + lv, floor) else { break };
        let jt = cost.eval_shifted(&x);
        let lo = (shaped(cost, &x).tanh() / (spec.y0 + lv)).max(floor.min_gap);
        let hi = spec.z0 + lv - jt;
        if !(hi > lo) {
            continue;
        }
        let y = lo + (hi - lo) * rng.gen::<f64>();
        let mut theta = x.clone();
        theta.push(cost.eval(&x) + y);
        if in_delta(spec, cost, &theta, level).member {
            out.push(theta);
        }
    }
    out
}

/// Draws points of `Δ^i_ε = {θ ∈ Δε : 0 ≤ g_i(θ) ≤ ε}`.
pub fn sample_constraint_band<R: Rng>(
    spec: &PracticalSetSpec,
    cost: &CostModel,
    which: usize,
    count: usize,
    floor: &SamplingFloor,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let eps = spec.epsilon;
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < count * 200 {
        attempts += 1;
        let target = eps * rng.gen::<f64>();
        let x = match which {
            1 => sample_band_x(cost, rng, spec.j0, spec.j0 + eps, floor),
            _ => sample_x(cost, rng, spec.j0 + eps, floor),
        };
        let Some(x) = x else { break };
        let jt = cost.eval_shifted(&x);
        let eta = shaped(cost, &x).tanh();
        let y = match which {
            1 => {
                let lo = (eta / (spec.y0 + eps)).max(floor.min_gap);
                let hi = spec.z0 + eps - jt;
                if !(hi > lo) {
                    continue;
                }
                lo + (hi - lo) * rng.gen::<f64>()
            }
            2 => spec.z0 + target - jt,
            3 => eta / (spec.y0 + target),
            _ => panic!("constraint index {which} out of range 1..=3"),
        };
        if !(y >= floor.min_gap) {
            continue;
        }
        let mut theta = x.clone();
        theta.push(cost.eval(&x) + y);
        let mem = in_delta(spec, cost, &theta, Level::Epsilon);
        if mem.member && mem.values.is_some_and(|g| g[which - 1] >= 0.0) {
            out.push(theta);
        }
    }
    out
}

fn sample_band_x<R: Rng>(cost: &CostModel, rng: &mut R, lo: f64, hi: f64, floor: &SamplingFloor) -> Option<Vec<f64>> {
    for _ in 0..MAX_REJECTIONS {
        let x = sample_x(cost, rng, hi, floor)?;
        if cost.eval_shifted(&x) >= lo {
            return Some(x);
        }
    }
    None
}
