use serde::{Deserialize, Serialize};

use crate::analysis::lie::{assemble, lie_step, LemmaOneBreakdown, LieTable};
use crate::analysis::sets::{eval_gi, PracticalSetSpec};
use crate::cost::CostModel;
use crate::dynamics::{ProposedSystem, Trajectory};
use crate::error::{Error, Result};

/// Fewest samples accepted inside `[t1, t2]`.
pub const MIN_RESIDUAL_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    Trapezoid,
    /// Composite Simpson, closing with a 3/8 panel on an odd interval count.
    #[default]
    Simpson,
}

/// Integral of uniformly spaced samples.
pub fn integrate_samples(values: &[f64], h: f64, rule: Quadrature) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let intervals = n - 1;
    match rule {
        Quadrature::Trapezoid => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
        Quadrature::Simpson if intervals < 2 => integrate_samples(values, h, Quadrature::Trapezoid),
        Quadrature::Simpson => {
            let simpson_end = if intervals % 2 == 0 || intervals < 3 { intervals } else { intervals - 3 };
            let mut acc = 0.0;
            let mut k = 0;
            while k + 2 <= simpson_end {
                acc += h / 3.0 * (values[k] + 4.0 * values[k + 1] + values[k + 2]);
                k += 2;
            }
            if simpson_end < intervals {
                let v = &values[simpson_end..];
                acc += 3.0 * h / 8.0 * (v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3]);
            }
            acc
        }
    }
}

/// Quadrature rule and sampling for [`lemma1_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualOptions {
    pub rule: Quadrature,
    /// Use every `stride`-th stored sample, so that quadrature resolution can
    /// be held fixed while the trajectory itself is integrated more finely.
    pub stride: usize,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self { rule: Quadrature::Simpson, stride: 1 }
    }
}

impl ResidualOptions {
    pub fn new(rule: Quadrature, stride: usize) -> Self {
        Self { rule, stride }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub which: usize,
    pub t1: f64,
    pub t2: f64,
    pub samples: usize,
    pub g_t1: f64,
    pub g_t2: f64,
    pub r1_t1: f64,
    pub r1_t2: f64,
    pub integral: f64,
    /// `|g(t2) − g(t1) − R1(t2) + R1(t1) − ∫ (F^g + R2) dt|`.
    pub residual: f64,
}

/// Decomposition at the given stored samples.
pub fn breakdown_along(
    trajectory: &Trajectory,
    cost: &CostModel,
    system: &ProposedSystem,
    spec: &PracticalSetSpec,
    which: usize,
    indices: &[usize],
) -> Result<Vec<LemmaOneBreakdown>> {
    use rayon::prelude::*;
    let g = |p: &[f64]| eval_gi(spec, cost, p, which);
    indices
        .par_iter()
        .map(|&k| {
            let theta = &trajectory.states[k];
            let table = LieTable::compute(system, &g, theta, lie_step(system, theta));
            let b = assemble(&table, system.bank(), trajectory.t[k]);
            if b.is_finite() {
                Ok(b)
            } else {
                Err(Error::NonFinite(format!("Lie derivatives of g{which} at t = {}", trajectory.t[k])))
            }
        })
        .collect()
}

/// Defect of `g(θ(t2)) = g(θ(t1)) + R1(t2) − R1(t1) + ∫ (F^g + R2) dt` on a
/// trajectory of the dithered system.
///
/// `t1` snaps to the last stored sample not after it and `t2` to the last
/// quadrature node (every `stride`-th sample from `t1`) not after it. The
/// grid must be uniform, as produced by the fixed-step integrator.
#[allow(clippy::too_many_arguments)]
pub fn lemma1_residual(
    trajectory: &Trajectory,
    cost: &CostModel,
    system: &ProposedSystem,
    spec: &PracticalSetSpec,
    which: usize,
    t1: f64,
    t2: f64,
    options: ResidualOptions,
) -> Result<ResidualReport> {
    if !(1..=3).contains(&which) {
        return Err(Error::InvalidParameter(format!("constraint index {which} out of range 1..=3")));
    }
    if options.stride == 0 {
        return Err(Error::InvalidParameter("quadrature stride must be positive".into()));
    }
    if !(t1 < t2) {
        return Err(Error::InvalidParameter(format!("need t1 < t2, got [{t1}, {t2}]")));
    }
    if trajectory.is_empty() || t2 > trajectory.final_time() + 1e-12 {
        return Err(Error::Refused(format!("trajectory ends before t2 = {t2}")));
    }
    let first = trajectory.index_at(t1 + 1e-12);
    let last = trajectory.index_at(t2 + 1e-12);
    let indices: Vec<usize> = (first..=last.max(first)).step_by(options.stride).collect();
    let samples = indices.len();
    if samples < MIN_RESIDUAL_SAMPLES {
        return Err(Error::Refused(format!(
            "only {samples} quadrature samples in [{t1}, {t2}]; at least {MIN_RESIDUAL_SAMPLES} are needed"
        )));
    }
    let (i1, i2) = (indices[0], indices[samples - 1]);
    let h = (trajectory.t[i2] - trajectory.t[i1]) / (samples - 1) as f64;
    let uniform = indices.windows(2).all(|w| ((trajectory.t[w[1]] - trajectory.t[w[0]]) - h).abs() <= 1e-9 * h);
    if !uniform {
        return Err(Error::Refused("residual quadrature needs a uniform time grid".into()));
    }
    let parts = breakdown_along(trajectory, cost, system, spec, which, &indices)?;
    let integrand: Vec<f64> = parts.iter().map(|b| b.f_g + b.r2).collect();
    let integral = integrate_samples(&integrand, h, options.rule);
    let g_t1 = eval_gi(spec, cost, &trajectory.states[i1], which);
    let g_t2 = eval_gi(spec, cost, &trajectory.states[i2], which);
    let r1_t1 = parts[0].r1;
    let r1_t2 = parts[samples - 1].r1;
    let residual = (g_t2 - g_t1 - (r1_t2 - r1_t1) - integral).abs();
    Ok(ResidualReport {
        which,
        t1: trajectory.t[i1],
        t2: trajectory.t[i2],
        samples,
        g_t1,
        g_t2,
        r1_t1,
        r1_t2,
        integral,
        residual,
    })
}
