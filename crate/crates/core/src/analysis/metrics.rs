use std::collections::VecDeque;

use serde::Serialize;

use crate::analysis::sets::{eval_g, PracticalSetSpec};
use crate::cost::{distance, CostModel};
use crate::dynamics::{Termination, Trajectory};
use crate::error::{Error, Result};

/// Slack allowed on consecutive `z` samples before counting a rise.
pub const MONOTONE_SLACK: f64 = 1e-10;
/// Fraction of `z̃(0)·e^(−t)` that `z̃(t)` must stay above.
pub const FLOOR_FRACTION: f64 = 0.999;

/// `(t_k, max_{t_k − window ≤ t_i ≤ t_k} |u(t_i)|)` for every sample.
pub fn control_envelope(trajectory: &Trajectory, window: f64) -> Result<Vec<(f64, f64)>> {
    if trajectory.len() < 2 {
        return Err(Error::Refused("trajectory has fewer than 2 samples".into()));
    }
    let dt = trajectory.t[1] - trajectory.t[0];
    if !(window >= dt) {
        return Err(Error::Refused(format!("window {window} spans fewer than 2 samples (spacing {dt})")));
    }
    // an aborted final sample logs NaN inputs, which `f64::max` skips
    let mags = trajectory.input_magnitudes();
    let mut out = Vec::with_capacity(mags.len());
    let mut deque: VecDeque<usize> = VecDeque::new();
    for (k, &m) in mags.iter().enumerate() {
        while deque.back().is_some_and(|&i| mags[i] <= m) {
            deque.pop_back();
        }
        deque.push_back(k);
        let t = trajectory.t[k];
        while deque.front().is_some_and(|&i| trajectory.t[i] < t - window) {
            deque.pop_front();
        }
        out.push((t, mags[deque[0]]));
    }
    Ok(out)
}

/// Envelope value at the last sample not after `t`.
pub fn envelope_at(envelope: &[(f64, f64)], t: f64) -> f64 {
    let k = envelope.partition_point(|&(s, _)| s <= t + 1e-12);
    envelope[k.saturating_sub(1)].1
}

/// Mean of the envelope over `[from, to]`.
pub fn envelope_mean(envelope: &[(f64, f64)], from: f64, to: f64) -> f64 {
    let vals: Vec<f64> = envelope.iter().filter(|(t, _)| *t >= from && *t <= to).map(|&(_, v)| v).collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub final_time: f64,
    pub final_distance: f64,
    /// `z − J(x*)` at the end, for systems carrying `z`.
    pub final_z_gap: Option<f64>,
    pub monotonicity_violations: usize,
    pub floor_violations: usize,
    /// Samples outside `Δε` (needs a set spec).
    pub delta_exits: usize,
    /// Largest `g_i` seen, per constraint.
    pub max_g: Option<[f64; 3]>,
    pub termination: Termination,
}

/// Summary of a trajectory against the validation metadata.
///
/// States are read as `x = s[..n]`, `z = s[n]` when present; any further
/// components (a phase) are ignored. `spec` enables the `Δε` checks.
pub fn convergence_report(trajectory: &Trajectory, cost: &CostModel, spec: Option<&PracticalSetSpec>) -> ConvergenceReport {
    let n = cost.dim();
    let j_star = cost.j_star();
    let last = trajectory.final_state();
    let has_z = last.len() > n;
    let mut mono = 0;
    let mut floor = 0;
    let mut exits = 0;
    let mut max_g: Option<[f64; 3]> = None;
    if has_z {
        let z0 = trajectory.states[0][n] - j_star;
        for k in 0..trajectory.len() {
            let s = &trajectory.states[k];
            if k > 0 && s[n] >= trajectory.states[k - 1][n] + MONOTONE_SLACK {
                mono += 1;
            }
            if s[n] - j_star < FLOOR_FRACTION * z0 * (-trajectory.t[k]).exp() {
                floor += 1;
            }
            if let Some(spec) = spec {
                match eval_g(spec, cost, &s[..=n]) {
                    Ok(g) => {
                        if g.iter().any(|&v| v > spec.epsilon) {
                            exits += 1;
                        }
                        let m = max_g.get_or_insert([f64::NEG_INFINITY; 3]);
                        for i in 0..3 {
                            m[i] = m[i].max(g[i]);
                        }
                    }
                    Err(_) => exits += 1,
                }
            }
        }
    }
    ConvergenceReport {
        final_time: trajectory.final_time(),
        final_distance: distance(&last[..n], cost.x_star()),
        final_z_gap: has_z.then(|| last[n] - j_star),
        monotonicity_violations: mono,
        floor_violations: floor,
        delta_exits: exits,
        max_g,
        termination: trajectory.termination,
    }
}

/// `sup_{t ≤ t_max} ‖x_a(t) − x_b(t)‖` over the first `n` components, with
/// `b` linearly interpolated onto the sample times of `a`.
pub fn sup_deviation(a: &Trajectory, b: &Trajectory, n: usize, t_max: f64) -> f64 {
    let mut sup: f64 = 0.0;
    let mut j = 0;
    for (k, &t) in a.t.iter().enumerate() {
        if t > t_max + 1e-12 || t > b.final_time() + 1e-12 {
            break;
        }
        while j + 1 < b.len() && b.t[j + 1] <= t {
            j += 1;
        }
        let xb: Vec<f64> = if j + 1 < b.len() && b.t[j] < t {
            let w = (t - b.t[j]) / (b.t[j + 1] - b.t[j]);
            (0..n).map(|i| b.states[j][i] * (1.0 - w) + b.states[j + 1][i] * w).collect()
        } else {
            b.states[j][..n].to_vec()
        };
        sup = sup.max(distance(&a.states[k][..n], &xb));
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::Domain;

    fn traj(t: Vec<f64>, states: Vec<Vec<f64>>, inputs: Vec<Vec<f64>>) -> Trajectory {
        Trajectory { t, states, inputs, rhs_evaluations: 0, termination: Termination::Completed }
    }

    #[test]
    fn envelope_is_trailing_max() {
        let t: Vec<f64> = (0..6).map(|k| k as f64).collect();
        let u = vec![vec![1.0], vec![-3.0], vec![2.0], vec![0.5], vec![0.1], vec![0.0]];
        let tr = traj(t, vec![vec![0.0]; 6], u);
        let env = control_envelope(&tr, 1.0).unwrap();
        let vals: Vec<f64> = env.iter().map(|e| e.1).collect();
        assert_eq!(vals, vec![1.0, 3.0, 3.0, 2.0, 0.5, 0.1]);
        assert!(control_envelope(&tr, 0.5).is_err());
        assert_eq!(envelope_at(&env, 2.5), 3.0);
    }

    #[test]
    fn zero_input_gives_zero_envelope() {
        let t: Vec<f64> = (0..10).map(|k| k as f64 * 0.1).collect();
        let tr = traj(t, vec![vec![1.0, 2020.0]; 10], vec![vec![0.0]; 10]);
        assert!(control_envelope(&tr, 0.3).unwrap().iter().all(|e| e.1 == 0.0));
    }

    #[test]
    fn averaged_run_reaches_closed_form_errors() {
        use crate::dynamics::{integrate, IntegrationOptions, LieApproxSystem};
        let cost = CostModel::quadratic_shifted(vec![1.0], 1.0, 2020.0, Domain::new(vec![1.0], 4.0).unwrap()).unwrap();
        let sys = LieApproxSystem::new(cost.objective(), std::f64::consts::PI).unwrap();
        let tr = integrate(&sys, &[3.0, 2024.0], IntegrationOptions::new(20.0, 64)).unwrap();
        let r = convergence_report(&tr, &cost, None);
        // x − 1 = 2e^(−t), z − J(x*) = 6e^(−t) − 2e^(−2t)
        let t = 20.0f64;
        let gap = 6.0 * (-t).exp() - 2.0 * (-2.0 * t).exp();
        assert!((r.final_distance - 2.0 * (-t).exp()).abs() <= 1e-12, "{}", r.final_distance);
        assert!((r.final_z_gap.unwrap() - gap).abs() <= 1e-10, "{:?}", r.final_z_gap);
    }

    #[test]
    fn report_counts_rises_and_floor_breaks() {
        let cost = CostModel::quadratic_shifted(vec![1.0], 1.0, 2020.0, Domain::new(vec![1.0], 4.0).unwrap()).unwrap();
        let t = vec![0.0, 1.0, 2.0];
        let states = vec![vec![3.0, 2024.0], vec![2.0, 2024.5], vec![1.0, 2020.01]];
        let r = convergence_report(&traj(t, states, vec![vec![0.0]; 3]), &cost, None);
        assert_eq!(r.monotonicity_violations, 1);
        assert_eq!(r.floor_violations, 1);
        assert_eq!(r.final_distance, 0.0);
        assert!((r.final_z_gap.unwrap() - 0.01).abs() < 1e-9);
    }

    #[test]
    fn deviation_interpolates() {
        let a = traj(vec![0.0, 0.5, 1.0], vec![vec![0.0], vec![1.0], vec![0.0]], vec![vec![0.0]; 3]);
        let b = traj(vec![0.0, 1.0], vec![vec![0.0], vec![0.0]], vec![vec![0.0]; 2]);
        assert_eq!(sup_deviation(&a, &b, 1, 1.0), 1.0);
        assert_eq!(sup_deviation(&a, &b, 1, 0.25), 0.0);
    }
}
