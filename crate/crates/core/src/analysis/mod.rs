//! Practical sets, the averaging decomposition and its residual, the
//! invariance frequency threshold, and trajectory metrics.

pub mod lie;
mod metrics;
mod residual;
mod sets;

pub use lie::{assemble, default_step, lemma1_terms, lie_derivative, lie_step, ControlAffineFields, Field, LemmaOneBreakdown, LemmaOneTerms, LieTable};
pub use metrics::{
    control_envelope, convergence_report, envelope_at, envelope_mean, sup_deviation, ConvergenceReport, FLOOR_FRACTION,
    MONOTONE_SLACK,
};
pub use residual::{breakdown_along, integrate_samples, lemma1_residual, Quadrature, ResidualOptions, ResidualReport, MIN_RESIDUAL_SAMPLES};
pub use sets::{
    closed_form_fg, eval_g, eval_gi, in_delta, sample_constraint_band, sample_delta, y0_lower_bound, Level, Membership,
    PracticalSetSpec, SamplingFloor, AUTO_Y0_MARGIN,
};

use crate::error::{Error, Result};
use crate::generators::C2BoundReport;

/// `max_i max{(2·c1_i/δ)², (c2_i/b_i)²}`.
pub fn estimate_omega_star(report: &C2BoundReport, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let mut omega: f64 = 0.0;
    for c in &report.constraints {
        if !(c.b > 0.0) {
            return Err(Error::HypothesesUnmet(format!("b for g{} is {} (must be positive)", c.which, c.b)));
        }
        if !c.c1.is_finite() || !c.c2.is_finite() {
            return Err(Error::HypothesesUnmet(format!("remainder bounds for g{} are not finite", c.which)));
        }
        let first = (2.0 * c.c1 / delta).powi(2);
        let second = if c.c2 == 0.0 { 0.0 } else { (c.c2 / c.b).powi(2) };
        omega = omega.max(first).max(second);
    }
    Ok(omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DitherBank;
    use crate::generators::ConstraintBounds;

    fn bounds(which: usize, c1: f64, c2: f64, b: f64) -> ConstraintBounds {
        ConstraintBounds {
            which,
            c1,
            c2,
            b,
            sample_count: 1,
            band_count: 1,
            sum_sup_first: 0.0,
            sum_sup_second: 0.0,
            sum_sup_drift_first: 0.0,
            sum_sup_drift_second: 0.0,
            sum_sup_third: 0.0,
            b_at: None,
        }
    }

    fn report(c: Vec<ConstraintBounds>) -> C2BoundReport {
        C2BoundReport {
            dither: DitherBank::new(2.0, vec![1]).unwrap().bounds(),
            constraints: c,
            sample_count: 1,
            non_finite_at: vec![],
            valid: true,
        }
    }

    #[test]
    fn omega_star_arithmetic() {
        assert_eq!(estimate_omega_star(&report(vec![bounds(1, 1.0, 2.0, 4.0)]), 0.5).unwrap(), 16.0);
        let zero = report((1..=3).map(|i| bounds(i, 0.0, 0.0, 1.0)).collect());
        assert_eq!(estimate_omega_star(&zero, 0.25).unwrap(), 0.0);
        assert!(matches!(
            estimate_omega_star(&report(vec![bounds(1, 1.0, 2.0, 0.0)]), 0.5),
            Err(Error::HypothesesUnmet(_))
        ));
    }
}
