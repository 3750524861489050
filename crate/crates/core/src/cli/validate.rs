use std::fmt;

use serde::Serialize;

use crate::analysis::{estimate_omega_star, y0_lower_bound, SamplingFloor};
use crate::cli::config::{a1_grid, ExperimentConfig};
use crate::cost::{estimate_a1_constants, probe_a1_degeneracy, A1Certificate};
use crate::generators::{check_c1_wronskian, check_vanishing_at_zero, log_grid, sample_c2_bounds, C2BoundReport, C2Grid};

/// Tolerance of the unit-Wronskian check.
pub const WRONSKIAN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub offending: Vec<String>,
}

impl ConditionCheck {
    fn pass(name: &str, detail: String) -> Self {
        Self { name: name.into(), passed: true, detail, offending: Vec::new() }
    }

    fn fail(name: &str, detail: String, offending: Vec<String>) -> Self {
        Self { name: name.into(), passed: false, detail, offending }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
    pub certificate: Option<A1Certificate>,
    pub y0_lower_bound: Option<f64>,
    pub y0: Option<f64>,
    pub omega_star: Option<f64>,
    pub omega: f64,
    pub bounds: Option<C2BoundReport>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Condition report")?;
        for c in &self.checks {
            writeln!(f, "  [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            for o in &c.offending {
                writeln!(f, "         at {o}")?;
            }
        }
        if let Some(c) = &self.certificate {
            writeln!(f, "  growth constants: m = {}, kappa = {:.9}, gamma = {:.9}", c.m, c.kappa, c.gamma)?;
        }
        if let (Some(b), Some(y0)) = (self.y0_lower_bound, self.y0) {
            writeln!(f, "  y0 = {y0} (lower bound {b})")?;
        }
        if let Some(w) = self.omega_star {
            writeln!(f, "  omega* = {w:.6e} (configured omega = {})", self.omega)?;
        }
        write!(f, "  overall: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

pub const C1_WRONSKIAN: &str = "C1 unit Wronskian";
pub const C1_VANISHING: &str = "C1 vanishing at zero";
pub const A1_GROWTH: &str = "A1 growth bounds";
pub const Y0_BOUND: &str = "y0 lower bound";
pub const C2_BOUNDS: &str = "C2 sampled bounds";
pub const OMEGA_STAR: &str = "omega* threshold";

/// Runs every condition check it can and reports each as PASS or FAIL.
pub fn validate_conditions(config: &ExperimentConfig) -> ValidationReport {
    let mut checks = Vec::new();
    let mut report = ValidationReport {
        checks: Vec::new(),
        certificate: None,
        y0_lower_bound: None,
        y0: None,
        omega_star: None,
        omega: config.dither.omega,
        bounds: None,
    };

    let pair = config.build_pair();
    match &pair {
        Ok(pair) => {
            let w = check_c1_wronskian(pair, &log_grid(1e-3, 10.0, 200), WRONSKIAN_TOL);
            checks.push(if w.passed {
                ConditionCheck::pass(C1_WRONSKIAN, format!("max residual {:.3e} on y in [1e-3, 10]", w.max_residual))
            } else {
                ConditionCheck::fail(
                    C1_WRONSKIAN,
                    format!("max residual {:.3e} exceeds {WRONSKIAN_TOL:e}", w.max_residual),
                    vec![format!("y = {}", w.at_y)],
                )
            });
            let v = check_vanishing_at_zero(pair);
            let (a, b) = pair.eval(0.0);
            checks.push(if v.passed {
                ConditionCheck::pass(C1_VANISHING, "F1(0) = F2(0) = 0 and max|F| shrinks toward 0".into())
            } else {
                let mut at = vec![format!("y = 0: F1 = {a}, F2 = {b}")];
                at.extend(v.envelope.iter().map(|(y, m)| format!("y = {y:e}: max|F| = {m:e}")));
                ConditionCheck::fail(C1_VANISHING, "pair does not vanish at y = 0".into(), at)
            });
        }
        Err(e) => {
            checks.push(ConditionCheck::fail(C1_WRONSKIAN, e.to_string(), Vec::new()));
            checks.push(ConditionCheck::fail(C1_VANISHING, e.to_string(), Vec::new()));
        }
    }

    let cost = config.build_cost();
    let cost = match cost {
        Ok(c) => Some(c),
        Err(e) => {
            for name in [A1_GROWTH, Y0_BOUND, C2_BOUNDS, OMEGA_STAR] {
                checks.push(ConditionCheck::fail(name, format!("cost: {e}"), Vec::new()));
            }
            None
        }
    };
    let Some(cost) = cost else {
        report.checks = checks;
        return report;
    };

    let certificate = estimate_a1_constants(&cost, cost.m(), &a1_grid(cost.domain()))
        .and_then(|cert| probe_a1_degeneracy(&cost, &cert).map(|_| cert));
    match &certificate {
        Ok(c) => checks.push(ConditionCheck::pass(
            A1_GROWTH,
            format!("m = {}, kappa = {:.9}, gamma = {:.9} on radius {}", c.m, c.kappa, c.gamma, c.domain_radius),
        )),
        Err(inf) => checks.push(ConditionCheck::fail(
            A1_GROWTH,
            format!("m = {}: {}", inf.m, inf.reason),
            vec![format!("x = {:?} (ratio {:e})", inf.at, inf.ratio)],
        )),
    }
    let certificate = certificate.ok();
    report.certificate = certificate;
    let cost = match certificate {
        Some(c) => cost.with_certificate(c),
        None => cost,
    };

    let spec = config.build_spec(certificate.map(|c| c.kappa));
    match (&spec, &certificate) {
        (Ok(spec), Some(cert)) => {
            let bound = y0_lower_bound(cert.kappa, spec.epsilon);
            report.y0_lower_bound = Some(bound);
            report.y0 = Some(spec.y0);
            checks.push(match spec.validate_for(&cost) {
                Ok(()) => ConditionCheck::pass(Y0_BOUND, format!("y0 = {} > {bound}", spec.y0)),
                Err(e) => ConditionCheck::fail(Y0_BOUND, e.to_string(), vec![format!("y0 = {}", spec.y0)]),
            });
        }
        (Ok(_), None) => checks.push(ConditionCheck::fail(Y0_BOUND, "no growth certificate for the cost".into(), Vec::new())),
        (Err(e), _) => checks.push(ConditionCheck::fail(Y0_BOUND, e.to_string(), Vec::new())),
    }

    let inputs = (|| {
        let pair = pair.clone()?;
        let bank = config.build_bank()?;
        let spec = spec.clone()?;
        Ok::<_, crate::Error>((pair, bank, spec))
    })();
    let bounds = inputs.and_then(|(pair, bank, spec)| {
        let grid = C2Grid::sample(&spec, &cost, config.analysis.c2_samples, &SamplingFloor::default(), config.seed);
        sample_c2_bounds(&pair, &cost, &spec, &bank, &grid).map(|r| (r, spec))
    });
    match bounds {
        Ok((b, spec)) => {
            let detail = b
                .constraints
                .iter()
                .map(|c| format!("g{}: c1 = {:.3e}, c2 = {:.3e}, b = {:.3e}", c.which, c.c1, c.c2, c.b))
                .collect::<Vec<_>>()
                .join("; ");
            checks.push(if b.valid {
                ConditionCheck::pass(C2_BOUNDS, format!("{} samples; {detail}", b.sample_count))
            } else {
                let mut at: Vec<String> = b.non_finite_at.iter().take(5).map(|p| format!("{p:?} (non-finite)")).collect();
                at.extend(
                    b.constraints
                        .iter()
                        .filter(|c| !(c.b > 0.0))
                        .map(|c| format!("g{}: b = {} at {:?}", c.which, c.b, c.b_at)),
                );
                ConditionCheck::fail(C2_BOUNDS, detail, at)
            });
            match estimate_omega_star(&b, spec.delta) {
                Ok(w) if w.is_finite() => {
                    report.omega_star = Some(w);
                    checks.push(ConditionCheck::pass(OMEGA_STAR, format!("omega* = {w:.6e} with delta = {}", spec.delta)));
                }
                Ok(w) => checks.push(ConditionCheck::fail(OMEGA_STAR, format!("omega* = {w}"), Vec::new())),
                Err(e) => checks.push(ConditionCheck::fail(OMEGA_STAR, e.to_string(), Vec::new())),
            }
            report.bounds = Some(b);
        }
        Err(e) => {
            checks.push(ConditionCheck::fail(C2_BOUNDS, e.to_string(), Vec::new()));
            checks.push(ConditionCheck::fail(OMEGA_STAR, "needs the sampled bounds".into(), Vec::new()));
        }
    }

    report.checks = checks;
    report
}
