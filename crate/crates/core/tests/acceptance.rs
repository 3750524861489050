use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use esc_lab::analysis::{
    breakdown_along, in_delta, lemma1_residual, sample_delta, Level, Quadrature, ResidualOptions, SamplingFloor,
};
use esc_lab::cli::{
    a1_grid, run_experiment, simulate, sweep_omega, validate_conditions, Experiment, ExperimentConfig, RunStatus,
    SystemKind, SystemSummary,
};
use esc_lab::cost::estimate_a1_constants;
use esc_lab::dynamics::{
    integrate, integrate_with, DitherBank, IntegrationOptions, ProposedSystem, Trajectory, TruncationReason,
};
use esc_lab::generators::{check_c1_wronskian, log_grid, make_pair};

type Check = Result<String, String>;

fn example1() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example1.toml");
    ExperimentConfig::load(&path).unwrap()
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn criterion(id: usize, name: &'static str, budget: Duration, check: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let result = check();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let (passed, mut detail) = match result {
        Ok(d) => (in_time, d),
        Err(d) => (false, d),
    };
    detail.push_str(&format!("; {:.2} s of {} s", elapsed.as_secs_f64(), budget.as_secs()));
    if !in_time {
        detail.push_str(" (over budget)");
    }
    Outcome { id, name, passed, detail }
}

fn wronskian() -> Check {
    let grid = log_grid(1e-3, 10.0, 2000);
    let mut worst = 0.0f64;
    for family in ["suttner_dashkovskiy", "grushkovskaya_bounded"] {
        let report = check_c1_wronskian(&make_pair(family, &[]).map_err(|e| e.to_string())?, &grid, 1e-8);
        if !report.passed {
            return Err(format!("{family}: residual {:e} at y = {}", report.max_residual, report.at_y));
        }
        worst = worst.max(report.max_residual);
    }
    Ok(format!("max |W - 1| = {worst:.2e}"))
}

fn growth_constants() -> Check {
    let exp = example1().resolve().map_err(|e| e.to_string())?;
    let cost = &exp.cost;
    let cert = estimate_a1_constants(cost, 1.0, &a1_grid(cost.domain())).map_err(|e| e.reason)?;
    // ‖∇J‖² = 4(x − 1)² = 2·J̃ for the shifted quadratic
    let ok = (cert.kappa - 2.0).abs() <= 1e-6 && (cert.gamma - 2.0).abs() <= 1e-6 && cert.m == 1.0;
    ensure(ok, format!("m = {}, kappa = {:.9}, gamma = {:.9}", cert.m, cert.kappa, cert.gamma))
}

fn gradient_flow() -> Check {
    let mut cfg = example1();
    cfg.integration.t_end = 10.0;
    let exp = cfg.resolve().map_err(|e| e.to_string())?;
    let (sys, s0) = exp.build_system(SystemKind::LieApprox, &exp.bank).map_err(|e| e.to_string())?;
    let traj = integrate(sys.as_ref(), &s0, exp.options).map_err(|e| e.to_string())?;
    let exact = 1.0 + 2.0 * (-10.0f64).exp();
    let err = (traj.final_state()[0] - exact).abs();
    ensure(traj.termination.is_completed() && err <= 1e-6, format!("|x(10) - (1 + 2e^-10)| = {err:.2e}"))
}

fn summaries(systems: &[&str], t_end: f64) -> Result<Vec<SystemSummary>, String> {
    let mut cfg = example1();
    cfg.systems = systems.iter().map(|s| s.to_string()).collect();
    cfg.integration.t_end = t_end;
    cfg.analysis.residual = false;
    let exp = cfg.resolve().map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    Ok(run_experiment(&exp, dir.path()).map_err(|e| e.to_string())?.systems)
}

fn example_one_reproduction() -> Check {
    let s = summaries(&["proposed"], 40.0)?.remove(0);
    let (Some(c), Some(env)) = (&s.convergence, &s.envelope) else {
        return Err(format!("no report: {:?}", s.message));
    };
    let detail = format!(
        "status {:?}, exits {}, z rises {}, floor violations {}, |x - 1| = {:.2e}, envelope {:.3e} -> {:.3e}",
        s.status, c.delta_exits, c.monotonicity_violations, c.floor_violations, c.final_distance, env.initial, env.last
    );
    let ok = s.status == RunStatus::Completed
        && (c.final_time - 40.0).abs() < 1e-9
        && c.delta_exits == 0
        && c.monotonicity_violations == 0
        && c.floor_violations == 0
        && c.final_distance <= 0.05
        && env.last <= 0.1 * env.initial;
    ensure(ok, detail)
}

fn baseline_contrast() -> Check {
    let runs = summaries(&["suttner", "grushkovskaya"], 40.0)?;
    let find = |name: &str| runs.iter().find(|s| s.system == name).ok_or(format!("{name} missing"));
    let sut = find("suttner")?;
    let gru = find("grushkovskaya")?;
    let speed = sut.phase_speed.as_ref().ok_or("no phase speed")?;
    let underflow = matches!(
        sut.termination.and_then(|t| t.truncation()),
        Some(TruncationReason::PhaseStepUnderflow { .. })
    );
    let env = gru.envelope.as_ref().ok_or("no envelope")?;
    let detail = format!(
        "suttner phase speed x{:.3e} ({}); grushkovskaya late min {:.3} vs plateau {:.3}",
        speed.ratio,
        sut.message.as_deref().unwrap_or("completed"),
        env.late_min,
        env.plateau
    );
    let ok = (speed.ratio > 1e3 || underflow)
        && gru.status == RunStatus::Completed
        && env.plateau > 0.0
        && env.late_min >= 0.5 * env.plateau;
    ensure(ok, detail)
}

fn averaging_order() -> Check {
    let mut cfg = example1();
    cfg.integration.t_end = 5.0;
    let exp = cfg.resolve().map_err(|e| e.to_string())?;
    let table = sweep_omega(&exp, &[25.0, 100.0, 400.0]).map_err(|e| e.to_string())?;
    let d = table.sup_deviations();
    let ratios = [d[1] / d[0], d[2] / d[1]];
    let detail = format!("D = {:.3e}, {:.3e}, {:.3e}; ratios {:.3}, {:.3}", d[0], d[1], d[2], ratios[0], ratios[1]);
    ensure(ratios.iter().all(|r| *r <= 0.75), detail)
}

fn lemma_identity() -> Check {
    let exp = example1().resolve().map_err(|e| e.to_string())?;
    let x0 = [3.0, 2024.0];
    let residual = |omega: f64, spp: usize, stride: usize, which: usize| -> Result<(f64, Trajectory, ProposedSystem), String> {
        let bank = DitherBank::new(omega, vec![1]).map_err(|e| e.to_string())?;
        let sys = ProposedSystem::new(exp.cost.objective(), exp.pair, bank).map_err(|e| e.to_string())?;
        let traj = integrate(&sys, &x0, IntegrationOptions::new(1.0, spp)).map_err(|e| e.to_string())?;
        let opts = ResidualOptions::new(Quadrature::Simpson, stride);
        let r = lemma1_residual(&traj, &exp.cost, &sys, &exp.spec, which, 0.0, 1.0, opts).map_err(|e| e.to_string())?;
        Ok((r.residual, traj, sys))
    };

    let steps: Vec<f64> = [64, 256, 1024]
        .into_par_iter()
        .map(|spp| residual(2.0, spp, 1, 1).map(|r| r.0))
        .collect::<Result<_, _>>()?;
    let omegas: Vec<f64> = [25.0, 100.0, 400.0]
        .into_par_iter()
        .map(|w| residual(w, 1024, 16, 1).map(|r| r.0))
        .collect::<Result<_, _>>()?;
    let (g2, traj, sys) = residual(2.0, 256, 1, 2)?;
    let all: Vec<usize> = (0..traj.len()).collect();
    let parts = breakdown_along(&traj, &exp.cost, &sys, &exp.spec, 2, &all).map_err(|e| e.to_string())?;
    let r_terms_zero = parts.iter().all(|b| b.r1 == 0.0 && b.r2 == 0.0);

    let detail = format!(
        "g1 at 64/256/1024 spp: {:.2e}, {:.2e}, {:.2e}; g1 at w = 25/100/400: {:.2e}, {:.2e}, {:.2e}; g2 {:.2e} with R = 0: {}",
        steps[0], steps[1], steps[2], omegas[0], omegas[1], omegas[2], g2, r_terms_zero
    );
    let ok = steps[1] <= 1e-3
        && steps.windows(2).all(|w| w[1] < w[0])
        && omegas.windows(2).all(|w| w[1] < w[0])
        && r_terms_zero
        && g2 <= 1e-6;
    ensure(ok, detail)
}

/// Horizon of the invariance runs at `2ω*`.
const INVARIANCE_HORIZON: f64 = 5.0;

fn omega_star_pipeline() -> Check {
    let cfg = example1();
    let report = validate_conditions(&cfg);
    let omega_star = report.omega_star.filter(|w| w.is_finite()).ok_or(format!("{report}"))?;
    let exp = cfg.resolve().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts = sample_delta(&exp.spec, &exp.cost, Level::Zero, 20, &SamplingFloor::default(), &mut rng);
    if starts.len() < 20 {
        return Err(format!("only {} initial conditions drawn", starts.len()));
    }
    let omega = 2.0 * omega_star;
    let bank = DitherBank::new(omega, vec![1]).map_err(|e| e.to_string())?;
    let sys = ProposedSystem::new(exp.cost.objective(), exp.pair, bank).map_err(|e| e.to_string())?;
    let opts = IntegrationOptions::new(INVARIANCE_HORIZON, cfg.integration.steps_per_period);
    let exits: Vec<usize> = starts
        .par_iter()
        .map(|s0| {
            let mut exits = 0usize;
            let mut observe = |_t: f64, s: &[f64], _u: &[f64]| {
                if !in_delta(&exp.spec, &exp.cost, s, Level::Epsilon).member {
                    exits += 1;
                }
            };
            match integrate_with(&sys, s0, opts, &mut observe) {
                Ok(stats) if stats.termination.is_completed() => exits,
                _ => usize::MAX,
            }
        })
        .collect();
    let bad = exits.iter().filter(|e| **e > 0).count();
    let detail = format!(
        "omega* = {omega_star:.4e}; {} starts at omega = {omega:.4e} over [0, {INVARIANCE_HORIZON}], {bad} left the set",
        starts.len()
    );
    ensure(bad == 0, detail)
}

fn metadata_audit() -> Check {
    let mut cfg = example1();
    cfg.integration.t_end = 10.0;
    cfg.integration.max_steps = 100_000;
    let clean = cfg.resolve().map_err(|e| e.to_string())?;
    let mut poisoned = clean.clone();
    poisoned.cost = clean.cost.with_poisoned_metadata(vec![-123.0], f64::NAN);
    let bits = |exp: &Experiment, kind: SystemKind| -> Result<Vec<u64>, String> {
        let (sys, s0) = exp.build_system(kind, &exp.bank).map_err(|e| e.to_string())?;
        let t = simulate(sys.as_ref(), &s0, exp.options, 100_000).map_err(|e| e.to_string())?;
        Ok(t.t.iter().chain(t.states.iter().flatten()).chain(t.inputs.iter().flatten()).map(|v| v.to_bits()).collect())
    };
    let mut differing = Vec::new();
    for kind in SystemKind::ALL {
        if bits(&clean, kind)? != bits(&poisoned, kind)? {
            differing.push(kind.name());
        }
    }
    ensure(differing.is_empty(), format!("trajectories differing after poisoning: {differing:?}"))
}

#[test]
fn primary_criteria() {
    let secs = Duration::from_secs;
    let outcomes = [
        criterion(1, "unit Wronskian of both pairs", secs(1), wronskian),
        criterion(2, "growth constants of the example cost", secs(1), growth_constants),
        criterion(3, "averaged system follows the gradient flow", secs(1), gradient_flow),
        criterion(4, "example 1 reproduction", secs(30), example_one_reproduction),
        criterion(5, "baseline contrast", secs(60), baseline_contrast),
        criterion(6, "averaging order in omega", secs(120), averaging_order),
        criterion(7, "averaging identity residual", secs(60), lemma_identity),
        criterion(8, "omega* threshold and invariance", secs(300), omega_star_pipeline),
        criterion(9, "minimizer metadata audit", secs(60), metadata_audit),
    ];
    // straight to the handle so the lines survive output capture
    let mut err = std::io::stderr().lock();
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        writeln!(err, "{status} [{}] {}: {}", o.id, o.name, o.detail).unwrap();
    }
    drop(err);
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
