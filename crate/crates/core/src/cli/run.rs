use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    control_envelope, convergence_report, envelope_at, envelope_mean, eval_gi, lemma1_residual, sup_deviation,
    ConvergenceReport, ResidualOptions, ResidualReport,
};
use crate::cli::config::{Experiment, SystemKind};
use crate::dynamics::{
    integrate, integrate_thinned, DitherBank, EscSystem, IntegrationOptions, SuttnerSystem, Termination, Trajectory,
};
use crate::error::{Error, Result};

/// Fixed-step runs longer than this many samples are thinned in memory.
pub const FULL_STORAGE_LIMIT: usize = 4_000_000;

/// Process exit status: 0 all good, 1 validation failure, 2 integration abort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Success = 0,
    ValidationFailure = 1,
    IntegrationAbort = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Stopped by the step budget or phase-step underflow.
    Truncated,
    /// Left the state domain or produced non-finite values.
    Aborted,
    /// Could not be set up.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeSummary {
    pub window: f64,
    /// Envelope once the first full window has elapsed.
    pub initial: f64,
    pub last: f64,
    /// Mean over the second half of the run.
    pub plateau: f64,
    /// Minimum over the last quarter of the run.
    pub late_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSpeedSummary {
    pub initial: f64,
    pub last: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSummary {
    pub system: String,
    pub status: RunStatus,
    pub message: Option<String>,
    pub csv: Option<PathBuf>,
    pub csv_rows: usize,
    pub samples_in_memory: usize,
    pub rhs_evaluations: usize,
    pub termination: Option<Termination>,
    pub convergence: Option<ConvergenceReport>,
    /// `max_t ‖u(t)‖_∞` over the stored samples.
    pub control_sup: Option<f64>,
    pub envelope: Option<EnvelopeSummary>,
    pub phase_speed: Option<PhaseSpeedSummary>,
    pub residuals: Vec<ResidualReport>,
    pub residual_errors: Vec<String>,
}

impl SystemSummary {
    fn failed(kind: SystemKind, err: &Error) -> Self {
        Self {
            system: kind.name().to_string(),
            status: RunStatus::Failed,
            message: Some(err.to_string()),
            csv: None,
            csv_rows: 0,
            samples_in_memory: 0,
            rhs_evaluations: 0,
            termination: None,
            convergence: None,
            control_sup: None,
            envelope: None,
            phase_speed: None,
            residuals: Vec::new(),
            residual_errors: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub cost: String,
    pub pair: String,
    pub omega: f64,
    pub multipliers: Vec<u32>,
    pub t_end: f64,
    pub steps_per_period: usize,
    pub y0: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub systems: Vec<SystemSummary>,
    pub exit_status: ExitStatus,
}

fn status_of(termination: &Termination) -> RunStatus {
    match termination.truncation() {
        None => RunStatus::Completed,
        Some(r) if r.is_abort() => RunStatus::Aborted,
        Some(_) => RunStatus::Truncated,
    }
}

fn exit_status<'a>(statuses: impl IntoIterator<Item = &'a RunStatus>) -> ExitStatus {
    statuses.into_iter().fold(ExitStatus::Success, |acc, s| {
        acc.max(match s {
            RunStatus::Aborted => ExitStatus::IntegrationAbort,
            RunStatus::Failed => ExitStatus::ValidationFailure,
            _ => ExitStatus::Success,
        })
    })
}

/// Full storage for fixed-step runs under [`FULL_STORAGE_LIMIT`] samples,
/// thinned storage capped at `capacity` otherwise.
pub fn simulate(system: &dyn EscSystem, state0: &[f64], opts: IntegrationOptions, capacity: usize) -> Result<Trajectory> {
    let estimate = opts.t_end / (system.fastest_period() / opts.steps_per_period as f64);
    if system.phase_rate(state0).is_none() && estimate <= FULL_STORAGE_LIMIT as f64 {
        integrate(system, state0, opts)
    } else {
        integrate_thinned(system, state0, opts, capacity)
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the trajectory CSV, keeping every k-th sample (and the last) so
/// that at most `max_rows` rows are written. Returns the row count.
pub fn write_trajectory_csv(path: &Path, experiment: &Experiment, kind: SystemKind, trajectory: &Trajectory, max_rows: usize) -> Result<usize> {
    let cost = &experiment.cost;
    let n = cost.dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    if kind.has_z() {
        header.push("z".into());
    }
    if kind == SystemKind::Suttner {
        header.push("Omega".into());
    }
    header.extend((1..=n).map(|i| format!("u_{i}")));
    if kind.has_z() {
        header.extend(["g1", "g2", "g3", "y"].map(String::from));
    }

    let len = trajectory.len();
    let k = len.div_ceil(max_rows.saturating_sub(1).max(1)).max(1);
    let mut rows: Vec<usize> = (0..len).step_by(k).collect();
    if rows.last() != Some(&(len - 1)) {
        rows.push(len - 1);
    }

    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for &i in &rows {
        record.clear();
        let s = &trajectory.states[i];
        record.push(fmt_f(trajectory.t[i]));
        record.extend(s.iter().map(|&v| fmt_f(v)));
        record.extend(trajectory.inputs[i].iter().map(|&v| fmt_f(v)));
        if kind.has_z() {
            let theta = &s[..=n];
            for which in 1..=3 {
                record.push(fmt_f(eval_gi(&experiment.spec, cost, theta, which)));
            }
            record.push(fmt_f(s[n] - cost.eval(&s[..n])));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(rows.len())
}

fn envelope_summary(trajectory: &Trajectory, window: f64) -> Result<EnvelopeSummary> {
    let env = control_envelope(trajectory, window)?;
    let t_end = trajectory.final_time();
    let late_min = env
        .iter()
        .filter(|(t, _)| *t >= 0.75 * t_end)
        .map(|&(_, v)| v)
        .fold(f64::INFINITY, f64::min);
    Ok(EnvelopeSummary {
        window,
        initial: envelope_at(&env, window),
        last: envelope_at(&env, t_end),
        plateau: envelope_mean(&env, 0.5 * t_end, t_end),
        late_min,
    })
}

fn run_system(experiment: &Experiment, kind: SystemKind, out_dir: &Path) -> SystemSummary {
    let cfg = &experiment.config;
    let built = experiment.build_system(kind, &experiment.bank);
    let (system, state0) = match built {
        Ok(b) => b,
        Err(e) => return SystemSummary::failed(kind, &e),
    };
    let trajectory = match simulate(system.as_ref(), &state0, experiment.options, cfg.output.max_rows) {
        Ok(t) => t,
        Err(e) => return SystemSummary::failed(kind, &e),
    };
    let csv_path = out_dir.join(format!("{}.csv", kind.name()));
    let (csv, csv_rows, mut message) = match write_trajectory_csv(&csv_path, experiment, kind, &trajectory, cfg.output.max_rows) {
        Ok(rows) => (Some(csv_path), rows, None),
        Err(e) => (None, 0, Some(e.to_string())),
    };
    let termination = trajectory.termination;
    if message.is_none() {
        message = termination.truncation().map(|r| format!("{} at t = {}", r.label(), trajectory.final_time()));
    }
    let convergence = Some(convergence_report(&trajectory, &experiment.cost, kind.has_z().then_some(&experiment.spec)));
    let control_sup = trajectory
        .inputs
        .iter()
        .flat_map(|u| u.iter().map(|v| v.abs()))
        .filter(|v| !v.is_nan())
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let envelope = cfg.analysis.envelope_window.and_then(|w| envelope_summary(&trajectory, w).ok());
    let phase_speed = (kind == SystemKind::Suttner)
        .then(|| SuttnerSystem::new(experiment.cost.objective(), experiment.bank.clone()).ok())
        .flatten()
        .map(|s| {
            let initial = s.phase_speed(&trajectory.states[0]);
            let last = s.phase_speed(trajectory.final_state());
            PhaseSpeedSummary { initial, last, ratio: last / initial }
        });

    let mut residuals = Vec::new();
    let mut residual_errors = Vec::new();
    if cfg.analysis.residual && kind == SystemKind::Proposed {
        match crate::dynamics::ProposedSystem::new(experiment.cost.objective(), experiment.pair, experiment.bank.clone()) {
            Ok(sys) => {
                let t2 = trajectory.final_time().min(1.0);
                for which in 1..=3 {
                    match lemma1_residual(&trajectory, &experiment.cost, &sys, &experiment.spec, which, 0.0, t2, ResidualOptions::default()) {
                        Ok(r) => residuals.push(r),
                        Err(e) => residual_errors.push(format!("g{which}: {e}")),
                    }
                }
            }
            Err(e) => residual_errors.push(e.to_string()),
        }
    }

    SystemSummary {
        system: kind.name().to_string(),
        status: status_of(&termination),
        message,
        csv,
        csv_rows,
        samples_in_memory: trajectory.len(),
        rhs_evaluations: trajectory.rhs_evaluations,
        termination: Some(termination),
        convergence,
        control_sup,
        envelope,
        phase_speed,
        residuals,
        residual_errors,
    }
}

/// Runs every requested system in parallel, writing one CSV per system and
/// `summary.json` into `out_dir`. A system that fails or aborts does not
/// stop the others.
pub fn run_experiment(experiment: &Experiment, out_dir: &Path) -> Result<ExperimentSummary> {
    fs::create_dir_all(out_dir)?;
    let systems: Vec<SystemSummary> = experiment.systems.par_iter().map(|&k| run_system(experiment, k, out_dir)).collect();
    let cfg = &experiment.config;
    let summary = ExperimentSummary {
        cost: cfg.cost.name.clone(),
        pair: cfg.pair.family.clone(),
        omega: experiment.bank.omega(),
        multipliers: experiment.bank.multipliers().to_vec(),
        t_end: experiment.options.t_end,
        steps_per_period: experiment.options.steps_per_period,
        y0: experiment.spec.y0,
        epsilon: experiment.spec.epsilon,
        seed: cfg.seed,
        exit_status: exit_status(systems.iter().map(|s| &s.status)),
        systems,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(out_dir.join("summary.json"), json + "\n")?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub omega: f64,
    /// `sup ‖x(t) − x̄(t)‖` against the averaged system on `[0, t_end]`.
    pub sup_deviation: f64,
    pub max_g: [f64; 3],
    pub delta_exits: usize,
    pub final_distance: f64,
    pub final_z_gap: f64,
    pub status: RunStatus,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub t_end: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn exit_status(&self) -> ExitStatus {
        exit_status(self.rows.iter().map(|r| &r.status))
    }

    pub fn sup_deviations(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sup_deviation).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "omega",
            "sup_deviation",
            "max_g1",
            "max_g2",
            "max_g3",
            "delta_exits",
            "final_distance",
            "final_z_gap",
            "status",
            "note",
        ])?;
        for r in &self.rows {
            let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            w.write_record([
                fmt_f(r.omega),
                fmt_f(r.sup_deviation),
                fmt_f(r.max_g[0]),
                fmt_f(r.max_g[1]),
                fmt_f(r.max_g[2]),
                r.delta_exits.to_string(),
                fmt_f(r.final_distance),
                fmt_f(r.final_z_gap),
                status,
                r.note.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sweep_row(experiment: &Experiment, reference: &Trajectory, omega: f64) -> SweepRow {
    let nan_row = |status, note: String| SweepRow {
        omega,
        sup_deviation: f64::NAN,
        max_g: [f64::NAN; 3],
        delta_exits: 0,
        final_distance: f64::NAN,
        final_z_gap: f64::NAN,
        status,
        note,
    };
    let run = || -> Result<Trajectory> {
        let bank = experiment.bank.with_omega(omega)?;
        let (system, state0) = experiment.build_system(SystemKind::Proposed, &bank)?;
        simulate(system.as_ref(), &state0, experiment.options, experiment.config.output.max_rows)
    };
    match run() {
        Err(e) => nan_row(RunStatus::Failed, e.to_string()),
        Ok(traj) => {
            let report = convergence_report(&traj, &experiment.cost, Some(&experiment.spec));
            let n = experiment.cost.dim();
            SweepRow {
                omega,
                sup_deviation: sup_deviation(&traj, reference, n, experiment.options.t_end),
                max_g: report.max_g.unwrap_or([f64::NAN; 3]),
                delta_exits: report.delta_exits,
                final_distance: report.final_distance,
                final_z_gap: report.final_z_gap.unwrap_or(f64::NAN),
                status: status_of(&traj.termination),
                note: traj
                    .termination
                    .truncation()
                    .map(|r| format!("{} at t = {}", r.label(), traj.final_time()))
                    .unwrap_or_default(),
            }
        }
    }
}

/// The proposed system at each `ω` against the averaged system, which is
/// integrated once on the grid of the largest `ω`.
pub fn sweep_omega(experiment: &Experiment, omegas: &[f64]) -> Result<SweepTable> {
    if omegas.len() < 2 {
        return Err(Error::InvalidParameter(format!("a sweep needs at least 2 omegas, got {}", omegas.len())));
    }
    if let Some(bad) = omegas.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter(format!("omega must be positive and finite, got {bad}")));
    }
    let fastest = omegas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bank: DitherBank = experiment.bank.with_omega(fastest)?;
    let (lie, state0) = experiment.build_system(SystemKind::LieApprox, &bank)?;
    let reference = integrate(lie.as_ref(), &state0, experiment.options)?;
    let rows = omegas.par_iter().map(|&w| sweep_row(experiment, &reference, w)).collect();
    Ok(SweepTable { t_end: experiment.options.t_end, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::ExperimentConfig;

    fn short(systems: &[&str], t_end: f64) -> Experiment {
        let mut cfg = ExperimentConfig::from_toml_str(include_str!("../../configs/example1.toml")).unwrap();
        cfg.systems = systems.iter().map(|s| s.to_string()).collect();
        cfg.integration.t_end = t_end;
        cfg.resolve().unwrap()
    }

    #[test]
    fn csv_rows_are_capped_and_keep_the_last_sample() {
        let exp = short(&["proposed"], 2.0);
        let (sys, s0) = exp.build_system(SystemKind::Proposed, &exp.bank).unwrap();
        let traj = simulate(sys.as_ref(), &s0, exp.options, 1000).unwrap();
        assert_eq!(traj.len(), 257);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let rows = write_trajectory_csv(&path, &exp, SystemKind::Proposed, &traj, 100).unwrap();
        assert!(rows <= 100, "{rows}");
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x_1,z,u_1,g1,g2,g3,y");
        assert_eq!(lines.len(), rows + 1);
        assert!(lines.last().unwrap().starts_with("2.0000000000000000e0,"));
        // 17 significant digits round-trip exactly
        let x: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(x, 3.0);
        let t1: f64 = lines[2].split(',').next().unwrap().parse().unwrap();
        assert_eq!(t1, traj.t[3]);
    }

    #[test]
    fn exit_status_takes_the_worst_outcome() {
        use RunStatus::*;
        assert_eq!(exit_status(&[Completed, Truncated]), ExitStatus::Success);
        assert_eq!(exit_status(&[Completed, Failed]), ExitStatus::ValidationFailure);
        assert_eq!(exit_status(&[Failed, Aborted, Completed]), ExitStatus::IntegrationAbort);
    }

    #[test]
    fn sweep_needs_two_omegas_and_repeats_exactly() {
        let exp = short(&["proposed"], 0.5);
        assert!(sweep_omega(&exp, &[4.0]).is_err());
        assert!(sweep_omega(&exp, &[4.0, -1.0]).is_err());
        let t = sweep_omega(&exp, &[4.0, 4.0]).unwrap();
        assert_eq!(t.rows[0], t.rows[1]);
        assert_eq!(t.rows[0].status, RunStatus::Completed);
        assert!(t.rows[0].sup_deviation > 0.0);
    }

    #[test]
    fn low_omega_near_the_boundary_is_flagged_not_fatal() {
        let mut cfg = ExperimentConfig::from_toml_str(include_str!("../../configs/example1.toml")).unwrap();
        cfg.systems = vec!["proposed".into()];
        cfg.integration.t_end = 3.0;
        // J~(x0) = 2.98, inside the g1 band just below J0 = 3
        cfg.initial.x0 = vec![1.0 + (2.0f64 * 2.98).sqrt()];
        let exp = cfg.resolve().unwrap();
        let t = sweep_omega(&exp, &[0.05, 2.0]).unwrap();
        assert_eq!(t.rows.len(), 2);
        for r in &t.rows {
            assert_ne!(r.status, RunStatus::Failed, "{r:?}");
            assert!(r.max_g.iter().all(|g| g.is_finite()), "{r:?}");
        }
        assert!(t.rows[0].max_g[2] > t.rows[1].max_g[2] + 0.1, "{:?}", t.rows);
    }
}
