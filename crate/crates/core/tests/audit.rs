use std::path::Path;

use esc_lab::cli::{simulate, Experiment, ExperimentConfig, SystemKind};
use esc_lab::dynamics::Trajectory;

fn experiment() -> Experiment {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example1.toml");
    let mut cfg = ExperimentConfig::load(&path).unwrap();
    cfg.integration.t_end = 10.0;
    cfg.integration.max_steps = 100_000;
    cfg.resolve().unwrap()
}

fn bits(t: &Trajectory) -> Vec<u64> {
    t.t.iter()
        .chain(t.states.iter().flatten())
        .chain(t.inputs.iter().flatten())
        .map(|v| v.to_bits())
        .collect()
}

fn run(exp: &Experiment, kind: SystemKind) -> Trajectory {
    let (sys, s0) = exp.build_system(kind, &exp.bank).unwrap();
    simulate(sys.as_ref(), &s0, exp.options, 100_000).unwrap()
}

#[test]
fn poisoned_minimizer_metadata_leaves_trajectories_unchanged() {
    let clean = experiment();
    let mut poisoned = clean.clone();
    poisoned.cost = clean.cost.with_poisoned_metadata(vec![-123.0], f64::NAN);
    let mut shifted = clean.clone();
    shifted.cost = clean.cost.with_poisoned_metadata(vec![1e9], -1e9);
    for kind in [SystemKind::Proposed, SystemKind::Grushkovskaya, SystemKind::Suttner, SystemKind::LieApprox] {
        let reference = run(&clean, kind);
        assert!(reference.len() > 100, "{kind:?}");
        assert_eq!(bits(&reference), bits(&run(&poisoned, kind)), "{kind:?}");
        assert_eq!(bits(&reference), bits(&run(&shifted, kind)), "{kind:?}");
    }
}

#[test]
fn controller_sources_never_name_the_minimizer() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("src/dynamics");
    for entry in std::fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        for needle in ["x_star", "j_star", "CostModel"] {
            assert!(!text.contains(needle), "{} mentions {needle}", path.display());
        }
    }
}
