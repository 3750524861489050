use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use esc_lab::analysis::{
    closed_form_fg, convergence_report, lie_step, sample_constraint_band, sample_delta, y0_lower_bound, Level,
    LieTable, PracticalSetSpec, SamplingFloor,
};
use esc_lab::cost::{estimate_a1_constants, finite_diff_gradient, A1Certificate, CostModel, Domain};
use esc_lab::dynamics::{
    integrate, Channel, DitherBank, IntegrationOptions, ProposedSystem, SuttnerSystem,
};
use esc_lab::generators::{check_c1_wronskian, check_c1_wronskian_fd, make_pair, C2Grid, GeneratingPair};

fn example_cost() -> CostModel {
    CostModel::quadratic_shifted(vec![1.0], 1.0, 2020.0, Domain::new(vec![1.0], 4.0).unwrap()).unwrap()
}

fn quartic() -> CostModel {
    CostModel::quartic(vec![0.5], 2.0, 0.0, Domain::new(vec![0.5], 2.0).unwrap()).unwrap()
}

fn rosenbrock() -> CostModel {
    CostModel::rosenbrock_like(1.0, 1.0, 0.0, Domain::new(vec![1.0, 1.0], 0.5).unwrap()).unwrap()
}

fn costs() -> &'static [(CostModel, A1Certificate); 3] {
    static CERTS: OnceLock<[(CostModel, A1Certificate); 3]> = OnceLock::new();
    CERTS.get_or_init(|| {
        [example_cost(), quartic(), rosenbrock()].map(|c| {
            let per_dim = if c.dim() == 1 { 1000 } else { 400 };
            let cert = estimate_a1_constants(&c, c.m(), &c.domain().grid(per_dim)).unwrap();
            (c, cert)
        })
    })
}

fn point_in(cost: &CostModel, u: &[f64]) -> Option<Vec<f64>> {
    let d = cost.domain();
    let x: Vec<f64> = d.center.iter().zip(u).map(|(c, s)| c + d.radius * s).collect();
    d.contains(&x).then_some(x)
}

fn pairs() -> [GeneratingPair; 2] {
    [make_pair("suttner_dashkovskiy", &[]).unwrap(), make_pair("grushkovskaya_bounded", &[]).unwrap()]
}

fn example_spec() -> PracticalSetSpec {
    PracticalSetSpec::with_auto_y0(3.0, 5.0, 2.0, 0.5, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn growth_sandwich_holds_off_grid(which in 0usize..3, u in prop::collection::vec(-1.0f64..1.0, 2)) {
        let (cost, cert) = &costs()[which];
        let Some(x) = point_in(cost, &u[..cost.dim()]) else { return Ok(()) };
        let shifted = cost.eval_shifted(&x);
        // below this J~ is lost to rounding against the offset
        prop_assume!(shifted > 1e-9 * cost.j_star().abs().max(1.0));
        let g2: f64 = cost.grad(&x).iter().map(|v| v * v).sum();
        let p = shifted.powf(cert.power());
        prop_assert!(0.99 * cert.kappa * p <= g2, "{x:?}: {} vs {}", g2 / p, cert.kappa);
        prop_assert!(g2 <= 1.01 * cert.gamma * p, "{x:?}: {} vs {}", g2 / p, cert.gamma);
    }

    #[test]
    fn gradient_matches_central_differences(which in 0usize..3, u in prop::collection::vec(-1.0f64..1.0, 2)) {
        let (cost, _) = &costs()[which];
        let Some(x) = point_in(cost, &u[..cost.dim()]) else { return Ok(()) };
        let g = cost.grad(&x);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-2);
        let fd = finite_diff_gradient(cost, &x, 1e-4);
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(err / norm <= 1e-6, "{x:?}: {g:?} vs {fd:?}");
    }

    #[test]
    fn minimizer_is_the_only_critical_point(which in 0usize..3, u in prop::collection::vec(-1.0f64..1.0, 2)) {
        let (cost, _) = &costs()[which];
        let Some(x) = point_in(cost, &u[..cost.dim()]) else { return Ok(()) };
        let d = x.iter().zip(cost.x_star()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assume!(d > 1e-6);
        prop_assert!(cost.grad(&x).iter().any(|v| *v != 0.0));
    }

    #[test]
    fn unit_wronskian(which in 0usize..2, log_y in (1e-3f64).ln()..(10f64).ln()) {
        let pair = &pairs()[which];
        let y = log_y.exp();
        prop_assert!(check_c1_wronskian(pair, &[y], 1e-8).passed);
        prop_assert!(check_c1_wronskian_fd(pair, &[y], 1e-5).passed);
    }

    #[test]
    fn log_phase_pair_has_sqrt_envelope(y in 1e-12f64..1e-2) {
        let (a, b) = pairs()[0].eval(y);
        prop_assert!(a.abs().max(b.abs()) <= 10.0 * y.sqrt());
    }

    #[test]
    fn bracket_collapses_to_minus_gradient(which in 0usize..2, x in -3.0f64..5.0, gap in 1e-3f64..10.0) {
        let pair = pairs()[which];
        let cost = example_cost();
        let y = gap;
        let coefficient = pair.jet(y).bracket_coefficient();
        let dj = cost.grad(&[x])[0];
        prop_assert!((coefficient * dj + dj).abs() <= 1e-8 * dj.abs().max(1.0));
    }

    #[test]
    fn dither_amplitudes_do_not_depend_on_omega(s in 0.0f64..1.0, mult in 1u32..4) {
        let banks: Vec<DitherBank> = [1.0, 10.0, 100.0].iter().map(|&w| DitherBank::new(w, vec![mult]).unwrap()).collect();
        let (s1, c1) = (Channel::sine(0), Channel::cosine(0));
        let scaled: Vec<(f64, f64)> = banks
            .iter()
            .map(|b| {
                let t = s * b.period(0);
                (b.omega().sqrt() * b.integral(s1, t), b.omega() * b.iterated_integral(s1, c1, t))
            })
            .collect();
        for w in scaled.windows(2) {
            prop_assert!((w[0].0 - w[1].0).abs() <= 1e-9);
            prop_assert!((w[0].1 - w[1].1).abs() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn averaged_x_field_is_minus_gradient(which in 0usize..2, x in -2.0f64..4.0, gap in 0.05f64..5.0) {
        let cost = example_cost();
        let sys = ProposedSystem::new(cost.objective(), pairs()[which], DitherBank::new(3.0, vec![1]).unwrap()).unwrap();
        let theta = [x, cost.eval(&[x]) + gap];
        let dj = cost.grad(&[x])[0];
        let table = LieTable::compute(&sys, &|p: &[f64]| p[0], &theta, lie_step(&sys, &theta));
        let f = table.averaged(sys.bank());
        prop_assert!((f + dj).abs() <= 1e-6 * dj.abs().max(1.0), "{f} vs {}", -dj);
    }

    #[test]
    fn z_decreases_and_respects_the_exponential_floor(
        x0 in -1.0f64..3.0,
        gap in 0.3f64..4.0,
        omega in 1.0f64..8.0,
        which in 0usize..2,
    ) {
        let cost = example_cost();
        let bank = DitherBank::new(omega, vec![1]).unwrap();
        let state0 = [x0, cost.eval(&[x0]) + gap];
        let sys = ProposedSystem::new(cost.objective(), pairs()[which], bank.clone()).unwrap();
        let traj = integrate(&sys, &state0, IntegrationOptions::new(5.0, 64)).unwrap();
        prop_assert!(traj.termination.is_completed());
        let r = convergence_report(&traj, &cost, None);
        prop_assert_eq!(r.monotonicity_violations, 0);
        prop_assert_eq!(r.floor_violations, 0);

        let sut = SuttnerSystem::new(cost.objective(), bank).unwrap();
        let traj = integrate(&sut, &[state0[0], state0[1], 2.0], IntegrationOptions::new(1.0, 64).with_max_steps(20_000)).unwrap();
        prop_assert!(!traj.termination.truncation().is_some_and(|c| c.is_abort()));
        let r = convergence_report(&traj, &cost, None);
        prop_assert_eq!(r.monotonicity_violations, 0);
        prop_assert_eq!(r.floor_violations, 0);
    }

    #[test]
    fn closed_form_drift_matches_lie_derivatives(seed in any::<u64>(), which in 1usize..=3) {
        let cost = example_cost();
        let spec = example_spec();
        let sys = ProposedSystem::new(cost.objective(), pairs()[0], DitherBank::new(2.0, vec![1]).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = sample_delta(&spec, &cost, Level::Epsilon, 9, &SamplingFloor::default(), &mut rng);
        prop_assert!(!points.is_empty());
        for theta in points {
            let g = |p: &[f64]| esc_lab::analysis::eval_gi(&spec, &cost, p, which);
            let numeric = LieTable::compute(&sys, &g, &theta, lie_step(&sys, &theta)).averaged(sys.bank());
            let exact = closed_form_fg(&spec, &cost, &theta, which).unwrap();
            prop_assert!((numeric - exact).abs() <= 1e-5 * exact.abs().max(1.0), "g{which} at {theta:?}: {numeric} vs {exact}");
        }
    }

    #[test]
    fn auto_y0_makes_the_third_constraint_decay(
        seed in any::<u64>(),
        epsilon in 0.05f64..1.0,
        j0 in 0.5f64..3.0,
        extra in 0.5f64..3.0,
    ) {
        let cost = example_cost();
        let spec = PracticalSetSpec::with_auto_y0(j0, j0 + extra, 2.0, epsilon, None).unwrap();
        prop_assert!(spec.y0 > y0_lower_bound(2.0, epsilon));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let band = sample_constraint_band(&spec, &cost, 3, 20, &SamplingFloor::default(), &mut rng);
        for theta in band {
            let f = closed_form_fg(&spec, &cost, &theta, 3).unwrap();
            prop_assert!(f <= -epsilon + 1e-6, "{theta:?}: {f}");
        }
    }

    #[test]
    fn runs_and_samples_are_deterministic(seed in any::<u64>(), omega in 1.0f64..20.0) {
        let cost = example_cost();
        let spec = example_spec();
        let a = C2Grid::sample(&spec, &cost, 20, &SamplingFloor::default(), seed);
        let b = C2Grid::sample(&spec, &cost, 20, &SamplingFloor::default(), seed);
        prop_assert_eq!(a, b);
        let sys = ProposedSystem::new(cost.objective(), pairs()[1], DitherBank::new(omega, vec![1]).unwrap()).unwrap();
        let opts = IntegrationOptions::new(0.5, 64);
        let (t1, t2) = (integrate(&sys, &[3.0, 2024.0], opts).unwrap(), integrate(&sys, &[3.0, 2024.0], opts).unwrap());
        prop_assert_eq!(t1, t2);
    }
}
