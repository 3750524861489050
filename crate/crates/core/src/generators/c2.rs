//! Sampled bounds on the Lie-derivative combinations that feed the
//! remainder estimates `|R1| ≤ c1/√ω`, `|R2| ≤ c2/√ω`, and on the decay rate
//! `b = inf(−F^g)` near each constraint boundary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::lie::{lie_step, LieTable};
use crate::analysis::{eval_gi, sample_constraint_band, sample_delta, Level, PracticalSetSpec, SamplingFloor};
use crate::cost::CostModel;
use crate::dynamics::{DitherBank, DitherBounds, ProposedSystem};
use crate::error::Result;
use crate::generators::GeneratingPair;

/// Points at which the bounds are sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct C2Grid {
    /// Points of `Δε`, used for the sup bounds.
    pub interior: Vec<Vec<f64>>,
    /// Points of `Δ^i_ε = {θ ∈ Δε : 0 ≤ g_i ≤ ε}` for `i = 1, 2, 3`.
    pub bands: [Vec<Vec<f64>>; 3],
}

impl C2Grid {
    /// `count` interior points plus `count/2` per band, seeded.
    pub fn sample(spec: &PracticalSetSpec, cost: &CostModel, count: usize, floor: &SamplingFloor, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let interior = sample_delta(spec, cost, Level::Epsilon, count, floor, &mut rng);
        let bands = [1, 2, 3].map(|i| sample_constraint_band(spec, cost, i, count / 2, floor, &mut rng));
        Self { interior, bands }
    }

    pub fn len(&self) -> usize {
        self.interior.len() + self.bands.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bounds for one constraint `g_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintBounds {
    pub which: usize,
    pub c1: f64,
    pub c2: f64,
    /// `inf(−F^g)` over the band samples; `+∞` when the band is empty.
    pub b: f64,
    pub sample_count: usize,
    pub band_count: usize,
    /// `Σ_λ sup|L_λ g|`.
    pub sum_sup_first: f64,
    /// `Σ sup|L_λ2 L_λ1 g|`.
    pub sum_sup_second: f64,
    /// `Σ sup|L0 L_λ g|`.
    pub sum_sup_drift_first: f64,
    /// `Σ sup|L0 L_λ2 L_λ1 g|`.
    pub sum_sup_drift_second: f64,
    /// `Σ sup|L_λ3 L_λ2 L_λ1 g|`.
    pub sum_sup_third: f64,
    /// Band point attaining `b`.
    pub b_at: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C2BoundReport {
    pub dither: DitherBounds,
    pub constraints: Vec<ConstraintBounds>,
    pub sample_count: usize,
    /// Points where some Lie derivative came out non-finite.
    pub non_finite_at: Vec<Vec<f64>>,
    /// All derivatives finite, every `c` finite and every `b` positive.
    pub valid: bool,
}

impl C2BoundReport {
    pub fn constraint(&self, which: usize) -> &ConstraintBounds {
        &self.constraints[which - 1]
    }
}

struct Sups {
    first: Vec<f64>,
    second: Vec<Vec<f64>>,
    drift_first: Vec<f64>,
    drift_second: Vec<Vec<f64>>,
    third: Vec<Vec<Vec<f64>>>,
}

impl Sups {
    fn new(k: usize) -> Self {
        Self {
            first: vec![0.0; k],
            second: vec![vec![0.0; k]; k],
            drift_first: vec![0.0; k],
            drift_second: vec![vec![0.0; k]; k],
            third: vec![vec![vec![0.0; k]; k]; k],
        }
    }

    fn absorb(&mut self, t: &LieTable) {
        let k = self.first.len();
        for a in 0..k {
            self.first[a] = self.first[a].max(t.l[a].abs());
            self.drift_first[a] = self.drift_first[a].max(t.l0l[a].abs());
            for b in 0..k {
                self.second[a][b] = self.second[a][b].max(t.ll[a][b].abs());
                self.drift_second[a][b] = self.drift_second[a][b].max(t.l0ll[a][b].abs());
                for c in 0..k {
                    self.third[a][b][c] = self.third[a][b][c].max(t.lll[a][b][c].abs());
                }
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        let k = self.first.len();
        for a in 0..k {
            self.first[a] = self.first[a].max(other.first[a]);
            self.drift_first[a] = self.drift_first[a].max(other.drift_first[a]);
            for b in 0..k {
                self.second[a][b] = self.second[a][b].max(other.second[a][b]);
                self.drift_second[a][b] = self.drift_second[a][b].max(other.drift_second[a][b]);
                for c in 0..k {
                    self.third[a][b][c] = self.third[a][b][c].max(other.third[a][b][c]);
                }
            }
        }
        self
    }
}

fn table_at(system: &ProposedSystem, g: &(dyn Fn(&[f64]) -> f64 + Sync), theta: &[f64]) -> LieTable {
    LieTable::compute(system, g, theta, lie_step(system, theta))
}

/// Samples the bounds behind the invariance threshold.
///
/// With per-kind dither constants `a1 ≥ √ω|U_λ|`, `a2 ≥ ω|U_(λ1,λ2)|`,
/// `a3 ≥ a2·|u_λ|/√ω`, and `ω ≥ 1`:
///
/// ```text
/// c1 = a1·Σ sup|L_λ g| + a2·Σ sup|L_λ2 L_λ1 g|
/// c2 = a1·Σ sup|L0 L_λ g| + a2·Σ sup|L0 L_λ2 L_λ1 g| + a3·Σ sup|L_λ3 L_λ2 L_λ1 g|
/// ```
///
/// Sups run over every grid point; `b` over the band of each constraint.
pub fn sample_c2_bounds(
    pair: &GeneratingPair,
    cost: &CostModel,
    spec: &PracticalSetSpec,
    bank: &DitherBank,
    grid: &C2Grid,
) -> Result<C2BoundReport> {
    let system = ProposedSystem::new(cost.objective(), *pair, bank.clone())?;
    let dither = bank.bounds();
    let k = bank.channels().len();
    let all: Vec<&Vec<f64>> = grid.interior.iter().chain(grid.bands.iter().flatten()).collect();
    let mut constraints = Vec::with_capacity(3);
    let mut non_finite_at: Vec<Vec<f64>> = Vec::new();

    for which in 1..=3 {
        let g = move |p: &[f64]| eval_gi(spec, cost, p, which);
        let (sups, bad) = all
            .par_iter()
            .map(|theta| {
                let t = table_at(&system, &g, theta);
                let mut s = Sups::new(k);
                if t.is_finite() {
                    s.absorb(&t);
                    (s, Vec::new())
                } else {
                    (s, vec![(*theta).clone()])
                }
            })
            .reduce(
                || (Sups::new(k), Vec::new()),
                |(a, mut ba), (b, bb)| {
                    ba.extend(bb);
                    (a.merge(b), ba)
                },
            );
        non_finite_at.extend(bad);

        let band = &grid.bands[which - 1];
        let (b, b_at) = band
            .par_iter()
            .map(|theta| {
                let f = table_at(&system, &g, theta).averaged(bank);
                (-f, Some(theta.clone()))
            })
            .reduce(
                || (f64::INFINITY, None),
                |a, b| if b.0 < a.0 || b.0.is_nan() { b } else { a },
            );

        let sum1: f64 = sups.first.iter().sum();
        let sum2: f64 = sups.second.iter().flatten().sum();
        let sum_d1: f64 = sups.drift_first.iter().sum();
        let sum_d2: f64 = sups.drift_second.iter().flatten().sum();
        let sum3: f64 = sups.third.iter().flatten().flatten().sum();
        constraints.push(ConstraintBounds {
            which,
            c1: dither.single * sum1 + dither.double * sum2,
            c2: dither.single * sum_d1 + dither.double * sum_d2 + dither.double_times_dither * sum3,
            b,
            sample_count: all.len(),
            band_count: band.len(),
            sum_sup_first: sum1,
            sum_sup_second: sum2,
            sum_sup_drift_first: sum_d1,
            sum_sup_drift_second: sum_d2,
            sum_sup_third: sum3,
            b_at,
        });
    }

    let valid = non_finite_at.is_empty()
        && constraints.iter().all(|c| c.c1.is_finite() && c.c2.is_finite() && c.b > 0.0 && !c.b.is_nan());
    Ok(C2BoundReport { dither, constraints, sample_count: all.len(), non_finite_at, valid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::y0_lower_bound;
    use crate::cost::Domain;
    use crate::generators::make_pair;

    fn setup(epsilon: f64) -> (CostModel, PracticalSetSpec, DitherBank) {
        let cost = CostModel::quadratic_shifted(vec![1.0], 1.0, 2020.0, Domain::new(vec![1.0], 4.0).unwrap()).unwrap();
        let spec = PracticalSetSpec::with_auto_y0(3.0, 5.0, 2.0, epsilon, None).unwrap();
        (cost, spec, DitherBank::new(2.0, vec![1]).unwrap())
    }

    #[test]
    fn example_bounds() {
        let (cost, spec, bank) = setup(0.1);
        assert!((spec.y0 - y0_lower_bound(2.0, 0.1) - 1e-3).abs() < 1e-15);
        let grid = C2Grid::sample(&spec, &cost, 200, &SamplingFloor::default(), 1);
        let pair = make_pair("suttner_dashkovskiy", &[]).unwrap();
        let r = sample_c2_bounds(&pair, &cost, &spec, &bank, &grid).unwrap();
        assert!(r.valid, "{:?}", r.non_finite_at);
        // −F^{g1} = ‖∇J‖² = 2J̃ ≥ 2·J0 on the g1 band
        assert!(r.constraint(1).b >= 2.0 * 3.0 * (1.0 - 1e-6), "{}", r.constraint(1).b);
        assert_eq!(r.constraint(2).c1, 0.0);
        assert_eq!(r.constraint(2).c2, 0.0);
        assert!(r.constraint(3).b >= spec.epsilon, "{}", r.constraint(3).b);
        for c in &r.constraints {
            assert!(c.c1.is_finite() && c.c2.is_finite());
        }
    }
}
