//! Generating-function pairs `(F1, F2)` that shape the dithered vector fields.
//!
//! A pair admitted by the epigraph system must vanish at `y = 0` and satisfy
//! the Wronskian identity `F1·F2' − F1'·F2 = 1` on `(0, ∞)`, the
//! differentiated form of `F2 = F1 ∫ 1/F1² dy`.

mod c2;

pub use c2::{sample_c2_bounds, C2BoundReport, C2Grid, ConstraintBounds};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PairFamily {
    /// `(y, 1)`: the textbook pair, non-vanishing at zero.
    Classic,
    /// `(|y|^r, |y|^(2−r))`, `0 < r < 2`.
    Power { r: f64 },
    /// `(√y cos ln y, √y sin ln y)`.
    SuttnerDashkovskiy,
    /// `ρ(y)·(cos φ(y), sin φ(y))` with `ρ² = (1 − e^(−y))/(1 + e^y)` and
    /// `φ = e^y + 2 ln(e^y − 1)`.
    GrushkovskayaBounded,
}

/// Values and first derivatives of a pair at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairJet {
    pub f1: f64,
    pub f2: f64,
    pub d1: f64,
    pub d2: f64,
}

impl PairJet {
    /// `F1·F2' − F1'·F2`.
    pub fn wronskian(&self) -> f64 {
        self.f1 * self.d2 - self.d1 * self.f2
    }

    /// `F1'·F2 − F2'·F1`, the coefficient multiplying `∂_j J` in the averaged
    /// epigraph dynamics.
    pub fn bracket_coefficient(&self) -> f64 {
        self.d1 * self.f2 - self.d2 * self.f1
    }

    /// `|F'| / |F|`, zero where the pair vanishes.
    pub fn relative_rate(&self) -> f64 {
        let size = self.f1.hypot(self.f2);
        let rate = self.d1.hypot(self.d2) / size;
        if size > 0.0 && rate.is_finite() {
            rate
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratingPair {
    family: PairFamily,
}

impl GeneratingPair {
    pub fn new(family: PairFamily) -> Result<Self> {
        if let PairFamily::Power { r } = family {
            if !(r > 0.0 && r < 2.0) {
                return Err(Error::InvalidParameter(format!("power pair needs 0 < r < 2, got {r}")));
            }
        }
        Ok(Self { family })
    }

    pub fn family(&self) -> PairFamily {
        self.family
    }

    pub fn family_tag(&self) -> &'static str {
        match self.family {
            PairFamily::Classic => "classic",
            PairFamily::Power { .. } => "power",
            PairFamily::SuttnerDashkovskiy => "suttner_dashkovskiy",
            PairFamily::GrushkovskayaBounded => "grushkovskaya_bounded",
        }
    }

    /// Families whose members vanish at zero and have unit Wronskian.
    pub fn is_c1(&self) -> bool {
        matches!(self.family, PairFamily::SuttnerDashkovskiy | PairFamily::GrushkovskayaBounded)
    }

    pub fn bounded_update(&self) -> bool {
        matches!(self.family, PairFamily::GrushkovskayaBounded)
    }

    pub fn eval(&self, y: f64) -> (f64, f64) {
        let j = self.jet(y);
        (j.f1, j.f2)
    }

    /// Values and analytic first derivatives. The vanishing families are
    /// extended by zero at `y = 0`; negative arguments give NaN.
    pub fn jet(&self, y: f64) -> PairJet {
        let nan = PairJet { f1: f64::NAN, f2: f64::NAN, d1: f64::NAN, d2: f64::NAN };
        match self.family {
            PairFamily::Classic => PairJet { f1: y, f2: 1.0, d1: 1.0, d2: 0.0 },
            PairFamily::Power { r } => {
                let a = y.abs();
                if a == 0.0 {
                    return PairJet { f1: 0.0, f2: 0.0, d1: f64::NAN, d2: 0.0 };
                }
                let s = y.signum();
                PairJet {
                    f1: a.powf(r),
                    f2: a.powf(2.0 - r),
                    d1: s * r * a.powf(r - 1.0),
                    d2: s * (2.0 - r) * a.powf(1.0 - r),
                }
            }
            PairFamily::SuttnerDashkovskiy => {
                if y == 0.0 {
                    return PairJet { f1: 0.0, f2: 0.0, d1: f64::NAN, d2: f64::NAN };
                }
                if y < 0.0 {
                    return nan;
                }
                let r = y.sqrt();
                let (s, c) = y.ln().sin_cos();
                PairJet { f1: r * c, f2: r * s, d1: (0.5 * c - s) / r, d2: (0.5 * s + c) / r }
            }
            PairFamily::GrushkovskayaBounded => {
                if y == 0.0 {
                    return PairJet { f1: 0.0, f2: 0.0, d1: f64::NAN, d2: f64::NAN };
                }
                if y < 0.0 {
                    return nan;
                }
                if y > 700.0 {
                    // ρ ≈ e^(−y/2) underflows long before this matters
                    return PairJet { f1: 0.0, f2: 0.0, d1: 0.0, d2: 0.0 };
                }
                let em1 = y.exp_m1(); // e^y − 1
                let ey = em1 + 1.0;
                let rho2 = -(-y).exp_m1() / (1.0 + ey);
                let rho = rho2.sqrt();
                // d/dy ln ρ = ½ (1/(e^y − 1) − e^y/(1 + e^y))
                let dlog = 0.5 * (1.0 / em1 - ey / (1.0 + ey));
                let drho = rho * dlog;
                let phase = ey + 2.0 * em1.ln();
                let dphase = ey + 2.0 * ey / em1;
                let (s, c) = phase.sin_cos();
                PairJet {
                    f1: rho * c,
                    f2: rho * s,
                    d1: drho * c - rho * dphase * s,
                    d2: drho * s + rho * dphase * c,
                }
            }
        }
    }
}

/// Builds a pair from its configuration tag. `power` takes its exponent `r`
/// as the single parameter.
pub fn make_pair(family_tag: &str, params: &[f64]) -> Result<GeneratingPair> {
    let family = match family_tag {
        "classic" => PairFamily::Classic,
        "power" => {
            let r = *params
                .first()
                .ok_or_else(|| Error::InvalidParameter("power pair needs the exponent r".into()))?;
            PairFamily::Power { r }
        }
        "suttner_dashkovskiy" => PairFamily::SuttnerDashkovskiy,
        "grushkovskaya_bounded" => PairFamily::GrushkovskayaBounded,
        other => return Err(Error::UnknownFamily(other.to_string())),
    };
    GeneratingPair::new(family)
}

/// Largest violation of the unit-Wronskian identity on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WronskianReport {
    pub max_residual: f64,
    pub at_y: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn wronskian_report(grid: &[f64], tol: f64, residual: impl Fn(f64) -> f64) -> WronskianReport {
    let mut worst = (0.0f64, f64::NAN);
    for &y in grid {
        let r = residual(y);
        if r.is_nan() || r > worst.0 {
            worst = (r, y);
            if r.is_nan() {
                break;
            }
        }
    }
    WronskianReport { max_residual: worst.0, at_y: worst.1, tolerance: tol, passed: worst.0 <= tol }
}

/// `max |F1 F2' − F1' F2 − 1|` over `y_grid` using analytic derivatives.
pub fn check_c1_wronskian(pair: &GeneratingPair, y_grid: &[f64], tol: f64) -> WronskianReport {
    wronskian_report(y_grid, tol, |y| (pair.jet(y).wronskian() - 1.0).abs())
}

/// Same check with sixth-order central-difference derivatives, step `1e-6·y`.
///
/// A second-order stencil is not enough for the bounded-update pair near
/// `y = 10`, whose phase turns at rate `e^y`.
pub fn check_c1_wronskian_fd(pair: &GeneratingPair, y_grid: &[f64], tol: f64) -> WronskianReport {
    const W: [f64; 3] = [45.0 / 60.0, -9.0 / 60.0, 1.0 / 60.0];
    wronskian_report(y_grid, tol, |y| {
        let h = 1e-6 * y;
        let (a1, a2) = pair.eval(y);
        let (mut d1, mut d2) = (0.0, 0.0);
        for (k, w) in W.iter().enumerate() {
            let off = (k + 1) as f64 * h;
            let (p1, p2) = pair.eval(y + off);
            let (m1, m2) = pair.eval(y - off);
            d1 += w * (p1 - m1);
            d2 += w * (p2 - m2);
        }
        (a1 * d2 / h - d1 / h * a2 - 1.0).abs()
    })
}

/// Whether `max(|F1|, |F2|)` shrinks monotonically on `y ∈ {1e-2, 1e-4, 1e-6}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VanishingReport {
    pub envelope: Vec<(f64, f64)>,
    pub passed: bool,
}

pub fn check_vanishing_at_zero(pair: &GeneratingPair) -> VanishingReport {
    let envelope: Vec<(f64, f64)> = [1e-2, 1e-4, 1e-6]
        .iter()
        .map(|&y| {
            let (a, b) = pair.eval(y);
            (y, a.abs().max(b.abs()))
        })
        .collect();
    let at_zero = {
        let (a, b) = pair.eval(0.0);
        a == 0.0 && b == 0.0
    };
    let shrinking = envelope.windows(2).all(|w| w[1].1 < w[0].1);
    VanishingReport { passed: at_zero && shrinking && envelope[2].1 < 1e-2, envelope }
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
