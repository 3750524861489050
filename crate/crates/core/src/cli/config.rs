//! Experiment files: flat TOML with dotted keys, e.g. `dither.omega = 2`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{y0_lower_bound, PracticalSetSpec};
use crate::cost::{estimate_a1_constants, A1Certificate, CostModel, Domain, DEFAULT_GRID_POINTS};
use crate::dynamics::{
    DitherBank, EscSystem, GrushkovskayaSystem, IntegrationOptions, LieApproxSystem, ProposedSystem, SuttnerSystem,
    DEFAULT_MAX_STEPS, DEFAULT_STEPS_PER_PERIOD,
};
use crate::error::{Error, Result};
use crate::generators::{make_pair, GeneratingPair};

/// Environment variable that replaces `output.dir`.
pub const OUTPUT_ENV: &str = "ESC_LAB_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Proposed,
    LieApprox,
    Grushkovskaya,
    Suttner,
}

impl SystemKind {
    pub const ALL: [SystemKind; 4] = [Self::Proposed, Self::LieApprox, Self::Grushkovskaya, Self::Suttner];

    pub fn name(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::LieApprox => "lie_approx",
            Self::Grushkovskaya => "grushkovskaya",
            Self::Suttner => "suttner",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Whether the state carries the epigraph variable `z`.
    pub fn has_z(self) -> bool {
        !matches!(self, Self::Grushkovskaya)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    /// `quadratic_shifted` (center.., curvature, offset), `quartic`
    /// (center.., coefficient, offset) or `rosenbrock_like` (a, b, offset).
    pub name: String,
    pub params: Vec<f64>,
    /// Defaults to the minimizer.
    pub domain_center: Option<Vec<f64>>,
    pub domain_radius: f64,
    /// Growth exponent; defaults to the built-in value for the cost.
    pub m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSection {
    pub family: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DitherSection {
    pub omega: f64,
    pub multipliers: Vec<u32>,
}

fn default_phase0() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x0: Vec<f64>,
    /// Initial epigraph variable `z(0)`.
    pub z0: f64,
    /// Initial phase `Ω(0)` of the adaptive-frequency baseline.
    #[serde(default = "default_phase0")]
    pub phase0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Y0Setting {
    Value(f64),
    Auto(AutoKeyword),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSection {
    pub j0: f64,
    pub z0: f64,
    pub y0: Y0Setting,
    pub epsilon: f64,
    pub delta: Option<f64>,
}

fn default_spp() -> usize {
    DEFAULT_STEPS_PER_PERIOD
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    pub t_end: f64,
    #[serde(default = "default_spp")]
    pub steps_per_period: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_offset() -> f64 {
    2019.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrushkovskayaSection {
    #[serde(default = "default_offset")]
    pub offset: f64,
}

impl Default for GrushkovskayaSection {
    fn default() -> Self {
        Self { offset: default_offset() }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_max_rows() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_max_rows")]
    pub max_rows: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir(), max_rows: default_max_rows() }
    }
}

fn default_c2_samples() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Trailing window of the control envelope; no envelope when absent.
    pub envelope_window: Option<f64>,
    /// Identity residuals of `g1..g3` on `[0, min(1, t_end)]` for the proposed system.
    #[serde(default)]
    pub residual: bool,
    /// Interior sample count for the sampled bounds in `validate`.
    #[serde(default = "default_c2_samples")]
    pub c2_samples: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self { envelope_window: None, residual: false, c2_samples: default_c2_samples() }
    }
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub systems: Vec<String>,
    pub cost: CostSection,
    pub pair: PairSection,
    pub dither: DitherSection,
    pub initial: InitialSection,
    pub set: SetSection,
    pub integration: IntegrationSection,
    #[serde(default)]
    pub grushkovskaya: GrushkovskayaSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// `ESC_LAB_OUT` when set, otherwise `output.dir`.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| self.output.dir.clone())
    }

    pub fn build_cost(&self) -> Result<CostModel> {
        let c = &self.cost;
        let p = &c.params;
        let need = |k: usize, what: &str| -> Result<()> {
            if p.len() < k {
                Err(Error::InvalidParameter(format!("cost {} needs {what}, got {} parameters", c.name, p.len())))
            } else {
                Ok(())
            }
        };
        let domain_for = |x_star: &[f64]| Domain::new(c.domain_center.clone().unwrap_or_else(|| x_star.to_vec()), c.domain_radius);
        let model = match c.name.as_str() {
            "quadratic_shifted" | "quartic" => {
                need(3, "center.., scale, offset")?;
                let n = p.len() - 2;
                let center = p[..n].to_vec();
                let domain = domain_for(&center)?;
                if c.name == "quartic" {
                    CostModel::quartic(center, p[n], p[n + 1], domain)?
                } else {
                    CostModel::quadratic_shifted(center, p[n], p[n + 1], domain)?
                }
            }
            "rosenbrock_like" => {
                need(3, "a, b, offset")?;
                if p.len() != 3 {
                    return Err(Error::InvalidParameter(format!("rosenbrock_like takes 3 parameters, got {}", p.len())));
                }
                CostModel::rosenbrock_like(p[0], p[1], p[2], domain_for(&[p[0], p[0] * p[0]])?)?
            }
            other => return Err(Error::UnknownCost(other.to_string())),
        };
        match c.m {
            Some(m) => model.with_m(m),
            None => Ok(model),
        }
    }

    pub fn build_pair(&self) -> Result<GeneratingPair> {
        make_pair(&self.pair.family, &self.pair.params)
    }

    pub fn build_bank(&self) -> Result<DitherBank> {
        DitherBank::new(self.dither.omega, self.dither.multipliers.clone())
    }

    /// The practical-set constants, resolving `y0 = "auto"` from `kappa`.
    pub fn build_spec(&self, kappa: Option<f64>) -> Result<PracticalSetSpec> {
        let s = &self.set;
        match s.y0 {
            Y0Setting::Value(y0) => PracticalSetSpec::new(s.j0, s.z0, y0, s.epsilon, s.delta),
            Y0Setting::Auto(_) => {
                let kappa = kappa.ok_or_else(|| {
                    Error::HypothesesUnmet("y0 = \"auto\" needs a growth certificate for the cost".into())
                })?;
                PracticalSetSpec::with_auto_y0(s.j0, s.z0, kappa, s.epsilon, s.delta)
            }
        }
    }

    /// Resolves every section, listing all problems found.
    pub fn resolve(&self) -> Result<Experiment> {
        let mut problems: Vec<String> = Vec::new();
        let mut note = |r: Error| problems.push(r.to_string());

        let mut systems = Vec::new();
        if self.systems.is_empty() {
            note(Error::InvalidParameter("systems list is empty".into()));
        }
        for name in &self.systems {
            match SystemKind::from_name(name) {
                Some(k) if systems.contains(&k) => note(Error::InvalidParameter(format!("system {name} listed twice"))),
                Some(k) => systems.push(k),
                None => note(Error::InvalidParameter(format!(
                    "unknown system {name}; expected one of proposed, lie_approx, grushkovskaya, suttner"
                ))),
            }
        }

        let cost = self.build_cost().map_err(&mut note).ok();
        let pair = self.build_pair().map_err(&mut note).ok();
        let bank = self.build_bank().map_err(&mut note).ok();

        let certificate = cost.as_ref().and_then(|c| {
            estimate_a1_constants(c, c.m(), &a1_grid(c.domain())).ok()
        });
        let spec = if cost.is_some() && matches!(self.set.y0, Y0Setting::Auto(_)) && certificate.is_none() {
            note(Error::HypothesesUnmet(
                "y0 = \"auto\" but the growth constants of the cost could not be estimated".into(),
            ));
            None
        } else {
            self.build_spec(certificate.map(|c| c.kappa)).map_err(&mut note).ok()
        };
        if let (Some(spec), Some(cert)) = (&spec, &certificate) {
            let bound = y0_lower_bound(cert.kappa, spec.epsilon);
            if !(spec.y0 > bound) {
                note(Error::HypothesesUnmet(format!("y0 = {} is not above the lower bound {bound}", spec.y0)));
            }
        }

        if let Some(cost) = &cost {
            let n = cost.dim();
            if self.initial.x0.len() != n {
                note(Error::DimensionMismatch { expected: n, got: self.initial.x0.len() });
            } else if systems.iter().any(|k| k.has_z()) {
                let j = cost.eval(&self.initial.x0);
                if !(self.initial.z0 > j) {
                    note(Error::EpigraphBoundary { gap: self.initial.z0 - j });
                }
            }
            if let Some(bank) = &bank {
                if bank.inputs() != n {
                    note(Error::DimensionMismatch { expected: n, got: bank.inputs() });
                }
            }
            if systems.contains(&SystemKind::Grushkovskaya) && self.initial.x0.len() == n {
                let shifted = cost.eval(&self.initial.x0) - self.grushkovskaya.offset;
                if !(shifted > 0.0) {
                    note(Error::InvalidParameter(format!(
                        "grushkovskaya offset {} is not below J(x0) = {}",
                        self.grushkovskaya.offset,
                        cost.eval(&self.initial.x0)
                    )));
                }
            }
        }
        if !self.initial.x0.iter().chain([&self.initial.z0, &self.initial.phase0]).all(|v| v.is_finite()) {
            note(Error::InvalidParameter("initial state must be finite".into()));
        }
        let opts = IntegrationOptions::new(self.integration.t_end, self.integration.steps_per_period)
            .with_max_steps(self.integration.max_steps);
        if let Err(e) = opts.validate() {
            note(e);
        }
        if self.output.max_rows < 2 {
            note(Error::InvalidParameter("output.max_rows must be at least 2".into()));
        }
        if let Some(w) = self.analysis.envelope_window {
            if !(w > 0.0) {
                note(Error::InvalidParameter(format!("analysis.envelope_window must be positive, got {w}")));
            }
        }

        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let (cost, pair, bank, spec) = (cost.unwrap(), pair.unwrap(), bank.unwrap(), spec.unwrap());
        let cost = match certificate {
            Some(c) => cost.with_certificate(c),
            None => cost,
        };
        Ok(Experiment { config: self.clone(), systems, cost, pair, bank, spec, options: opts, certificate })
    }
}

/// Grid for the growth-constant estimate: at most about 10⁶ points.
pub fn a1_grid(domain: &Domain) -> Vec<Vec<f64>> {
    let n = domain.dim().max(1) as f64;
    let per_dim = (1e6f64.powf(1.0 / n).floor() as usize).clamp(3, DEFAULT_GRID_POINTS);
    domain.grid(per_dim)
}

/// A validated configuration with its objects built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub systems: Vec<SystemKind>,
    pub cost: CostModel,
    pub pair: GeneratingPair,
    pub bank: DitherBank,
    pub spec: PracticalSetSpec,
    pub options: IntegrationOptions,
    pub certificate: Option<A1Certificate>,
}

impl Experiment {
    /// System of the given kind with its initial state.
    pub fn build_system(&self, kind: SystemKind, bank: &DitherBank) -> Result<(Box<dyn EscSystem>, Vec<f64>)> {
        let init = &self.config.initial;
        let obj = self.cost.objective();
        let mut epi = init.x0.clone();
        epi.push(init.z0);
        Ok(match kind {
            SystemKind::Proposed => (Box::new(ProposedSystem::new(obj, self.pair, bank.clone())?), epi),
            SystemKind::LieApprox => (Box::new(LieApproxSystem::new(obj, bank.fastest_period())?), epi),
            SystemKind::Grushkovskaya => (
                Box::new(GrushkovskayaSystem::new(obj, self.pair, bank.clone(), self.config.grushkovskaya.offset)?),
                init.x0.clone(),
            ),
            SystemKind::Suttner => {
                epi.push(init.phase0);
                (Box::new(SuttnerSystem::new(obj, bank.clone())?), epi)
            }
        })
    }

    /// `y0` after resolving `"auto"`.
    pub fn y0(&self) -> f64 {
        self.spec.y0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE1: &str = include_str!("../../configs/example1.toml");

    #[test]
    fn example_config_resolves() {
        let cfg = ExperimentConfig::from_toml_str(EXAMPLE1).unwrap();
        assert_eq!(cfg.grushkovskaya.offset, 2019.0);
        assert_eq!(cfg.set.y0, Y0Setting::Auto(AutoKeyword::Auto));
        let exp = cfg.resolve().unwrap();
        assert_eq!(exp.systems, SystemKind::ALL.to_vec());
        let bound = y0_lower_bound(2.0, 0.5);
        assert!((exp.y0() - bound - 1e-3).abs() < 1e-6, "{}", exp.y0());
        assert!(exp.y0() > y0_lower_bound(exp.certificate.unwrap().kappa, 0.5));
        assert_eq!(exp.spec.delta, 0.25);
        let round = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn dotted_and_table_forms_agree() {
        let table_form = EXAMPLE1.replace("dither.omega = 2.0\ndither.multipliers = [1]\n", "")
            + "\n[dither]\nomega = 2.0\nmultipliers = [1]\n";
        assert_eq!(
            ExperimentConfig::from_toml_str(&table_form).unwrap(),
            ExperimentConfig::from_toml_str(EXAMPLE1).unwrap()
        );
    }

    #[test]
    fn empty_systems_list_is_rejected() {
        let mut cfg = ExperimentConfig::from_toml_str(EXAMPLE1).unwrap();
        cfg.systems.clear();
        match cfg.resolve().unwrap_err() {
            Error::Config(v) => assert!(v.iter().any(|m| m.contains("systems list is empty")), "{v:?}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn all_violations_are_listed() {
        let mut cfg = ExperimentConfig::from_toml_str(EXAMPLE1).unwrap();
        cfg.systems.push("kalman".into());
        cfg.initial.z0 = 2021.0;
        cfg.pair.family = "nope".into();
        cfg.integration.t_end = -1.0;
        match cfg.resolve().unwrap_err() {
            Error::Config(v) => {
                assert_eq!(v.len(), 4, "{v:?}");
                assert!(v[0].contains("kalman"));
                assert!(v.iter().any(|m| m.contains("epigraph")));
                assert!(v.iter().any(|m| m.contains("nope")));
                assert!(v.iter().any(|m| m.contains("t_end")));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn explicit_y0_below_bound_is_flagged() {
        let mut cfg = ExperimentConfig::from_toml_str(EXAMPLE1).unwrap();
        cfg.set.y0 = Y0Setting::Value(0.9);
        assert!(matches!(cfg.resolve(), Err(Error::Config(v)) if v.iter().any(|m| m.contains("lower bound"))));
        cfg.set.y0 = Y0Setting::Value(1.2);
        assert_eq!(cfg.resolve().unwrap().y0(), 1.2);
    }

    #[test]
    fn unknown_keys_and_bad_keywords_fail_to_parse() {
        assert!(ExperimentConfig::from_toml_str(&format!("{EXAMPLE1}\ndither.phase = 1.0\n")).is_err());
        assert!(ExperimentConfig::from_toml_str(&EXAMPLE1.replace("\"auto\"", "\"automatic\"")).is_err());
    }

    #[test]
    fn output_dir_defaults_to_config() {
        let cfg = ExperimentConfig::from_toml_str(EXAMPLE1).unwrap();
        if std::env::var_os(OUTPUT_ENV).is_none() {
            assert_eq!(cfg.output_dir(), PathBuf::from("out/example1"));
        }
    }
}
