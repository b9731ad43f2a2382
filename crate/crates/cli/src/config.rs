//! Scenario configuration: a JSON file, optionally overridden by flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use nhfields::cauchy::{Integrator, StateMode};
use nhfields::constraint::{load_custom_coefficients, CoefficientRule, ConstraintFn, ConstraintSpec};
use nhfields::grid::DiffScheme;
use nhfields::models::{ConstraintKind, Model};
use nhfields::Lagrangian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Verify,
    Evolve,
    FluidIdentities,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Verify => "verify",
            Task::Evolve => "evolve",
            Task::FluidIdentities => "fluid-identities",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedParams {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleName {
    #[default]
    Chetaev,
    Custom,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub name: String,
    #[serde(default)]
    pub mode: RuleName,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// CSV with one row per constraint and `m(n+1)` columns (custom mode).
    #[serde(default)]
    pub coefficients: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_nu")]
    pub nu: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { nu: default_nu() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// `sine` or `fluid-rest`.
    #[serde(default = "default_profile")]
    pub profile: String,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { profile: default_profile(), amplitude: default_amplitude() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorName {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Pde,
    #[default]
    FullJet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    #[default]
    FourthOrder,
    Spectral,
}

fn default_nu() -> usize {
    64
}
fn default_profile() -> String {
    "sine".into()
}
fn default_amplitude() -> f64 {
    0.1
}
fn default_points() -> usize {
    50
}
fn default_dt() -> f64 {
    1e-3
}
fn default_steps() -> usize {
    100
}
fn default_ceiling() -> f64 {
    1e-4
}
fn default_record() -> usize {
    1
}
fn default_refinement() -> Vec<usize> {
    vec![16, 32]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: NamedParams,
    #[serde(default)]
    pub constraint: Option<ConstraintConfig>,
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: u64,
    /// Random points for `verify` and the fluid closed-form comparison.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub integrator: IntegratorName,
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default)]
    pub scheme: SchemeName,
    #[serde(default)]
    pub stabilize: bool,
    #[serde(default = "default_ceiling")]
    pub drift_ceiling: f64,
    #[serde(default = "default_record")]
    pub record_every: usize,
    #[serde(default)]
    pub initial: InitialConfig,
    /// Patch resolutions for the null-Lagrangian refinement study.
    #[serde(default = "default_refinement")]
    pub refinement: Vec<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Tolerances used by the checks, with their defaults.
pub const DEFAULT_TOLERANCES: [(&str, f64); 14] = [
    ("zeta_form", 1e-9),
    ("projector", 1e-9),
    ("ddw_form", 1e-9),
    ("semiholonomic", 0.0),
    ("nh_ddw_form", 1e-8),
    ("tangency", 1e-10),
    ("multiplier_force", 1e-8),
    ("eta_gamma", 1e-12),
    ("closed_form", 1e-9),
    ("null_lagrangian", 1e-4),
    ("convergence_order_min", 3.5),
    ("convergence_order_max", 4.5),
    ("psi_identity", 1e-10),
    ("psi_divergence", 1e-6),
];

/// A validated scenario.
pub struct Scenario {
    pub task: Task,
    pub seed: u64,
    pub model: Model,
    pub constraint: Option<ConstraintSpec<ConstraintKind>>,
    pub tolerances: BTreeMap<String, f64>,
    pub config: ScenarioConfig,
    pub output_dir: PathBuf,
}

impl Scenario {
    pub fn tol(&self, key: &str) -> f64 {
        self.tolerances[key]
    }

    pub fn integrator(&self) -> Integrator {
        match self.config.integrator {
            IntegratorName::Rk4 => Integrator::Rk4,
            IntegratorName::Euler => Integrator::Euler,
        }
    }

    pub fn mode(&self) -> StateMode {
        match self.config.mode {
            ModeName::Pde => StateMode::Pde,
            ModeName::FullJet => StateMode::FullJet,
        }
    }

    pub fn scheme(&self) -> DiffScheme {
        match self.config.scheme {
            SchemeName::FourthOrder => DiffScheme::FourthOrder,
            SchemeName::Spectral => DiffScheme::Spectral,
        }
    }
}

pub fn load(path: &Path) -> Result<ScenarioConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("malformed config {}: {e}", path.display()))
}

/// Resolve registry names and check the numeric settings.
pub fn validate(
    config: ScenarioConfig,
    base_dir: &Path,
    task: Option<Task>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<Scenario, String> {
    let task = task.or(config.task).ok_or("no task given (config `task` or --task)")?;
    let seed = seed.unwrap_or(config.seed);
    let model = Model::from_name(&config.model.name, &config.model.params).map_err(|e| e.to_string())?;
    let constraint = match &config.constraint {
        None => None,
        Some(c) => {
            let kind = ConstraintKind::from_name(&c.name, &c.params).map_err(|e| e.to_string())?;
            if kind.layout() != model.layout() {
                return Err(format!(
                    "constraint `{}` acts on a bundle with n = {}, m = {}, model `{}` has n = {}, m = {}",
                    c.name,
                    kind.layout().n,
                    kind.layout().m,
                    config.model.name,
                    model.layout().n,
                    model.layout().m
                ));
            }
            let rule = match (c.mode, &c.coefficients) {
                (RuleName::Chetaev, None) => CoefficientRule::Chetaev,
                (RuleName::Chetaev, Some(_)) => return Err("`coefficients` requires constraint mode `custom`".into()),
                (RuleName::Custom, None) => return Err("constraint mode `custom` requires `coefficients`".into()),
                (RuleName::Custom, Some(p)) => {
                    let p = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                    let m = load_custom_coefficients(&p, kind.layout(), kind.count()).map_err(|e| e.to_string())?;
                    CoefficientRule::constant(m)
                }
            };
            Some(ConstraintSpec::with_rule(kind, rule))
        }
    };
    let mut tolerances: BTreeMap<String, f64> = DEFAULT_TOLERANCES.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in &config.tolerances {
        if !tolerances.contains_key(k) {
            return Err(format!("unknown tolerance `{k}`"));
        }
        if !(v.is_finite() && *v >= 0.0) {
            return Err(format!("tolerance `{k}` must be finite and non-negative"));
        }
        tolerances.insert(k.clone(), *v);
    }
    if !(config.dt > 0.0 && config.dt.is_finite()) {
        return Err("dt must be positive".into());
    }
    if !(config.drift_ceiling > 0.0) {
        return Err("drift_ceiling must be positive".into());
    }
    if config.record_every == 0 {
        return Err("record_every must be at least 1".into());
    }
    if config.grid.nu < 5 {
        return Err("grid.nu must be at least 5".into());
    }
    if config.refinement.len() < 2 || config.refinement.iter().any(|&n| n < 9) {
        return Err("refinement needs at least two resolutions of 9 or more points".into());
    }
    if !config.initial.amplitude.is_finite() {
        return Err("initial.amplitude must be finite".into());
    }
    if !["sine", "fluid-rest"].contains(&config.initial.profile.as_str()) {
        return Err(format!("unknown initial profile `{}` (known: sine, fluid-rest)", config.initial.profile));
    }
    if task == Task::FluidIdentities && !matches!(model, Model::Fluid(_)) {
        return Err("task fluid-identities needs model `fluid`".into());
    }
    let output_dir = out.or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    Ok(Scenario { task, seed, model, constraint, tolerances, config, output_dir })
}
