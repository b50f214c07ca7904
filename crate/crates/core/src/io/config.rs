//! Run configuration: one JSON document, strictly parsed and range-checked.

use crate::ansatz::ProjectionMode;
use crate::diagnostics::{AsymptoticsTolerances, NODAL_THRESHOLD};
use crate::geometry::{DomainShape, Point};
use crate::grid::MIN_NODES;
use crate::hamiltonian::{SearchOptions, SweepOptions};
use crate::pde::{InitialGuess, NewtonOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("`{field}` out of range: {message}")]
    Range { field: String, message: String },
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ConfigError {
    fn range(field: &str, message: impl Into<String>) -> Self {
        ConfigError::Range { field: field.into(), message: message.into() }
    }
}

/// A number, a list of numbers, or a comma-separated string such as "1,2,4".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr", into = "Vec<f64>")]
pub struct Schedule(pub Vec<f64>);

#[derive(Deserialize)]
#[serde(untagged)]
enum ScheduleRepr {
    One(f64),
    Many(Vec<f64>),
    Text(String),
}

impl TryFrom<ScheduleRepr> for Schedule {
    type Error = String;

    fn try_from(r: ScheduleRepr) -> Result<Self, String> {
        Ok(Schedule(match r {
            ScheduleRepr::One(x) => vec![x],
            ScheduleRepr::Many(v) => v,
            ScheduleRepr::Text(s) => s
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad schedule entry {t:?}: {e}")))
                .collect::<Result<_, _>>()?,
        }))
    }
}

impl From<Schedule> for Vec<f64> {
    fn from(s: Schedule) -> Self {
        s.0
    }
}

impl Schedule {
    pub fn first(&self) -> f64 {
        self.0[0]
    }

    pub fn last(&self) -> f64 {
        *self.0.last().unwrap()
    }

    pub fn is_decreasing(&self) -> bool {
        self.0.windows(2).all(|w| w[1] < w[0])
    }

    pub fn is_increasing(&self) -> bool {
        self.0.windows(2).all(|w| w[1] > w[0])
    }
}

/// Explicit vortex positions; when absent, the critical-point search picks them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Positions {
    pub xi1: Point,
    pub xi2: Point,
}

/// Which critical point seeds the ansatz, solve and sweep stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pick {
    /// The first local maximum, else the point of largest 𝓗.
    #[default]
    Maximum,
    /// The first point found.
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpec {
    pub starts: usize,
    pub max_iter: usize,
    pub eta: Option<f64>,
    pub gauge: Option<bool>,
    pub pick: Pick,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec { starts: 32, max_iter: 40, eta: None, gauge: None, pick: Pick::Maximum }
    }
}

impl SearchSpec {
    pub fn options(&self, seed: u64) -> SearchOptions {
        SearchOptions {
            starts: self.starts,
            seed,
            eta: self.eta,
            gauge: self.gauge,
            max_iter: self.max_iter,
            ..Default::default()
        }
    }
}

/// What to do when a bubble core is under-resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefinePolicy {
    #[default]
    Fail,
    /// Double n until the cores are resolved (at most `max_refinements` times).
    Auto,
}

/// Grid family of the ansatz and solve stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    /// Tensor grid graded towards the bubble centres.
    #[default]
    Graded,
    /// Uniform n-node grid.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative error allowed on m₊, m₋ and λ.
    pub mass: f64,
    /// Bound on the location-condition residuals at critical points.
    pub location: f64,
    pub nodal_threshold: f64,
    pub asymptotics: AsymptoticsTolerances,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            mass: 0.05,
            location: 1e-6,
            nodal_threshold: NODAL_THRESHOLD,
            asymptotics: AsymptoticsTolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for files without an explicit path; defaults to the working directory.
    pub dir: Option<PathBuf>,
    pub field: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

fn default_n() -> usize {
    129
}

fn default_rho() -> Schedule {
    Schedule(vec![0.01])
}

fn default_one() -> Schedule {
    Schedule(vec![1.0])
}

fn default_tau() -> f64 {
    1.0
}

fn default_max_refinements() -> usize {
    2
}

fn default_initial() -> InitialGuess {
    InitialGuess::Ansatz
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub shape: DomainShape,
    /// Base grid size (nodes across the bounding box).
    #[serde(default = "default_n")]
    pub n: usize,
    /// RNG seed of the multistart search.
    pub seed: u64,
    /// ρ, or a strictly decreasing ρ schedule for continuation.
    #[serde(default = "default_rho")]
    pub rho: Schedule,
    /// γ, or a strictly monotone γ schedule for sweeps.
    #[serde(default = "default_one")]
    pub gamma: Schedule,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub positions: Option<Positions>,
    #[serde(default)]
    pub search: SearchSpec,
    #[serde(default)]
    pub projection: ProjectionMode,
    /// Seed of the first Newton solve: `ansatz` or `zero`.
    #[serde(default = "default_initial")]
    pub initial: InitialGuess,
    #[serde(default)]
    pub newton: NewtonOptions,
    #[serde(default)]
    pub sweep: SweepOptions,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub grid: GridKind,
    #[serde(default)]
    pub refine: RefinePolicy,
    #[serde(default = "default_max_refinements")]
    pub max_refinements: usize,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Parses and validates a JSON run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Schema { path, message: e.into_inner().to_string() }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    parse_config(&text)
}

fn positive(field: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::range(field, format!("must be positive and finite, got {x}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.shape.validate().map_err(|e| ConfigError::range("shape", e.to_string()))?;
        if self.n < MIN_NODES {
            return Err(ConfigError::range("n", format!("must be at least {MIN_NODES}, got {}", self.n)));
        }
        positive("tau", self.tau)?;
        if self.rho.0.is_empty() {
            return Err(ConfigError::range("rho", "schedule is empty"));
        }
        for &r in &self.rho.0 {
            positive("rho", r)?;
        }
        if !self.rho.is_decreasing() {
            return Err(ConfigError::range("rho", "schedule must be strictly decreasing"));
        }
        if self.gamma.0.is_empty() {
            return Err(ConfigError::range("gamma", "schedule is empty"));
        }
        for &g in &self.gamma.0 {
            positive("gamma", g)?;
        }
        if !(self.gamma.is_increasing() || self.gamma.is_decreasing()) {
            return Err(ConfigError::range("gamma", "schedule must be strictly monotone"));
        }
        if self.search.starts == 0 {
            return Err(ConfigError::range("search.starts", "must be at least 1"));
        }
        if let Some(eta) = self.search.eta {
            positive("search.eta", eta)?;
        }
        if !matches!(self.initial, InitialGuess::Ansatz | InitialGuess::Zero) {
            return Err(ConfigError::range("initial", "must be `ansatz` or `zero`"));
        }
        positive("newton.tol_factor", self.newton.tol_factor)?;
        if self.newton.max_iter == 0 {
            return Err(ConfigError::range("newton.max_iter", "must be at least 1"));
        }
        let t = &self.tolerances;
        positive("tolerances.mass", t.mass)?;
        positive("tolerances.location", t.location)?;
        positive("tolerances.nodal_threshold", t.nodal_threshold)?;
        positive("tolerances.asymptotics.argmax_fraction", t.asymptotics.argmax_fraction)?;
        positive("tolerances.asymptotics.theta_gap", t.asymptotics.theta_gap)?;
        positive("tolerances.asymptotics.monotone_slack", t.asymptotics.monotone_slack)?;
        if let Some(p) = &self.positions {
            for (name, x) in [("positions.xi1", p.xi1), ("positions.xi2", p.xi2)] {
                if !self.shape.contains(x) {
                    return Err(ConfigError::range(name, format!("{x:?} is not inside the domain")));
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON of the validated configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Resolves an output file: explicit path, else `name` inside `output.dir`.
    pub fn output_path(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        match explicit {
            Some(p) => p.clone(),
            None => self.output.dir.clone().unwrap_or_default().join(name),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"shape": {"kind": "disk", "radius": 1.0}, "seed": 7, "rho": 0.01}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.n, 129);
        assert_eq!(c.rho.0, vec![0.01]);
        assert_eq!(c.gamma.0, vec![1.0]);
        assert_eq!(c.tau, 1.0);
        assert_eq!(c.projection, ProjectionMode::Exact);
        assert_eq!(c.newton, NewtonOptions::default());
        assert_eq!(c.refine, RefinePolicy::Fail);
    }

    #[test]
    fn negative_tau_is_a_range_error_naming_tau() {
        let text = r#"{"shape": {"kind": "disk", "radius": 1.0}, "seed": 1, "gamma": "1,2,4", "tau": -1}"#;
        match parse_config(text) {
            Err(ConfigError::Range { field, .. }) => assert_eq!(field, "tau"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_schema_errors_with_path() {
        let text = r#"{"shape": {"kind": "disk", "radius": 1.0}, "seed": 1, "newton": {"tol": 1e-3}}"#;
        match parse_config(text) {
            Err(ConfigError::Schema { path, .. }) => assert!(path.starts_with("newton"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_is_mandatory() {
        let text = r#"{"shape": {"kind": "disk", "radius": 1.0}}"#;
        assert!(matches!(parse_config(text), Err(ConfigError::Schema { .. })));
    }

    #[test]
    fn schedules_must_be_monotone() {
        let text = r#"{"shape": {"kind": "disk", "radius": 1.0}, "seed": 1, "rho": [0.01, 0.02]}"#;
        assert!(matches!(parse_config(text), Err(ConfigError::Range { field, .. }) if field == "rho"));
        let text = r#"{"shape": {"kind": "disk", "radius": 1.0}, "seed": 1, "gamma": [1, 4, 2]}"#;
        assert!(matches!(parse_config(text), Err(ConfigError::Range { field, .. }) if field == "gamma"));
    }

    #[test]
    fn grids_below_the_minimum_size_are_rejected() {
        let text = r#"{"shape": {"kind": "disk", "radius": 1.0}, "seed": 1, "n": 16}"#;
        assert!(matches!(parse_config(text), Err(ConfigError::Range { field, .. }) if field == "n"));
        let text = r#"{"shape": {"kind": "disk", "radius": 1.0}, "seed": 1, "n": 17}"#;
        assert!(parse_config(text).is_ok());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = parse_config(MINIMAL).unwrap();
        let b = parse_config(MINIMAL).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.seed += 1;
        assert_ne!(a.hash(), c.hash());
        let again = parse_config(&a.canonical_json()).unwrap();
        assert_eq!(again, a);
    }
}
