//! Experiment configuration files.
//!
//! ```toml
//! seed = 0
//!
//! [catalog]
//! units = "kbit"                 # or "bit" (default)
//! zipf = { n = 6, theta = 0.56 } # or: popularity = [0.3, 0.25, ...]
//! sizes = 1.0                    # one size for every file, or a list
//!
//! [users]
//! k = 4
//! activity = 0.5                 # or one probability per user
//!
//! [run]
//! m_grid = [2.0, 3.0]
//! schemes = ["gp_dmccs", "pfsa", "gp_lb"]
//!
//! [solver]                       # optional
//! outer_tol = 1e-4
//!
//! [simulation]                   # optional, used by `simulate`
//! f_scale = 10.0
//! trials = 2000
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use dmccs::combinatorics::MAX_ENUMERATED_USERS;
use dmccs::gp::SolverConfig;
use dmccs::rate::{expectation_terms, MAX_EXPECTATION_TERMS};
use dmccs::{build_catalog, zipf_popularity, FileCatalog, UserPopulation};
use serde::Deserialize;
use thiserror::Error;

/// A configuration problem, located by its field path.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: &str, message: impl Into<String>) -> Self {
        Self { path: path.to_string(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    GpDmccs,
    GpLb,
    GpDccs,
    Pfsa,
    Pf,
    Sf,
}

impl SchemeName {
    pub const ALL: [SchemeName; 6] =
        [SchemeName::GpDmccs, SchemeName::GpLb, SchemeName::GpDccs, SchemeName::Pfsa, SchemeName::Pf, SchemeName::Sf];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeName::GpDmccs => "gp_dmccs",
            SchemeName::GpLb => "gp_lb",
            SchemeName::GpDccs => "gp_dccs",
            SchemeName::Pfsa => "pfsa",
            SchemeName::Pf => "pf",
            SchemeName::Sf => "sf",
        }
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|n| n.as_str() == s).ok_or_else(|| format!("unknown scheme {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Bit,
    Kbit,
}

impl Units {
    pub fn bits(self) -> f64 {
        match self {
            Units::Bit => 1.0,
            Units::Kbit => 1000.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl ScalarOrList {
    fn expand(&self, n: usize, path: &str) -> Result<Vec<f64>, ConfigError> {
        match self {
            ScalarOrList::Scalar(v) => Ok(vec![*v; n]),
            ScalarOrList::List(v) if v.len() == n => Ok(v.clone()),
            ScalarOrList::List(v) => Err(ConfigError::new(path, format!("expected {n} entries, found {}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZipfSpec {
    n: usize,
    theta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogSpec {
    #[serde(default)]
    units: Units,
    popularity: Option<Vec<f64>>,
    zipf: Option<ZipfSpec>,
    sizes: ScalarOrList,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct UsersSpec {
    k: usize,
    activity: ScalarOrList,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSpec {
    #[serde(default)]
    m_grid: Vec<f64>,
    schemes: Vec<SchemeName>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSpec {
    outer_tol: Option<f64>,
    inner_tol: Option<f64>,
    max_outer: Option<usize>,
    max_inner: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationSpec {
    #[serde(default = "one")]
    f_scale: f64,
    #[serde(default = "default_trials")]
    trials: usize,
}

fn one() -> f64 {
    1.0
}

fn default_trials() -> usize {
    2000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    catalog: CatalogSpec,
    users: UsersSpec,
    run: RunSpec,
    #[serde(default)]
    solver: SolverSpec,
    simulation: Option<SimulationSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSettings {
    /// Multiplier from file sizes in bits to simulated bits.
    pub f_scale: f64,
    pub trials: usize,
}

/// A validated experiment. Sizes and cache sizes are in bits.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub catalog: FileCatalog,
    /// `perm[i]` is the config position of canonical file `i`.
    pub perm: Vec<usize>,
    pub units: Units,
    pub users: UserPopulation,
    pub m_grid: Vec<f64>,
    pub schemes: Vec<SchemeName>,
    pub solver: SolverConfig,
    pub simulation: Option<SimulationSettings>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::new("<config>", e.message()))?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(&path.display().to_string(), e.to_string()))?;
        Self::from_toml(&text)
    }

    /// Config units to bits.
    pub fn unit(&self) -> f64 {
        self.units.bits()
    }

    fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let c = raw.catalog;
        let popularity = match (c.popularity, c.zipf) {
            (Some(p), None) => p,
            (None, Some(z)) => {
                zipf_popularity(z.n, z.theta).map_err(|e| ConfigError::new("catalog.zipf", e.to_string()))?
            }
            (Some(_), Some(_)) => return Err(ConfigError::new("catalog", "give either popularity or zipf, not both")),
            (None, None) => return Err(ConfigError::new("catalog", "missing popularity or zipf")),
        };
        let unit = c.units.bits();
        let sizes: Vec<f64> = c.sizes.expand(popularity.len(), "catalog.sizes")?.iter().map(|f| f * unit).collect();
        let (catalog, perm) =
            build_catalog(&popularity, &sizes).map_err(|e| ConfigError::new("catalog", e.to_string()))?;

        let k = raw.users.k;
        if k == 0 || k > MAX_ENUMERATED_USERS {
            return Err(ConfigError::new("users.k", format!("must be in 1..={MAX_ENUMERATED_USERS}")));
        }
        let terms = expectation_terms(catalog.n_files(), k);
        if terms > MAX_EXPECTATION_TERMS {
            return Err(ConfigError::new(
                "users.k",
                format!("{k} users and {} files need {terms:e} scenario terms (limit {MAX_EXPECTATION_TERMS:e})", catalog.n_files()),
            ));
        }
        let activity = raw.users.activity.expand(k, "users.activity")?;
        let users = UserPopulation::new(activity).map_err(|e| ConfigError::new("users.activity", e.to_string()))?;

        if raw.run.schemes.is_empty() {
            return Err(ConfigError::new("run.schemes", "at least one scheme is required"));
        }
        let mut schemes = Vec::new();
        for s in raw.run.schemes {
            if !schemes.contains(&s) {
                schemes.push(s);
            }
        }
        if let Some((i, m)) = raw.run.m_grid.iter().enumerate().find(|(_, m)| !(**m >= 0.0 && m.is_finite())) {
            return Err(ConfigError::new(&format!("run.m_grid[{i}]"), format!("{m} is not a nonnegative number")));
        }
        let m_grid = raw.run.m_grid.iter().map(|m| m * unit).collect();

        let mut solver = SolverConfig::default();
        let s = raw.solver;
        solver.outer_tol = s.outer_tol.unwrap_or(solver.outer_tol);
        solver.inner_tol = s.inner_tol.unwrap_or(solver.inner_tol);
        solver.max_outer = s.max_outer.unwrap_or(solver.max_outer);
        solver.max_inner = s.max_inner.unwrap_or(solver.max_inner);
        solver.validate().map_err(|e| ConfigError::new("solver", e.to_string()))?;

        let simulation = match raw.simulation {
            Some(sim) => {
                if !(sim.f_scale > 0.0 && sim.f_scale.is_finite()) {
                    return Err(ConfigError::new("simulation.f_scale", "must be positive"));
                }
                if sim.trials == 0 {
                    return Err(ConfigError::new("simulation.trials", "must be at least 1"));
                }
                Some(SimulationSettings { f_scale: sim.f_scale, trials: sim.trials })
            }
            None => None,
        };

        Ok(Self {
            catalog,
            perm,
            units: c.units,
            users,
            m_grid,
            schemes,
            solver,
            simulation,
            seed: raw.seed.unwrap_or(0),
        })
    }

    /// Reorders a canonical per-file vector into config order.
    pub fn to_input_order(&self, canonical: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; canonical.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = canonical[i];
        }
        out
    }
}
