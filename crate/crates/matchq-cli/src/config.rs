//! Run configuration: TOML schema, env-var overrides, and manifests.
//!
//! Precedence, lowest to highest: built-in defaults, config file, `MATCHQ_*`
//! environment variables, command-line flags.

use matchq::ctmc::{AdaptiveOptions, ChainOptions};
use matchq::equilibrium::{ProjectionOptions, ScalarOptions};
use matchq::model::{MarketParams, PolicySelector, PolicySpec, StrategyProfile, SystemState};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketParams,
    pub policy: PolicySelector,
    /// Queue-joining probabilities, or the string `"solve"` to compute an
    /// equilibrium first.
    #[serde(default)]
    pub sigma: SigmaConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub couple: Option<CoupleConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaConfig {
    Keyword(String),
    Matrix(Vec<Vec<f64>>),
}

impl Default for SigmaConfig {
    fn default() -> Self {
        SigmaConfig::Keyword("solve".to_string())
    }
}

impl SigmaConfig {
    pub fn is_solve(&self) -> Result<bool, String> {
        match self {
            SigmaConfig::Keyword(k) if k == "solve" => Ok(true),
            SigmaConfig::Keyword(k) => Err(format!("unknown sigma keyword {k:?}")),
            SigmaConfig::Matrix(_) => Ok(false),
        }
    }

    pub fn profile(&self) -> Result<Option<StrategyProfile>, String> {
        match self {
            SigmaConfig::Matrix(rows) => StrategyProfile::new(rows.clone())
                .map(Some)
                .map_err(|e| e.to_string()),
            SigmaConfig::Keyword(_) => self.is_solve().map(|_| None),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Uniform per-cell truncation cap; 0 selects adaptive truncation.
    pub cap: u64,
    /// Boundary-mass target of the adaptive truncation.
    pub tail: f64,
    /// Equilibrium residual tolerance (time units).
    pub tol: f64,
    /// Projection-iteration budget.
    pub max_iter: usize,
    /// Grid points of the scalar equilibrium scan.
    pub grid: usize,
    pub state_budget: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            cap: 0,
            tail: 1e-8,
            tol: 1e-6,
            max_iter: 500,
            grid: 13,
            state_budget: 2_000_000,
        }
    }
}

impl SolverConfig {
    pub fn adaptive(&self) -> AdaptiveOptions {
        AdaptiveOptions {
            tail_target: self.tail,
            chain: ChainOptions {
                state_budget: self.state_budget,
                ..ChainOptions::default()
            },
            ..AdaptiveOptions::default()
        }
    }

    pub fn scalar(&self) -> ScalarOptions {
        ScalarOptions {
            grid: self.grid,
            tol: self.tol,
            adaptive: self.adaptive(),
            ..ScalarOptions::default()
        }
    }

    pub fn projection(&self) -> ProjectionOptions {
        ProjectionOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            adaptive: self.adaptive(),
            ..ProjectionOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub horizon: f64,
    pub replications: usize,
    pub warmup: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 10_000.0,
            replications: 10_000,
            warmup: 5.0,
        }
    }
}

/// Coupled-comparison inputs: the base state and the extra specialized type.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleConfig {
    /// Base state as `[agent_type, queue, count]` triples.
    #[serde(default)]
    pub state: Vec<(usize, usize, u64)>,
    #[serde(default = "default_extra_type")]
    pub extra_type: usize,
    #[serde(default = "default_couple_horizon")]
    pub horizon: f64,
}

fn default_extra_type() -> usize {
    1
}

fn default_couple_horizon() -> f64 {
    2.5
}

impl CoupleConfig {
    pub fn base_state(&self) -> SystemState {
        SystemState::from_cells(&self.state)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub path: Option<String>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl RunConfig {
    pub fn policy_spec(&self) -> Result<PolicySpec, String> {
        self.policy
            .build(self.market.ell())
            .map_err(|e| e.to_string())
    }

    /// Canonical TOML text of the resolved configuration.
    pub fn canonical_toml(&self) -> Result<String, String> {
        toml::to_string(self).map_err(|e| e.to_string())
    }
}

/// Wrapper stored next to artifacts; feeding it back as `--config`
/// reproduces the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: String,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Result<Self, String> {
        let text = config.canonical_toml()?;
        Ok(Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: config.seed,
            config_hash: matchq::experiments::fnv1a_hex(&text),
            config: text,
        })
    }
}

/// Load a config from TOML, or from a previously emitted manifest (JSON).
pub fn load_config(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("reading {path:?}: {e}"))?;
    if let Ok(manifest) = serde_json::from_str::<RunManifest>(&text) {
        return toml::from_str(&manifest.config)
            .map_err(|e| format!("config inside manifest {path:?}: {e}"));
    }
    toml::from_str(&text).map_err(|e| format!("parsing {path:?}: {e}"))
}

/// Apply `MATCHQ_*` environment overrides.
pub fn apply_env(config: &mut RunConfig) -> Result<(), String> {
    fn parse<T: std::str::FromStr>(name: &str) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        match std::env::var(name) {
            Ok(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| format!("{name}={v:?}: {e}")),
            Err(_) => Ok(None),
        }
    }
    if let Some(seed) = parse::<u64>("MATCHQ_SEED")? {
        config.seed = seed;
    }
    if let Some(cap) = parse::<u64>("MATCHQ_CAP")? {
        config.solver.cap = cap;
    }
    if let Some(horizon) = parse::<f64>("MATCHQ_HORIZON")? {
        config.sim.horizon = horizon;
    }
    if let Some(reps) = parse::<usize>("MATCHQ_REPS")? {
        config.sim.replications = reps;
    }
    if let Some(out) = parse::<String>("MATCHQ_OUT")? {
        config.output.path = Some(out);
    }
    if let Some(format) = parse::<String>("MATCHQ_FORMAT")? {
        config.output.format = Some(match format.as_str() {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => return Err(format!("MATCHQ_FORMAT={other:?}: expected csv or json")),
        });
    }
    Ok(())
}
