//! Run configuration. Input paths resolve against the config file's
//! directory and must exist when the config is loaded; `out_dir` is taken
//! relative to the working directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cohort::CohortSpec;
use super::RunError;
use crate::agent::AgentConfig;
use crate::model::ModelConfig;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub cohort: CohortSpec,
    #[serde(default)]
    pub scenarios: Vec<PathBuf>,
    #[serde(default)]
    pub interaction_suite: Option<PathBuf>,
    pub registry: PathBuf,
    #[serde(default)]
    pub grammar: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default = "RunConfig::default_out")]
    pub out_dir: PathBuf,
}

impl RunConfig {
    fn default_out() -> PathBuf {
        PathBuf::from("out")
    }

    pub fn bundled_path() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo_config.toml")
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, RunError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.scenarios.iter_mut().for_each(abs);
        abs(&mut cfg.registry);
        if let Some(p) = cfg.interaction_suite.as_mut() {
            abs(p);
        }
        if let Some(p) = cfg.grammar.as_mut() {
            abs(p);
        }
        let mut must_exist: Vec<&PathBuf> = cfg.scenarios.iter().collect();
        must_exist.push(&cfg.registry);
        must_exist.extend(cfg.interaction_suite.iter());
        must_exist.extend(cfg.grammar.iter());
        if let Some(p) = must_exist.into_iter().find(|p| !p.exists()) {
            return Err(RunError::Config(format!("{} does not exist", p.display())));
        }
        cfg.model.validate()?;
        cfg.set_seed(cfg.seed);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Set the run seed and push it into every seeded component.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.model.seed = seed::derive(seed, "model");
    }

    /// Seed used to simulate a scenario script: the script's own seed mixed
    /// with the run seed.
    pub fn scenario_seed(&self, script_seed: u64) -> u64 {
        seed::derive(self.seed, &format!("scenario-{script_seed}"))
    }
}
