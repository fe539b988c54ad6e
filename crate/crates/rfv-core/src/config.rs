//! Run configuration shared by the CLI and service. Unknown keys are
//! rejected; the accepted shape is published as a JSON schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyConfig;
use crate::retriever::EmbedderConfig;
use crate::sim::SimConfig;

/// Top-level configuration: embedder, policy (which embeds the featurizer
/// and token-merging settings), and simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub embedder: EmbedderConfig,
    pub policy: PolicyConfig,
    pub sim: SimConfig,
    /// Entries synthesized per task by `bank-synth`.
    pub bank_entries_per_task: usize,
    /// Demos generated per task by `demo-synth`.
    pub demos_per_task: usize,
    pub eval_seeds: Vec<u64>,
    pub eval_episodes: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedder.dim == 0 {
            return Err(Error::Config("embedder.dim must be >= 1".into()));
        }
        self.policy.validate()?;
        if self.policy.views != self.sim.views {
            return Err(Error::Config(format!(
                "policy.views {:?} must match sim.views {:?}",
                self.policy.views, self.sim.views
            )));
        }
        if self.eval_episodes == 0 || self.eval_seeds.is_empty() {
            return Err(Error::Config("eval_seeds and eval_episodes must be non-empty".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        RunConfig::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            embedder: EmbedderConfig::default(),
            policy: PolicyConfig::default(),
            sim: SimConfig::default(),
            bank_entries_per_task: 12,
            demos_per_task: 10,
            eval_seeds: vec![1, 2, 3],
            eval_episodes: 20,
        }
    }
}

/// The published schema for [`RunConfig`]; `rfv schema` prints it.
pub const RUN_CONFIG_SCHEMA: &str = include_str!("run_config.schema.json");
