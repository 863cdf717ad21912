use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use demfeed::feed::FeedParams;
use demfeed::Condition;
use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentPolicy;
use crate::ServiceError;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_ADMIN_TOKEN_ENV: &str = "DEMFEED_ADMIN_TOKEN";

/// Per-condition changes to the shared feed parameters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedOverride {
    pub feed_size: Option<usize>,
    pub threshold: Option<u8>,
    pub replacement_ceiling: Option<u8>,
    pub seed: Option<u64>,
}

/// Service configuration, read from TOML or JSON. Relative paths are taken
/// from the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    /// Post inventory (corpus JSONL).
    pub inventory: PathBuf,
    /// Score column (CSV or JSONL) used to rank the inventory.
    pub scores: PathBuf,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    /// Name of the environment variable holding the export token.
    #[serde(default = "default_token_env")]
    pub admin_token_env: String,
    #[serde(default)]
    pub feed: FeedParams,
    #[serde(default)]
    pub conditions: BTreeMap<Condition, FeedOverride>,
    #[serde(default)]
    pub assignment: AssignmentPolicy,
    /// Feed timestamp; defaults to the newest post in the inventory.
    #[serde(default)]
    pub generated_at: Option<DateTime<Utc>>,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    /// Whether the viewer should offer like/reaction/share buttons.
    #[serde(default = "default_true")]
    pub show_reactions: bool,
}

fn default_bind() -> String {
    "127.0.0.1".into()
}
fn default_port() -> u16 {
    DEFAULT_PORT
}
fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}
fn default_token_env() -> String {
    DEFAULT_ADMIN_TOKEN_ENV.into()
}
fn default_snapshot_every() -> usize {
    1000
}
fn default_true() -> bool {
    true
}

impl ServiceConfig {
    pub fn new(inventory: PathBuf, scores: PathBuf) -> Self {
        Self {
            inventory,
            scores,
            bind: default_bind(),
            port: default_port(),
            data_dir: default_data_dir(),
            admin_token_env: default_token_env(),
            feed: FeedParams::default(),
            conditions: BTreeMap::new(),
            assignment: AssignmentPolicy::default(),
            generated_at: None,
            snapshot_every: default_snapshot_every(),
            show_reactions: true,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::BadRequest(format!("reading {}: {e}", path.display())))?;
        let mut config: ServiceConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| ServiceError::BadRequest(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text).map_err(|e| ServiceError::BadRequest(format!("{}: {e}", path.display())))?,
        };
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.inventory, &mut self.scores, &mut self.data_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Shared parameters with the condition's overrides applied.
    pub fn params_for(&self, condition: Condition) -> FeedParams {
        let mut p = self.feed;
        if let Some(o) = self.conditions.get(&condition) {
            p.feed_size = o.feed_size.unwrap_or(p.feed_size);
            p.threshold = o.threshold.unwrap_or(p.threshold);
            p.replacement_ceiling = o.replacement_ceiling.unwrap_or(p.replacement_ceiling);
            p.seed = o.seed.unwrap_or(p.seed);
        }
        p
    }

    pub fn admin_token(&self) -> Option<String> {
        std::env::var(&self.admin_token_env).ok().filter(|t| !t.is_empty())
    }
}
