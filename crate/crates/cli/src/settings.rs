use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::CliError;

pub const ENV_PREFIX: &str = "DEMFEED_";
pub const DEFAULT_CONCURRENCY: usize = 4;
pub const DEFAULT_REQUESTS_PER_MINUTE: u32 = 60;
pub const DEFAULT_SEED: u64 = 0;

/// One source of settings. Every field is optional so sources can be
/// stacked; the first source that sets a field wins.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub corpus: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub fixture: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub backend: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub concurrency: Option<usize>,
    pub prompt_version: Option<String>,
    pub requests_per_minute: Option<u32>,
    pub seed: Option<u64>,
    pub feed_size: Option<usize>,
    pub threshold: Option<u8>,
    pub replacement_ceiling: Option<u8>,
}

impl Layer {
    /// Settings file, TOML unless the extension is `.json`. Relative paths
    /// are taken from the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        let mut layer: Layer = if path.extension().and_then(|e| e.to_str()) == Some("json") {
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?
        };
        if let Some(base) = path.parent() {
            for p in [
                &mut layer.corpus,
                &mut layer.scores,
                &mut layer.cache,
                &mut layer.fixture,
                &mut layer.data_dir,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(layer)
    }

    /// `DEMFEED_<FIELD>` variables, e.g. `DEMFEED_CORPUS`, `DEMFEED_SEED`.
    pub fn from_env() -> Result<Self, CliError> {
        Self::from_lookup(|name| std::env::var(format!("{ENV_PREFIX}{name}")).ok().filter(|v| !v.is_empty()))
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        fn parsed<T: FromStr>(get: &impl Fn(&str) -> Option<String>, name: &str) -> Result<Option<T>, CliError> {
            get(name)
                .map(|v| {
                    v.trim()
                        .parse()
                        .map_err(|_| CliError::Validation(format!("{ENV_PREFIX}{name}: cannot parse `{v}`")))
                })
                .transpose()
        }
        Ok(Self {
            corpus: get("CORPUS").map(PathBuf::from),
            scores: get("SCORES").map(PathBuf::from),
            cache: get("CACHE").map(PathBuf::from),
            fixture: get("FIXTURE").map(PathBuf::from),
            data_dir: get("DATA_DIR").map(PathBuf::from),
            backend: get("BACKEND"),
            model: get("MODEL"),
            temperature: parsed(&get, "TEMPERATURE")?,
            concurrency: parsed(&get, "CONCURRENCY")?,
            prompt_version: get("PROMPT_VERSION"),
            requests_per_minute: parsed(&get, "REQUESTS_PER_MINUTE")?,
            seed: parsed(&get, "SEED")?,
            feed_size: parsed(&get, "FEED_SIZE")?,
            threshold: parsed(&get, "THRESHOLD")?,
            replacement_ceiling: parsed(&get, "REPLACEMENT_CEILING")?,
        })
    }

    /// Fill every unset field from `lower`.
    pub fn over(self, lower: Layer) -> Layer {
        Layer {
            corpus: self.corpus.or(lower.corpus),
            scores: self.scores.or(lower.scores),
            cache: self.cache.or(lower.cache),
            fixture: self.fixture.or(lower.fixture),
            data_dir: self.data_dir.or(lower.data_dir),
            backend: self.backend.or(lower.backend),
            model: self.model.or(lower.model),
            temperature: self.temperature.or(lower.temperature),
            concurrency: self.concurrency.or(lower.concurrency),
            prompt_version: self.prompt_version.or(lower.prompt_version),
            requests_per_minute: self.requests_per_minute.or(lower.requests_per_minute),
            seed: self.seed.or(lower.seed),
            feed_size: self.feed_size.or(lower.feed_size),
            threshold: self.threshold.or(lower.threshold),
            replacement_ceiling: self.replacement_ceiling.or(lower.replacement_ceiling),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

/// Config file and environment, already stacked.
pub fn base_layer(config: Option<&Path>) -> Result<Layer, CliError> {
    let file = match config {
        Some(path) => Layer::from_file(path)?,
        None => Layer::default(),
    };
    Ok(file.over(Layer::from_env()?))
}

pub fn required(value: Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    value.ok_or_else(|| {
        CliError::Validation(format!(
            "no {what} path: pass --{what}, set `{what}` in the config file or {ENV_PREFIX}{}",
            what.to_uppercase()
        ))
    })
}
