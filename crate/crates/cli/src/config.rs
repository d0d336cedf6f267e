//! Optional TOML config file. Command-line flags override it; the API key
//! only ever comes from the environment.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use kbe_core::provider::{ChatConfig, ImageMode};
use serde::Deserialize;

pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub provider: ProviderSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    /// Offline knowledge base file or directory.
    pub offline: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub max_attempts: Option<u32>,
    pub backoff_ms: Option<u64>,
    pub rate_limit: Option<f64>,
    pub image_mode: Option<ImageMode>,
    pub image_root: Option<PathBuf>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub hops: Option<u32>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub max_path_len: Option<usize>,
    /// Replacement noun list, one word per line.
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub max_response_words: Option<usize>,
    pub jobs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
            .with_context(|| format!("in config {}", path.display()))
    }

    /// Parses `text`, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text)?;
        if raw
            .get("provider")
            .and_then(|p| p.as_table())
            .is_some_and(|p| p.contains_key("api_key"))
        {
            bail!("api keys are not read from config files; set {DEFAULT_API_KEY_ENV} (or the variable named by api_key_env)");
        }
        let mut config: FileConfig = raw.try_into()?;
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        resolve(&mut config.provider.offline);
        resolve(&mut config.provider.cache_dir);
        resolve(&mut config.provider.image_root);
        resolve(&mut config.pipeline.lexicon);
        Ok(config)
    }
}

impl ProviderSection {
    /// Chat client settings, reading the key from the environment.
    pub fn chat_config(&self, env: impl Fn(&str) -> Option<String>) -> ChatConfig {
        let d = ChatConfig::default();
        let key_var = self.api_key_env.as_deref().unwrap_or(DEFAULT_API_KEY_ENV);
        ChatConfig {
            endpoint: self.endpoint.clone().unwrap_or(d.endpoint),
            model: self.model.clone().unwrap_or(d.model),
            api_key: env(key_var).filter(|k| !k.is_empty()),
            temperature: self.temperature.unwrap_or(d.temperature),
            max_tokens: self.max_tokens.or(d.max_tokens),
            max_attempts: self.max_attempts.unwrap_or(d.max_attempts),
            backoff_base: self.backoff_ms.map_or(d.backoff_base, Duration::from_millis),
            rate_limit: self.rate_limit.or(d.rate_limit),
            image_mode: self.image_mode.unwrap_or(d.image_mode),
            image_root: self.image_root.clone().or(d.image_root),
            timeout: self.timeout_secs.map_or(d.timeout, Duration::from_secs),
        }
    }
}
