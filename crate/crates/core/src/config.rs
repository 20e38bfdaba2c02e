//! Pipeline configuration, loadable from a TOML or JSON providers file:
//!
//! ```toml
//! active_provider = "openai"
//!
//! [[providers]]
//! provider_id = "openai"
//! endpoint_url = "https://api.openai.com/v1/chat/completions"
//! model_name = "gpt-4o"
//! credentials_env_var = "OPENAI_API_KEY"
//!
//! [images]
//! endpoint_url = "https://api.pexels.com/v1/search"
//! credentials_env_var = "PEXELS_API_KEY"
//!
//! [loop]
//! max_versions = 4
//! ```
//!
//! Everything is optional; the empty file selects the built-in stub
//! provider and the offline image fixtures.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::GenerationOptions;
use crate::critic::LoopConfig;
use crate::gateway::{GatewayError, ModelGateway, ProviderConfig, ProviderHandle, STUB_PROVIDER_ID};
use crate::images::ImageSearchConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn default_active_provider() -> String {
    STUB_PROVIDER_ID.to_string()
}

fn default_max_output_chars() -> usize {
    GenerationOptions::default().max_output_chars
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSettings {
    /// Upper bound on any single model response, in characters.
    pub max_output_chars: usize,
    /// Origins generated sites may load scripts and stylesheets from.
    pub allowed_origins: Vec<String>,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self { max_output_chars: default_max_output_chars(), allowed_origins: Vec::new() }
    }
}

impl GenerationSettings {
    pub fn options(&self) -> GenerationOptions {
        GenerationOptions {
            max_output_chars: self.max_output_chars,
            allowed_origins: self.allowed_origins.iter().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_active_provider")]
    pub active_provider: String,
    #[serde(default)]
    pub providers: Vec<ProviderConfig>,
    #[serde(default)]
    pub images: ImageSearchConfig,
    #[serde(default, rename = "loop")]
    pub loop_config: LoopConfig,
    #[serde(default)]
    pub generation: GenerationSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            active_provider: default_active_provider(),
            providers: Vec::new(),
            images: ImageSearchConfig::default(),
            loop_config: LoopConfig::default(),
            generation: GenerationSettings::default(),
        }
    }
}

impl PipelineConfig {
    /// Load a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: display.clone(), source })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let config: Self = if is_json {
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse { path: display, reason: e.to_string() })?
        } else {
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: display, reason: e.to_string() })?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for p in &self.providers {
            p.validate()?;
        }
        if self.active_provider != STUB_PROVIDER_ID && !self.providers.iter().any(|p| p.provider_id == self.active_provider) {
            return Err(ConfigError::Invalid(format!("active_provider {} is not defined", self.active_provider)));
        }
        self.images.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.loop_config.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.generation.max_output_chars == 0 {
            return Err(ConfigError::Invalid("generation.max_output_chars must be positive".into()));
        }
        Ok(())
    }

    /// A gateway with every configured provider registered, and the handle
    /// of the active one.
    pub fn build_gateway(&self) -> Result<(ModelGateway, ProviderHandle), ConfigError> {
        let gateway = ModelGateway::new();
        for p in &self.providers {
            gateway.register_provider(p.clone())?;
        }
        let active = gateway.handle(&self.active_provider)?;
        Ok((gateway, active))
    }
}
