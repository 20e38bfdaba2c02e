//! Provider-agnostic access to text and vision models.
//!
//! A [`ModelGateway`] owns a registry of providers keyed by id. The
//! deterministic [`stub`] provider is always registered under `"stub"`, so
//! the whole pipeline runs offline. Live providers speak an
//! OpenAI-compatible chat-completions protocol (see [`http`]).
//!
//! Credentials are read from the environment at call time and never stored
//! in configs, logs or errors.

pub mod http;
pub mod stub;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::digest::ContentDigest;

pub use stub::{StubCriticMode, StubProvider, ALWAYS_CRITIQUE_MODEL};

/// Id under which the stub provider is always registered.
pub const STUB_PROVIDER_ID: &str = "stub";
/// `endpoint_url` value selecting the stub implementation.
pub const STUB_ENDPOINT: &str = "stub";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("provider {provider_id} unavailable after {attempts} attempt(s): {reason}")]
    ProviderUnavailable { provider_id: String, attempts: u32, reason: String },
    #[error("provider {provider_id} rejected the credential: {reason}")]
    AuthError { provider_id: String, reason: String },
    #[error("response of {chars} chars exceeds the limit of {limit}")]
    OutputTooLarge { chars: usize, limit: usize },
    #[error("provider {provider_id} returned an empty response")]
    EmptyResponse { provider_id: String },
    #[error("provider {0} is already registered")]
    DuplicateProvider(String),
    #[error("no provider registered under {0}")]
    UnknownProvider(String),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("invalid model request: {0}")]
    InvalidRequest(String),
}

/// Which pipeline step a model call serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Design,
    Code,
    CriticReview,
    CriticRefine,
}

impl ModelRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelRole::Design => "design",
            ModelRole::Code => "code",
            ModelRole::CriticReview => "critic_review",
            ModelRole::CriticRefine => "critic_refine",
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct ImageAttachment {
    pub bytes: Vec<u8>,
    pub media_type: String,
}

impl fmt::Debug for ImageAttachment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageAttachment")
            .field("len", &self.bytes.len())
            .field("media_type", &self.media_type)
            .finish()
    }
}

impl ImageAttachment {
    pub fn digest(&self) -> ContentDigest {
        ContentDigest::of(&self.bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelRequest {
    role: ModelRole,
    system_text: String,
    user_text: String,
    image: Option<ImageAttachment>,
    max_output_chars: usize,
}

impl ModelRequest {
    pub fn new(
        role: ModelRole,
        system_text: impl Into<String>,
        user_text: impl Into<String>,
        max_output_chars: usize,
    ) -> Result<Self, GatewayError> {
        if max_output_chars == 0 {
            return Err(GatewayError::InvalidRequest("max_output_chars must be positive".into()));
        }
        Ok(Self {
            role,
            system_text: system_text.into(),
            user_text: user_text.into(),
            image: None,
            max_output_chars,
        })
    }

    /// Attach an image. Only design requests carry images.
    pub fn with_image(mut self, image: ImageAttachment) -> Result<Self, GatewayError> {
        if self.role != ModelRole::Design {
            return Err(GatewayError::InvalidRequest(format!(
                "images are only accepted for design requests, not {}",
                self.role.as_str()
            )));
        }
        if image.bytes.is_empty() {
            return Err(GatewayError::InvalidRequest("image attachment is empty".into()));
        }
        self.image = Some(image);
        Ok(self)
    }

    pub fn role(&self) -> ModelRole {
        self.role
    }
    pub fn system_text(&self) -> &str {
        &self.system_text
    }
    pub fn user_text(&self) -> &str {
        &self.user_text
    }
    pub fn image(&self) -> Option<&ImageAttachment> {
        self.image.as_ref()
    }
    pub fn max_output_chars(&self) -> usize {
        self.max_output_chars
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub provider_id: String,
    pub latency_ms: u64,
}

/// Environment variable read for live model API keys unless configured.
pub const DEFAULT_CREDENTIALS_ENV_VAR: &str = "FD_LLM_API_KEY";

fn default_credentials_env_var() -> String {
    DEFAULT_CREDENTIALS_ENV_VAR.into()
}

fn default_timeout_ms() -> u64 {
    60_000
}
fn default_max_retries() -> u32 {
    2
}
fn default_backoff_base_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider_id: String,
    /// Full URL of a chat-completions endpoint, or `"stub"`.
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_credentials_env_var")]
    pub credentials_env_var: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// First retry delay; each further retry doubles it.
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
}

impl ProviderConfig {
    pub fn stub(provider_id: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            provider_id: provider_id.into(),
            endpoint_url: STUB_ENDPOINT.into(),
            model_name: model_name.into(),
            credentials_env_var: String::new(),
            timeout_ms: default_timeout_ms(),
            max_retries: 0,
            backoff_base_ms: default_backoff_base_ms(),
        }
    }

    pub fn is_stub(&self) -> bool {
        self.endpoint_url == STUB_ENDPOINT
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.provider_id.trim().is_empty() {
            return Err(GatewayError::InvalidConfig("provider_id is empty".into()));
        }
        if self.timeout_ms < 1000 {
            return Err(GatewayError::InvalidConfig(format!(
                "timeout_ms must be at least 1000, got {}",
                self.timeout_ms
            )));
        }
        if !self.is_stub() {
            let url = reqwest::Url::parse(&self.endpoint_url)
                .map_err(|e| GatewayError::InvalidConfig(format!("endpoint_url: {e}")))?;
            if !matches!(url.scheme(), "http" | "https") {
                return Err(GatewayError::InvalidConfig(format!(
                    "endpoint_url must be http(s) or \"stub\", got {}",
                    self.endpoint_url
                )));
            }
            if self.credentials_env_var.trim().is_empty() {
                return Err(GatewayError::InvalidConfig(
                    "live providers need credentials_env_var".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Outcome of a single transport attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttemptError {
    /// Worth retrying: connection failures, timeouts, 429 and 5xx.
    Transient(String),
    /// Credential missing or rejected. Never retried.
    Auth(String),
    /// Any other failure. Never retried.
    Fatal(String),
}

/// One backend able to answer model requests.
#[async_trait]
pub trait Provider: Send + Sync {
    async fn send(&self, request: &ModelRequest) -> Result<String, AttemptError>;
}

/// Handle returned by registration.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProviderHandle(String);

impl ProviderHandle {
    pub fn id(&self) -> &str {
        &self.0
    }
}

struct Entry {
    config: ProviderConfig,
    provider: Arc<dyn Provider>,
}

/// Registry of providers plus the retrying `complete` entry point.
pub struct ModelGateway {
    entries: RwLock<HashMap<String, Entry>>,
}

impl Default for ModelGateway {
    fn default() -> Self {
        Self::new()
    }
}

impl ModelGateway {
    /// A gateway with only the stub provider registered.
    pub fn new() -> Self {
        let gateway = Self { entries: RwLock::new(HashMap::new()) };
        gateway
            .register_provider(ProviderConfig::stub(STUB_PROVIDER_ID, "stub"))
            .expect("empty registry accepts the stub");
        gateway
    }

    /// Register a provider built from its config.
    pub fn register_provider(&self, config: ProviderConfig) -> Result<ProviderHandle, GatewayError> {
        config.validate()?;
        let provider: Arc<dyn Provider> = if config.is_stub() {
            Arc::new(StubProvider::from_model_name(&config.model_name))
        } else {
            Arc::new(http::HttpProvider::new(&config)?)
        };
        self.insert(config, provider)
    }

    /// Register a custom provider implementation under `config.provider_id`.
    pub fn register_with(
        &self,
        config: ProviderConfig,
        provider: Arc<dyn Provider>,
    ) -> Result<ProviderHandle, GatewayError> {
        config.validate()?;
        self.insert(config, provider)
    }

    fn insert(&self, config: ProviderConfig, provider: Arc<dyn Provider>) -> Result<ProviderHandle, GatewayError> {
        let mut entries = self.entries.write();
        if entries.contains_key(&config.provider_id) {
            return Err(GatewayError::DuplicateProvider(config.provider_id));
        }
        let id = config.provider_id.clone();
        entries.insert(id.clone(), Entry { config, provider });
        Ok(ProviderHandle(id))
    }

    pub fn handle(&self, provider_id: &str) -> Result<ProviderHandle, GatewayError> {
        if self.entries.read().contains_key(provider_id) {
            Ok(ProviderHandle(provider_id.to_string()))
        } else {
            Err(GatewayError::UnknownProvider(provider_id.to_string()))
        }
    }

    pub fn config(&self, provider_id: &str) -> Result<ProviderConfig, GatewayError> {
        self.entries
            .read()
            .get(provider_id)
            .map(|e| e.config.clone())
            .ok_or_else(|| GatewayError::UnknownProvider(provider_id.to_string()))
    }

    pub fn provider_ids(&self) -> Vec<String> {
        let mut ids: Vec<_> = self.entries.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Run `request` against the provider, retrying transient failures up
    /// to `max_retries` times with jittered exponential backoff.
    pub async fn complete(
        &self,
        provider: &ProviderHandle,
        request: &ModelRequest,
    ) -> Result<ModelResponse, GatewayError> {
        let (config, backend) = {
            let entries = self.entries.read();
            let entry = entries
                .get(provider.id())
                .ok_or_else(|| GatewayError::UnknownProvider(provider.id().to_string()))?;
            (entry.config.clone(), entry.provider.clone())
        };
        let started = Instant::now();
        let mut attempts = 0u32;
        let text = loop {
            attempts += 1;
            match backend.send(request).await {
                Ok(text) => break text,
                Err(AttemptError::Auth(reason)) => {
                    return Err(GatewayError::AuthError { provider_id: config.provider_id, reason })
                }
                Err(AttemptError::Fatal(reason)) => {
                    return Err(GatewayError::ProviderUnavailable {
                        provider_id: config.provider_id,
                        attempts,
                        reason,
                    })
                }
                Err(AttemptError::Transient(reason)) => {
                    if attempts > config.max_retries {
                        return Err(GatewayError::ProviderUnavailable {
                            provider_id: config.provider_id,
                            attempts,
                            reason,
                        });
                    }
                    let delay = backoff_delay(config.backoff_base_ms, attempts);
                    warn!(
                        provider = %config.provider_id,
                        attempt = attempts,
                        delay_ms = delay.as_millis() as u64,
                        "transient model failure: {reason}"
                    );
                    tokio::time::sleep(delay).await;
                }
            }
        };
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyResponse { provider_id: config.provider_id });
        }
        let chars = text.chars().count();
        if chars > request.max_output_chars() {
            return Err(GatewayError::OutputTooLarge { chars, limit: request.max_output_chars() });
        }
        let latency_ms = if config.is_stub() { 0 } else { started.elapsed().as_millis() as u64 };
        debug!(provider = %config.provider_id, role = request.role().as_str(), chars, latency_ms, "model call done");
        Ok(ModelResponse { text, provider_id: config.provider_id, latency_ms })
    }
}

/// Delay before retry number `attempt` (1-based): `base * 2^(attempt-1)`,
/// jittered into `[d/2, d]`.
pub(crate) fn backoff_delay(base_ms: u64, attempt: u32) -> Duration {
    let full = base_ms.saturating_mul(1u64 << (attempt - 1).min(16));
    let half = full / 2;
    let jitter = if full > half { rand::random_range(0..=full - half) } else { 0 };
    Duration::from_millis(half + jitter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        calls: AtomicU32,
        fail_first: u32,
        error: AttemptError,
    }

    #[async_trait]
    impl Provider for Flaky {
        async fn send(&self, _request: &ModelRequest) -> Result<String, AttemptError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(self.error.clone())
            } else {
                Ok("ok".into())
            }
        }
    }

    fn quick_config(id: &str, max_retries: u32) -> ProviderConfig {
        ProviderConfig { max_retries, backoff_base_ms: 1, ..ProviderConfig::stub(id, "x") }
    }

    fn request() -> ModelRequest {
        ModelRequest::new(ModelRole::Code, "sys", "user", 100).unwrap()
    }

    #[test]
    fn stub_is_preregistered_and_duplicate_rejected() {
        let gw = ModelGateway::new();
        assert!(gw.handle(STUB_PROVIDER_ID).is_ok());
        assert_eq!(
            gw.register_provider(ProviderConfig::stub("stub", "stub")),
            Err(GatewayError::DuplicateProvider("stub".into()))
        );
        assert_eq!(gw.handle("nope"), Err(GatewayError::UnknownProvider("nope".into())));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ProviderConfig::stub("a", "m");
        cfg.timeout_ms = 999;
        assert!(matches!(cfg.validate(), Err(GatewayError::InvalidConfig(_))));
        let live = ProviderConfig {
            endpoint_url: "https://api.example.com/v1/chat/completions".into(),
            credentials_env_var: String::new(),
            ..ProviderConfig::stub("live", "m")
        };
        assert!(live.validate().is_err());
        let live = ProviderConfig { credentials_env_var: "KEY".into(), ..live };
        assert!(live.validate().is_ok());
    }

    #[test]
    fn image_only_for_design() {
        let img = ImageAttachment { bytes: vec![1], media_type: "image/jpeg".into() };
        assert!(request().with_image(img.clone()).is_err());
        let design = ModelRequest::new(ModelRole::Design, "s", "u", 10).unwrap();
        assert!(design.with_image(img).is_ok());
        assert!(ModelRequest::new(ModelRole::Design, "s", "u", 0).is_err());
    }

    #[tokio::test]
    async fn retries_are_bounded() {
        for max_retries in 0..4 {
            let gw = ModelGateway::new();
            let flaky = Arc::new(Flaky {
                calls: AtomicU32::new(0),
                fail_first: u32::MAX,
                error: AttemptError::Transient("down".into()),
            });
            let h = gw.register_with(quick_config("f", max_retries), flaky.clone()).unwrap();
            let err = gw.complete(&h, &request()).await.unwrap_err();
            assert!(matches!(err, GatewayError::ProviderUnavailable { attempts, .. } if attempts == max_retries + 1));
            assert_eq!(flaky.calls.load(Ordering::SeqCst), max_retries + 1);
        }
    }

    #[tokio::test]
    async fn transient_failure_then_success() {
        let gw = ModelGateway::new();
        let flaky = Arc::new(Flaky {
            calls: AtomicU32::new(0),
            fail_first: 2,
            error: AttemptError::Transient("503".into()),
        });
        let h = gw.register_with(quick_config("f", 2), flaky.clone()).unwrap();
        assert_eq!(gw.complete(&h, &request()).await.unwrap().text, "ok");
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
    }

    #[tokio::test]
    async fn auth_errors_are_not_retried() {
        let gw = ModelGateway::new();
        let flaky = Arc::new(Flaky {
            calls: AtomicU32::new(0),
            fail_first: u32::MAX,
            error: AttemptError::Auth("401".into()),
        });
        let h = gw.register_with(quick_config("f", 5), flaky.clone()).unwrap();
        assert!(matches!(gw.complete(&h, &request()).await, Err(GatewayError::AuthError { .. })));
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 1);
    }

    struct Fixed(&'static str);

    #[async_trait]
    impl Provider for Fixed {
        async fn send(&self, _request: &ModelRequest) -> Result<String, AttemptError> {
            Ok(self.0.to_string())
        }
    }

    #[tokio::test]
    async fn empty_and_oversized_responses_are_rejected() {
        let gw = ModelGateway::new();
        let blank = gw.register_with(quick_config("blank", 0), Arc::new(Fixed("  \n"))).unwrap();
        assert!(matches!(gw.complete(&blank, &request()).await, Err(GatewayError::EmptyResponse { .. })));
        let big = gw.register_with(quick_config("big", 0), Arc::new(Fixed("0123456789ab"))).unwrap();
        let req = ModelRequest::new(ModelRole::Code, "s", "u", 10).unwrap();
        assert_eq!(
            gw.complete(&big, &req).await,
            Err(GatewayError::OutputTooLarge { chars: 12, limit: 10 })
        );
    }

    #[test]
    fn backoff_doubles_within_jitter_band() {
        for attempt in 1..5u32 {
            let full = 500u64 << (attempt - 1);
            for _ in 0..20 {
                let d = backoff_delay(500, attempt).as_millis() as u64;
                assert!(d >= full / 2 && d <= full, "attempt {attempt}: {d}");
            }
        }
    }
}
