//! The pipeline engine: one object owning the store, gateway and image
//! client, exposing each step as an operation on a session.
//!
//! Steps communicate only through the session's shared memory:
//!
//! | key              | written by      | content                          |
//! |------------------|-----------------|----------------------------------|
//! | `sketch.source`  | create_session  | sketch bytes as uploaded         |
//! | `sketch.jpg`     | generate_prd    | canonical raster sent to models  |
//! | `prd.raw`        | generate_prd    | PRD markdown with keyword tokens |
//! | `prd.keywords`   | generate_prd    | extracted keywords (JSON)        |
//! | `prd.images`     | generate_prd    | resolved assets (JSON)           |
//! | `prd.injected`   | generate_prd    | PRD markdown with image links    |
//! | `critiques/<n>`  | run_loop        | each review, in review order     |

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::code::{self, CodeError, GenerationOptions};
use crate::config::{ConfigError, PipelineConfig};
use crate::critic::{self, CriticError, LoopConfig, LoopEnv, LoopOutcome};
use crate::design::{self, keywords, DesignError, PrdDocument, SketchInput};
use crate::digest::ContentDigest;
use crate::gateway::{GatewayError, ModelGateway, ProviderHandle};
use crate::images::{ImageAsset, ImageClient, ImageError};
use crate::store::{
    BusyGuard, CreatedBy, Session, SessionId, SessionState, SessionStore, StoreError, VersionNode, VersionSummary,
};

pub const KEY_SKETCH_SOURCE: &str = "sketch.source";
pub const KEY_SKETCH_RASTER: &str = "sketch.jpg";
pub const KEY_PRD_RAW: &str = "prd.raw";
pub const KEY_PRD_KEYWORDS: &str = "prd.keywords";
pub const KEY_PRD_IMAGES: &str = "prd.images";
pub const KEY_PRD_INJECTED: &str = "prd.injected";

pub const STEP_PRD: &str = "generate_prd";
pub const STEP_SITE: &str = "generate_site";
pub const STEP_LOOP: &str = "run_loop";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Critic(#[from] CriticError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl EngineError {
    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            EngineError::InvalidArgument(_) => "invalid_argument",
            EngineError::Config(_) => "invalid_config",
            EngineError::Store(e) => store_kind(e),
            EngineError::Design(e) => match e {
                DesignError::InvalidArgument(_) => "invalid_argument",
                DesignError::Gateway(g) => gateway_kind(g),
                DesignError::Raster(_) => "invalid_sketch",
                DesignError::PrdEmpty | DesignError::PrdUnstructured => "prd_invalid",
                DesignError::StaleSpans(_) => "internal",
            },
            EngineError::Code(e) => match e {
                CodeError::InvalidArgument(_) => "invalid_argument",
                CodeError::Gateway(g) => gateway_kind(g),
                CodeError::GenerationInvalid { .. } => "generation_invalid",
            },
            EngineError::Critic(e) => match e {
                CriticError::InvalidArgument(_) => "invalid_argument",
                CriticError::Gateway(g) => gateway_kind(g),
                CriticError::GenerationInvalid { .. } => "generation_invalid",
                CriticError::Store(s) => store_kind(s),
            },
            EngineError::Image(_) => "image_search",
            EngineError::Gateway(g) => gateway_kind(g),
        }
    }

    /// Whether the error is about the request rather than the pipeline.
    pub fn is_client_error(&self) -> bool {
        matches!(
            self.kind(),
            "invalid_argument"
                | "invalid_sketch"
                | "unknown_session"
                | "unknown_version"
                | "unknown_parent"
                | "key_not_found"
                | "namespace_violation"
                | "invalid_transition"
                | "branch_busy"
                | "root_already_exists"
        )
    }
}

fn store_kind(e: &StoreError) -> &'static str {
    match e {
        StoreError::UnknownSession(_) => "unknown_session",
        StoreError::KeyNotFound(_) => "key_not_found",
        StoreError::NamespaceViolation(_) => "namespace_violation",
        StoreError::UnknownParent(_) => "unknown_parent",
        StoreError::RootAlreadyExists => "root_already_exists",
        StoreError::UnknownVersion(_) => "unknown_version",
        StoreError::BranchBusy(_) => "branch_busy",
        StoreError::InvalidTransition { .. } => "invalid_transition",
        StoreError::DigestMismatch(_) => "digest_mismatch",
        StoreError::Io(_) | StoreError::Corrupt { .. } => "storage",
    }
}

fn gateway_kind(e: &GatewayError) -> &'static str {
    match e {
        GatewayError::ProviderUnavailable { .. } => "provider_unavailable",
        GatewayError::AuthError { .. } => "auth_error",
        GatewayError::OutputTooLarge { .. } => "output_too_large",
        GatewayError::EmptyResponse { .. } => "empty_response",
        GatewayError::DuplicateProvider(_) | GatewayError::UnknownProvider(_) | GatewayError::InvalidConfig(_) => {
            "invalid_config"
        }
        GatewayError::InvalidRequest(_) => "invalid_argument",
    }
}

/// Result of the PRD step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrdOutcome {
    pub prd_raw: String,
    pub prd_injected: String,
    pub keywords: Vec<String>,
    pub images: Vec<ImageAsset>,
    pub warnings: Vec<String>,
}

/// Snapshot for progress polling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusReport {
    pub session_id: SessionId,
    pub state: SessionState,
    pub last_completed_step: Option<String>,
    pub active_head: Option<String>,
    /// All version labels so far, in creation order.
    pub versions: Vec<String>,
    /// Every state the session has entered, in order.
    pub history: Vec<SessionState>,
    pub busy: bool,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub session_id: SessionId,
    pub versions: Vec<String>,
    pub warnings: Vec<String>,
}

pub struct Engine {
    config: PipelineConfig,
    store: SessionStore,
    gateway: ModelGateway,
    provider: ProviderHandle,
    images: ImageClient,
}

impl Engine {
    /// Build everything from a config, storing sessions under `data_dir`.
    pub fn open(config: PipelineConfig, data_dir: &Path) -> Result<Self, EngineError> {
        config.validate()?;
        let (gateway, provider) = config.build_gateway()?;
        let images = ImageClient::new(config.images.clone())?;
        let store = SessionStore::open(data_dir)?;
        Ok(Self { config, store, gateway, provider, images })
    }

    /// Assemble from parts, e.g. with a custom provider registered.
    pub fn from_parts(
        config: PipelineConfig,
        store: SessionStore,
        gateway: ModelGateway,
        provider: ProviderHandle,
        images: ImageClient,
    ) -> Self {
        Self { config, store, gateway, provider, images }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }
    pub fn store(&self) -> &SessionStore {
        &self.store
    }
    pub fn gateway(&self) -> &ModelGateway {
        &self.gateway
    }
    pub fn images(&self) -> &ImageClient {
        &self.images
    }

    fn generation(&self) -> GenerationOptions {
        self.config.generation.options()
    }

    // ---- sessions -------------------------------------------------------

    pub fn create_session(&self, prompt: &str, sketch: &SketchInput) -> Result<Session, EngineError> {
        if prompt.trim().is_empty() {
            return Err(EngineError::InvalidArgument("prompt is empty".into()));
        }
        if sketch.bytes.is_empty() {
            return Err(EngineError::Design(DesignError::Raster(design::RasterError::EmptySketch)));
        }
        let session = self.store.create_session(prompt, ContentDigest::of(&sketch.bytes))?;
        self.store.put(&session.id, KEY_SKETCH_SOURCE, &sketch.bytes, sketch.media_type())?;
        info!(session = %session.id, "session created");
        Ok(session)
    }

    pub fn session(&self, id: &SessionId) -> Result<Session, EngineError> {
        Ok(self.store.session(id)?)
    }

    pub fn list_versions(&self, id: &SessionId) -> Result<Vec<VersionSummary>, EngineError> {
        Ok(self.store.list_versions(id)?)
    }

    pub fn branch_from(&self, id: &SessionId, label: &str) -> Result<Session, EngineError> {
        Ok(self.store.branch_from(id, label)?)
    }

    pub fn status(&self, id: &SessionId) -> Result<StatusReport, EngineError> {
        let session = self.store.session(id)?;
        let versions = self.store.nodes(id)?.into_iter().map(|n| n.label).collect();
        Ok(StatusReport {
            session_id: session.id.clone(),
            state: session.state,
            last_completed_step: session.last_completed_step,
            active_head: session.active_head,
            versions,
            history: session.history.iter().map(|c| c.state).collect(),
            busy: self.store.is_busy(id),
            warnings: session.warnings,
            error: session.error,
        })
    }

    pub fn prd(&self, id: &SessionId) -> Result<PrdDocument, EngineError> {
        let bytes = self.store.get(id, KEY_PRD_INJECTED)?;
        let text = String::from_utf8(bytes).map_err(|_| StoreError::Corrupt {
            path: KEY_PRD_INJECTED.into(),
            reason: "not UTF-8".into(),
        })?;
        Ok(PrdDocument::injected(text)?)
    }

    // ---- steps ----------------------------------------------------------

    /// Claim the session for a step, failing fast with `BranchBusy`.
    pub fn claim(&self, id: &SessionId) -> Result<BusyGuard, EngineError> {
        Ok(self.store.try_claim(id)?)
    }

    /// Sketch to injected PRD.
    pub async fn generate_prd(&self, id: &SessionId) -> Result<PrdOutcome, EngineError> {
        let _guard = self.claim(id)?;
        self.generate_prd_claimed(id).await
    }

    /// Injected PRD to the root version.
    pub async fn generate_site(&self, id: &SessionId) -> Result<VersionNode, EngineError> {
        let _guard = self.claim(id)?;
        self.generate_site_claimed(id).await
    }

    /// Review/refine from the session head.
    pub async fn run_loop(
        &self,
        id: &SessionId,
        config: Option<LoopConfig>,
        extra_instructions: Option<&str>,
    ) -> Result<LoopOutcome, EngineError> {
        let _guard = self.claim(id)?;
        self.run_loop_claimed(id, config.unwrap_or(self.config.loop_config), extra_instructions).await
    }

    /// The whole flow for a fresh session: PRD, root version, loop.
    pub async fn run_pipeline(&self, id: &SessionId, config: Option<LoopConfig>) -> Result<PipelineOutcome, EngineError> {
        let guard = self.claim(id)?;
        self.run_pipeline_claimed(id, config, guard).await
    }

    /// Claim the session now and run the pipeline in a background task.
    /// Progress is visible through [`Engine::status`].
    pub fn start_pipeline(self: &Arc<Self>, id: &SessionId, config: Option<LoopConfig>) -> Result<(), EngineError> {
        if let Some(c) = &config {
            c.validate()?;
        }
        let state = self.store.session(id)?.state;
        if state != SessionState::Created {
            return Err(StoreError::InvalidTransition { from: state, to: SessionState::PrdPending }.into());
        }
        let guard = self.claim(id)?;
        let engine = self.clone();
        let id = id.clone();
        tokio::spawn(async move {
            if let Err(e) = engine.run_pipeline_claimed(&id, config, guard).await {
                warn!(session = %id, kind = e.kind(), "background pipeline failed: {e}");
            }
        });
        Ok(())
    }

    async fn run_pipeline_claimed(
        &self,
        id: &SessionId,
        config: Option<LoopConfig>,
        _guard: BusyGuard,
    ) -> Result<PipelineOutcome, EngineError> {
        let config = config.unwrap_or(self.config.loop_config);
        config.validate()?;
        self.generate_prd_claimed(id).await?;
        self.generate_site_claimed(id).await?;
        let outcome = self.run_loop_claimed(id, config, None).await?;
        let session = self.store.session(id)?;
        Ok(PipelineOutcome { session_id: id.clone(), versions: outcome.versions, warnings: session.warnings })
    }

    async fn generate_prd_claimed(&self, id: &SessionId) -> Result<PrdOutcome, EngineError> {
        let session = self.store.transition(id, SessionState::PrdPending)?;
        let result = self.prd_step(id, &session.prompt).await;
        self.finish_step(id, STEP_PRD, result, Some(SessionState::PrdReady))
    }

    async fn prd_step(&self, id: &SessionId, prompt: &str) -> Result<PrdOutcome, EngineError> {
        let source = self.store.get_entry(id, KEY_SKETCH_SOURCE)?;
        let input = SketchInput::from_media_type(&source.media_type, source.bytes).map_err(DesignError::from)?;
        let raster = design::rasterize_sketch(&input).map_err(DesignError::from)?;
        self.store.put(id, KEY_SKETCH_RASTER, &raster.bytes, "image/jpeg")?;

        let max = self.config.generation.max_output_chars;
        let prd = design::generate_prd(&raster, prompt, &self.gateway, &self.provider, max).await?;
        self.store.put(id, KEY_PRD_RAW, prd.markdown().as_bytes(), "text/markdown")?;

        let found = design::extract_keywords(&prd);
        let tokens: Vec<String> = found.iter().map(|k| k.token()).collect();
        self.store.put(id, KEY_PRD_KEYWORDS, &to_json(&tokens), "application/json")?;
        let mut warnings: Vec<String> = found
            .iter()
            .filter(|k| k.modifier.is_none())
            .map(|k| format!("unknown image modifier in {}; searching without it", k.token()))
            .collect();

        let resolution = self.images.resolve(&keywords::search_set(&found)).await;
        warnings.extend(resolution.warnings);
        let injection = design::inject_images(&prd, &found, &resolution.assignments)?;
        warnings.extend(injection.warnings);

        let mut assets: Vec<ImageAsset> = resolution.assignments.into_values().collect();
        assets.sort_by(|a, b| a.url.cmp(&b.url));
        self.store.put(id, KEY_PRD_IMAGES, &to_json(&assets), "application/json")?;
        self.store.put(id, KEY_PRD_INJECTED, injection.prd.markdown().as_bytes(), "text/markdown")?;

        if !warnings.is_empty() {
            let recorded = warnings.clone();
            self.store.update_session(id, |s| {
                s.warnings.extend(recorded);
                Ok(())
            })?;
        }
        Ok(PrdOutcome {
            prd_raw: prd.markdown().to_string(),
            prd_injected: injection.prd.markdown().to_string(),
            keywords: tokens,
            images: assets,
            warnings,
        })
    }

    async fn generate_site_claimed(&self, id: &SessionId) -> Result<VersionNode, EngineError> {
        let session = self.store.session(id)?;
        if self.store.nodes(id)?.iter().any(|n| n.parent.is_none()) {
            return Err(StoreError::RootAlreadyExists.into());
        }
        let prd = self.prd(id)?;
        self.store.transition(id, SessionState::Generating)?;
        let result = async {
            let artifact =
                code::generate_site(&prd, &session.prompt, &self.gateway, &self.provider, &self.generation()).await?;
            Ok(self.store.commit_version(id, None, artifact.html(), CreatedBy::CodeAgent, None)?)
        }
        .await;
        self.finish_step(id, STEP_SITE, result, None)
    }

    async fn run_loop_claimed(
        &self,
        id: &SessionId,
        config: LoopConfig,
        extra_instructions: Option<&str>,
    ) -> Result<LoopOutcome, EngineError> {
        config.validate()?;
        let session = self.store.session(id)?;
        if session.active_head.is_none() {
            return Err(EngineError::InvalidArgument("the session has no root version yet".into()));
        }
        let prd = self.prd(id)?;
        let validation = self.generation().context_for(&prd);
        let env = LoopEnv {
            store: &self.store,
            session: id,
            gateway: &self.gateway,
            provider: &self.provider,
            prompt: &session.prompt,
            validation: &validation,
            max_output_chars: self.config.generation.max_output_chars,
            extra_instructions,
        };
        let result = critic::run_loop(&env, config).await.map_err(EngineError::from);
        self.finish_step(id, STEP_LOOP, result, None)
    }

    /// Record the step's outcome on the session: success moves to `done`
    /// (if given) and notes the step; failure marks the session failed.
    fn finish_step<T>(
        &self,
        id: &SessionId,
        step: &str,
        result: Result<T, EngineError>,
        done: Option<SessionState>,
    ) -> Result<T, EngineError> {
        match result {
            Ok(value) => {
                self.store.update_session(id, |s| {
                    if let Some(next) = done {
                        if !s.state.can_move_to(next) {
                            return Err(StoreError::InvalidTransition { from: s.state, to: next });
                        }
                        if s.state != next {
                            s.state = next;
                            s.history.push(crate::store::StateChange { state: next, at: chrono::Utc::now() });
                        }
                    }
                    s.last_completed_step = Some(step.to_string());
                    s.error = None;
                    Ok(())
                })?;
                Ok(value)
            }
            Err(e) => {
                warn!(session = %id, step, kind = e.kind(), "step failed: {e}");
                if let Err(store_err) = self.store.fail(id, &format!("{step}: {e}")) {
                    warn!(session = %id, "could not record failure: {store_err}");
                }
                Err(e)
            }
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec_pretty(value).expect("plain data serializes")
}
