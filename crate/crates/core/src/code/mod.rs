//! Code agent: injected PRD to the root website version, plus artifact
//! validation shared with the critic's refinements.

pub mod markup;
pub mod validate;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::design::{PrdDocument, PrdStage};
use crate::digest::ContentDigest;
use crate::gateway::{GatewayError, ModelGateway, ModelRequest, ModelRole, ProviderHandle};
use crate::prompts;

pub use validate::{validate_html, Location, ValidationContext, ValidationReport, Violation, ViolationCode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("generated document is invalid after a repair attempt: {}", .report.summaries().join("; "))]
    GenerationInvalid { report: ValidationReport },
}

/// One website version: a single self-contained HTML document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebsiteArtifact {
    html: String,
    version_label: String,
    byte_digest: ContentDigest,
}

impl WebsiteArtifact {
    pub fn new(version_label: impl Into<String>, html: impl Into<String>) -> Self {
        let html = html.into();
        let byte_digest = ContentDigest::of(html.as_bytes());
        Self { html, version_label: version_label.into(), byte_digest }
    }

    pub fn html(&self) -> &str {
        &self.html
    }
    pub fn version_label(&self) -> &str {
        &self.version_label
    }
    pub fn byte_digest(&self) -> &ContentDigest {
        &self.byte_digest
    }

    pub fn with_label(self, version_label: impl Into<String>) -> Self {
        Self { version_label: version_label.into(), ..self }
    }
}

pub fn validate_artifact(artifact: &WebsiteArtifact, ctx: &ValidationContext) -> ValidationReport {
    validate_html(artifact.html(), ctx)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationOptions {
    pub max_output_chars: usize,
    /// Origins generated documents may load scripts and styles from.
    pub allowed_origins: HashSet<String>,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        Self { max_output_chars: 400_000, allowed_origins: HashSet::new() }
    }
}

impl GenerationOptions {
    pub fn context_for(&self, prd: &PrdDocument) -> ValidationContext {
        ValidationContext { image_urls: prd.image_urls().into_iter().collect(), allowed_origins: self.allowed_origins.clone() }
    }
}

/// Content of the largest fenced code block in `text`.
pub fn strip_code_fence(text: &str) -> Option<&str> {
    let mut best: Option<&str> = None;
    let mut open: Option<usize> = None;
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        let line_start = pos;
        pos += line.len();
        if !line.trim_start().starts_with("```") {
            continue;
        }
        match open {
            None => open = Some(pos),
            Some(body_start) => {
                let body = &text[body_start..line_start];
                let body = body.strip_suffix('\n').unwrap_or(body);
                let body = body.strip_suffix('\r').unwrap_or(body);
                if best.is_none_or(|b| body.len() > b.len()) {
                    best = Some(body);
                }
                open = None;
            }
        }
    }
    best
}

/// The HTML document inside a model response: bare markup as is, else the
/// largest fenced block, else everything from the first `<!DOCTYPE` or
/// `<html` to the last `>`.
pub fn extract_document(response: &str) -> &str {
    let trimmed = response.trim();
    if trimmed.starts_with('<') {
        return trimmed;
    }
    if let Some(block) = strip_code_fence(trimmed) {
        return block.trim();
    }
    let lower = trimmed.to_ascii_lowercase();
    if let Some(start) = lower.find("<!doctype").or_else(|| lower.find("<html")) {
        let end = trimmed.rfind('>').map_or(trimmed.len(), |e| e + 1);
        if end > start {
            return &trimmed[start..end];
        }
    }
    trimmed
}

/// Outcome of a validated generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub html: String,
    pub repaired: bool,
}

/// Ask for a document, validate it, and on failure re-prompt once with the
/// violation list appended.
pub async fn generate_validated(
    gateway: &ModelGateway,
    provider: &ProviderHandle,
    role: ModelRole,
    user_text: &str,
    ctx: &ValidationContext,
    max_output_chars: usize,
) -> Result<Generated, CodeError> {
    let request = ModelRequest::new(role, prompts::system_text(role), user_text, max_output_chars)?;
    let response = gateway.complete(provider, &request).await?;
    let html = normalized(extract_document(&response.text));
    let report = validate_html(&html, ctx);
    if report.ok {
        return Ok(Generated { html, repaired: false });
    }
    warn!(role = role.as_str(), "generated document invalid, re-prompting: {}", report.summaries().join("; "));

    let repair_text = prompts::repair_user_text(user_text, &report.summaries());
    let request = ModelRequest::new(role, prompts::system_text(role), repair_text, max_output_chars)?;
    let response = gateway.complete(provider, &request).await?;
    let html = normalized(extract_document(&response.text));
    let report = validate_html(&html, ctx);
    if report.ok {
        info!(role = role.as_str(), "repair attempt produced a valid document");
        Ok(Generated { html, repaired: true })
    } else {
        Err(CodeError::GenerationInvalid { report })
    }
}

fn normalized(html: &str) -> String {
    let mut out = html.trim().to_string();
    out.push('\n');
    out
}

/// Generate the root version `v0` from an injected PRD.
pub async fn generate_site(
    prd: &PrdDocument,
    prompt: &str,
    gateway: &ModelGateway,
    provider: &ProviderHandle,
    options: &GenerationOptions,
) -> Result<WebsiteArtifact, CodeError> {
    if prd.stage() != PrdStage::ImagesInjected {
        return Err(CodeError::InvalidArgument("PRD images have not been injected yet".into()));
    }
    if prompt.trim().is_empty() {
        return Err(CodeError::InvalidArgument("prompt is empty".into()));
    }
    let ctx = options.context_for(prd);
    let urls = prd.image_urls();
    let user_text = prompts::code_user_text(prompt, &urls, prd.markdown());
    let generated =
        generate_validated(gateway, provider, ModelRole::Code, &user_text, &ctx, options.max_output_chars).await?;
    Ok(WebsiteArtifact::new("v0", generated.html))
}
