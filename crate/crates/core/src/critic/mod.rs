//! Critic agent: reviews the current version, parses the model's critique
//! into structured suggestions, refines the version into its successor, and
//! drives the bounded review/refine loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::code::{self, CodeError, ValidationContext, ValidationReport, WebsiteArtifact};
use crate::gateway::{GatewayError, ModelGateway, ModelRequest, ModelRole, ProviderHandle};
use crate::prompts;
use crate::store::{CreatedBy, SessionId, SessionState, SessionStore, StoreError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriticError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("refined document is invalid after a repair attempt: {}", .report.summaries().join("; "))]
    GenerationInvalid { report: ValidationReport },
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<CodeError> for CriticError {
    fn from(e: CodeError) -> Self {
        match e {
            CodeError::InvalidArgument(m) => CriticError::InvalidArgument(m),
            CodeError::Gateway(g) => CriticError::Gateway(g),
            CodeError::GenerationInvalid { report } => CriticError::GenerationInvalid { report },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionCategory {
    Layout,
    Accessibility,
    Performance,
    Content,
    Style,
}

impl SuggestionCategory {
    pub const ALL: [SuggestionCategory; 5] = [
        SuggestionCategory::Layout,
        SuggestionCategory::Accessibility,
        SuggestionCategory::Performance,
        SuggestionCategory::Content,
        SuggestionCategory::Style,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuggestionCategory::Layout => "layout",
            SuggestionCategory::Accessibility => "accessibility",
            SuggestionCategory::Performance => "performance",
            SuggestionCategory::Content => "content",
            SuggestionCategory::Style => "style",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Minor,
    Major,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Minor => "minor",
            Severity::Major => "major",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "minor" => Some(Severity::Minor),
            "major" => Some(Severity::Major),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub category: SuggestionCategory,
    pub severity: Severity,
    pub description: String,
}

impl Suggestion {
    /// `[category/severity] description`, the form models are asked for.
    pub fn line(&self) -> String {
        format!("[{}/{}] {}", self.category.as_str(), self.severity.as_str(), self.description)
    }

    fn verbatim(text: &str) -> Self {
        Suggestion { category: SuggestionCategory::Content, severity: Severity::Minor, description: text.to_string() }
    }
}

/// A review verdict; no suggestions means the version is approved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CritiqueReport {
    pub version_reviewed: String,
    pub suggestions: Vec<Suggestion>,
}

impl CritiqueReport {
    pub fn approves(&self) -> bool {
        self.suggestions.is_empty()
    }
}

/// Parse a review response.
///
/// The first fenced block tagged `critique` (or, failing that, the first
/// fenced block) is read line by line: `- [category/severity] text` lines
/// become structured suggestions, other non-blank lines are kept verbatim as
/// content/minor. An empty block or a bare `APPROVE` approves. Prose with no
/// block becomes a single content/minor suggestion.
pub fn parse_critique(version_reviewed: &str, response: &str) -> CritiqueReport {
    let trimmed = response.trim();
    let suggestions = if trimmed.is_empty() || trimmed.eq_ignore_ascii_case("approve") {
        Vec::new()
    } else if let Some(block) = critique_block(trimmed) {
        block
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.eq_ignore_ascii_case("approve"))
            .map(parse_line)
            .collect()
    } else {
        vec![Suggestion::verbatim(trimmed)]
    };
    CritiqueReport { version_reviewed: version_reviewed.to_string(), suggestions }
}

fn critique_block(text: &str) -> Option<&str> {
    let mut first_any = None;
    let mut open: Option<(usize, bool)> = None;
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        let line_start = pos;
        pos += line.len();
        let t = line.trim();
        let Some(info) = t.strip_prefix("```") else { continue };
        match open {
            None => open = Some((pos, info.trim().eq_ignore_ascii_case("critique"))),
            Some((body_start, tagged)) => {
                let body = &text[body_start..line_start];
                if tagged {
                    return Some(body);
                }
                first_any.get_or_insert(body);
                open = None;
            }
        }
    }
    // An unterminated block runs to the end of the text.
    if let Some((body_start, tagged)) = open {
        if tagged || first_any.is_none() {
            return Some(&text[body_start.min(text.len())..]);
        }
    }
    first_any
}

fn parse_line(line: &str) -> Suggestion {
    let item = line.strip_prefix(['-', '*']).map(str::trim_start).unwrap_or(line);
    let structured = item.strip_prefix('[').and_then(|rest| {
        let (tag, desc) = rest.split_once(']')?;
        let (cat, sev) = tag.split_once('/')?;
        let desc = desc.trim();
        (!desc.is_empty()).then_some(())?;
        Some(Suggestion {
            category: SuggestionCategory::parse(cat)?,
            severity: Severity::parse(sev)?,
            description: desc.to_string(),
        })
    });
    structured.unwrap_or_else(|| Suggestion::verbatim(line))
}

/// Ask the model to review `artifact`. `round` is the 1-based count of
/// reviews in this session including this one.
pub async fn review(
    artifact: &WebsiteArtifact,
    prompt: &str,
    round: usize,
    extra_instructions: Option<&str>,
    gateway: &ModelGateway,
    provider: &ProviderHandle,
    max_output_chars: usize,
) -> Result<CritiqueReport, CriticError> {
    let user_text =
        prompts::review_user_text(prompt, artifact.version_label(), round, extra_instructions, artifact.html());
    let role = ModelRole::CriticReview;
    let request = ModelRequest::new(role, prompts::system_text(role), user_text, max_output_chars)?;
    let response = gateway.complete(provider, &request).await?;
    Ok(parse_critique(artifact.version_label(), &response.text))
}

/// Produce the successor document of `artifact` from `critique`. The
/// caller commits it to the version tree.
pub async fn refine(
    artifact: &WebsiteArtifact,
    critique: &CritiqueReport,
    prompt: &str,
    ctx: &ValidationContext,
    gateway: &ModelGateway,
    provider: &ProviderHandle,
    max_output_chars: usize,
) -> Result<String, CriticError> {
    if critique.suggestions.is_empty() {
        return Err(CriticError::InvalidArgument("refinement needs at least one suggestion".into()));
    }
    if critique.version_reviewed != artifact.version_label() {
        return Err(CriticError::InvalidArgument(format!(
            "critique reviews {} but the artifact is {}",
            critique.version_reviewed,
            artifact.version_label()
        )));
    }
    let lines: Vec<String> = critique.suggestions.iter().map(Suggestion::line).collect();
    let mut urls: Vec<String> = ctx.image_urls.iter().cloned().collect();
    urls.sort();
    let user_text = prompts::refine_user_text(prompt, artifact.version_label(), &lines, &urls, artifact.html());
    let generated =
        code::generate_validated(gateway, provider, ModelRole::CriticRefine, &user_text, ctx, max_output_chars)
            .await?;
    Ok(generated.html)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    /// Cap on versions along the active branch, root included.
    pub max_versions: usize,
    /// Stop as soon as a review approves.
    pub early_stop: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self { max_versions: 4, early_stop: true }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), CriticError> {
        if self.max_versions == 0 {
            return Err(CriticError::InvalidArgument("max_versions must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The active branch reached `max_versions`.
    Cap,
    /// A review returned no suggestions.
    Approved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopOutcome {
    /// Active branch from the root to the final head.
    pub versions: Vec<String>,
    pub created: Vec<String>,
    pub stopped: StopReason,
}

/// Everything a loop needs besides its config.
pub struct LoopEnv<'a> {
    pub store: &'a SessionStore,
    pub session: &'a SessionId,
    pub gateway: &'a ModelGateway,
    pub provider: &'a ProviderHandle,
    pub prompt: &'a str,
    pub validation: &'a ValidationContext,
    pub max_output_chars: usize,
    pub extra_instructions: Option<&'a str>,
}

/// Alternate review and refinement from the session head until the active
/// branch holds `max_versions` versions or, with `early_stop`, a review
/// approves. A review that approves always ends the loop since there is
/// nothing to refine. Each committed version is durable before the next
/// round starts, so an error keeps all earlier progress.
pub async fn run_loop(env: &LoopEnv<'_>, config: LoopConfig) -> Result<LoopOutcome, CriticError> {
    config.validate()?;
    let LoopEnv { store, session, .. } = *env;
    let mut head = store
        .session(session)?
        .active_head
        .ok_or_else(|| CriticError::InvalidArgument("the session has no root version yet".into()))?;
    let mut path = store.path_to(session, &head)?;
    let mut created = Vec::new();

    let stopped = loop {
        if path.len() >= config.max_versions {
            break StopReason::Cap;
        }
        move_to(store, session, SessionState::Reviewing)?;
        let artifact = store.artifact(session, &head)?;
        let round = store.critique_count(session)? + 1;
        let report = review(
            &artifact,
            env.prompt,
            round,
            env.extra_instructions,
            env.gateway,
            env.provider,
            env.max_output_chars,
        )
        .await?;
        let critique_key = store.save_critique(session, &report)?;
        info!(session = %session, version = %head, suggestions = report.suggestions.len(), "review stored");
        if report.approves() {
            if !config.early_stop {
                warn!(session = %session, "review approved with early stop disabled; nothing left to refine");
            }
            break StopReason::Approved;
        }
        let html = refine(
            &artifact,
            &report,
            env.prompt,
            env.validation,
            env.gateway,
            env.provider,
            env.max_output_chars,
        )
        .await?;
        let node = store.commit_version(session, Some(&head), &html, CreatedBy::CriticAgent, Some(critique_key))?;
        info!(session = %session, version = %node.label, parent = %head, "refinement committed");
        head = node.label.clone();
        path.push(node.label.clone());
        created.push(node.label);
    };
    move_to(store, session, SessionState::Complete)?;
    Ok(LoopOutcome { versions: path, created, stopped })
}

fn move_to(store: &SessionStore, session: &SessionId, to: SessionState) -> Result<(), StoreError> {
    if store.session(session)?.state != to {
        store.transition(session, to)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_lines_parse() {
        let text = "Some intro.\n```critique\n- [layout/major] Stack columns on mobile.\n- [style/minor] Softer palette.\n```\nThanks";
        let r = parse_critique("v0", text);
        assert_eq!(r.version_reviewed, "v0");
        assert_eq!(
            r.suggestions,
            vec![
                Suggestion {
                    category: SuggestionCategory::Layout,
                    severity: Severity::Major,
                    description: "Stack columns on mobile.".into()
                },
                Suggestion {
                    category: SuggestionCategory::Style,
                    severity: Severity::Minor,
                    description: "Softer palette.".into()
                },
            ]
        );
    }

    #[test]
    fn approvals() {
        for text in ["APPROVE", "```critique\n```", "  approve\n", "```critique\nAPPROVE\n```", ""] {
            assert!(parse_critique("v1", text).approves(), "{text:?}");
        }
    }

    #[test]
    fn unparseable_lines_are_kept_verbatim() {
        let r = parse_critique("v0", "```critique\n- [colour/major] Use blue.\nMake it pop\n```");
        assert_eq!(r.suggestions.len(), 2);
        assert!(r.suggestions.iter().all(|s| s.category == SuggestionCategory::Content && s.severity == Severity::Minor));
        assert_eq!(r.suggestions[0].description, "- [colour/major] Use blue.");
        assert_eq!(r.suggestions[1].description, "Make it pop");
    }

    #[test]
    fn prose_fallback_wraps_everything() {
        let prose = "The page looks fine but the footer is cramped.\nAlso the font is small.";
        let r = parse_critique("v2", prose);
        assert_eq!(r.suggestions, vec![Suggestion::verbatim(prose)]);
    }

    #[test]
    fn untagged_fence_and_unterminated_block() {
        let r = parse_critique("v0", "```\n- [performance/minor] Lazy-load images.\n```");
        assert_eq!(r.suggestions[0].category, SuggestionCategory::Performance);
        let r = parse_critique("v0", "```critique\n- [content/major] Add contact details.");
        assert_eq!(r.suggestions[0].severity, Severity::Major);
    }

    #[test]
    fn line_form_round_trips() {
        let s = Suggestion { category: SuggestionCategory::Accessibility, severity: Severity::Major, description: "x y".into() };
        assert_eq!(parse_line(&format!("- {}", s.line())), s);
    }

    #[test]
    fn zero_cap_is_rejected() {
        assert!(LoopConfig { max_versions: 0, early_stop: true }.validate().is_err());
        assert_eq!(LoopConfig::default(), LoopConfig { max_versions: 4, early_stop: true });
    }
}
