//! System prompt templates and the user-text layouts sent to models.
//!
//! Templates live in `prompts/*.md` and are compiled in. Each starts with a
//! `<!-- template: <name> v<N> -->` header line carrying its version.
//! User texts are assembled here so that the agents and the stub provider
//! agree on the section markers.

use crate::gateway::ModelRole;

pub const DESIGN_TEMPLATE: &str = include_str!("../prompts/design.md");
pub const CODE_TEMPLATE: &str = include_str!("../prompts/code.md");
pub const CRITIC_REVIEW_TEMPLATE: &str = include_str!("../prompts/critic_review.md");
pub const CRITIC_REFINE_TEMPLATE: &str = include_str!("../prompts/critic_refine.md");

/// Precedes the PRD markdown in code-generation requests.
pub const PRD_MARKER: &str = "PRD:\n";
/// Precedes the fenced current website source in critic requests.
pub const SOURCE_MARKER: &str = "Website source:\n```html\n";
pub const SOURCE_END: &str = "\n```";
pub const VERSION_PREFIX: &str = "Version: ";
pub const ROUND_PREFIX: &str = "Review round: ";
pub const SUGGESTIONS_MARKER: &str = "Suggestions:\n";
pub const VIOLATIONS_MARKER: &str = "The previous output failed validation:\n";

/// System text for a role, without the version header line.
pub fn system_text(role: ModelRole) -> &'static str {
    let template = match role {
        ModelRole::Design => DESIGN_TEMPLATE,
        ModelRole::Code => CODE_TEMPLATE,
        ModelRole::CriticReview => CRITIC_REVIEW_TEMPLATE,
        ModelRole::CriticRefine => CRITIC_REFINE_TEMPLATE,
    };
    match template.split_once('\n') {
        Some((first, rest)) if first.starts_with("<!--") => rest,
        _ => template,
    }
}

/// `(name, version)` parsed from a template's header line.
pub fn template_version(template: &str) -> Option<(&str, u32)> {
    let header = template.lines().next()?;
    let inner = header.strip_prefix("<!-- template: ")?.strip_suffix(" -->")?;
    let (name, version) = inner.rsplit_once(" v")?;
    Some((name, version.parse().ok()?))
}

pub fn design_user_text(prompt: &str, width_px: u32, height_px: u32) -> String {
    format!(
        "User request:\n{prompt}\n\nThe attached image is the user's layout sketch, \
         rendered at {width_px}x{height_px} pixels."
    )
}

pub fn code_user_text(prompt: &str, image_urls: &[String], prd_markdown: &str) -> String {
    let mut text = format!("User request:\n{prompt}\n\nImage URLs:\n");
    push_url_list(&mut text, image_urls);
    text.push('\n');
    text.push_str(PRD_MARKER);
    text.push_str(prd_markdown);
    text
}

pub fn review_user_text(
    prompt: &str,
    version_label: &str,
    round: usize,
    extra_instructions: Option<&str>,
    html: &str,
) -> String {
    let mut text = format!("User request:\n{prompt}\n\n{VERSION_PREFIX}{version_label}\n{ROUND_PREFIX}{round}\n");
    if let Some(extra) = extra_instructions.filter(|s| !s.trim().is_empty()) {
        text.push_str("Additional instructions from the user:\n");
        text.push_str(extra.trim());
        text.push('\n');
    }
    push_source(&mut text, html);
    text
}

pub fn refine_user_text(
    prompt: &str,
    version_label: &str,
    suggestion_lines: &[String],
    image_urls: &[String],
    html: &str,
) -> String {
    let mut text = format!("User request:\n{prompt}\n\n{VERSION_PREFIX}{version_label}\n\n{SUGGESTIONS_MARKER}");
    for line in suggestion_lines {
        text.push_str("- ");
        text.push_str(line);
        text.push('\n');
    }
    text.push_str("\nImage URLs:\n");
    push_url_list(&mut text, image_urls);
    push_source(&mut text, html);
    text
}

/// The original user text followed by the violations to fix.
pub fn repair_user_text(original: &str, violations: &[String]) -> String {
    let mut text = format!("{original}\n\n{VIOLATIONS_MARKER}");
    for v in violations {
        text.push_str("- ");
        text.push_str(v);
        text.push('\n');
    }
    text.push_str("Return a corrected, complete HTML document.\n");
    text
}

fn push_url_list(text: &mut String, urls: &[String]) {
    if urls.is_empty() {
        text.push_str("(none)\n");
    }
    for url in urls {
        text.push_str("- ");
        text.push_str(url);
        text.push('\n');
    }
}

fn push_source(text: &mut String, html: &str) {
    text.push('\n');
    text.push_str(SOURCE_MARKER);
    text.push_str(html);
    text.push_str(SOURCE_END);
    text.push('\n');
}

/// The website source embedded by [`review_user_text`] or [`refine_user_text`].
pub fn embedded_source(user_text: &str) -> Option<&str> {
    let start = user_text.find(SOURCE_MARKER)? + SOURCE_MARKER.len();
    let end = user_text.rfind(SOURCE_END)?;
    (end >= start).then(|| &user_text[start..end])
}

/// Value of the first `prefix`-led line.
pub fn line_value<'a>(user_text: &'a str, prefix: &str) -> Option<&'a str> {
    user_text.lines().find_map(|l| l.strip_prefix(prefix)).map(str::trim)
}
