//! Structural and origin checks for generated website documents.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::markup::{self, Token};
use crate::images::is_placeholder_url;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    EmptyDocument,
    ParseError,
    MissingDoctype,
    DoctypeMisplaced,
    NoRootElement,
    MultipleRootElements,
    RootNotHtml,
    ContentOutsideRoot,
    ImgSrcMissing,
    ImgSrcUnknown,
    ExternalScript,
    ExternalStylesheet,
    ExternalResource,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::EmptyDocument => "EMPTY_DOCUMENT",
            ViolationCode::ParseError => "PARSE_ERROR",
            ViolationCode::MissingDoctype => "MISSING_DOCTYPE",
            ViolationCode::DoctypeMisplaced => "DOCTYPE_MISPLACED",
            ViolationCode::NoRootElement => "NO_ROOT_ELEMENT",
            ViolationCode::MultipleRootElements => "MULTIPLE_ROOT_ELEMENTS",
            ViolationCode::RootNotHtml => "ROOT_NOT_HTML",
            ViolationCode::ContentOutsideRoot => "CONTENT_OUTSIDE_ROOT",
            ViolationCode::ImgSrcMissing => "IMG_SRC_MISSING",
            ViolationCode::ImgSrcUnknown => "IMG_SRC_UNKNOWN",
            ViolationCode::ExternalScript => "EXTERNAL_SCRIPT",
            ViolationCode::ExternalStylesheet => "EXTERNAL_STYLESHEET",
            ViolationCode::ExternalResource => "EXTERNAL_RESOURCE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
    pub location: Option<Location>,
}

impl Violation {
    /// `CODE at line:col: message`, as shown to models in repair prompts.
    pub fn summary(&self) -> String {
        match self.location {
            Some(l) => format!("{} at {}:{}: {}", self.code.as_str(), l.line, l.column, self.message),
            None => format!("{}: {}", self.code.as_str(), self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self { ok: violations.is_empty(), violations }
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    pub fn summaries(&self) -> Vec<String> {
        self.violations.iter().map(Violation::summary).collect()
    }
}

/// What a document may reference.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationContext {
    /// Image URLs from the session's asset map. Placeholder URLs are always
    /// accepted.
    pub image_urls: HashSet<String>,
    /// Origins (`scheme://host[:port]`) that scripts, stylesheets and other
    /// resources may load from. Empty by default.
    pub allowed_origins: HashSet<String>,
}

impl ValidationContext {
    pub fn new(image_urls: impl IntoIterator<Item = String>) -> Self {
        Self { image_urls: image_urls.into_iter().collect(), allowed_origins: HashSet::new() }
    }

    fn image_allowed(&self, url: &str) -> bool {
        is_placeholder_url(url) || (url.starts_with("https://") && self.image_urls.contains(url))
    }

    /// Whether a script/style/resource reference stays within allowed origins.
    fn reference_allowed(&self, url: &str) -> bool {
        match origin_of(url) {
            None => true,
            Some(origin) => self.allowed_origins.contains(&origin),
        }
    }

    /// CSS `url(...)` targets may also be session images.
    fn css_url_allowed(&self, url: &str) -> bool {
        self.image_allowed(url) || self.reference_allowed(url)
    }
}

/// `scheme://host[:port]` for absolute network URLs; `None` for relative,
/// fragment and `data:` references.
fn origin_of(url: &str) -> Option<String> {
    let url = url.trim();
    let lower = url.to_ascii_lowercase();
    let rest = if let Some(r) = url.strip_prefix("//") {
        return Some(format!("https://{}", authority(r).to_ascii_lowercase()));
    } else if lower.starts_with("http://") || lower.starts_with("https://") {
        url
    } else if lower.starts_with("data:") || lower.starts_with('#') || !lower.contains(':') {
        return None;
    } else {
        // Other schemes (ftp:, ws:, ...) are treated as external.
        url
    };
    let (scheme, after) = rest.split_once("://").unwrap_or((rest, ""));
    Some(format!("{}://{}", scheme.to_ascii_lowercase(), authority(after).to_ascii_lowercase()))
}

fn authority(s: &str) -> &str {
    let end = s.find(['/', '?', '#']).unwrap_or(s.len());
    &s[..end]
}

/// Targets of `url(...)` and `@import "..."` in a CSS fragment.
fn css_references(css: &str) -> Vec<String> {
    let mut refs = Vec::new();
    let lower = css.to_ascii_lowercase();
    let mut from = 0;
    while let Some(at) = lower[from..].find("url(") {
        let start = from + at + 4;
        let Some(close) = css[start..].find(')') else { break };
        let inner = css[start..start + close].trim().trim_matches(['"', '\'']).trim();
        if !inner.is_empty() {
            refs.push(inner.to_string());
        }
        from = start + close + 1;
    }
    let mut from = 0;
    while let Some(at) = lower[from..].find("@import") {
        let start = from + at + 7;
        let tail = css[start..].trim_start();
        if let Some(q) = tail.chars().next().filter(|c| *c == '"' || *c == '\'') {
            if let Some(end) = tail[1..].find(q) {
                refs.push(tail[1..1 + end].to_string());
            }
        }
        from = start;
    }
    refs
}

fn attr<'a>(attrs: &'a [markup::Attribute], name: &str) -> Option<&'a str> {
    attrs.iter().find(|a| a.name == name).and_then(|a| a.value.as_deref())
}

/// Elements whose end tag may be left out.
const OPTIONAL_END: &[&str] = &[
    "p", "li", "dt", "dd", "option", "optgroup", "tr", "td", "th", "thead", "tbody", "tfoot", "colgroup", "rt", "rp",
];
/// Elements that may stay open at the end of the document.
const OPTIONAL_AT_EOF: &[&str] = &["html", "head", "body"];

pub fn validate_html(html: &str, ctx: &ValidationContext) -> ValidationReport {
    let mut violations = Vec::new();
    let at = |offset: usize| {
        let (line, column) = markup::line_col(html, offset);
        Some(Location { line, column })
    };
    let mut push = |code, message: String, location| violations.push(Violation { code, message, location });

    if html.trim().is_empty() {
        push(ViolationCode::EmptyDocument, "document is empty".into(), None);
        return ValidationReport::from_violations(violations);
    }
    let tokens = match markup::tokenize(html) {
        Ok(t) => t,
        Err(e) => {
            push(ViolationCode::ParseError, e.message, at(e.offset));
            return ValidationReport::from_violations(violations);
        }
    };

    let mut stack: Vec<(String, usize)> = Vec::new();
    let mut seen_doctype = false;
    let mut seen_content = false;
    let mut roots = 0usize;
    let mut in_style = false;

    for token in &tokens {
        match token {
            Token::Doctype { offset } => {
                if seen_content || seen_doctype {
                    push(ViolationCode::DoctypeMisplaced, "doctype must come first and only once".into(), at(*offset));
                }
                seen_doctype = true;
            }
            Token::Comment { .. } => {}
            Token::Text { text, offset } => {
                if stack.is_empty() && !text.trim().is_empty() {
                    push(
                        ViolationCode::ContentOutsideRoot,
                        format!("text outside the root element: {:?}", text.trim().chars().take(40).collect::<String>()),
                        at(*offset),
                    );
                }
                if !text.trim().is_empty() {
                    seen_content = true;
                }
                if in_style {
                    for r in css_references(text) {
                        if !ctx.css_url_allowed(&r) {
                            push(ViolationCode::ExternalResource, format!("stylesheet references {r}"), at(*offset));
                        }
                    }
                }
            }
            Token::StartTag { name, attrs, self_closing, offset } => {
                seen_content = true;
                if stack.is_empty() {
                    roots += 1;
                    if roots == 2 {
                        push(
                            ViolationCode::MultipleRootElements,
                            format!("<{name}> is a second top-level element"),
                            at(*offset),
                        );
                    } else if roots == 1 && name != "html" {
                        push(ViolationCode::RootNotHtml, format!("top-level element is <{name}>, not <html>"), at(*offset));
                    }
                }
                check_references(name, attrs, ctx, *offset, &mut |code, msg, off| push(code, msg, at(off)));
                in_style = name == "style";
                if !markup::is_void(name) && !self_closing {
                    stack.push((name.clone(), *offset));
                }
            }
            Token::EndTag { name, offset } => {
                in_style = false;
                if markup::is_void(name) {
                    push(ViolationCode::ParseError, format!("end tag for void element </{name}>"), at(*offset));
                    continue;
                }
                let Some(pos) = stack.iter().rposition(|(open, _)| open == name) else {
                    push(ViolationCode::ParseError, format!("</{name}> has no matching start tag"), at(*offset));
                    continue;
                };
                if let Some((unclosed, _)) = stack[pos + 1..].iter().find(|(open, _)| !OPTIONAL_END.contains(&open.as_str())) {
                    push(ViolationCode::ParseError, format!("<{unclosed}> is not closed before </{name}>"), at(*offset));
                }
                stack.truncate(pos);
            }
        }
    }
    if let Some((unclosed, offset)) = stack
        .iter()
        .find(|(open, _)| !OPTIONAL_END.contains(&open.as_str()) && !OPTIONAL_AT_EOF.contains(&open.as_str()))
    {
        push(ViolationCode::ParseError, format!("<{unclosed}> is never closed"), at(*offset));
    }
    if !seen_doctype {
        push(ViolationCode::MissingDoctype, "document has no doctype declaration".into(), None);
    }
    if roots == 0 {
        push(ViolationCode::NoRootElement, "document has no root element".into(), None);
    }
    ValidationReport::from_violations(violations)
}

fn check_references(
    name: &str,
    attrs: &[markup::Attribute],
    ctx: &ValidationContext,
    offset: usize,
    push: &mut dyn FnMut(ViolationCode, String, usize),
) {
    if let Some(style) = attr(attrs, "style") {
        for r in css_references(style) {
            if !ctx.css_url_allowed(&r) {
                push(ViolationCode::ExternalResource, format!("inline style references {r}"), offset);
            }
        }
    }
    match name {
        "img" => {
            match attr(attrs, "src").map(str::trim) {
                None | Some("") => push(ViolationCode::ImgSrcMissing, "<img> without src".into(), offset),
                Some(src) if !ctx.image_allowed(src) => {
                    push(ViolationCode::ImgSrcUnknown, format!("image source {src} is not a session asset"), offset)
                }
                Some(_) => {}
            }
            if let Some(srcset) = attr(attrs, "srcset") {
                for candidate in srcset.split(',').filter_map(|c| c.split_whitespace().next()) {
                    if !ctx.image_allowed(candidate) {
                        push(ViolationCode::ImgSrcUnknown, format!("srcset entry {candidate} is not a session asset"), offset);
                    }
                }
            }
        }
        "script" => {
            if let Some(src) = attr(attrs, "src") {
                if !ctx.reference_allowed(src) {
                    push(ViolationCode::ExternalScript, format!("script loaded from {src}"), offset);
                }
            }
        }
        "link" => {
            if let Some(href) = attr(attrs, "href") {
                if !ctx.reference_allowed(href) {
                    let rel = attr(attrs, "rel").unwrap_or("").to_ascii_lowercase();
                    if rel.split_whitespace().any(|r| r == "stylesheet") {
                        push(ViolationCode::ExternalStylesheet, format!("stylesheet loaded from {href}"), offset);
                    } else if !rel.split_whitespace().all(|r| matches!(r, "canonical" | "author" | "license" | "me")) {
                        push(ViolationCode::ExternalResource, format!("<link rel=\"{rel}\"> loads {href}"), offset);
                    }
                }
            }
        }
        "iframe" | "embed" | "audio" | "video" | "source" | "track" | "frame" => {
            if let Some(src) = attr(attrs, "src") {
                if !ctx.reference_allowed(src) {
                    push(ViolationCode::ExternalResource, format!("<{name}> loads {src}"), offset);
                }
            }
        }
        "object" => {
            if let Some(data) = attr(attrs, "data") {
                if !ctx.reference_allowed(data) {
                    push(ViolationCode::ExternalResource, format!("<object> loads {data}"), offset);
                }
            }
        }
        _ => {}
    }
}
