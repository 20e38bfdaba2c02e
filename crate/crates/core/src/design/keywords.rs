//! The `[name(modifier)]` image keyword grammar.
//!
//! A token is `[`, a name matching `[a-z][a-z0-9_-]*`, `(`, a modifier of
//! one or more `a-z`, `)` and `]`. Scanning is leftmost-first and
//! non-overlapping; anything that does not complete the pattern is plain
//! text.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageModifier {
    Landscape,
    Portrait,
    Square,
    Large,
    Medium,
    Small,
}

impl ImageModifier {
    pub const ALL: [ImageModifier; 6] = [
        ImageModifier::Landscape,
        ImageModifier::Portrait,
        ImageModifier::Square,
        ImageModifier::Large,
        ImageModifier::Medium,
        ImageModifier::Small,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ImageModifier::Landscape => "landscape",
            ImageModifier::Portrait => "portrait",
            ImageModifier::Square => "square",
            ImageModifier::Large => "large",
            ImageModifier::Medium => "medium",
            ImageModifier::Small => "small",
        }
    }

    /// Search orientation, for orientation-like modifiers.
    pub fn orientation(self) -> Option<&'static str> {
        matches!(self, ImageModifier::Landscape | ImageModifier::Portrait | ImageModifier::Square)
            .then(|| self.as_str())
    }

    /// Requested size, for size-like modifiers.
    pub fn size(self) -> Option<&'static str> {
        matches!(self, ImageModifier::Large | ImageModifier::Medium | ImageModifier::Small)
            .then(|| self.as_str())
    }
}

/// One keyword occurrence in a PRD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageKeyword {
    pub name: String,
    /// `None` when the written modifier is outside the closed vocabulary.
    pub modifier: Option<ImageModifier>,
    /// The modifier exactly as written.
    pub raw_modifier: String,
    /// Byte range of the whole `[name(modifier)]` token.
    pub source_span: Range<usize>,
}

impl ImageKeyword {
    pub fn query(&self) -> KeywordQuery {
        KeywordQuery { name: self.name.clone(), modifier: self.modifier }
    }

    pub fn token(&self) -> String {
        format!("[{}({})]", self.name, self.raw_modifier)
    }
}

/// What gets searched for: occurrences with equal queries share a result.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeywordQuery {
    pub name: String,
    pub modifier: Option<ImageModifier>,
}

impl KeywordQuery {
    pub fn new(name: impl Into<String>, modifier: Option<ImageModifier>) -> Self {
        Self { name: name.into(), modifier }
    }

    /// `name-modifier`, or `name` without a modifier. Used for cache and
    /// fixture identifiers.
    pub fn slug(&self) -> String {
        match self.modifier {
            Some(m) => format!("{}-{}", self.name, m.as_str()),
            None => self.name.clone(),
        }
    }
}

impl fmt::Display for KeywordQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.modifier {
            Some(m) => write!(f, "{}/{}", self.name, m.as_str()),
            None => f.write_str(&self.name),
        }
    }
}

/// Every keyword token in `text`, in document order.
pub fn scan(text: &str) -> Vec<ImageKeyword> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' {
            if let Some(kw) = match_token(text, i) {
                i = kw.source_span.end;
                out.push(kw);
                continue;
            }
        }
        i += 1;
    }
    out
}

fn match_token(text: &str, start: usize) -> Option<ImageKeyword> {
    let bytes = text.as_bytes();
    let mut j = start + 1;
    let name_start = j;
    if !bytes.get(j)?.is_ascii_lowercase() {
        return None;
    }
    j += 1;
    while let Some(&b) = bytes.get(j) {
        if b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-' {
            j += 1;
        } else {
            break;
        }
    }
    let name_end = j;
    if *bytes.get(j)? != b'(' {
        return None;
    }
    j += 1;
    let mod_start = j;
    while bytes.get(j).is_some_and(u8::is_ascii_lowercase) {
        j += 1;
    }
    let mod_end = j;
    if mod_end == mod_start || *bytes.get(j)? != b')' || *bytes.get(j + 1)? != b']' {
        return None;
    }
    let raw_modifier = &text[mod_start..mod_end];
    Some(ImageKeyword {
        name: text[name_start..name_end].to_string(),
        modifier: ImageModifier::parse(raw_modifier),
        raw_modifier: raw_modifier.to_string(),
        source_span: start..j + 2,
    })
}

/// Distinct queries in order of first occurrence.
pub fn search_set(keywords: &[ImageKeyword]) -> Vec<KeywordQuery> {
    let mut seen = std::collections::HashSet::new();
    keywords
        .iter()
        .map(ImageKeyword::query)
        .filter(|q| seen.insert(q.clone()))
        .collect()
}
