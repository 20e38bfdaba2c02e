//! Small markdown helpers shared by the agents and the stub provider.

/// A markdown image reference `![alt](url)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRef {
    pub alt: String,
    pub url: String,
}

/// Every `![alt](url)` reference in document order.
///
/// Alt text may not contain `]` and the URL may not contain whitespace or
/// `)`, which is how injected references are always written.
pub fn image_refs(text: &str) -> Vec<ImageRef> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("![") {
        let after = &rest[start + 2..];
        let Some(close) = after.find(']') else { break };
        let alt = &after[..close];
        let tail = &after[close + 1..];
        if let Some(body) = tail.strip_prefix('(') {
            if let Some(end) = body.find(|c: char| c == ')' || c.is_whitespace()) {
                if body.as_bytes()[end] == b')' && end > 0 && !alt.contains('\n') {
                    out.push(ImageRef { alt: alt.to_string(), url: body[..end].to_string() });
                    rest = &body[end + 1..];
                    continue;
                }
            }
        }
        rest = &rest[start + 2..];
    }
    out
}

/// Text of the first `# ` heading, if any.
pub fn title(text: &str) -> Option<&str> {
    text.lines()
        .find_map(|l| l.strip_prefix("# "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
}

/// Texts of the `## ` headings in order.
pub fn section_headings(text: &str) -> Vec<&str> {
    text.lines()
        .filter_map(|l| l.strip_prefix("## "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect()
}

/// Whether the document has at least one ATX heading.
pub fn has_heading(text: &str) -> bool {
    text.lines().any(|l| {
        let hashes = l.bytes().take_while(|b| *b == b'#').count();
        (1..=6).contains(&hashes) && l[hashes..].starts_with(' ')
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_image_refs_in_order() {
        let text = "a ![hero](https://x/1.jpg) b ![p](placeholder://profile) ![bad](no close";
        let refs = image_refs(text);
        assert_eq!(
            refs,
            vec![
                ImageRef { alt: "hero".into(), url: "https://x/1.jpg".into() },
                ImageRef { alt: "p".into(), url: "placeholder://profile".into() },
            ]
        );
    }

    #[test]
    fn ignores_links_and_empty_urls() {
        assert!(image_refs("[link](https://x) ![e]()").is_empty());
    }

    #[test]
    fn headings() {
        let doc = "# Title\n\n## Layout\ntext\n## Components\n#nope\n";
        assert_eq!(title(doc), Some("Title"));
        assert_eq!(section_headings(doc), vec!["Layout", "Components"]);
        assert!(has_heading(doc));
        assert!(!has_heading("#nope\nplain"));
    }
}
