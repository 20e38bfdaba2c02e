//! Deterministic offline provider.
//!
//! Every response is a pure function of the request's role, system text,
//! user text and image digest, so whole pipeline runs are reproducible
//! byte for byte.
//!
//! * design: a fixed PRD skeleton carrying exactly the keywords
//!   `[hero(landscape)]` and `[profile(large)]`;
//! * code: a minimal single-document website that shows every image URL
//!   found after the `PRD:` marker;
//! * critic review: two suggestions in review round 1 and an empty
//!   (approving) block afterwards, or two suggestions every round in
//!   [`StubCriticMode::AlwaysCritique`];
//! * critic refine: the given source with a revision-notes section listing
//!   the applied suggestions.

use async_trait::async_trait;

use super::{AttemptError, ModelRequest, ModelRole, Provider};
use crate::code::markup::escape_html;
use crate::digest::ContentDigest;
use crate::markdown;
use crate::prompts;

/// Model name selecting [`StubCriticMode::AlwaysCritique`].
pub const ALWAYS_CRITIQUE_MODEL: &str = "always-critique";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StubCriticMode {
    /// Two suggestions on the first review of a session, none afterwards.
    #[default]
    CritiqueOnce,
    /// Two suggestions on every review; the loop only stops at its cap.
    AlwaysCritique,
}

#[derive(Debug, Clone, Default)]
pub struct StubProvider {
    critic: StubCriticMode,
}

pub(crate) const STUB_SUGGESTIONS: [&str; 2] = [
    "[accessibility/major] Add a skip-to-content link and make every image's alt text describe its content.",
    "[layout/minor] Give the hero banner and the about section more vertical spacing on narrow screens.",
];

impl StubProvider {
    pub fn new(critic: StubCriticMode) -> Self {
        Self { critic }
    }

    pub fn from_model_name(model_name: &str) -> Self {
        let critic = if model_name == ALWAYS_CRITIQUE_MODEL {
            StubCriticMode::AlwaysCritique
        } else {
            StubCriticMode::CritiqueOnce
        };
        Self { critic }
    }

    pub fn respond(&self, request: &ModelRequest) -> String {
        match request.role() {
            ModelRole::Design => design_response(request),
            ModelRole::Code => code_response(request.user_text()),
            ModelRole::CriticReview => self.review_response(request.user_text()),
            ModelRole::CriticRefine => refine_response(request.user_text()),
        }
    }

    fn review_response(&self, user_text: &str) -> String {
        let round: usize = prompts::line_value(user_text, prompts::ROUND_PREFIX)
            .and_then(|r| r.parse().ok())
            .unwrap_or(1);
        let critique = match self.critic {
            StubCriticMode::AlwaysCritique => true,
            StubCriticMode::CritiqueOnce => round <= 1,
        };
        if critique {
            let mut out = String::from("```critique\n");
            for s in STUB_SUGGESTIONS {
                out.push_str("- ");
                out.push_str(s);
                out.push('\n');
            }
            out.push_str("```\n");
            out
        } else {
            "```critique\n```\n".to_string()
        }
    }
}

#[async_trait]
impl Provider for StubProvider {
    async fn send(&self, request: &ModelRequest) -> Result<String, AttemptError> {
        Ok(self.respond(request))
    }
}

fn design_response(request: &ModelRequest) -> String {
    let sketch = request
        .image()
        .map(|i| i.digest().short(12).to_string())
        .unwrap_or_else(|| "none".to_string());
    let mut fingerprint_input = request.system_text().as_bytes().to_vec();
    fingerprint_input.extend_from_slice(request.user_text().as_bytes());
    let fingerprint = ContentDigest::of(&fingerprint_input);
    format!(
        "# Personal Website\n\
         \n\
         ## Layout\n\
         1. Header with the site name and navigation links.\n\
         2. Full-width hero banner: [hero(landscape)]\n\
         3. About section with a portrait beside a short biography.\n\
         4. Highlights grid with three cards.\n\
         5. Footer with contact links.\n\
         \n\
         ## Components\n\
         - Navigation: anchors to About, Highlights and Contact.\n\
         - Hero: headline and one-sentence pitch over the banner image.\n\
         - About: [profile(large)] next to a biography paragraph.\n\
         - Highlights: three cards summarizing recent work.\n\
         - Footer: email address and social links.\n\
         \n\
         ## Images\n\
         - Hero banner, wide and atmospheric (see Layout).\n\
         - Profile portrait, friendly and professional (see Components).\n\
         \n\
         Sketch {sketch}, request {}.\n",
        fingerprint.short(12)
    )
}

fn code_response(user_text: &str) -> String {
    let prd = user_text
        .find(prompts::PRD_MARKER)
        .map(|i| &user_text[i + prompts::PRD_MARKER.len()..])
        .unwrap_or(user_text);
    let title = markdown::title(prd).unwrap_or("Website");
    let images = markdown::image_refs(prd);
    let sections = markdown::section_headings(prd);

    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n");
    html.push_str("<meta charset=\"utf-8\">\n");
    html.push_str("<meta name=\"viewport\" content=\"width=device-width, initial-scale=1\">\n");
    html.push_str(&format!("<title>{}</title>\n", escape_html(title)));
    html.push_str(
        "<style>\n\
         body { margin: 0; font-family: system-ui, sans-serif; color: #1d1d1f; }\n\
         header, main, footer { max-width: 960px; margin: 0 auto; padding: 1rem; }\n\
         .images { display: grid; grid-template-columns: repeat(auto-fit, minmax(240px, 1fr)); gap: 1rem; }\n\
         .images img { width: 100%; height: auto; min-height: 120px; background: #e5e5ea; }\n\
         </style>\n",
    );
    html.push_str("</head>\n<body>\n");
    html.push_str(&format!("<header><h1>{}</h1></header>\n<main>\n", escape_html(title)));
    html.push_str("<section class=\"images\">\n");
    for image in &images {
        html.push_str(&format!(
            "<figure><img src=\"{}\" alt=\"{}\"><figcaption>{}</figcaption></figure>\n",
            escape_html(&image.url),
            escape_html(&image.alt),
            escape_html(&image.alt)
        ));
    }
    html.push_str("</section>\n");
    for heading in sections {
        html.push_str(&format!("<section><h2>{}</h2></section>\n", escape_html(heading)));
    }
    html.push_str("</main>\n<footer><p>Built from a sketch.</p></footer>\n");
    html.push_str("<script>document.documentElement.classList.add('js');</script>\n");
    html.push_str("</body>\n</html>\n");
    html
}

fn refine_response(user_text: &str) -> String {
    let Some(source) = prompts::embedded_source(user_text) else {
        return code_response(user_text);
    };
    let version = prompts::line_value(user_text, prompts::VERSION_PREFIX).unwrap_or("?");
    let suggestions: Vec<&str> = user_text
        .find(prompts::SUGGESTIONS_MARKER)
        .map(|i| &user_text[i + prompts::SUGGESTIONS_MARKER.len()..])
        .map(|rest| rest.lines().map_while(|l| l.strip_prefix("- ")).collect())
        .unwrap_or_default();

    let mut notes = format!(
        "<section class=\"revision\" data-reviewed=\"{}\">\n<h2>Revision notes</h2>\n<ul>\n",
        escape_html(version)
    );
    for s in suggestions {
        notes.push_str(&format!("<li>{}</li>\n", escape_html(s)));
    }
    notes.push_str("</ul>\n</section>\n");

    match source.rfind("</body>") {
        Some(at) => format!("{}{}{}", &source[..at], notes, &source[at..]),
        None => format!("{source}\n{notes}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ImageAttachment;

    fn req(role: ModelRole, user: &str) -> ModelRequest {
        ModelRequest::new(role, prompts::system_text(role), user, 1_000_000).unwrap()
    }

    #[test]
    fn design_is_deterministic_and_carries_both_keywords() {
        let stub = StubProvider::default();
        let image = ImageAttachment { bytes: vec![1, 2, 3], media_type: "image/jpeg".into() };
        let r = req(ModelRole::Design, "make a homepage").with_image(image).unwrap();
        let a = stub.respond(&r);
        assert_eq!(a, stub.respond(&r));
        assert_eq!(a.matches("[hero(landscape)]").count(), 1);
        assert_eq!(a.matches("[profile(large)]").count(), 1);
        assert_eq!(a.matches("](").count(), 0);
        let other = stub.respond(&req(ModelRole::Design, "another request"));
        assert_ne!(a, other);
    }

    #[test]
    fn code_embeds_every_prd_url() {
        let prd = "# T\n## A\n![hero](https://img.example/h.jpg?a=1&b=2) ![profile](placeholder://profile)\n";
        let text = prompts::code_user_text("p", &[], prd);
        let html = StubProvider::default().respond(&req(ModelRole::Code, &text));
        assert!(html.starts_with("<!DOCTYPE html>"));
        assert!(html.contains("src=\"https://img.example/h.jpg?a=1&amp;b=2\""));
        assert!(html.contains("src=\"placeholder://profile\""));
    }

    #[test]
    fn critique_once_then_approve() {
        let stub = StubProvider::new(StubCriticMode::CritiqueOnce);
        let first = stub.respond(&req(ModelRole::CriticReview, &prompts::review_user_text("p", "v0", 1, None, "<html></html>")));
        assert_eq!(first.matches("\n- [").count(), 2);
        let second = stub.respond(&req(ModelRole::CriticReview, &prompts::review_user_text("p", "v1", 2, None, "<html></html>")));
        assert_eq!(second, "```critique\n```\n");

        let always = StubProvider::from_model_name(ALWAYS_CRITIQUE_MODEL);
        let again = always.respond(&req(ModelRole::CriticReview, &prompts::review_user_text("p", "v5", 9, None, "x")));
        assert_eq!(again.matches("\n- [").count(), 2);
    }

    #[test]
    fn refine_inserts_notes_before_body_end() {
        let source = "<!DOCTYPE html>\n<html><body><p>x</p></body></html>";
        let text = prompts::refine_user_text("p", "v0", &["[layout/minor] a < b".into()], &[], source);
        let out = StubProvider::default().respond(&req(ModelRole::CriticRefine, &text));
        assert!(out.contains("<li>[layout/minor] a &lt; b</li>\n</ul>\n</section>\n</body></html>"));
        assert!(out.contains("data-reviewed=\"v0\""));
    }
}
