//! Design agent: sketch + prompt to a markdown PRD with resolved images.

pub mod keywords;
pub mod raster;

use std::collections::HashMap;
use std::ops::Range;

use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::strip_code_fence;
use crate::gateway::{GatewayError, ImageAttachment, ModelGateway, ModelRequest, ModelRole, ProviderHandle};
use crate::images::ImageAsset;
use crate::markdown;
use crate::prompts;

pub use keywords::{ImageKeyword, ImageModifier, KeywordQuery};
pub use raster::{rasterize_sketch, RasterError, RasterSketch, SketchFormat, SketchInput};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DesignError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("model returned an empty PRD")]
    PrdEmpty,
    #[error("model output has no section headings")]
    PrdUnstructured,
    #[error("PRD text changed since keyword extraction (span {0:?})")]
    StaleSpans(Range<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrdStage {
    Raw,
    ImagesInjected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrdDocument {
    markdown: String,
    stage: PrdStage,
}

impl PrdDocument {
    pub fn raw(markdown: impl Into<String>) -> Result<Self, DesignError> {
        let markdown = markdown.into();
        if markdown.trim().is_empty() {
            return Err(DesignError::PrdEmpty);
        }
        Ok(Self { markdown, stage: PrdStage::Raw })
    }

    /// Rebuild an injected PRD read back from storage.
    pub fn injected(markdown: impl Into<String>) -> Result<Self, DesignError> {
        let markdown = markdown.into();
        if markdown.trim().is_empty() {
            return Err(DesignError::PrdEmpty);
        }
        if !keywords::scan(&markdown).is_empty() {
            return Err(DesignError::InvalidArgument("injected PRD still contains image keywords".into()));
        }
        Ok(Self { markdown, stage: PrdStage::ImagesInjected })
    }

    pub fn markdown(&self) -> &str {
        &self.markdown
    }

    pub fn stage(&self) -> PrdStage {
        self.stage
    }

    /// Image URLs referenced by the PRD, deduplicated in document order.
    pub fn image_urls(&self) -> Vec<String> {
        let mut urls: Vec<String> = Vec::new();
        for r in markdown::image_refs(&self.markdown) {
            if !urls.contains(&r.url) {
                urls.push(r.url);
            }
        }
        urls
    }
}

/// Ask the model for a PRD describing the sketched page.
pub async fn generate_prd(
    sketch: &RasterSketch,
    prompt: &str,
    gateway: &ModelGateway,
    provider: &ProviderHandle,
    max_output_chars: usize,
) -> Result<PrdDocument, DesignError> {
    if prompt.trim().is_empty() {
        return Err(DesignError::InvalidArgument("prompt is empty".into()));
    }
    let request = ModelRequest::new(
        ModelRole::Design,
        prompts::system_text(ModelRole::Design),
        prompts::design_user_text(prompt, sketch.width_px, sketch.height_px),
        max_output_chars,
    )?
    .with_image(ImageAttachment { bytes: sketch.bytes.clone(), media_type: "image/jpeg".into() })?;
    let response = gateway.complete(provider, &request).await?;
    let mut text = response.text.trim();
    if text.starts_with("```") {
        text = strip_code_fence(text).unwrap_or(text).trim();
    }
    if text.is_empty() {
        return Err(DesignError::PrdEmpty);
    }
    if !markdown::has_heading(text) {
        return Err(DesignError::PrdUnstructured);
    }
    let mut markdown = text.to_string();
    markdown.push('\n');
    PrdDocument::raw(markdown)
}

/// Keyword occurrences in the PRD, in document order.
pub fn extract_keywords(prd: &PrdDocument) -> Vec<ImageKeyword> {
    keywords::scan(&prd.markdown)
}

/// Scheme of URLs injected when no image was found for a keyword.
pub const PLACEHOLDER_SCHEME: &str = "placeholder";

pub fn placeholder_url(name: &str) -> String {
    format!("{PLACEHOLDER_SCHEME}://{name}")
}

/// One token replaced during injection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replacement {
    pub token: String,
    pub source_span: Range<usize>,
    pub output_span: Range<usize>,
    pub url: String,
    pub placeholder: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injection {
    pub prd: PrdDocument,
    pub replacements: Vec<Replacement>,
    pub warnings: Vec<String>,
}

// Characters that would end or confuse a markdown link destination.
const URL_UNSAFE: &AsciiSet = &CONTROLS.add(b' ').add(b'(').add(b')').add(b'[').add(b']').add(b'<').add(b'>');

/// Replace every keyword token with `![name](url)`.
///
/// `keywords` must come from [`extract_keywords`] on this same PRD. Tokens
/// without an assignment get a placeholder URL and a warning. Text outside
/// the token spans is copied unchanged.
pub fn inject_images(
    prd: &PrdDocument,
    keywords: &[ImageKeyword],
    assignments: &HashMap<KeywordQuery, ImageAsset>,
) -> Result<Injection, DesignError> {
    if prd.stage != PrdStage::Raw {
        return Err(DesignError::InvalidArgument("PRD images are already injected".into()));
    }
    let text = prd.markdown.as_str();
    let mut out = String::with_capacity(text.len());
    let mut replacements = Vec::with_capacity(keywords.len());
    let mut warnings = Vec::new();
    let mut cursor = 0;
    for kw in keywords {
        let span = kw.source_span.clone();
        if span.start < cursor || text.get(span.clone()) != Some(kw.token().as_str()) {
            return Err(DesignError::StaleSpans(span));
        }
        out.push_str(&text[cursor..span.start]);
        let (url, placeholder) = match assignments.get(&kw.query()) {
            Some(asset) => (utf8_percent_encode(&asset.url, URL_UNSAFE).to_string(), false),
            None => {
                warnings.push(format!("no image for {}; using a placeholder", kw.token()));
                (placeholder_url(&kw.name), true)
            }
        };
        let start = out.len();
        out.push_str(&format!("![{}]({})", kw.name, url));
        replacements.push(Replacement {
            token: kw.token(),
            source_span: span.clone(),
            output_span: start..out.len(),
            url,
            placeholder,
        });
        cursor = span.end;
    }
    out.push_str(&text[cursor..]);
    if !keywords::scan(&out).is_empty() {
        // Every token was replaced; anything left means the keyword list did
        // not come from this document.
        return Err(DesignError::StaleSpans(0..text.len()));
    }
    Ok(Injection {
        prd: PrdDocument { markdown: out, stage: PrdStage::ImagesInjected },
        replacements,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::STUB_PROVIDER_ID;

    fn asset(url: &str) -> ImageAsset {
        ImageAsset {
            url: url.into(),
            width_px: 10,
            height_px: 10,
            attribution: String::new(),
            query_used: String::new(),
        }
    }

    #[test]
    fn injects_markdown_image_reference() {
        let prd = PrdDocument::raw("see [hero(landscape)] here").unwrap();
        let kws = extract_keywords(&prd);
        let map = HashMap::from([(kws[0].query(), asset("https://img.example/u.jpg"))]);
        let inj = inject_images(&prd, &kws, &map).unwrap();
        assert_eq!(inj.prd.markdown(), "see ![hero](https://img.example/u.jpg) here");
        assert_eq!(inj.prd.stage(), PrdStage::ImagesInjected);
        assert!(inj.warnings.is_empty());
        // plain string substitution gives the same text
        assert_eq!(
            inj.prd.markdown(),
            prd.markdown().replace("[hero(landscape)]", "![hero](https://img.example/u.jpg)")
        );
    }

    #[test]
    fn no_keywords_is_identity() {
        let prd = PrdDocument::raw("# Title\nplain text [not a token]\n").unwrap();
        let inj = inject_images(&prd, &extract_keywords(&prd), &HashMap::new()).unwrap();
        assert_eq!(inj.prd.markdown(), prd.markdown());
        assert_eq!(inj.prd.stage(), PrdStage::ImagesInjected);
    }

    #[test]
    fn missing_asset_yields_placeholder_and_one_warning() {
        let prd = PrdDocument::raw("a [profile(large)] b").unwrap();
        let inj = inject_images(&prd, &extract_keywords(&prd), &HashMap::new()).unwrap();
        assert_eq!(inj.prd.markdown(), "a ![profile](placeholder://profile) b");
        assert_eq!(inj.warnings.len(), 1);
        assert!(inj.replacements[0].placeholder);
    }

    #[test]
    fn stale_spans_are_detected() {
        let prd = PrdDocument::raw("x [hero(landscape)]").unwrap();
        let kws = extract_keywords(&prd);
        let edited = PrdDocument::raw("xx [hero(landscape)]").unwrap();
        assert!(matches!(inject_images(&edited, &kws, &HashMap::new()), Err(DesignError::StaleSpans(_))));
        let more = PrdDocument::raw("x [hero(landscape)] [a(small)]").unwrap();
        assert!(matches!(inject_images(&more, &kws, &HashMap::new()), Err(DesignError::StaleSpans(_))));
    }

    #[test]
    fn unsafe_url_characters_are_escaped() {
        let prd = PrdDocument::raw("[hero(landscape)]").unwrap();
        let kws = extract_keywords(&prd);
        let map = HashMap::from([(kws[0].query(), asset("https://x/a b(1)[2].jpg"))]);
        let inj = inject_images(&prd, &kws, &map).unwrap();
        assert_eq!(inj.prd.markdown(), "![hero](https://x/a%20b%281%29%5B2%5D.jpg)");
        assert_eq!(inj.prd.image_urls(), vec!["https://x/a%20b%281%29%5B2%5D.jpg".to_string()]);
    }

    #[test]
    fn injected_stage_cannot_be_injected_again() {
        let prd = PrdDocument::injected("# t\n![a](https://x)").unwrap();
        assert!(matches!(inject_images(&prd, &[], &HashMap::new()), Err(DesignError::InvalidArgument(_))));
        assert!(PrdDocument::injected("[a(small)]").is_err());
        assert_eq!(PrdDocument::raw("  \n"), Err(DesignError::PrdEmpty));
    }

    fn sketch() -> RasterSketch {
        let input = SketchInput::new(
            SketchFormat::Svg,
            br##"<svg xmlns="http://www.w3.org/2000/svg" width="200" height="100"><rect width="200" height="100" fill="#222"/></svg>"##.to_vec(),
        );
        rasterize_sketch(&input).unwrap()
    }

    #[tokio::test]
    async fn stub_prd_has_both_sketch_keywords() {
        let gw = ModelGateway::new();
        let stub = gw.handle(STUB_PROVIDER_ID).unwrap();
        let prd = generate_prd(&sketch(), "minimalist researcher homepage", &gw, &stub, 100_000).await.unwrap();
        assert_eq!(prd.stage(), PrdStage::Raw);
        assert!(markdown::has_heading(prd.markdown()));
        let names: Vec<_> = extract_keywords(&prd).iter().map(|k| k.token()).collect();
        assert_eq!(names, vec!["[hero(landscape)]", "[profile(large)]"]);
    }

    #[tokio::test]
    async fn empty_prompt_is_invalid() {
        let gw = ModelGateway::new();
        let stub = gw.handle(STUB_PROVIDER_ID).unwrap();
        assert!(matches!(
            generate_prd(&sketch(), "  ", &gw, &stub, 100_000).await,
            Err(DesignError::InvalidArgument(_))
        ));
    }
}
