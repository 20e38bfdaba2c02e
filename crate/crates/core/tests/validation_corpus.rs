//! Handcrafted invalid documents, one per violation code; each file is
//! named after the code it must trigger.

use std::path::PathBuf;

use fediff_core::code::{validate_artifact, ValidationContext, ViolationCode, WebsiteArtifact};

const KNOWN_IMAGE: &str = "https://images.example/hero.jpg";

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/invalid")
}

fn ctx() -> ValidationContext {
    ValidationContext::new([KNOWN_IMAGE.to_string()])
}

const ALL_CODES: [ViolationCode; 13] = [
    ViolationCode::EmptyDocument,
    ViolationCode::ParseError,
    ViolationCode::MissingDoctype,
    ViolationCode::DoctypeMisplaced,
    ViolationCode::NoRootElement,
    ViolationCode::MultipleRootElements,
    ViolationCode::RootNotHtml,
    ViolationCode::ContentOutsideRoot,
    ViolationCode::ImgSrcMissing,
    ViolationCode::ImgSrcUnknown,
    ViolationCode::ExternalScript,
    ViolationCode::ExternalStylesheet,
    ViolationCode::ExternalResource,
];

#[test]
fn every_corpus_document_triggers_its_code() {
    let mut seen = Vec::new();
    for entry in std::fs::read_dir(corpus_dir()).unwrap() {
        let path = entry.unwrap().path();
        let stem = path.file_stem().unwrap().to_str().unwrap().to_ascii_uppercase();
        let code = ALL_CODES
            .into_iter()
            .find(|c| c.as_str() == stem)
            .unwrap_or_else(|| panic!("{} is not named after a violation code", path.display()));
        let html = std::fs::read_to_string(&path).unwrap();
        let report = validate_artifact(&WebsiteArtifact::new("v0", html), &ctx());
        assert!(!report.ok, "{stem} passed validation");
        assert!(report.has(code), "{stem}: got {:?}", report.summaries());
        seen.push(code);
    }
    assert!(seen.len() >= 10, "corpus has {} documents", seen.len());
    for code in ALL_CODES {
        assert!(seen.contains(&code), "no corpus document for {}", code.as_str());
    }
}

#[test]
fn well_formed_document_passes() {
    let html = format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head><meta charset=\"utf-8\"><title>Portfolio</title>\
         <style>body{{margin:0}}</style></head>\n<body><img src=\"{KNOWN_IMAGE}\" alt=\"hero\">\
         <img src=\"placeholder://profile\" alt=\"profile\"><script>document.body.dataset.ok='1'</script></body>\n</html>\n"
    );
    let report = validate_artifact(&WebsiteArtifact::new("v0", html), &ctx());
    assert!(report.ok, "{:?}", report.summaries());
}
