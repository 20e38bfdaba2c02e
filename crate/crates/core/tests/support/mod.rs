#![allow(dead_code)]

use std::sync::Arc;

use fediff_core::config::PipelineConfig;
use fediff_core::design::SketchInput;
use fediff_core::gateway::{ProviderConfig, ALWAYS_CRITIQUE_MODEL};
use fediff_core::store::SessionId;
use fediff_core::Engine;

pub const SKETCH_SVG: &str = r##"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="600" viewBox="0 0 800 600">
  <rect x="20" y="20" width="760" height="60" fill="none" stroke="#222" stroke-width="3"/>
  <text x="40" y="58" font-size="24">My Portfolio</text>
  <rect x="20" y="100" width="760" height="220" fill="none" stroke="#222" stroke-width="3"/>
  <line x1="20" y1="100" x2="780" y2="320" stroke="#888"/>
  <line x1="780" y1="100" x2="20" y2="320" stroke="#888"/>
  <rect x="20" y="340" width="240" height="240" fill="none" stroke="#222" stroke-width="3"/>
  <rect x="280" y="340" width="500" height="30" fill="#ddd"/>
  <rect x="280" y="390" width="500" height="30" fill="#ddd"/>
  <rect x="280" y="440" width="380" height="30" fill="#ddd"/>
</svg>
"##;

pub const PROMPT: &str = "A personal portfolio website for a landscape photographer";

pub fn sketch() -> SketchInput {
    SketchInput::from_media_type("image/svg+xml", SKETCH_SVG.as_bytes().to_vec()).unwrap()
}

/// Stub provider whose critic always has two suggestions.
pub fn always_critique_config() -> PipelineConfig {
    PipelineConfig {
        active_provider: "stub-always".into(),
        providers: vec![ProviderConfig::stub("stub-always", ALWAYS_CRITIQUE_MODEL)],
        ..PipelineConfig::default()
    }
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub engine: Arc<Engine>,
}

pub fn engine(config: PipelineConfig) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let engine = Arc::new(Engine::open(config, dir.path()).unwrap());
    Fixture { dir, engine }
}

pub fn new_session(engine: &Engine) -> SessionId {
    engine.create_session(PROMPT, &sketch()).unwrap().id
}
