//! `fediff run` and `fediff serve`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use fediff_core::config::PipelineConfig;
use fediff_core::design::{SketchFormat, SketchInput};
use fediff_core::Engine;
use serde_json::{json, Value};

use crate::rpc::RpcService;

#[derive(Debug, Parser)]
#[command(name = "fediff", version, about = "Turn a layout sketch and a prompt into a website, one critic-refined version at a time")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the whole pipeline once and write the session directory.
    Run(RunArgs),
    /// Serve the JSON-RPC API and version previews.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Sketch file: SVG, PNG or JPEG.
    #[arg(long)]
    pub sketch: PathBuf,
    /// What the website is for.
    #[arg(long)]
    pub prompt: String,
    /// Versions to produce on the branch, the first one included.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=64))]
    pub iterations: Option<u32>,
    /// Providers file (TOML, or JSON by extension). Defaults to the
    /// offline stub provider and image fixtures.
    #[arg(long)]
    pub providers: Option<PathBuf>,
    /// Directory the `sessions/` tree is written under.
    #[arg(long, default_value = "fediff-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8787")]
    pub bind: SocketAddr,
    #[arg(long)]
    pub providers: Option<PathBuf>,
    /// Directory the `sessions/` tree is kept under.
    #[arg(long, default_value = "fediff-data")]
    pub data: PathBuf,
}

/// A failure reported as one JSON line on stderr.
#[derive(Debug)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    fn new(kind: &str, message: impl Into<String>) -> Self {
        Self { kind: kind.into(), message: message.into() }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind, "message": self.message } })
    }
}

impl From<fediff_core::EngineError> for CliError {
    fn from(e: fediff_core::EngineError) -> Self {
        CliError::new(e.kind(), e.to_string())
    }
}

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => PipelineConfig::load(p).map_err(|e| CliError::new("invalid_config", e.to_string())),
        None => Ok(PipelineConfig::default()),
    }
}

fn read_sketch(path: &Path) -> Result<SketchInput, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::new("io", format!("cannot read {}: {e}", path.display())))?;
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    Ok(match ext.as_deref() {
        Some("svg") => SketchInput::new(SketchFormat::Svg, bytes),
        Some("png" | "jpg" | "jpeg") => SketchInput::new(SketchFormat::Raster, bytes),
        _ => SketchInput::sniff(bytes),
    })
}

/// Run the pipeline; on success returns the summary printed on stdout.
pub async fn run(args: RunArgs) -> Result<Value, CliError> {
    let mut config = load_config(args.providers.as_deref())?;
    if let Some(n) = args.iterations {
        config.loop_config.max_versions = n as usize;
    }
    let sketch = read_sketch(&args.sketch)?;
    let engine = Engine::open(config, &args.out)?;
    let session = engine.create_session(&args.prompt, &sketch)?;
    let outcome = engine.run_pipeline(&session.id, None).await?;
    Ok(json!({
        "session_id": outcome.session_id,
        "versions": outcome.versions,
        "session_dir": engine.store().session_dir(&session.id),
        "warnings": outcome.warnings,
    }))
}

pub async fn serve(args: ServeArgs) -> Result<(), CliError> {
    let config = load_config(args.providers.as_deref())?;
    let engine = Arc::new(Engine::open(config, &args.data)?);
    crate::http::serve(RpcService::new(engine), args.bind)
        .await
        .map_err(|e| CliError::new("bind_failure", format!("cannot serve on {}: {e}", args.bind)))
}
