//! Sketch-to-website generation pipeline.
//!
//! A user sketch and a text prompt flow through three cooperating agents:
//!
//! 1. the [`design`] agent rasterizes the sketch and asks a model for a
//!    markdown PRD, whose `[name(modifier)]` image keywords are resolved by
//!    the [`images`] client and injected back as markdown image references;
//! 2. the [`code`] agent turns the injected PRD into the root website
//!    version `v0`;
//! 3. the [`critic`] agent reviews the current version and refines it into
//!    `v1`, `v2`, ... until the loop cap is reached or a review approves.
//!
//! Agents exchange state through the per-session shared memory and version
//! tree in [`store`]. Every model call goes through the provider-agnostic
//! [`gateway`], which always carries a deterministic offline stub. The
//! [`engine`] wires the steps together.

pub mod code;
pub mod config;
pub mod critic;
pub mod design;
pub mod digest;
pub mod engine;
pub mod gateway;
pub mod images;
pub mod markdown;
pub mod prompts;
pub mod store;

pub use config::PipelineConfig;
pub use digest::ContentDigest;
pub use engine::{Engine, EngineError};
