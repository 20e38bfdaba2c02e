//! JSON-RPC 2.0 dispatch. Every method is a thin adapter over one
//! [`Engine`] operation; transport lives in [`crate::http`].
//!
//! | method                  | params                                                    |
//! |-------------------------|-----------------------------------------------------------|
//! | `session.create`        | `prompt`, `sketch_b64`, `media_type?`                     |
//! | `session.get`           | `session_id`                                              |
//! | `session.list_versions` | `session_id`                                              |
//! | `session.branch_from`   | `session_id`, `label`                                     |
//! | `session.status`        | `session_id`                                              |
//! | `design.generate_prd`   | `session_id`                                              |
//! | `code.generate_site`    | `session_id`                                              |
//! | `critic.run_loop`       | `session_id`, `max_versions?`, `early_stop?`, `extra_instructions?` |
//! | `pipeline.run`          | `session_id`, `max_versions?`, `early_stop?`, `wait?`     |

use std::sync::Arc;

use base64::Engine as _;
use fediff_core::critic::LoopConfig;
use fediff_core::design::SketchInput;
use fediff_core::store::SessionId;
use fediff_core::{Engine, EngineError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tracing::debug;

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32603;
/// Application errors without a more specific code.
pub const APPLICATION_ERROR: i64 = -32000;

pub const METHODS: [&str; 9] = [
    "session.create",
    "session.get",
    "session.list_versions",
    "session.branch_from",
    "session.status",
    "design.generate_prd",
    "code.generate_site",
    "critic.run_loop",
    "pipeline.run",
];

/// Application error code for an engine error kind.
pub fn code_for_kind(kind: &str) -> i64 {
    match kind {
        "invalid_argument" => INVALID_PARAMS,
        "unknown_session" => -32001,
        "unknown_version" => -32002,
        "branch_busy" => -32003,
        "invalid_transition" => -32004,
        "root_already_exists" => -32005,
        "key_not_found" => -32006,
        "namespace_violation" => -32007,
        "unknown_parent" => -32008,
        "invalid_sketch" => -32010,
        "provider_unavailable" => -32011,
        "auth_error" => -32012,
        "output_too_large" => -32013,
        "empty_response" => -32014,
        "generation_invalid" => -32015,
        "prd_invalid" => -32016,
        "image_search" => -32017,
        "digest_mismatch" => -32018,
        "storage" => -32019,
        "invalid_config" => -32020,
        _ => APPLICATION_ERROR,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

impl RpcError {
    fn new(code: i64, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), data: None }
    }

    fn with_kind(code: i64, kind: &str, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), data: Some(json!({ "kind": kind })) }
    }
}

impl From<EngineError> for RpcError {
    fn from(e: EngineError) -> Self {
        let kind = e.kind();
        RpcError::with_kind(code_for_kind(kind), kind, e.to_string())
    }
}

fn response(id: Value, outcome: Result<Value, RpcError>) -> Value {
    match outcome {
        Ok(result) => json!({ "jsonrpc": "2.0", "id": id, "result": result }),
        Err(error) => json!({ "jsonrpc": "2.0", "id": id, "error": error }),
    }
}

fn error_response(id: Value, error: RpcError) -> Value {
    response(id, Err(error))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateParams {
    prompt: String,
    sketch_b64: String,
    #[serde(default)]
    media_type: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionParams {
    session_id: SessionId,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchParams {
    session_id: SessionId,
    label: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoopParams {
    session_id: SessionId,
    #[serde(default)]
    max_versions: Option<usize>,
    #[serde(default)]
    early_stop: Option<bool>,
    #[serde(default)]
    extra_instructions: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineParams {
    session_id: SessionId,
    #[serde(default)]
    max_versions: Option<usize>,
    #[serde(default)]
    early_stop: Option<bool>,
    /// Run to completion before answering instead of in the background.
    #[serde(default)]
    wait: bool,
}

fn loop_config(engine: &Engine, max_versions: Option<usize>, early_stop: Option<bool>) -> Option<LoopConfig> {
    if max_versions.is_none() && early_stop.is_none() {
        return None;
    }
    let defaults = engine.config().loop_config;
    Some(LoopConfig {
        max_versions: max_versions.unwrap_or(defaults.max_versions),
        early_stop: early_stop.unwrap_or(defaults.early_stop),
    })
}

fn to_value<T: Serialize>(value: T) -> Result<Value, RpcError> {
    serde_json::to_value(value).map_err(|e| RpcError::new(INTERNAL_ERROR, e.to_string()))
}

#[derive(Clone)]
pub struct RpcService {
    engine: Arc<Engine>,
}

impl RpcService {
    pub fn new(engine: Arc<Engine>) -> Self {
        Self { engine }
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    /// Handle a raw request body. `None` means nothing is sent back (only
    /// notifications).
    pub async fn handle_bytes(&self, body: &[u8]) -> Option<Value> {
        match serde_json::from_slice::<Value>(body) {
            Ok(value) => self.handle_value(value).await,
            Err(e) => Some(error_response(Value::Null, RpcError::new(PARSE_ERROR, format!("parse error: {e}")))),
        }
    }

    /// Handle a parsed request or batch.
    pub async fn handle_value(&self, value: Value) -> Option<Value> {
        match value {
            Value::Array(items) if items.is_empty() => {
                Some(error_response(Value::Null, RpcError::new(INVALID_REQUEST, "empty batch")))
            }
            Value::Array(items) => {
                let mut out = Vec::new();
                for item in items {
                    if let Some(r) = self.handle_single(item).await {
                        out.push(r);
                    }
                }
                (!out.is_empty()).then_some(Value::Array(out))
            }
            other => self.handle_single(other).await,
        }
    }

    async fn handle_single(&self, request: Value) -> Option<Value> {
        let Value::Object(obj) = request else {
            return Some(error_response(Value::Null, RpcError::new(INVALID_REQUEST, "request must be an object")));
        };
        let id = obj.get("id").cloned();
        let id_ok = matches!(id, None | Some(Value::Null | Value::Number(_) | Value::String(_)));
        let reply_id = if id_ok { id.clone().unwrap_or(Value::Null) } else { Value::Null };
        if !id_ok {
            return Some(error_response(reply_id, RpcError::new(INVALID_REQUEST, "id must be a string, number or null")));
        }
        if obj.get("jsonrpc") != Some(&Value::String("2.0".into())) {
            return Some(error_response(reply_id, RpcError::new(INVALID_REQUEST, "jsonrpc must be \"2.0\"")));
        }
        let Some(Value::String(method)) = obj.get("method") else {
            return Some(error_response(reply_id, RpcError::new(INVALID_REQUEST, "method must be a string")));
        };
        let params = match obj.get("params") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(m)) => m.clone(),
            Some(Value::Array(_)) => {
                return Some(error_response(reply_id, RpcError::new(INVALID_PARAMS, "params must be named (an object)")))
            }
            Some(_) => {
                return Some(error_response(reply_id, RpcError::new(INVALID_REQUEST, "params must be an object or array")))
            }
        };
        debug!(method = %method, "rpc call");
        let outcome = self.call(method, params).await;
        // Requests without an id are notifications: run, but never answer.
        id.map(|id| response(id, outcome))
    }

    /// Invoke `method` with named params.
    pub async fn call(&self, method: &str, params: Map<String, Value>) -> Result<Value, RpcError> {
        let engine = &self.engine;
        match method {
            "session.create" => {
                let p: CreateParams = parse(params)?;
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(p.sketch_b64.trim())
                    .map_err(|e| RpcError::new(INVALID_PARAMS, format!("sketch_b64 is not valid base64: {e}")))?;
                let sketch = match p.media_type.as_deref() {
                    Some(mt) => SketchInput::from_media_type(mt, bytes)
                        .map_err(|e| RpcError::with_kind(code_for_kind("invalid_sketch"), "invalid_sketch", e.to_string()))?,
                    None => SketchInput::sniff(bytes),
                };
                to_value(engine.create_session(&p.prompt, &sketch)?)
            }
            "session.get" => {
                let p: SessionParams = parse(params)?;
                to_value(engine.session(&p.session_id)?)
            }
            "session.list_versions" => {
                let p: SessionParams = parse(params)?;
                to_value(json!({ "versions": engine.list_versions(&p.session_id)? }))
            }
            "session.branch_from" => {
                let p: BranchParams = parse(params)?;
                to_value(engine.branch_from(&p.session_id, &p.label)?)
            }
            "session.status" => {
                let p: SessionParams = parse(params)?;
                to_value(engine.status(&p.session_id)?)
            }
            "design.generate_prd" => {
                let p: SessionParams = parse(params)?;
                to_value(engine.generate_prd(&p.session_id).await?)
            }
            "code.generate_site" => {
                let p: SessionParams = parse(params)?;
                to_value(engine.generate_site(&p.session_id).await?)
            }
            "critic.run_loop" => {
                let p: LoopParams = parse(params)?;
                let config = loop_config(engine, p.max_versions, p.early_stop);
                to_value(engine.run_loop(&p.session_id, config, p.extra_instructions.as_deref()).await?)
            }
            "pipeline.run" => {
                let p: PipelineParams = parse(params)?;
                let config = loop_config(engine, p.max_versions, p.early_stop);
                if p.wait {
                    to_value(engine.run_pipeline(&p.session_id, config).await?)
                } else {
                    engine.start_pipeline(&p.session_id, config)?;
                    to_value(json!({ "session_id": p.session_id, "started": true }))
                }
            }
            other => Err(RpcError::new(METHOD_NOT_FOUND, format!("method not found: {other}"))),
        }
    }
}

fn parse<T: DeserializeOwned>(params: Map<String, Value>) -> Result<T, RpcError> {
    serde_json::from_value(Value::Object(params))
        .map_err(|e| RpcError::with_kind(INVALID_PARAMS, "invalid_params", format!("invalid params: {e}")))
}
