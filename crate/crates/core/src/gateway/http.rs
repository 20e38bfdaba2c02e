//! OpenAI-compatible chat-completions transport.

use std::time::Duration;

use async_trait::async_trait;
use base64::Engine as _;
use serde_json::{json, Value};

use super::{AttemptError, GatewayError, ModelRequest, Provider, ProviderConfig};

pub struct HttpProvider {
    client: reqwest::Client,
    endpoint: reqwest::Url,
    model: String,
    credentials_env_var: String,
}

impl HttpProvider {
    pub fn new(config: &ProviderConfig) -> Result<Self, GatewayError> {
        let endpoint = reqwest::Url::parse(&config.endpoint_url)
            .map_err(|e| GatewayError::InvalidConfig(format!("endpoint_url: {e}")))?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GatewayError::InvalidConfig(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint,
            model: config.model_name.clone(),
            credentials_env_var: config.credentials_env_var.clone(),
        })
    }

    fn body(&self, request: &ModelRequest) -> Value {
        let user_content = match request.image() {
            Some(image) => {
                let data = base64::engine::general_purpose::STANDARD.encode(&image.bytes);
                json!([
                    { "type": "text", "text": request.user_text() },
                    {
                        "type": "image_url",
                        "image_url": { "url": format!("data:{};base64,{data}", image.media_type) }
                    }
                ])
            }
            None => Value::String(request.user_text().to_string()),
        };
        json!({
            "model": self.model,
            "messages": [
                { "role": "system", "content": request.system_text() },
                { "role": "user", "content": user_content }
            ]
        })
    }
}

#[async_trait]
impl Provider for HttpProvider {
    async fn send(&self, request: &ModelRequest) -> Result<String, AttemptError> {
        let key = std::env::var(&self.credentials_env_var)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| AttemptError::Auth(format!("{} is not set", self.credentials_env_var)))?;

        let response = self
            .client
            .post(self.endpoint.clone())
            .bearer_auth(key)
            .json(&self.body(request))
            .send()
            .await
            .map_err(|e| AttemptError::Transient(transport_reason(&e)))?;

        let status = response.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(AttemptError::Auth(format!("HTTP {}", status.as_u16())));
        }
        if status == reqwest::StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(AttemptError::Transient(format!("HTTP {}", status.as_u16())));
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(format!("HTTP {}", status.as_u16())));
        }
        let body: Value = response
            .json()
            .await
            .map_err(|e| AttemptError::Transient(transport_reason(&e)))?;
        extract_text(&body).ok_or_else(|| AttemptError::Fatal("response has no message content".into()))
    }
}

/// Reason text for a transport error, without the request URL.
fn transport_reason(e: &reqwest::Error) -> String {
    let kind = if e.is_timeout() {
        "timeout"
    } else if e.is_connect() {
        "connection failed"
    } else if e.is_decode() {
        "malformed response body"
    } else {
        "transport error"
    };
    kind.to_string()
}

/// `choices[0].message.content`, either a string or a list of text parts.
fn extract_text(body: &Value) -> Option<String> {
    let content = body.pointer("/choices/0/message/content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            let text: String = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            Some(text)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_string_and_part_contents() {
        let a = json!({"choices":[{"message":{"content":"hi"}}]});
        assert_eq!(extract_text(&a).as_deref(), Some("hi"));
        let b = json!({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]});
        assert_eq!(extract_text(&b).as_deref(), Some("ab"));
        assert_eq!(extract_text(&json!({"error":"x"})), None);
    }
}
