//! OpenAI-compatible `/chat/completions` transport with image content parts.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::time::Duration;

use serde_json::{json, Value};

use super::{with_retries, BackendProfile, InferenceRequest, VisionBackend};
use crate::error::BackendError;

pub struct HttpBackend {
    profile: BackendProfile,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(profile: BackendProfile) -> Result<Self, BackendError> {
        if !(profile.timeout_s.is_finite() && profile.timeout_s > 0.0) {
            return Err(BackendError::Config(format!(
                "profile {}: timeout_s must be > 0",
                profile.name
            )));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(profile.timeout_s))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let api_key = profile.resolved_api_key();
        Ok(Self {
            profile,
            client,
            api_key,
        })
    }

    fn url(&self) -> String {
        let base = self.profile.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }

    /// Request body: images first, then the instruction text, greedy decoding.
    pub fn request_body(&self, req: &InferenceRequest) -> Value {
        let mut content: Vec<Value> = req
            .frames
            .iter()
            .map(|f| json!({"type": "image_url", "image_url": {"url": f.data_url()}}))
            .collect();
        content.push(json!({"type": "text", "text": req.prompt_text}));
        json!({
            "model": self.profile.model_id,
            "messages": [{"role": "user", "content": content}],
            "temperature": 0.0,
            "max_tokens": req.max_tokens,
        })
    }

    fn send_once(&self, clip_id: &str, body: &Value) -> Result<String, BackendError> {
        let mut rb = self.client.post(self.url()).json(body);
        if let Some(key) = &self.api_key {
            rb = rb.bearer_auth(key);
        }
        let resp = rb.send().map_err(|e| classify(clip_id, e))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::HttpStatus {
                clip_id: clip_id.into(),
                code: status.as_u16(),
            });
        }
        let payload: Value = resp.json().map_err(|e| {
            if e.is_timeout() {
                classify(clip_id, e)
            } else {
                BackendError::BadPayload {
                    clip_id: clip_id.into(),
                    message: e.to_string(),
                }
            }
        })?;
        payload
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::BadPayload {
                clip_id: clip_id.into(),
                message: "missing choices[0].message.content".into(),
            })
    }

    fn audit(&self, req: &InferenceRequest, body: &Value, outcome: &Result<String, BackendError>) {
        let Some(dir) = &self.profile.audit_dir else {
            return;
        };
        let record = json!({
            "profile": self.profile.name,
            "tag": req.tag,
            "request": body,
            "response": outcome.as_ref().ok(),
            "error": outcome.as_ref().err().map(ToString::to_string),
        });
        let path = dir.join(format!("{}.jsonl", self.profile.name));
        let written = fs::create_dir_all(dir).and_then(|_| {
            let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
            writeln!(f, "{record}")
        });
        if let Err(e) = written {
            log::warn!("audit log {path:?}: {e}");
        }
    }
}

fn classify(clip_id: &str, e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout {
            clip_id: clip_id.into(),
            attempts: 1,
        }
    } else {
        BackendError::Transport {
            clip_id: clip_id.into(),
            message: e.to_string(),
        }
    }
}

impl VisionBackend for HttpBackend {
    fn complete(&self, req: &InferenceRequest) -> Result<String, BackendError> {
        let clip_id = req.tag.clip_id.as_str();
        let body = self.request_body(req);
        let out = with_retries(self.profile.retries, self.profile.backoff_ms, |_| {
            self.send_once(clip_id, &body)
        })
        .map_err(|e| match e {
            BackendError::Timeout { clip_id, .. } => BackendError::Timeout {
                clip_id,
                attempts: self.profile.retries + 1,
            },
            other => other,
        });
        self.audit(req, &body, &out);
        out
    }
}
