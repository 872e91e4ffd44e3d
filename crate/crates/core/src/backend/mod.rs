//! Vision-language inference: request types, prompt templates, response
//! parsing, the HTTP transport, and a deterministic simulated oracle.

mod http;
mod oracle;
mod parse;
mod prompt;

use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use http::HttpBackend;
pub use oracle::{oracle_respond, OracleBackend, OracleNoise};
pub use parse::{
    extract_json_object, parse_stage1_response, parse_stage2_time, parse_stage3_point,
};
pub use prompt::{
    build_stage1_prompt, build_stage2_prompt, build_stage3_prompt, PromptTemplates, REASK_SUFFIX,
};

use crate::error::BackendError;
use crate::overlay::EncodedFrame;
use crate::plan::{Interval, Stage};

/// Decoding mode. Only greedy (temperature 0) decoding is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoding {
    #[default]
    Greedy,
}

/// Routing metadata attached to every request. Transports ignore it; the
/// oracle and audit logs use it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestTag {
    pub clip_id: String,
    pub stage: Stage,
    /// Stage-1 pass index, 0 otherwise.
    pub pass: usize,
    /// Time span the frames cover.
    pub window: Option<Interval>,
    pub frame_times: Vec<f64>,
    /// 0 for the first ask, 1 for the re-ask after an unparseable answer.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRequest {
    pub tag: RequestTag,
    pub prompt_text: String,
    pub frames: Vec<EncodedFrame>,
    pub decode: Decoding,
    pub max_tokens: u32,
}

fn default_timeout() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_max_tokens() -> u32 {
    256
}
fn default_key_env() -> String {
    "VLM_API_KEY".into()
}

/// Endpoint `"oracle"` selects the simulated backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendProfile {
    pub name: String,
    pub endpoint: String,
    #[serde(default)]
    pub model_id: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// First retry delay; doubled on every further retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub api_key: Option<String>,
    /// Environment variable that overrides `api_key` when set.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    /// Mirror every request/response pair into this directory.
    #[serde(default)]
    pub audit_dir: Option<PathBuf>,
}

impl BackendProfile {
    pub const ORACLE_ENDPOINT: &'static str = "oracle";

    pub fn oracle(name: &str) -> Self {
        Self {
            name: name.into(),
            endpoint: Self::ORACLE_ENDPOINT.into(),
            model_id: "oracle".into(),
            timeout_s: default_timeout(),
            retries: 0,
            backoff_ms: 0,
            max_tokens: default_max_tokens(),
            api_key: None,
            api_key_env: default_key_env(),
            audit_dir: None,
        }
    }

    pub fn http(name: &str, endpoint: &str, model_id: &str) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            retries: default_retries(),
            backoff_ms: default_backoff(),
            ..Self::oracle(name)
        }
    }

    pub fn is_oracle(&self) -> bool {
        self.endpoint == Self::ORACLE_ENDPOINT
    }

    pub fn resolved_api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .or_else(|| self.api_key.clone())
    }
}

/// A stateless text-completion service over images.
pub trait VisionBackend: Send + Sync {
    fn complete(&self, req: &InferenceRequest) -> Result<String, BackendError>;
}

impl<T: VisionBackend + ?Sized> VisionBackend for Arc<T> {
    fn complete(&self, req: &InferenceRequest) -> Result<String, BackendError> {
        (**self).complete(req)
    }
}

/// Runs `attempt` up to `retries + 1` times, sleeping `backoff_ms * 2^k`
/// between tries, as long as the failure is transient.
pub fn with_retries<T>(
    retries: u32,
    backoff_ms: u64,
    mut attempt: impl FnMut(u32) -> Result<T, BackendError>,
) -> Result<T, BackendError> {
    let mut k = 0;
    loop {
        match attempt(k) {
            Ok(v) => return Ok(v),
            Err(e) if e.is_transient() && k < retries => {
                let delay = backoff_ms.saturating_mul(1u64 << k.min(20));
                log::debug!("transient failure ({e}), retry {} in {delay} ms", k + 1);
                thread::sleep(Duration::from_millis(delay));
                k += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Sends one request through the backend described by `profile`.
///
/// Oracle profiles need the oracle instance; they never touch the network.
pub fn infer(
    profile: &BackendProfile,
    oracle: Option<&OracleBackend>,
    req: &InferenceRequest,
) -> Result<String, BackendError> {
    connect(profile, oracle.cloned().map(Arc::new))?.complete(req)
}

/// Builds the backend for a profile.
pub fn connect(
    profile: &BackendProfile,
    oracle: Option<Arc<OracleBackend>>,
) -> Result<Arc<dyn VisionBackend>, BackendError> {
    if profile.is_oracle() {
        let oracle = oracle.ok_or_else(|| {
            BackendError::Config(format!(
                "profile {} uses the oracle endpoint but no ground truth was supplied",
                profile.name
            ))
        })?;
        Ok(oracle)
    } else {
        Ok(Arc::new(HttpBackend::new(profile.clone())?))
    }
}
