//! Wire adapters: one per provider style, each normalizing to
//! [`ProviderResponse`] or a classified error.

use std::collections::BTreeMap;
use std::time::Duration;

use polyeval_core::{classify_provider_error, ErrorClass, ModelSpec, ProviderKind, WireStatus};
use serde_json::{json, Value};

use super::transport::{HttpRequest, HttpResponse, Method, Transport};
use super::{ProviderRequest, ProviderResponse};
use crate::clock::Clock;
use crate::secrets::Secret;

/// Provider messages are truncated to this many chars in errors.
const MAX_MESSAGE_CHARS: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttemptError {
    pub class: ErrorClass,
    pub message: String,
}

impl AttemptError {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        AttemptError {
            class,
            message: truncate(message.into()),
        }
    }

    fn malformed(what: &str) -> Self {
        AttemptError::new(ErrorClass::MalformedResponse, format!("unexpected payload: {what}"))
    }
}

fn truncate(mut s: String) -> String {
    if let Some((idx, _)) = s.char_indices().nth(MAX_MESSAGE_CHARS) {
        s.truncate(idx);
        s.push('…');
    }
    s
}

/// How a request authenticates.
pub enum Credential {
    None,
    Bearer(Secret),
    /// Pre-rendered `Cookie` header value.
    Cookies(Secret),
}

pub struct CallContext<'a> {
    pub model: &'a ModelSpec,
    pub request: &'a ProviderRequest,
    pub credential: &'a Credential,
    pub transport: &'a dyn Transport,
    pub clock: &'a dyn Clock,
    pub poll_interval: Duration,
}

impl CallContext<'_> {
    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.model.request_timeout_s)
    }

    fn endpoint(&self) -> Result<&str, AttemptError> {
        self.model
            .endpoint
            .as_deref()
            .ok_or_else(|| AttemptError::new(ErrorClass::BadRequest, "model has no endpoint"))
    }

    fn http(&self, method: Method, url: &str, body: Option<Value>) -> HttpRequest {
        let mut headers = vec![("Accept".to_string(), "application/json".to_string())];
        if body.is_some() {
            headers.push(("Content-Type".to_string(), "application/json".to_string()));
        }
        match self.credential {
            Credential::None => {}
            Credential::Bearer(token) => {
                headers.push(("Authorization".to_string(), format!("Bearer {}", token.expose())))
            }
            Credential::Cookies(cookie) => headers.push(("Cookie".to_string(), cookie.expose().to_string())),
        }
        HttpRequest {
            method,
            url: url.to_string(),
            headers,
            body: body.map(|b| serde_json::to_vec(&b).expect("json values serialize")),
            timeout: self.timeout(),
        }
    }

    /// Sends and returns the parsed JSON body of a 2xx reply.
    fn exchange(&self, request: &HttpRequest) -> Result<Value, AttemptError> {
        let response = self
            .transport
            .execute(request)
            .map_err(|e| AttemptError::new(classify_provider_error(e.wire_status()), e.to_string()))?;
        parse_reply(&response)
    }
}

fn parse_reply(response: &HttpResponse) -> Result<Value, AttemptError> {
    if !(200..300).contains(&response.status) {
        let class = classify_provider_error(WireStatus::Http(response.status));
        let detail = provider_message(&response.body);
        return Err(AttemptError::new(class, format!("HTTP {}: {detail}", response.status)));
    }
    serde_json::from_slice(&response.body).map_err(|_| AttemptError::malformed("body is not JSON"))
}

/// Best-effort extraction of an error message from a provider error body.
fn provider_message(body: &[u8]) -> String {
    if let Ok(v) = serde_json::from_slice::<Value>(body) {
        for path in [&["error", "message"][..], &["error"], &["detail"], &["message"]] {
            if let Some(s) = lookup(&v, path).and_then(Value::as_str) {
                return s.to_string();
            }
        }
    }
    String::from_utf8_lossy(body).trim().to_string()
}

fn lookup<'v>(v: &'v Value, path: &[&str]) -> Option<&'v Value> {
    path.iter().try_fold(v, |cur, key| cur.get(*key))
}

fn single(text: String, meta: BTreeMap<String, String>) -> ProviderResponse {
    ProviderResponse {
        completions: vec![text],
        latency_ms: 0,
        provider_meta: meta,
    }
}

fn meta_from(v: &Value, fields: &[(&str, &[&str])]) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    for (name, path) in fields {
        match lookup(v, path) {
            Some(Value::String(s)) => {
                meta.insert(name.to_string(), s.clone());
            }
            Some(Value::Number(n)) => {
                meta.insert(name.to_string(), n.to_string());
            }
            _ => {}
        }
    }
    meta
}

pub fn attempt(ctx: &CallContext<'_>) -> Result<ProviderResponse, AttemptError> {
    match ctx.model.provider_kind {
        ProviderKind::ChatCompletion => chat_completion(ctx),
        ProviderKind::CookieSession => cookie_session(ctx),
        ProviderKind::PredictionPoll => prediction_poll(ctx),
        ProviderKind::InferenceEndpoint => inference_endpoint(ctx),
        ProviderKind::Mock => Err(AttemptError::new(
            ErrorClass::BadRequest,
            "mock models are answered from fixtures, not the network",
        )),
    }
}

fn chat_completion(ctx: &CallContext<'_>) -> Result<ProviderResponse, AttemptError> {
    let s = &ctx.request.sampling;
    let body = json!({
        "model": ctx.model.wire_model(),
        "messages": [{"role": "user", "content": ctx.request.prompt_text}],
        "temperature": s.temperature,
        "max_tokens": s.max_output_tokens,
        "n": 1,
    });
    let reply = ctx.exchange(&ctx.http(Method::Post, ctx.endpoint()?, Some(body)))?;
    normalize_chat_completion(&reply)
}

pub fn normalize_chat_completion(reply: &Value) -> Result<ProviderResponse, AttemptError> {
    let text = lookup(reply, &["choices"])
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .ok_or_else(|| AttemptError::malformed("missing choices[0].message.content"))?;
    let mut meta = meta_from(
        reply,
        &[
            ("model", &["model"]),
            ("prompt_tokens", &["usage", "prompt_tokens"]),
            ("completion_tokens", &["usage", "completion_tokens"]),
        ],
    );
    if let Some(fr) = reply["choices"][0]["finish_reason"].as_str() {
        meta.insert("finish_reason".into(), fr.into());
    }
    Ok(single(text.to_string(), meta))
}

fn cookie_session(ctx: &CallContext<'_>) -> Result<ProviderResponse, AttemptError> {
    let s = &ctx.request.sampling;
    let body = json!({
        "prompt": ctx.request.prompt_text,
        "temperature": s.temperature,
        "max_output_tokens": s.max_output_tokens,
    });
    let reply = ctx.exchange(&ctx.http(Method::Post, ctx.endpoint()?, Some(body)))?;
    normalize_cookie_session(&reply)
}

pub fn normalize_cookie_session(reply: &Value) -> Result<ProviderResponse, AttemptError> {
    let text = reply
        .get("content")
        .and_then(Value::as_str)
        .or_else(|| {
            reply
                .get("candidates")
                .and_then(|c| c.get(0))
                .and_then(|c| c.get("content"))
                .and_then(Value::as_str)
        })
        .ok_or_else(|| AttemptError::malformed("missing content"))?;
    let meta = meta_from(
        reply,
        &[("conversation_id", &["conversation_id"]), ("response_id", &["response_id"])],
    );
    Ok(single(text.to_string(), meta))
}

fn prediction_poll(ctx: &CallContext<'_>) -> Result<ProviderResponse, AttemptError> {
    let s = &ctx.request.sampling;
    let mut body = json!({
        "input": {
            "prompt": ctx.request.prompt_text,
            "temperature": s.temperature,
            "max_new_tokens": s.max_output_tokens,
        }
    });
    if let Some(version) = &ctx.model.remote_model {
        body["version"] = Value::String(version.clone());
    }
    let endpoint = ctx.endpoint()?;
    let started = ctx.clock.monotonic_ms();
    let deadline_ms = (ctx.model.request_timeout_s * 1000.0) as u64;
    let mut state = ctx.exchange(&ctx.http(Method::Post, endpoint, Some(body)))?;
    let id = state
        .get("id")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let poll_url = match lookup(&state, &["urls", "get"]).and_then(Value::as_str) {
        Some(url) => url.to_string(),
        None if !id.is_empty() => format!("{}/{}", endpoint.trim_end_matches('/'), id),
        None => return Err(AttemptError::malformed("prediction has neither urls.get nor id")),
    };
    let mut polls = 0u32;
    loop {
        match PredictionState::of(&state)? {
            PredictionState::Succeeded => {
                let mut resp = normalize_prediction_output(&state)?;
                resp.provider_meta.insert("polls".into(), polls.to_string());
                if !id.is_empty() {
                    resp.provider_meta.insert("prediction_id".into(), id);
                }
                return Ok(resp);
            }
            PredictionState::Failed(msg) => {
                return Err(AttemptError::new(ErrorClass::ServerError, format!("prediction failed: {msg}")))
            }
            PredictionState::Canceled => {
                return Err(AttemptError::new(ErrorClass::BadRequest, "prediction was canceled"))
            }
            PredictionState::Running => {}
        }
        if ctx.clock.monotonic_ms().saturating_sub(started) >= deadline_ms {
            return Err(AttemptError::new(ErrorClass::Timeout, "prediction did not finish before the deadline"));
        }
        ctx.clock.sleep(ctx.poll_interval);
        polls += 1;
        state = ctx.exchange(&ctx.http(Method::Get, &poll_url, None))?;
    }
}

enum PredictionState {
    Running,
    Succeeded,
    Failed(String),
    Canceled,
}

impl PredictionState {
    fn of(v: &Value) -> Result<Self, AttemptError> {
        match v.get("status").and_then(Value::as_str) {
            Some("starting") | Some("processing") | Some("queued") => Ok(PredictionState::Running),
            Some("succeeded") => Ok(PredictionState::Succeeded),
            Some("failed") => Ok(PredictionState::Failed(
                v.get("error").and_then(Value::as_str).unwrap_or("unknown error").to_string(),
            )),
            Some("canceled") => Ok(PredictionState::Canceled),
            Some(other) => Err(AttemptError::malformed(&format!("unknown prediction status {other:?}"))),
            None => Err(AttemptError::malformed("prediction without status")),
        }
    }
}

/// Output is either a string or a list of streamed string chunks.
pub fn normalize_prediction_output(state: &Value) -> Result<ProviderResponse, AttemptError> {
    let text = match state.get("output") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(parts)) => {
            let mut out = String::new();
            for p in parts {
                out.push_str(p.as_str().ok_or_else(|| AttemptError::malformed("non-string output chunk"))?);
            }
            out
        }
        _ => return Err(AttemptError::malformed("missing output")),
    };
    Ok(single(text, BTreeMap::new()))
}

fn inference_endpoint(ctx: &CallContext<'_>) -> Result<ProviderResponse, AttemptError> {
    let s = &ctx.request.sampling;
    let body = json!({
        "inputs": ctx.request.prompt_text,
        "parameters": {
            "temperature": s.temperature,
            "do_sample": s.temperature > 0.0,
            "max_new_tokens": s.max_output_tokens,
            "return_full_text": false,
        }
    });
    let reply = ctx.exchange(&ctx.http(Method::Post, ctx.endpoint()?, Some(body)))?;
    normalize_inference_endpoint(&reply)
}

pub fn normalize_inference_endpoint(reply: &Value) -> Result<ProviderResponse, AttemptError> {
    let item = match reply {
        Value::Array(items) => items.first(),
        other => Some(other),
    };
    if let Some(err) = item.and_then(|i| i.get("error")).and_then(Value::as_str) {
        return Err(AttemptError::new(ErrorClass::ServerError, err.to_string()));
    }
    let text = item
        .and_then(|i| i.get("generated_text"))
        .and_then(Value::as_str)
        .ok_or_else(|| AttemptError::malformed("missing generated_text"))?;
    Ok(single(text.to_string(), BTreeMap::new()))
}
