use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde_json::{json, Value};

use super::templates::{render_prompt, PromptTemplate};
use super::GatewayError;
use crate::data_model::ModelRun;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Sends one POST. Implementations report connection-level failures as
/// `Err` and every HTTP status, success or not, as `Ok`.
pub trait Transport: Send + Sync {
    fn post(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpResponse, String>;
}

/// Blocking HTTP transport.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn post(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpResponse, String> {
        let mut req = self.agent.post(url);
        for (k, v) in headers {
            req = req.header(k, v);
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// Which wire format the endpoint speaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApiMode {
    Chat,
    Completions,
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub api_key: Option<String>,
    pub mode: ApiMode,
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    pub backoff_base: Duration,
    pub concurrency: usize,
    pub timeout: Duration,
    pub transcript: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            api_key: None,
            mode: ApiMode::Chat,
            max_retries: 3,
            backoff_base: Duration::from_secs(1),
            concurrency: 4,
            timeout: Duration::from_secs(300),
            transcript: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub request_id: String,
    pub text: String,
    pub attempts: u32,
    pub latency: Duration,
}

/// Chat-completions client with retries and optional transcript logging.
/// Shareable across threads; each call keeps its own state.
pub struct Gateway {
    config: GatewayConfig,
    transport: Arc<dyn Transport>,
    transcript: Option<Mutex<File>>,
}

// FNV-1a, for stable request ids.
fn fingerprint(parts: &[&str]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.bytes().chain([0xff]) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

fn endpoint_url(base: &str, mode: ApiMode) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with("/completions") {
        return base.to_string();
    }
    match mode {
        ApiMode::Chat => format!("{base}/chat/completions"),
        ApiMode::Completions => format!("{base}/completions"),
    }
}

impl Gateway {
    pub fn new(config: GatewayConfig) -> Result<Self, GatewayError> {
        let transport = Arc::new(UreqTransport::new(config.timeout));
        Self::with_transport(config, transport)
    }

    pub fn with_transport(config: GatewayConfig, transport: Arc<dyn Transport>) -> Result<Self, GatewayError> {
        if config.concurrency == 0 {
            return Err(GatewayError::Config("concurrency must be at least 1".into()));
        }
        let transcript = match &config.transcript {
            Some(path) => Some(Mutex::new(open_append(path)?)),
            None => None,
        };
        Ok(Self {
            config,
            transport,
            transcript,
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    fn request_body(&self, run: &ModelRun, prompt: &str) -> Value {
        let mut body = match self.config.mode {
            ApiMode::Chat => json!({
                "model": run.model_id,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": run.decoding.temperature,
                "max_tokens": run.decoding.max_tokens,
            }),
            ApiMode::Completions => json!({
                "model": run.model_id,
                "prompt": prompt,
                "temperature": run.decoding.temperature,
                "max_tokens": run.decoding.max_tokens,
            }),
        };
        if let Some(seed) = run.decoding.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn extract_text(&self, body: &str) -> Result<String, GatewayError> {
        let value: Value = serde_json::from_str(body)
            .map_err(|e| GatewayError::Protocol(format!("response body is not JSON: {e}")))?;
        let choice = value
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| GatewayError::Protocol("response has no choices".into()))?;
        let text = match self.config.mode {
            ApiMode::Chat => choice.pointer("/message/content"),
            ApiMode::Completions => choice.get("text"),
        };
        text.and_then(Value::as_str)
            .map(String::from)
            .ok_or_else(|| GatewayError::Protocol("choice carries no text".into()))
    }

    /// Send `prompt` as a single user message with a caller-chosen id.
    pub fn complete_with_id(&self, run: &ModelRun, prompt: &str, request_id: &str) -> Result<Completion, GatewayError> {
        let url = endpoint_url(&run.endpoint, self.config.mode);
        let body = self.request_body(run, prompt).to_string();
        let mut headers = vec![
            ("Content-Type".to_string(), "application/json".to_string()),
            ("Idempotency-Key".to_string(), request_id.to_string()),
        ];
        if let Some(key) = &self.config.api_key {
            headers.push(("Authorization".to_string(), format!("Bearer {key}")));
        }
        let started = Instant::now();
        let max_attempts = self.config.max_retries + 1;
        let mut attempt = 0;
        let outcome = loop {
            attempt += 1;
            let failure = match self.transport.post(&url, &headers, &body) {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    break self.extract_text(&resp.body).map(|text| Completion {
                        request_id: request_id.to_string(),
                        text,
                        attempts: attempt,
                        latency: started.elapsed(),
                    });
                }
                Ok(resp) if resp.status >= 500 => GatewayError::Http {
                    status: resp.status,
                    body: resp.body,
                    attempts: attempt,
                },
                Ok(resp) => {
                    break Err(GatewayError::Http {
                        status: resp.status,
                        body: resp.body,
                        attempts: attempt,
                    })
                }
                Err(message) => GatewayError::Transport {
                    message,
                    attempts: attempt,
                },
            };
            if attempt >= max_attempts {
                break Err(failure);
            }
            let delay = self.config.backoff_base * 2u32.pow(attempt - 1);
            log::warn!("request {request_id} failed ({failure}); retrying in {delay:?}");
            std::thread::sleep(delay);
        };
        self.log_transcript(run, request_id, prompt, &outcome, started.elapsed());
        outcome
    }

    /// Send `prompt`; the request id is derived from the model and prompt.
    pub fn complete(&self, run: &ModelRun, prompt: &str) -> Result<Completion, GatewayError> {
        let id = fingerprint(&[&run.model_id, prompt]);
        self.complete_with_id(run, prompt, &id)
    }

    /// Run many requests with at most `concurrency` in flight. Results are
    /// keyed by request id; completion order is unspecified.
    pub fn complete_batch(
        &self,
        run: &ModelRun,
        requests: &[(String, String)],
    ) -> Result<BTreeMap<String, Result<Completion, GatewayError>>, GatewayError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.concurrency)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        let results: Vec<(String, Result<Completion, GatewayError>)> = pool.install(|| {
            requests
                .par_iter()
                .map(|(id, prompt)| (id.clone(), self.complete_with_id(run, prompt, id)))
                .collect()
        });
        Ok(results.into_iter().collect())
    }

    /// Profile one lyric with the run's prompt.
    pub fn profile(&self, run: &ModelRun, lyrics: &str) -> Result<Completion, GatewayError> {
        let prompt = render_prompt(&PromptTemplate::builtin(run.prompt_id), lyrics)?;
        self.complete(run, &prompt)
    }

    /// Translate non-English parts of `lyrics`. Decoding is forced to
    /// temperature 0.0 and 2048 completion tokens; the completion is returned
    /// as-is.
    pub fn translate(&self, run: &ModelRun, lyrics: &str) -> Result<Completion, GatewayError> {
        let prompt = render_prompt(&PromptTemplate::translation(), lyrics)?;
        let run = run.clone().with_temperature(0.0).with_max_tokens(2048);
        self.complete(&run, &prompt)
    }

    fn log_transcript(
        &self,
        run: &ModelRun,
        request_id: &str,
        prompt: &str,
        outcome: &Result<Completion, GatewayError>,
        latency: Duration,
    ) {
        let Some(file) = &self.transcript else { return };
        let mut entry = json!({
            "request_id": request_id,
            "model": run.model_id,
            "temperature": run.decoding.temperature,
            "max_tokens": run.decoding.max_tokens,
            "prompt": prompt,
            "latency_ms": latency.as_millis() as u64,
        });
        match outcome {
            Ok(c) => {
                entry["response"] = json!(c.text);
                entry["attempts"] = json!(c.attempts);
            }
            Err(e) => entry["error"] = json!(e.to_string()),
        }
        let mut guard = file.lock().unwrap_or_else(|p| p.into_inner());
        if let Err(e) = writeln!(guard, "{entry}") {
            log::warn!("transcript write failed: {e}");
        }
    }
}

fn open_append(path: &Path) -> Result<File, GatewayError> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| GatewayError::Config(format!("cannot open transcript {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::PromptId;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Replays a fixed script of outcomes, then repeats the last one.
    struct Scripted {
        script: Vec<Result<HttpResponse, String>>,
        calls: AtomicUsize,
        last_body: Mutex<String>,
    }

    impl Scripted {
        fn new(script: Vec<Result<HttpResponse, String>>) -> Arc<Self> {
            Arc::new(Self {
                script,
                calls: AtomicUsize::new(0),
                last_body: Mutex::new(String::new()),
            })
        }
    }

    impl Transport for Scripted {
        fn post(&self, _url: &str, _h: &[(String, String)], body: &str) -> Result<HttpResponse, String> {
            *self.last_body.lock().unwrap() = body.to_string();
            let i = self.calls.fetch_add(1, Ordering::SeqCst);
            self.script[i.min(self.script.len() - 1)].clone()
        }
    }

    fn ok(text: &str) -> Result<HttpResponse, String> {
        Ok(HttpResponse {
            status: 200,
            body: json!({"choices": [{"message": {"content": text}}]}).to_string(),
        })
    }

    fn status(code: u16) -> Result<HttpResponse, String> {
        Ok(HttpResponse {
            status: code,
            body: "err".into(),
        })
    }

    fn gateway(t: Arc<Scripted>) -> Gateway {
        let config = GatewayConfig {
            backoff_base: Duration::from_millis(1),
            ..GatewayConfig::default()
        };
        Gateway::with_transport(config, t).unwrap()
    }

    fn run() -> ModelRun {
        ModelRun::new("m", PromptId::Regular, "http://localhost/v1")
    }

    #[test]
    fn success_after_two_failures() {
        let t = Scripted::new(vec![status(503), Err("reset".into()), ok("GENDER: male")]);
        let c = gateway(t.clone()).complete(&run(), "p").unwrap();
        assert_eq!(c.attempts, 3);
        assert_eq!(c.text, "GENDER: male");
    }

    #[test]
    fn four_failures_exhaust_retries() {
        let t = Scripted::new(vec![status(500)]);
        let err = gateway(t.clone()).complete(&run(), "p").unwrap_err();
        assert!(matches!(err, GatewayError::Http { status: 500, attempts: 4, .. }), "{err}");
        assert_eq!(t.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let t = Scripted::new(vec![status(400), ok("x")]);
        assert!(gateway(t.clone()).complete(&run(), "p").is_err());
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn non_json_body_is_a_protocol_error() {
        let t = Scripted::new(vec![Ok(HttpResponse {
            status: 200,
            body: "<html>".into(),
        })]);
        assert!(matches!(gateway(t).complete(&run(), "p"), Err(GatewayError::Protocol(_))));
    }

    #[test]
    fn translation_forces_deterministic_decoding() {
        let t = Scripted::new(vec![ok("hello")]);
        let g = gateway(t.clone());
        let r = run().with_temperature(0.9);
        g.translate(&r, "hola").unwrap();
        let body: Value = serde_json::from_str(&t.last_body.lock().unwrap()).unwrap();
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 2048);
        let content = body["messages"][0]["content"].as_str().unwrap();
        assert!(content.contains("Lyrics to translate:\nhola\n"));
        assert!(matches!(g.translate(&r, ""), Err(GatewayError::EmptyInput)));
    }

    #[test]
    fn endpoint_urls() {
        assert_eq!(endpoint_url("http://h/v1/", ApiMode::Chat), "http://h/v1/chat/completions");
        assert_eq!(endpoint_url("http://h/v1", ApiMode::Completions), "http://h/v1/completions");
        assert_eq!(endpoint_url("http://h/v1/chat/completions", ApiMode::Chat), "http://h/v1/chat/completions");
    }

    #[test]
    fn batch_results_are_keyed_by_id() {
        let t = Scripted::new(vec![ok("same")]);
        let reqs: Vec<(String, String)> = (0..10).map(|i| (format!("r{i}"), format!("p{i}"))).collect();
        let out = gateway(t).complete_batch(&run(), &reqs).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(out["r7"].as_ref().unwrap().request_id, "r7");
    }
}
