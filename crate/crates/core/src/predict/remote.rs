//! HTTP client for an inference service speaking the JSON batch protocol:
//!
//! ```text
//! GET  /health   -> {"status":"ok","criteria":[...20 ids...],"max_level":3}
//! POST /predict  {"comments":[{"id","text","language"}]}
//!                -> {"predictions":[{"comment_id","scores":{criterion:int}}]}
//! ```
//!
//! Non-200 responses carry `{"error": str}`.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{duplicate_ids, json_entries, PredictError, PredictionProvider, Result};
use crate::corpus::Comment;
use crate::criterion::{level_map_from_entries, Criterion, DEFAULT_MAX_LEVEL};
use crate::score::PredictionVector;

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteEndpointConfig {
    pub base_url: String,
    /// Per-request timeout.
    pub timeout: Duration,
    /// Maximum comments per POST /predict.
    pub max_batch: usize,
    /// Maximum concurrent requests.
    pub max_in_flight: usize,
    /// Extra attempts per failed batch.
    pub retries: u32,
    /// Delay before the first retry; doubles on each further attempt.
    pub backoff: Duration,
}

impl RemoteEndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        RemoteEndpointConfig {
            base_url: base_url.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PredictError::InvalidConfig(m.to_string()));
        if self.base_url.is_empty() {
            return bad("base_url is empty");
        }
        if self.max_batch == 0 {
            return bad("max_batch must be at least 1");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1");
        }
        if self.timeout.is_zero() {
            return bad("timeout must be positive");
        }
        Ok(())
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }
}

impl Default for RemoteEndpointConfig {
    fn default() -> Self {
        RemoteEndpointConfig {
            base_url: "http://127.0.0.1:8000".into(),
            timeout: Duration::from_secs(30),
            max_batch: 32,
            max_in_flight: 4,
            retries: 2,
            backoff: Duration::from_millis(200),
        }
    }
}

/// Parsed `/health` answer.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Health {
    pub status: String,
    pub criteria: Vec<String>,
    pub max_level: u8,
}

#[derive(Serialize)]
struct WireComment<'a> {
    id: &'a str,
    text: &'a str,
    language: &'a str,
}

#[derive(Serialize)]
struct PredictRequest<'a> {
    comments: Vec<WireComment<'a>>,
}

#[derive(Deserialize)]
struct PredictResponse {
    predictions: Vec<WirePrediction>,
}

#[derive(Deserialize)]
struct WirePrediction {
    comment_id: String,
    scores: serde_json::Map<String, Value>,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

/// Client-side provider for a remote inference service.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    cfg: RemoteEndpointConfig,
    client: Client,
    health: Health,
}

fn transport_error(e: reqwest::Error) -> PredictError {
    if e.is_timeout() {
        PredictError::Timeout(e.to_string())
    } else {
        PredictError::EndpointUnavailable(e.to_string())
    }
}

fn retryable(e: &PredictError) -> bool {
    matches!(
        e,
        PredictError::EndpointUnavailable(_) | PredictError::Timeout(_)
    )
}

fn error_message(status: StatusCode, body: &str) -> String {
    match serde_json::from_str::<ErrorBody>(body) {
        Ok(b) => format!("HTTP {status}: {}", b.error),
        Err(_) => format!("HTTP {status}"),
    }
}

/// 5xx is treated as a transient outage; any other non-200 status means the
/// request itself was rejected.
fn status_error(status: StatusCode, body: &str) -> PredictError {
    if status.is_server_error() {
        PredictError::EndpointUnavailable(error_message(status, body))
    } else {
        PredictError::Protocol(error_message(status, body))
    }
}

impl RemoteProvider {
    /// Validates `cfg` and waits for a healthy `/health` answer, retrying
    /// transient failures like any batch.
    pub fn connect(cfg: RemoteEndpointConfig) -> Result<Self> {
        cfg.validate()?;
        let client = Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| PredictError::InvalidConfig(e.to_string()))?;
        let mut provider = RemoteProvider {
            cfg,
            client,
            health: Health {
                status: String::new(),
                criteria: Vec::new(),
                max_level: 0,
            },
        };
        provider.health = provider.with_retries(|| provider.fetch_health())?;
        Ok(provider)
    }

    pub fn config(&self) -> &RemoteEndpointConfig {
        &self.cfg
    }

    pub fn health(&self) -> &Health {
        &self.health
    }

    fn fetch_health(&self) -> Result<Health> {
        let resp = self
            .client
            .get(self.cfg.url("health"))
            .send()
            .map_err(transport_error)?;
        let status = resp.status();
        let body = resp.text().map_err(transport_error)?;
        if status != StatusCode::OK {
            return Err(PredictError::EndpointUnavailable(error_message(status, &body)));
        }
        let health: Health = serde_json::from_str(&body)
            .map_err(|e| PredictError::Protocol(format!("malformed /health body: {e}")))?;
        if health.status != "ok" {
            return Err(PredictError::EndpointUnavailable(format!(
                "service status is `{}`",
                health.status
            )));
        }
        let listed: BTreeSet<&str> = health.criteria.iter().map(String::as_str).collect();
        let canonical: BTreeSet<&str> = Criterion::ALL.iter().map(|c| c.as_str()).collect();
        if listed != canonical || health.criteria.len() != canonical.len() {
            return Err(PredictError::Protocol(format!(
                "service criteria {:?} differ from the canonical set",
                health.criteria
            )));
        }
        if health.max_level != DEFAULT_MAX_LEVEL {
            return Err(PredictError::Protocol(format!(
                "service max_level {} differs from {DEFAULT_MAX_LEVEL}",
                health.max_level
            )));
        }
        Ok(health)
    }

    fn with_retries<T>(&self, mut attempt: impl FnMut() -> Result<T>) -> Result<T> {
        let mut delay = self.cfg.backoff;
        let mut tries = 0;
        loop {
            match attempt() {
                Err(e) if retryable(&e) && tries < self.cfg.retries => {
                    log::warn!("attempt {} failed, retrying in {:?}: {e}", tries + 1, delay);
                    thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                    tries += 1;
                }
                other => return other,
            }
        }
    }

    /// One POST /predict round trip. The response must cover exactly the
    /// requested ids, in any order; the result is aligned to `batch`.
    fn predict_batch(&self, batch: &[Comment]) -> Result<Vec<PredictionVector>> {
        let request = PredictRequest {
            comments: batch
                .iter()
                .map(|c| WireComment {
                    id: &c.id,
                    text: &c.text,
                    language: &c.language,
                })
                .collect(),
        };
        let resp = self
            .client
            .post(self.cfg.url("predict"))
            .json(&request)
            .send()
            .map_err(transport_error)?;
        let status = resp.status();
        let body = resp.text().map_err(transport_error)?;
        if status != StatusCode::OK {
            return Err(status_error(status, &body));
        }
        let parsed: PredictResponse = serde_json::from_str(&body)
            .map_err(|e| PredictError::Protocol(format!("malformed /predict body: {e}")))?;
        align(batch, parsed.predictions)
    }
}

/// Validates every returned vector and reorders them to match `batch`.
fn align(batch: &[Comment], predictions: Vec<WirePrediction>) -> Result<Vec<PredictionVector>> {
    if predictions.len() != batch.len() {
        return Err(PredictError::Protocol(format!(
            "requested {} comments, received {} predictions",
            batch.len(),
            predictions.len()
        )));
    }
    let mut slots: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, c) in batch.iter().enumerate().rev() {
        slots.entry(c.id.as_str()).or_default().push(i);
    }
    let mut out: Vec<Option<PredictionVector>> = vec![None; batch.len()];
    for p in predictions {
        let entries = json_entries(&p.scores)
            .map_err(|e| PredictError::Protocol(format!("`{}`: {e}", p.comment_id)))?;
        let levels = level_map_from_entries(entries, DEFAULT_MAX_LEVEL)
            .map_err(|e| PredictError::Protocol(format!("`{}`: {e}", p.comment_id)))?;
        let slot = slots
            .get_mut(p.comment_id.as_str())
            .and_then(Vec::pop)
            .ok_or_else(|| {
                PredictError::Protocol(format!("unexpected comment id `{}` in response", p.comment_id))
            })?;
        out[slot] = Some(PredictionVector::new(p.comment_id, levels));
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| {
                PredictError::Protocol(format!("no prediction for `{}`", batch[i].id))
            })
        })
        .collect()
}

impl PredictionProvider for RemoteProvider {
    /// Splits `comments` into batches of at most `max_batch`, runs at most
    /// `max_in_flight` of them concurrently, and reassembles the results in
    /// input order. The first failing batch (by position) is reported.
    fn predict(&self, comments: &[Comment]) -> Result<Vec<PredictionVector>> {
        let dups = duplicate_ids(comments);
        if !dups.is_empty() {
            log::warn!("duplicate comment ids in request: {dups:?}");
        }
        let batches: Vec<&[Comment]> = comments.chunks(self.cfg.max_batch).collect();
        let results: Mutex<Vec<Option<Result<Vec<PredictionVector>>>>> =
            Mutex::new((0..batches.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let failed = AtomicBool::new(false);
        let workers = self.cfg.max_in_flight.min(batches.len());

        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    if failed.load(Ordering::Relaxed) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(batch) = batches.get(i) else { break };
                    let r = self.with_retries(|| self.predict_batch(batch));
                    if r.is_err() {
                        failed.store(true, Ordering::Relaxed);
                    }
                    results.lock().expect("result slots poisoned")[i] = Some(r);
                });
            }
        });

        let mut out = Vec::with_capacity(comments.len());
        for (i, slot) in results
            .into_inner()
            .expect("result slots poisoned")
            .into_iter()
            .enumerate()
        {
            match slot {
                Some(Ok(vs)) => out.extend(vs),
                Some(Err(e)) => {
                    return Err(PredictError::Batch {
                        ids: batches[i].iter().map(|c| c.id.clone()).collect(),
                        source: Box::new(e),
                    })
                }
                // never started; batches are handed out in order, so the
                // failure that stopped the workers has a lower index
                None => continue,
            }
        }
        if out.len() != comments.len() {
            return Err(PredictError::Protocol(
                "prediction aborted before all batches completed".into(),
            ));
        }
        Ok(out)
    }
}
