//! HTTP client for an external span predictor.
//!
//! Protocol: `GET /v1/health` → `{"status":"ok"}`;
//! `POST /v1/predict` with `{"items":[{"id","context","question"}]}` →
//! `{"predictions":[{"id","text","start_char","end_char","span_score","null_score"}]}`.
//! Ids are echoed verbatim and responses are matched to requests by id only.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{PredictionSet, Predictor, SpanPrediction};
use crate::error::{Error, Result};
use crate::reduction::SpDataset;
use crate::span::CharSpan;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireItem {
    pub id: String,
    pub context: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub items: Vec<WireItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePrediction {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub start_char: Option<usize>,
    #[serde(default)]
    pub end_char: Option<usize>,
    pub span_score: f64,
    pub null_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub predictions: Vec<WirePrediction>,
}

#[derive(Debug, Clone, Deserialize)]
struct Health {
    status: String,
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:8000`.
    pub endpoint: String,
    pub batch_size: usize,
    pub max_in_flight: usize,
    /// Extra attempts per batch after the first failure.
    pub retries: usize,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            batch_size: 32,
            max_in_flight: 4,
            retries: 2,
            timeout: Duration::from_secs(60),
        }
    }
}

enum BatchError {
    /// Worth retrying: transport failures and server errors.
    Transient(String),
    Fatal(Error),
}

struct Client {
    agent: ureq::Agent,
    config: RemoteConfig,
}

impl Client {
    fn new(config: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Client { agent, config }
    }

    fn connection(&self, message: impl Into<String>) -> Error {
        Error::Connection {
            endpoint: self.config.endpoint.clone(),
            message: message.into(),
        }
    }

    fn health(&self) -> Result<()> {
        let url = format!("{}/v1/health", self.config.endpoint);
        let resp = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| self.connection(format!("health check failed: {e}")))?;
        let h: Health = resp
            .into_json()
            .map_err(|e| self.connection(format!("health check failed: {e}")))?;
        if h.status != "ok" {
            return Err(self.connection(format!("health check failed: status {:?}", h.status)));
        }
        Ok(())
    }

    fn post(&self, request: &WireRequest) -> std::result::Result<WireResponse, BatchError> {
        let url = format!("{}/v1/predict", self.config.endpoint);
        match self.agent.post(&url).send_json(request) {
            Ok(resp) => resp
                .into_json::<WireResponse>()
                .map_err(|e| BatchError::Fatal(Error::Protocol(format!("malformed response body: {e}")))),
            Err(ureq::Error::Status(code, resp)) if code >= 500 || code == 429 => {
                let body = resp.into_string().unwrap_or_default();
                Err(BatchError::Transient(format!("status {code}: {body}")))
            }
            Err(ureq::Error::Status(code, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                Err(BatchError::Fatal(Error::Protocol(format!("status {code}: {body}"))))
            }
            Err(e) => Err(BatchError::Transient(e.to_string())),
        }
    }

    fn post_with_retries(&self, request: &WireRequest) -> Result<WireResponse> {
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            match self.post(request) {
                Ok(r) => return Ok(r),
                Err(BatchError::Fatal(e)) => return Err(e),
                Err(BatchError::Transient(msg)) => {
                    tracing::warn!(attempt, error = %msg, "predict batch failed");
                    last = msg;
                }
            }
        }
        Err(self.connection(format!(
            "batch failed after {} attempt(s): {last}",
            self.config.retries + 1
        )))
    }
}

/// Queries a remote predictor for every question of `ds`.
pub fn remote_predict(config: &RemoteConfig, ds: &SpDataset) -> Result<PredictionSet> {
    if config.batch_size == 0 || config.max_in_flight == 0 {
        return Err(Error::Protocol("batch_size and max_in_flight must be at least 1".into()));
    }
    let client = Client::new(config.clone());
    client.health()?;

    let batches: Vec<WireRequest> = ds
        .instances
        .chunks(config.batch_size)
        .map(|chunk| WireRequest {
            items: chunk
                .iter()
                .map(|i| WireItem {
                    id: i.qid.clone(),
                    context: i.context.clone(),
                    question: i.question.clone(),
                })
                .collect(),
        })
        .collect();

    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let results: Mutex<Vec<Option<Result<WireResponse>>>> =
        Mutex::new((0..batches.len()).map(|_| None).collect());
    let workers = config.max_in_flight.min(batches.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(batch) = batches.get(i) else { break };
                let r = client.post_with_retries(batch);
                if r.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });

    let mut set = PredictionSet::new(format!("remote:{}", config.endpoint));
    let mut missing = Vec::new();
    for (batch, result) in batches.iter().zip(results.into_inner().expect("results lock")) {
        let Some(result) = result else { continue };
        let response = result?;
        let mut pending: HashSet<&str> = batch.items.iter().map(|i| i.id.as_str()).collect();
        let mut by_id: HashMap<String, WirePrediction> = HashMap::new();
        for p in response.predictions {
            if !pending.remove(p.id.as_str()) {
                let reason = if by_id.contains_key(&p.id) { "duplicate" } else { "unknown" };
                return Err(Error::Protocol(format!("{reason} qid {:?} in response", p.id)));
            }
            by_id.insert(p.id.clone(), p);
        }
        for item in &batch.items {
            match by_id.remove(&item.id) {
                Some(p) => set.insert(from_wire(p)?)?,
                None => missing.push(item.id.clone()),
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteCoverage(missing));
    }
    set.validate_against(ds)?;
    Ok(set)
}

fn from_wire(p: WirePrediction) -> Result<SpanPrediction> {
    let char_span = match (p.text.is_empty(), p.start_char, p.end_char) {
        (true, _, _) => None,
        (false, Some(s), Some(e)) => Some(CharSpan::new(s, e)),
        (false, _, _) => {
            return Err(Error::Protocol(format!("{}: answer text without offsets", p.id)));
        }
    };
    Ok(SpanPrediction {
        qid: p.id,
        text: p.text,
        char_span,
        span_score: p.span_score,
        null_score: p.null_score,
    })
}

#[derive(Debug, Clone)]
pub struct RemotePredictor {
    pub config: RemoteConfig,
}

impl Predictor for RemotePredictor {
    fn predict(&self, ds: &SpDataset) -> Result<PredictionSet> {
        remote_predict(&self.config, ds)
    }
}
