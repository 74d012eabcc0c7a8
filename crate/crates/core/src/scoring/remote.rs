//! HTTP client for a remote scoring service.
//!
//! Protocol: `GET /v1/info` returns [`ScorerInfo`]; `POST /v1/score` takes a
//! [`ScoreRequest`] and returns a [`ScoreResponse`]. Status 400 is fatal,
//! 503 and transport failures are retried with exponential backoff.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::ScoreError;
use crate::scoring::{ScoreRequest, ScoreResponse, Scorer, ScorerInfo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    /// Upper bound on concurrent requests from this client.
    pub max_in_flight: usize,
    pub timeout_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            max_retries: 3,
            initial_backoff_ms: 100,
            max_in_flight: 4,
            timeout_ms: 30_000,
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteScorer {
    client: reqwest::blocking::Client,
    base: String,
    config: RemoteConfig,
    info: ScorerInfo,
    gate: Gate,
}

fn transport(e: reqwest::Error) -> ScoreError {
    ScoreError::Transport {
        message: e.to_string(),
        retryable: e.is_connect() || e.is_timeout() || e.is_request(),
    }
}

impl RemoteScorer {
    /// Connects and fetches the service limits from `/v1/info`.
    pub fn connect(config: RemoteConfig) -> Result<Self, ScoreError> {
        if config.endpoint.is_empty() {
            return Err(ScoreError::Transport {
                message: "no endpoint configured".into(),
                retryable: false,
            });
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(transport)?;
        let base = config.endpoint.trim_end_matches('/').to_string();
        let mut scorer = RemoteScorer {
            client,
            base,
            gate: Gate::new(config.max_in_flight),
            config,
            info: ScorerInfo {
                max_batch: 1,
                max_sequence_length: None,
                model_id: String::new(),
            },
        };
        scorer.info = scorer.with_retries(|s| s.fetch_info())?;
        if scorer.info.max_batch == 0 {
            return Err(ScoreError::Decode("service reports max_batch = 0".into()));
        }
        Ok(scorer)
    }

    fn fetch_info(&self) -> Result<ScorerInfo, ScoreError> {
        let resp = self
            .client
            .get(format!("{}/v1/info", self.base))
            .send()
            .map_err(transport)?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(ScoreError::Status {
                status,
                body: resp.text().unwrap_or_default(),
            });
        }
        resp.json().map_err(|e| ScoreError::Decode(e.to_string()))
    }

    fn post_score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError> {
        let resp = self
            .client
            .post(format!("{}/v1/score", self.base))
            .json(request)
            .send()
            .map_err(transport)?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(ScoreError::Status {
                status,
                body: resp.text().unwrap_or_default(),
            });
        }
        let body: ScoreResponse = resp.json().map_err(|e| ScoreError::Decode(e.to_string()))?;
        body.validate(request.len())?;
        Ok(body)
    }

    fn with_retries<T>(
        &self,
        mut op: impl FnMut(&Self) -> Result<T, ScoreError>,
    ) -> Result<T, ScoreError> {
        let mut backoff = Duration::from_millis(self.config.initial_backoff_ms);
        let mut attempt = 0;
        loop {
            match op(self) {
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    attempt += 1;
                    warn!("scoring request failed ({e}), retry {attempt} in {backoff:?}");
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
                other => return other,
            }
        }
    }
}

impl Scorer for RemoteScorer {
    fn info(&self) -> ScorerInfo {
        self.info.clone()
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError> {
        request.check_size(self.info.max_batch)?;
        let _permit = self.gate.acquire();
        self.with_retries(|s| s.post_score(request))
    }
}
