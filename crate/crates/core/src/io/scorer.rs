//! Similarity scoring: sidecar lookup or a remote `POST /score` service.
//!
//! Request body: `{"question": "...", "frames": ["<frame ref>", ...]}`.
//! Response body: `{"scores": [f64, ...]}`, one score per requested frame.
//! Non-2xx statuses, transport failures, and unparsable bodies are retried
//! with exponential backoff; a well-formed response with the wrong number of
//! scores is a protocol error and is not retried.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::sidecar::ScoreSidecar;

/// Environment variable overriding the scorer endpoint.
pub const SCORER_URL_ENV: &str = "EVSTU_SCORER_URL";

/// A frame as the scorer sees it: its index and a reference the service can
/// resolve (usually the image path).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRef {
    pub index: usize,
    pub uri: String,
}

pub trait SimilarityScorer {
    fn score(&self, question: &str, frames: &[FrameRef]) -> Result<Vec<f64>>;
}

impl SimilarityScorer for ScoreSidecar {
    fn score(&self, _question: &str, frames: &[FrameRef]) -> Result<Vec<f64>> {
        let indices: Vec<usize> = frames.iter().map(|f| f.index).collect();
        self.lookup(&indices)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    /// Attempts after the first.
    pub retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            base_delay_ms: 200,
            max_delay_ms: 5_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

#[derive(Debug, Serialize)]
struct ScoreRequest<'a> {
    question: &'a str,
    frames: Vec<&'a str>,
}

#[derive(Debug, Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

fn score_url(endpoint: &str) -> String {
    let trimmed = endpoint.trim_end_matches('/');
    if trimmed.ends_with("/score") {
        trimmed.to_string()
    } else {
        format!("{trimmed}/score")
    }
}

/// Client for an external scorer service.
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    pub endpoint: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl RemoteScorer {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, retry: RetryPolicy) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout,
            retry,
        }
    }

    fn attempt(
        &self,
        agent: &ureq::Agent,
        url: &str,
        body: &ScoreRequest<'_>,
    ) -> std::result::Result<Vec<f64>, String> {
        let mut resp = agent.post(url).send_json(body).map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        resp.body_mut()
            .read_json::<ScoreResponse>()
            .map(|r| r.scores)
            .map_err(|e| format!("malformed response: {e}"))
    }
}

impl SimilarityScorer for RemoteScorer {
    fn score(&self, question: &str, frames: &[FrameRef]) -> Result<Vec<f64>> {
        if frames.is_empty() {
            return Ok(Vec::new());
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let url = score_url(&self.endpoint);
        let body = ScoreRequest {
            question,
            frames: frames.iter().map(|f| f.uri.as_str()).collect(),
        };

        let mut last_error = String::new();
        for attempt in 0..=self.retry.retries {
            if attempt > 0 {
                std::thread::sleep(self.retry.delay(attempt));
            }
            match self.attempt(&agent, &url, &body) {
                Ok(scores) => {
                    if scores.len() != frames.len() {
                        return Err(Error::Protocol(format!(
                            "scorer returned {} scores for {} frames",
                            scores.len(),
                            frames.len()
                        )));
                    }
                    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
                        return Err(Error::Protocol(format!("scorer returned non-finite score {s}")));
                    }
                    return Ok(scores);
                }
                Err(e) => {
                    log::debug!("scorer attempt {} at {url} failed: {e}", attempt + 1);
                    last_error = e;
                }
            }
        }
        Err(Error::Service(format!(
            "{url} failed after {} attempts: {last_error}",
            self.retry.retries + 1
        )))
    }
}

/// Fetch scores for `frames` and package them as a sidecar.
pub fn fetch_scores(
    endpoint: &str,
    question: &str,
    frames: &[FrameRef],
    timeout: Duration,
    retry: RetryPolicy,
) -> Result<ScoreSidecar> {
    let scores = RemoteScorer::new(endpoint, timeout, retry).score(question, frames)?;
    Ok(ScoreSidecar {
        question: question.to_string(),
        frame_indices: frames.iter().map(|f| f.index).collect(),
        scores,
    })
}

/// Tries `primary`; on a service failure falls back to `fallback` with a warning.
pub struct FallbackScorer<P, F> {
    pub primary: P,
    pub fallback: F,
}

impl<P: SimilarityScorer, F: SimilarityScorer> SimilarityScorer for FallbackScorer<P, F> {
    fn score(&self, question: &str, frames: &[FrameRef]) -> Result<Vec<f64>> {
        match self.primary.score(question, frames) {
            Err(e @ Error::Service(_)) => {
                log::warn!("{e}; using score sidecar instead");
                self.fallback.score(question, frames)
            }
            other => other,
        }
    }
}
