//! Client for a JSON predict endpoint:
//! `POST {base}/v1/models/{name}:predict` with `{"instances": [[..], ..]}`,
//! answered by `{"predictions": [[..], ..]}` or `{"error": ".."}`.

use std::fmt::Write as _;
use std::thread;
use std::time::Duration;

use ramdec_core::am::{AcousticModel, PosteriorMatrix, POSTERIOR_ROW_TOLERANCE};
use ramdec_core::{fmt_f32, Matrix};
use serde_json::Value;

use crate::{Error, Result};

pub const DEFAULT_CHUNK_SIZE: usize = 64;
pub const DEFAULT_TIMEOUT_MS: u64 = 5000;
pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const RETRY_BACKOFF: Duration = Duration::from_millis(100);
const MAX_RESPONSE_BYTES: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model_name: String,
    pub chunk_size: usize,
    pub timeout_ms: u64,
    pub max_retries: u32,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            chunk_size: DEFAULT_CHUNK_SIZE,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }

    pub fn predict_url(&self) -> String {
        format!("{}/v1/models/{}:predict", self.base_url.trim_end_matches('/'), self.model_name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 {
            return Err(Error::Other("chunk size must be at least 1".into()));
        }
        if self.base_url.is_empty() || self.model_name.is_empty() {
            return Err(Error::Other("remote backend needs a base URL and a model name".into()));
        }
        Ok(())
    }
}

/// `{"instances":[[..],..]}` with the shortest round-trip form of each value.
pub fn serialize_request<R: AsRef<[f32]>>(frames: &[R]) -> String {
    let mut out = String::from("{\"instances\":[");
    for (i, row) in frames.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('[');
        for (j, v) in row.as_ref().iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", fmt_f32(*v));
        }
        out.push(']');
    }
    out.push_str("]}");
    out
}

/// Decodes a predict response into a `frames x num_pdfs` posterior matrix.
///
/// An `{"error": msg}` body becomes [`Error::Remote`]; anything else that is
/// not a well-shaped `predictions` array of distributions is
/// [`Error::Protocol`].
pub fn parse_response(body: &str, frames: usize, num_pdfs: usize) -> Result<PosteriorMatrix> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| Error::Protocol(format!("response is not JSON: {e}")))?;
    if let Some(err) = value.get("error") {
        let message = err.as_str().map_or_else(|| err.to_string(), str::to_owned);
        return Err(Error::Remote(message));
    }
    let rows = value
        .get("predictions")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Protocol("response has no predictions array".into()))?;
    if rows.len() != frames {
        return Err(Error::Protocol(format!("expected {frames} prediction rows, got {}", rows.len())));
    }
    let mut data = Vec::with_capacity(frames * num_pdfs);
    for (t, row) in rows.iter().enumerate() {
        let row = row.as_array().ok_or_else(|| Error::Protocol(format!("prediction {t} is not an array")))?;
        if row.len() != num_pdfs {
            return Err(Error::Protocol(format!("prediction {t} has {} values, expected {num_pdfs}", row.len())));
        }
        for v in row {
            let v = v.as_f64().ok_or_else(|| Error::Protocol(format!("prediction {t} has a non-number")))?;
            data.push(v as f32);
        }
    }
    let m = Matrix::new(frames, num_pdfs, data).map_err(|e| Error::Protocol(e.to_string()))?;
    PosteriorMatrix::new(m, POSTERIOR_ROW_TOLERANCE).map_err(|e| Error::Protocol(e.to_string()))
}

/// Acoustic model living behind a predict endpoint. Cheap to clone; clones
/// share the connection pool.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    cfg: RemoteConfig,
    num_pdfs: usize,
    url: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig, num_pdfs: usize) -> Result<Self> {
        cfg.validate()?;
        if num_pdfs == 0 {
            return Err(Error::Other("num_pdfs must be positive".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let url = cfg.predict_url();
        Ok(Self { cfg, num_pdfs, url, agent })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn post_once(&self, body: &str, frames: usize) -> Result<PosteriorMatrix> {
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| Error::Remote(format!("{}: {e}", self.url)))?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_to_string()
            .map_err(|e| Error::Remote(format!("{}: reading response: {e}", self.url)))?;
        if !status.is_success() {
            let detail = match parse_response(&text, frames, self.num_pdfs) {
                Err(Error::Remote(msg)) => msg,
                _ => text.chars().take(200).collect(),
            };
            return Err(Error::Remote(format!("HTTP {}: {detail}", status.as_u16())));
        }
        parse_response(&text, frames, self.num_pdfs)
    }

    /// One chunk, retried on transport failures and error statuses.
    /// Malformed successful responses are not retried.
    fn post_chunk(&self, rows: &Matrix) -> Result<PosteriorMatrix> {
        let rows_vec: Vec<&[f32]> = rows.iter_rows().collect();
        let body = serialize_request(&rows_vec);
        let mut attempt = 0;
        loop {
            match self.post_once(&body, rows.rows()) {
                Err(Error::Remote(msg)) if attempt < self.cfg.max_retries => {
                    attempt += 1;
                    log::warn!("predict request failed ({msg}); retry {attempt}/{}", self.cfg.max_retries);
                    thread::sleep(RETRY_BACKOFF);
                }
                Err(Error::Remote(msg)) => {
                    return Err(Error::Remote(format!("{msg} (gave up after {} attempts)", attempt + 1)))
                }
                other => return other,
            }
        }
    }
}

impl AcousticModel for RemoteBackend {
    type Error = Error;

    /// Sends consecutive chunks of `chunk_size` frames, one request each, and
    /// stacks the answers in order.
    fn propagate(&self, spliced: &Matrix) -> Result<PosteriorMatrix> {
        let mut out = Matrix::zeros(0, self.num_pdfs);
        let mut start = 0;
        while start < spliced.rows() {
            let end = (start + self.cfg.chunk_size).min(spliced.rows());
            let post = self.post_chunk(&spliced.slice_rows(start, end))?;
            out.append_rows(post.matrix())?;
            start = end;
        }
        Ok(PosteriorMatrix::new(out, POSTERIOR_ROW_TOLERANCE)?)
    }
}
