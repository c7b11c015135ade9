//! HTTP client for externally served models.
//!
//! `POST {endpoint}/predict` with
//! `{"images":[{"height":H,"width":W,"channels":C,"data":[...]}]}`; the server
//! answers `{"class_names":[...],"probabilities":[[...],...]}` with one row
//! per image.

use std::sync::{Arc, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Classifier, InputDims, ProbabilityVector};
use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Rows must sum to one within this tolerance.
pub const REMOTE_SUM_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagePayload {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl From<&ImageTensor> for ImagePayload {
    fn from(img: &ImageTensor) -> Self {
        Self { height: img.height(), width: img.width(), channels: img.channels(), data: img.data().to_vec() }
    }
}

impl TryFrom<ImagePayload> for ImageTensor {
    type Error = Error;

    fn try_from(p: ImagePayload) -> Result<Self> {
        ImageTensor::new(p.height, p.width, p.channels, p.data)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictRequest {
    pub images: Vec<ImagePayload>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictResponse {
    pub class_names: Vec<String>,
    pub probabilities: Vec<Vec<f64>>,
}

/// Checks a response against the request size and renormalizes each row.
pub fn validate_response(resp: PredictResponse, expected_rows: usize) -> Result<Vec<ProbabilityVector>> {
    if resp.probabilities.len() != expected_rows {
        return Err(Error::ProtocolViolation(format!(
            "{} rows for {expected_rows} images",
            resp.probabilities.len()
        )));
    }
    let names: Arc<[String]> = resp.class_names.into();
    resp.probabilities
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != names.len() {
                return Err(Error::ProtocolViolation(format!("row {i} has {} values for {} classes", row.len(), names.len())));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::ProtocolViolation(format!("row {i} has negative or non-finite values")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > REMOTE_SUM_TOL {
                return Err(Error::ProtocolViolation(format!("row {i} sums to {sum}")));
            }
            ProbabilityVector::new(row.into_iter().map(|v| (v / sum).min(1.0)).collect(), names.clone())
        })
        .collect()
}

pub struct RemoteClassifier {
    endpoint: String,
    dims: InputDims,
    batch_limit: usize,
    retries: usize,
    timeout: Duration,
    // built lazily: a blocking client must not be created on an async thread
    client: OnceLock<reqwest::blocking::Client>,
}

impl RemoteClassifier {
    pub fn new(endpoint: impl Into<String>, dims: InputDims, batch_limit: usize) -> Result<Self> {
        let endpoint = endpoint.into().trim_end_matches('/').to_string();
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(Error::InvalidConfig(format!("endpoint {endpoint:?} is not an http URL")));
        }
        Ok(Self {
            endpoint,
            dims,
            batch_limit: batch_limit.max(1),
            retries: 2,
            timeout: Duration::from_secs(60),
            client: OnceLock::new(),
        })
    }

    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn client(&self) -> Result<&reqwest::blocking::Client> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let c = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| Error::RemoteUnavailable(e.to_string()))?;
        Ok(self.client.get_or_init(|| c))
    }

    fn post_once(&self, body: &PredictRequest) -> std::result::Result<PredictResponse, (bool, Error)> {
        let url = format!("{}/predict", self.endpoint);
        let client = self.client().map_err(|e| (false, e))?;
        let resp = client.post(&url).json(body).send().map_err(|e| (true, Error::RemoteUnavailable(e.to_string())))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err((true, Error::RemoteUnavailable(format!("{url} answered {status}"))));
        }
        if !status.is_success() {
            return Err((false, Error::ProtocolViolation(format!("{url} answered {status}"))));
        }
        resp.json::<PredictResponse>().map_err(|e| (false, Error::ProtocolViolation(e.to_string())))
    }
}

impl Classifier for RemoteClassifier {
    fn input_dims(&self) -> InputDims {
        self.dims
    }

    fn batch_limit(&self) -> usize {
        self.batch_limit
    }

    fn predict_conformed(&self, imgs: &[ImageTensor]) -> Result<Vec<ProbabilityVector>> {
        let body = PredictRequest { images: imgs.iter().map(ImagePayload::from).collect() };
        let mut attempt = 0;
        loop {
            match self.post_once(&body) {
                Ok(resp) => return validate_response(resp, imgs.len()),
                Err((true, err)) if attempt < self.retries => {
                    attempt += 1;
                    log::warn!("remote predict attempt {attempt} failed: {err}");
                    std::thread::sleep(Duration::from_millis(50 * attempt as u64));
                }
                Err((_, err)) => return Err(err),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(rows: Vec<Vec<f64>>) -> PredictResponse {
        PredictResponse { class_names: vec!["a".into(), "b".into()], probabilities: rows }
    }

    #[test]
    fn accepts_and_renormalizes() {
        let out = validate_response(resp(vec![vec![0.5, 0.5004]]), 1).unwrap();
        assert!((out[0].values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(validate_response(resp(vec![vec![0.4, 0.4]]), 1), Err(Error::ProtocolViolation(_))));
        assert!(matches!(validate_response(resp(vec![vec![1.0]]), 1), Err(Error::ProtocolViolation(_))));
        assert!(matches!(validate_response(resp(vec![vec![0.5, 0.5]]), 2), Err(Error::ProtocolViolation(_))));
    }

    #[test]
    fn endpoint_must_be_http() {
        assert!(RemoteClassifier::new("ftp://x", InputDims::new(1, 1, 1), 1).is_err());
    }

    #[test]
    fn unreachable_server_is_unavailable() {
        // port 9 (discard) on localhost is closed in the test environment
        let model = RemoteClassifier::new("http://127.0.0.1:9", InputDims::new(1, 1, 1), 4)
            .unwrap()
            .with_retries(0)
            .with_timeout(Duration::from_secs(2));
        let img = ImageTensor::filled(1, 1, 1, 0.5);
        assert!(matches!(model.predict_conformed(&[img]), Err(Error::RemoteUnavailable(_))));
    }
}
