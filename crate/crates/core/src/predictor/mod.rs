//! Black-box classifiers: a batch of images in, one probability vector per
//! image out.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{resample, ImageTensor, ResampleMethod};

pub mod dataset;
pub mod linear;
pub mod mlp;
pub mod remote;

pub use dataset::LabeledImages;
pub use linear::LinearClassifier;
pub use mlp::{Mlp, TrainConfig, TrainReport};
pub use remote::RemoteClassifier;

/// Tolerance on the sum of a probability vector.
pub const PROBABILITY_SUM_TOL: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    values: Vec<f64>,
    class_names: Arc<[String]>,
}

impl ProbabilityVector {
    pub fn new(values: Vec<f64>, class_names: Arc<[String]>) -> Result<Self> {
        if values.len() != class_names.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} probabilities for {} classes",
                values.len(),
                class_names.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteOutput);
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOL || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::ShapeMismatch(format!("not a probability vector (sum {sum})")));
        }
        Ok(Self { values, class_names })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn shared_class_names(&self) -> Arc<[String]> {
        self.class_names.clone()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.values[class]
    }

    /// Index of the most probable class; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// Expected input shape, serialized as `[height, width, channels]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct InputDims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl InputDims {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || !(self.channels == 1 || self.channels == 3) {
            return Err(Error::InvalidConfig(format!("invalid input dims {self}")));
        }
        Ok(())
    }
}

impl From<[usize; 3]> for InputDims {
    fn from([h, w, c]: [usize; 3]) -> Self {
        Self::new(h, w, c)
    }
}

impl From<InputDims> for [usize; 3] {
    fn from(d: InputDims) -> Self {
        [d.height, d.width, d.channels]
    }
}

impl fmt::Display for InputDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

impl FromStr for InputDims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split('x')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidConfig(format!("bad dims {s:?}; expected HxWxC")))?;
        match parts.as_slice() {
            [h, w, c] => Ok(Self::new(*h, *w, *c)),
            [h, w] => Ok(Self::new(*h, *w, 3)),
            _ => Err(Error::InvalidConfig(format!("bad dims {s:?}; expected HxWxC"))),
        }
    }
}

/// A model queried as a black box.
pub trait Classifier: Send + Sync {
    fn input_dims(&self) -> InputDims;

    /// Largest number of images sent in one call to [`Self::predict_conformed`].
    fn batch_limit(&self) -> usize {
        128
    }

    /// Predicts images that already match [`Self::input_dims`].
    fn predict_conformed(&self, imgs: &[ImageTensor]) -> Result<Vec<ProbabilityVector>>;
}

/// Resizes and converts channels to what the model expects.
pub fn conform(img: &ImageTensor, dims: InputDims) -> Result<ImageTensor> {
    let sized = resample(img, (dims.height, dims.width), ResampleMethod::Bilinear)?;
    Ok(match (sized.channels(), dims.channels) {
        (3, 1) => sized.to_gray(),
        (1, 3) => sized.to_rgb(),
        _ => sized,
    })
}

/// Predicts any number of images, conforming each and splitting into batches
/// of at most `batch_limit`. Output order follows input order.
pub fn predict_batch(model: &dyn Classifier, imgs: &[ImageTensor]) -> Result<Vec<ProbabilityVector>> {
    let dims = model.input_dims();
    let limit = model.batch_limit().max(1);
    let mut out = Vec::with_capacity(imgs.len());
    for chunk in imgs.chunks(limit) {
        let conformed = chunk.iter().map(|img| conform(img, dims)).collect::<Result<Vec<_>>>()?;
        let probs = model.predict_conformed(&conformed)?;
        if probs.len() != chunk.len() {
            return Err(Error::ShapeMismatch(format!("{} predictions for {} images", probs.len(), chunk.len())));
        }
        out.extend(probs);
    }
    if let Some(first) = out.first() {
        if out.iter().any(|p| p.class_names() != first.class_names()) {
            return Err(Error::ShapeMismatch("class names changed between batches".into()));
        }
    }
    Ok(out)
}

pub fn digit_class_names() -> Arc<[String]> {
    (0..10).map(|d| d.to_string()).collect::<Vec<_>>().into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictorKind {
    #[serde(rename = "builtin-mlp")]
    BuiltinMlp,
    #[serde(rename = "builtin-linear")]
    BuiltinLinear,
    #[serde(rename = "remote")]
    Remote,
}

/// Serializable description of which classifier to use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    /// Required for remote models; checked against the file for builtin ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dims: Option<InputDims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_batch_limit")]
    pub batch_limit: usize,
    /// Saved model for builtin kinds. A linear spec without a file is the
    /// all-zero (uniform) classifier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

fn default_batch_limit() -> usize {
    128
}

impl PredictorSpec {
    pub fn zero_linear(dims: InputDims, num_classes: usize) -> Self {
        Self {
            kind: PredictorKind::BuiltinLinear,
            input_dims: Some(dims),
            endpoint: None,
            batch_limit: default_batch_limit(),
            model_path: None,
            num_classes: Some(num_classes),
        }
    }

    pub fn remote(endpoint: impl Into<String>, dims: InputDims) -> Self {
        Self {
            kind: PredictorKind::Remote,
            input_dims: Some(dims),
            endpoint: Some(endpoint.into()),
            batch_limit: default_batch_limit(),
            model_path: None,
            num_classes: None,
        }
    }

    pub fn builtin_mlp(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: PredictorKind::BuiltinMlp,
            input_dims: None,
            endpoint: None,
            batch_limit: default_batch_limit(),
            model_path: Some(path.into()),
            num_classes: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_limit == 0 {
            return Err(Error::InvalidConfig("batch_limit must be at least 1".into()));
        }
        if let Some(d) = self.input_dims {
            d.validate()?;
        }
        match self.kind {
            PredictorKind::Remote if self.endpoint.is_none() || self.input_dims.is_none() => {
                Err(Error::InvalidConfig("remote predictor needs endpoint and input_dims".into()))
            }
            PredictorKind::BuiltinMlp if self.model_path.is_none() => {
                Err(Error::InvalidConfig("builtin-mlp predictor needs model_path".into()))
            }
            PredictorKind::BuiltinLinear if self.model_path.is_none() && self.input_dims.is_none() => {
                Err(Error::InvalidConfig("builtin-linear predictor needs model_path or input_dims".into()))
            }
            _ => Ok(()),
        }
    }

    /// Instantiates the classifier, loading model files as needed.
    pub fn build(&self) -> Result<Arc<dyn Classifier>> {
        self.validate()?;
        let check_dims = |actual: InputDims| match self.input_dims {
            Some(d) if d != actual => Err(Error::ShapeMismatch(format!("spec says {d}, model file has {actual}"))),
            _ => Ok(()),
        };
        let model: Arc<dyn Classifier> = match self.kind {
            PredictorKind::Remote => Arc::new(RemoteClassifier::new(
                self.endpoint.clone().expect("validated"),
                self.input_dims.expect("validated"),
                self.batch_limit,
            )?),
            PredictorKind::BuiltinMlp => {
                let mut mlp = match ModelFile::load(self.model_path.as_ref().expect("validated"))? {
                    ModelFile::Mlp(m) => m,
                    ModelFile::Linear(_) => return Err(Error::InvalidConfig("model file holds a linear model".into())),
                };
                check_dims(mlp.input_dims())?;
                mlp.batch_limit = self.batch_limit;
                Arc::new(mlp)
            }
            PredictorKind::BuiltinLinear => {
                let mut lin = match &self.model_path {
                    Some(p) => match ModelFile::load(p)? {
                        ModelFile::Linear(l) => l,
                        ModelFile::Mlp(_) => return Err(Error::InvalidConfig("model file holds an MLP".into())),
                    },
                    None => {
                        let classes = self.num_classes.unwrap_or(10);
                        let names: Arc<[String]> = (0..classes).map(|c| c.to_string()).collect::<Vec<_>>().into();
                        LinearClassifier::zeros(self.input_dims.expect("validated"), names)
                    }
                };
                check_dims(lin.input_dims())?;
                lin.batch_limit = self.batch_limit;
                Arc::new(lin)
            }
        };
        Ok(model)
    }
}

impl FromStr for PredictorSpec {
    type Err = Error;

    /// Accepts JSON, or `kind[:arg][,dims=HxWxC][,batch=N][,classes=N]` where
    /// kind is `mlp`, `linear` or `remote` and arg is a model path or URL.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('{') {
            let spec: PredictorSpec =
                serde_json::from_str(s).map_err(|e| Error::InvalidConfig(format!("predictor JSON: {e}")))?;
            spec.validate()?;
            return Ok(spec);
        }
        let mut parts = s.split(',');
        let head = parts.next().unwrap_or_default();
        let (kind, arg) = match head.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (head, None),
        };
        let mut spec = match kind {
            "mlp" | "builtin-mlp" => PredictorSpec::builtin_mlp(arg.unwrap_or("model.bin")),
            "linear" | "builtin-linear" => {
                let mut spec = PredictorSpec::zero_linear(InputDims::new(28, 28, 1), 10);
                if let Some(path) = arg {
                    spec.model_path = Some(path.into());
                    spec.input_dims = None;
                    spec.num_classes = None;
                }
                spec
            }
            "remote" => {
                let url = arg.ok_or_else(|| Error::InvalidConfig("remote predictor needs a URL".into()))?;
                PredictorSpec::remote(url, InputDims::new(224, 224, 3))
            }
            other => return Err(Error::InvalidConfig(format!("unknown predictor kind {other:?}"))),
        };
        for opt in parts {
            let (key, value) = opt
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("predictor option {opt:?} is not key=value")))?;
            let number = || value.parse::<usize>().map_err(|_| Error::InvalidConfig(format!("bad number {value:?}")));
            match key {
                "dims" => spec.input_dims = Some(value.parse()?),
                "batch" => spec.batch_limit = number()?,
                "classes" => spec.num_classes = Some(number()?),
                other => return Err(Error::InvalidConfig(format!("unknown predictor option {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// On-disk model container.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum ModelFile {
    Mlp(Mlp),
    Linear(LinearClassifier),
}

const MODEL_MAGIC: &[u8; 8] = b"RLMODEL1";

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MODEL_MAGIC.to_vec();
        out.extend(bincode::serialize(self).expect("model serialization"));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let body = bytes
            .strip_prefix(MODEL_MAGIC.as_slice())
            .ok_or_else(|| Error::InvalidConfig("not a model file (bad magic)".into()))?;
        bincode::deserialize(body).map_err(|e| Error::InvalidConfig(format!("corrupt model file: {e}")))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
