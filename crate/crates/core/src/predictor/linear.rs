use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{softmax, Classifier, InputDims, ProbabilityVector};
use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Multinomial logistic model: `softmax(W x + b)` on flattened pixels.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearClassifier {
    dims: InputDims,
    class_names: Arc<[String]>,
    /// Row-major `classes x inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    #[serde(skip, default = "default_batch")]
    pub(crate) batch_limit: usize,
}

fn default_batch() -> usize {
    128
}

impl LinearClassifier {
    pub fn new(dims: InputDims, class_names: Arc<[String]>, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let classes = class_names.len();
        if weights.len() != classes * dims.len() || bias.len() != classes {
            return Err(Error::ShapeMismatch(format!(
                "linear model for {classes} classes over {dims} needs {} weights and {classes} biases",
                classes * dims.len()
            )));
        }
        Ok(Self { dims, class_names, weights, bias, batch_limit: default_batch() })
    }

    pub fn zeros(dims: InputDims, class_names: Arc<[String]>) -> Self {
        let n = class_names.len();
        Self::new(dims, class_names, vec![0.0; n * dims.len()], vec![0.0; n]).expect("consistent shapes")
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dims.len())
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

impl Classifier for LinearClassifier {
    fn input_dims(&self) -> InputDims {
        self.dims
    }

    fn batch_limit(&self) -> usize {
        self.batch_limit
    }

    fn predict_conformed(&self, imgs: &[ImageTensor]) -> Result<Vec<ProbabilityVector>> {
        imgs.iter()
            .map(|img| {
                if img.data().len() != self.dims.len() {
                    return Err(Error::ShapeMismatch(format!("image does not match {}", self.dims)));
                }
                ProbabilityVector::new(softmax(&self.logits(img.data())), self.class_names.clone())
            })
            .collect()
    }
}
