//! Single-hidden-layer perceptron trained by mini-batch gradient descent.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::LabeledImages;
use super::{softmax, Classifier, InputDims, ProbabilityVector};
use crate::error::{Error, Result};
use crate::image::ImageTensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { hidden: 128, epochs: 8, batch_size: 32, learning_rate: 0.1, seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// `inputs -> hidden (ReLU) -> classes (softmax)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    dims: InputDims,
    class_names: Arc<[String]>,
    hidden: usize,
    /// Row-major `inputs x hidden`, so zero pixels can be skipped.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// Row-major `classes x hidden`.
    w2: Vec<f64>,
    b2: Vec<f64>,
    #[serde(skip, default = "default_batch")]
    pub(crate) batch_limit: usize,
}

fn default_batch() -> usize {
    128
}

/// Gradient of the mean cross-entropy, laid out like the parameters.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros_like(m: &Mlp) -> Self {
        Self {
            w1: vec![0.0; m.w1.len()],
            b1: vec![0.0; m.b1.len()],
            w2: vec![0.0; m.w2.len()],
            b2: vec![0.0; m.b2.len()],
        }
    }

    /// All entries in parameter order (w1, b1, w2, b2).
    pub fn flatten(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }
}

struct Activations {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

impl Mlp {
    /// He-initialized network with zero biases.
    pub fn init(dims: InputDims, hidden: usize, class_names: Arc<[String]>, seed: u64) -> Self {
        let inputs = dims.len();
        let classes = class_names.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n1 = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("positive std");
        let n2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("positive std");
        let w1 = (0..inputs * hidden).map(|_| n1.sample(&mut rng)).collect();
        let w2 = (0..classes * hidden).map(|_| n2.sample(&mut rng)).collect();
        Self {
            dims,
            class_names,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; classes],
            batch_limit: default_batch(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Mutable access to parameter `k` in [`Gradients::flatten`] order.
    pub fn param_mut(&mut self, k: usize) -> &mut f64 {
        let (a, b, c) = (self.w1.len(), self.b1.len(), self.w2.len());
        match k {
            k if k < a => &mut self.w1[k],
            k if k < a + b => &mut self.b1[k - a],
            k if k < a + b + c => &mut self.w2[k - a - b],
            k => &mut self.b2[k - a - b - c],
        }
    }

    fn forward(&self, x: &[f64]) -> Activations {
        let h = self.hidden;
        let mut pre = self.b1.clone();
        for (j, &v) in x.iter().enumerate() {
            if v != 0.0 {
                for (p, w) in pre.iter_mut().zip(&self.w1[j * h..(j + 1) * h]) {
                    *p += v * w;
                }
            }
        }
        let hidden: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
        let logits: Vec<f64> = self
            .w2
            .chunks_exact(h)
            .zip(&self.b2)
            .map(|(row, b)| b + row.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>())
            .collect();
        Activations { pre, hidden, probs: softmax(&logits) }
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).probs
    }

    /// Mean cross-entropy over the batch and its gradient.
    pub fn loss_and_gradient(&self, xs: &[&[f64]], ys: &[usize]) -> (f64, Gradients) {
        let mut g = Gradients::zeros_like(self);
        let loss = self.accumulate(xs, ys, &mut g);
        (loss, g)
    }

    fn accumulate(&self, xs: &[&[f64]], ys: &[usize], g: &mut Gradients) -> f64 {
        let h = self.hidden;
        let scale = 1.0 / xs.len() as f64;
        let mut loss = 0.0;
        let mut dpre = vec![0.0; h];
        for (x, &y) in xs.iter().zip(ys) {
            let act = self.forward(x);
            loss -= act.probs[y].max(f64::MIN_POSITIVE).ln() * scale;
            dpre.iter_mut().for_each(|v| *v = 0.0);
            for (c, &p) in act.probs.iter().enumerate() {
                let dz = (p - if c == y { 1.0 } else { 0.0 }) * scale;
                g.b2[c] += dz;
                let row = &self.w2[c * h..(c + 1) * h];
                for k in 0..h {
                    g.w2[c * h + k] += dz * act.hidden[k];
                    dpre[k] += dz * row[k];
                }
            }
            for k in 0..h {
                if act.pre[k] <= 0.0 {
                    dpre[k] = 0.0;
                }
                g.b1[k] += dpre[k];
            }
            for (j, &v) in x.iter().enumerate() {
                if v != 0.0 {
                    for (gw, d) in g.w1[j * h..(j + 1) * h].iter_mut().zip(&dpre) {
                        *gw += v * d;
                    }
                }
            }
        }
        loss
    }

    fn step(&mut self, g: &Gradients, lr: f64) {
        for (p, d) in self.w1.iter_mut().zip(&g.w1) {
            *p -= lr * d;
        }
        for (p, d) in self.b1.iter_mut().zip(&g.b1) {
            *p -= lr * d;
        }
        for (p, d) in self.w2.iter_mut().zip(&g.w2) {
            *p -= lr * d;
        }
        for (p, d) in self.b2.iter_mut().zip(&g.b2) {
            *p -= lr * d;
        }
    }

    pub fn accuracy(&self, data: &LabeledImages) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let correct = data
            .images
            .iter()
            .zip(&data.labels)
            .filter(|(img, &y)| {
                let p = self.probabilities(img.data());
                let best = (0..p.len()).fold(0, |b, c| if p[c] > p[b] { c } else { b });
                best == y
            })
            .count();
        correct as f64 / data.len() as f64
    }
}

/// Trains an MLP on `train`, reporting accuracy on `train` and optionally `test`.
pub fn train_mlp(train: &LabeledImages, test: Option<&LabeledImages>, cfg: &TrainConfig) -> Result<(Mlp, TrainReport)> {
    if train.class_names.len() < 2 {
        return Err(Error::InvalidConfig("training needs at least 2 classes".into()));
    }
    if train.is_empty() || cfg.batch_size == 0 || cfg.hidden == 0 {
        return Err(Error::InvalidConfig("empty training set, batch or hidden layer".into()));
    }
    let dims = train.dims()?;
    let mut model = Mlp::init(dims, cfg.hidden, train.class_names.clone(), cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut g = Gradients::zeros_like(&model);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| train.images[i].data()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
            for v in [&mut g.w1, &mut g.b1, &mut g.w2, &mut g.b2] {
                v.iter_mut().for_each(|x| *x = 0.0);
            }
            let loss = model.accumulate(&xs, &ys, &mut g);
            if !loss.is_finite() || g.b2.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            total += loss * batch.len() as f64;
            model.step(&g, cfg.learning_rate);
        }
        let mean = total / train.len() as f64;
        log::info!("epoch {epoch}: loss {mean:.4}");
        epoch_losses.push(mean);
    }
    let report = TrainReport {
        config: cfg.clone(),
        epoch_losses,
        train_accuracy: model.accuracy(train),
        test_accuracy: test.map(|t| model.accuracy(t)),
    };
    Ok((model, report))
}

impl Classifier for Mlp {
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
                let p = self.probabilities(img.data());
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteOutput);
                }
                ProbabilityVector::new(p, self.class_names.clone())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bright_dark(n: usize, seed: u64) -> LabeledImages {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = i % 2;
            let base = if label == 1 { 0.7 } else { 0.1 };
            images.push(ImageTensor::from_fn(8, 8, 1, |_, _, _| base + rng.gen::<f64>() * 0.2));
            labels.push(label);
        }
        LabeledImages::new(images, labels, vec!["dark".to_string(), "bright".to_string()].into()).unwrap()
    }

    #[test]
    fn learns_bright_vs_dark() {
        let data = bright_dark(200, 1);
        let cfg = TrainConfig { hidden: 8, epochs: 5, batch_size: 10, learning_rate: 0.1, seed: 3 };
        let (_, report) = train_mlp(&data, None, &cfg).unwrap();
        assert!(report.train_accuracy >= 0.99, "{report:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let data = bright_dark(60, 2);
        let cfg = TrainConfig { hidden: 4, epochs: 2, batch_size: 7, learning_rate: 0.05, seed: 9 };
        let (a, _) = train_mlp(&data, None, &cfg).unwrap();
        let (b, _) = train_mlp(&data, None, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn huge_learning_rate_is_reported() {
        let data = bright_dark(40, 3);
        let cfg = TrainConfig { hidden: 16, epochs: 3, batch_size: 4, learning_rate: 1e200, seed: 1 };
        assert!(matches!(train_mlp(&data, None, &cfg), Err(Error::NonFiniteLoss { .. })));
    }

    #[test]
    fn param_indexing_matches_flatten() {
        let mut m = Mlp::init(InputDims::new(2, 2, 1), 3, vec!["a".into(), "b".into()].into(), 0);
        let n = m.num_params();
        for k in 0..n {
            *m.param_mut(k) = k as f64;
        }
        let g = Gradients { w1: m.w1.clone(), b1: m.b1.clone(), w2: m.w2.clone(), b2: m.b2.clone() };
        assert_eq!(g.flatten(), (0..n).map(|k| k as f64).collect::<Vec<_>>());
    }

    #[test]
    fn model_file_round_trip() {
        let m = Mlp::init(InputDims::new(3, 3, 1), 4, vec!["x".into(), "y".into()].into(), 5);
        let bytes = super::super::ModelFile::Mlp(m.clone()).to_bytes();
        match super::super::ModelFile::from_bytes(&bytes).unwrap() {
            super::super::ModelFile::Mlp(back) => assert_eq!(back, m),
            _ => panic!("wrong model kind"),
        }
    }
}
