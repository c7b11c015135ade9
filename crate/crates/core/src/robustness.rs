//! Noise-sensitivity sweeps: explain the same image under growing Gaussian
//! noise, once with unconstrained superpixels and once with superpixels kept
//! inside a fixed foreground mask, and track how far each trinary mask drifts
//! from its noise-free counterpart.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainer::{explain, trinary_mask, ExplainConfig};
use crate::image::{clip01, ImageTensor, RegionMask, TrinaryMask};
use crate::predictor::Classifier;
use crate::segmentation::{auto_segment, segment, suggest_counts, SegmentationConfig};

/// Adds i.i.d. `N(0, sigma²)` noise to every sample, then clips to `[0, 1]`.
pub fn add_gaussian_noise(img: &ImageTensor, sigma: f64, seed: u64) -> Result<ImageTensor> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidConfig(format!("noise sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img.data().iter().map(|&v| clip01(v + normal.sample(&mut rng))).collect();
    ImageTensor::new(img.height(), img.width(), img.channels(), data)
}

/// Euclidean distance between two trinary masks.
pub fn mask_distance(a: &TrinaryMask, b: &TrinaryMask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::dims(a.dims(), b.dims()));
    }
    let sq: i64 = a.data().iter().zip(b.data()).map(|(&x, &y)| i64::from(x - y).pow(2)).sum();
    Ok((sq as f64).sqrt())
}

/// Foreground of a dark-background image: pixels brighter than `threshold`
/// (on the gray version) followed by a 3x3 closing.
pub fn foreground_mask(img: &ImageTensor, threshold: f64) -> Result<RegionMask> {
    let gray = img.to_gray();
    let (h, w) = gray.dims();
    let mask = RegionMask::new(h, w, gray.data().iter().map(|&v| v > threshold).collect())?.close3x3();
    mask.require_nonempty()?;
    Ok(mask)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Superpixels over the whole noisy image.
    Auto,
    /// Superpixels constrained by the clean image's foreground mask.
    Masked,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Auto, Method::Masked];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Auto => "auto",
            Method::Masked => "masked",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSweepConfig {
    pub sigmas: Vec<f64>,
    pub seed: u64,
    /// Superpixel budget for both methods; the masked method splits it with
    /// [`suggest_counts`].
    pub total_k: usize,
    /// Explicit `(inner_k, outer_k)` for the masked method, overriding the
    /// area-proportional split.
    pub masked_counts: Option<(usize, usize)>,
    pub segmentation: SegmentationConfig,
    pub explain: ExplainConfig,
    pub foreground_threshold: f64,
    /// Worker threads; results are identical for any value.
    pub jobs: usize,
}

impl Default for NoiseSweepConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            seed: 0,
            total_k: 12,
            masked_counts: None,
            segmentation: SegmentationConfig::default(),
            explain: ExplainConfig::default(),
            foreground_threshold: 0.2,
            jobs: 1,
        }
    }
}

impl NoiseSweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.first() != Some(&0.0) {
            return Err(Error::InvalidConfig("sigmas must start with 0.0".into()));
        }
        if self.sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidConfig("sigmas must be finite and non-negative".into()));
        }
        if self.sigmas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("sigmas must be strictly ascending".into()));
        }
        if self.total_k < 2 {
            return Err(Error::InvalidConfig("total_k must be at least 2".into()));
        }
        self.explain.validate()
    }
}

#[derive(Clone, Debug)]
pub struct SweepImage {
    pub id: String,
    pub image: ImageTensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRecord {
    pub image_id: String,
    pub sigma: f64,
    pub method: Method,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub sigma: f64,
    pub method: Method,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub cells: Vec<SummaryCell>,
    /// Per method, the share of consecutive sigma steps where the mean
    /// distance does not decrease.
    pub monotone_fraction: Vec<(Method, f64)>,
}

impl SweepSummary {
    pub fn cell(&self, sigma: f64, method: Method) -> Option<&SummaryCell> {
        self.cells.iter().find(|c| c.sigma == sigma && c.method == method)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<RobustnessRecord>,
    pub summary: SweepSummary,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,sigma,method,distance\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.image_id, r.sigma, r.method.as_str(), r.distance);
        }
        out
    }
}

/// Seed shared by both methods for one (image, sigma) cell.
fn noise_seed(master: u64, image_index: usize, sigma_index: usize) -> u64 {
    let mut z = master ^ (image_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (sigma_index as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn explain_mask(
    img: &ImageTensor,
    method: Method,
    fg: &RegionMask,
    model: &dyn Classifier,
    cfg: &NoiseSweepConfig,
    explain_cfg: &ExplainConfig,
) -> Result<TrinaryMask> {
    let sp = match method {
        Method::Auto => auto_segment(img, cfg.total_k, &cfg.segmentation)?,
        Method::Masked => {
            let (inner, outer) = match cfg.masked_counts {
                Some(counts) => counts,
                None => suggest_counts(fg, cfg.total_k)?,
            };
            segment(img, fg, &cfg.segmentation.clone().with_counts(inner, outer))?
        }
    };
    let exp = explain(img, &sp, model, explain_cfg)?;
    trinary_mask(&sp, &exp)
}

fn sweep_image(index: usize, item: &SweepImage, model: &dyn Classifier, cfg: &NoiseSweepConfig) -> Result<Vec<RobustnessRecord>> {
    let fg = foreground_mask(&item.image, cfg.foreground_threshold)?;
    // every noise level explains the class the clean image is assigned
    let mut explain_cfg = cfg.explain.clone();
    if explain_cfg.target_class.is_none() {
        let p = crate::predictor::predict_batch(model, std::slice::from_ref(&item.image))?;
        explain_cfg.target_class = Some(p[0].argmax());
    }
    let mut refs: Vec<Option<TrinaryMask>> = vec![None; Method::ALL.len()];
    let mut out = Vec::with_capacity(cfg.sigmas.len() * Method::ALL.len());
    for (si, &sigma) in cfg.sigmas.iter().enumerate() {
        let noisy = add_gaussian_noise(&item.image, sigma, noise_seed(cfg.seed, index, si))?;
        for (mi, method) in Method::ALL.into_iter().enumerate() {
            let mask = explain_mask(&noisy, method, &fg, model, cfg, &explain_cfg)?;
            let distance = match &refs[mi] {
                None => {
                    refs[mi] = Some(mask);
                    0.0
                }
                Some(r) => mask_distance(r, &mask)?,
            };
            out.push(RobustnessRecord { image_id: item.id.clone(), sigma, method, distance });
        }
    }
    Ok(out)
}

/// Runs every (image, sigma, method) cell. Records come back ordered by
/// image, then sigma, then method, whatever the thread count.
pub fn run_sweep(cfg: &NoiseSweepConfig, images: &[SweepImage], model: &dyn Classifier) -> Result<SweepResult> {
    cfg.validate()?;
    let jobs = cfg.jobs.max(1).min(images.len().max(1));
    let mut per_image: Vec<Option<Result<Vec<RobustnessRecord>>>> = (0..images.len()).map(|_| None).collect();
    if jobs == 1 {
        for (i, item) in images.iter().enumerate() {
            per_image[i] = Some(sweep_image(i, item, model, cfg));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots = std::sync::Mutex::new(&mut per_image);
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= images.len() {
                        break;
                    }
                    let r = sweep_image(i, &images[i], model, cfg);
                    slots.lock().expect("sweep worker panicked")[i] = Some(r);
                });
            }
        });
    }
    let mut records = Vec::new();
    for r in per_image {
        records.extend(r.expect("every image swept")?);
    }
    let summary = summarize(&records, &cfg.sigmas);
    Ok(SweepResult { records, summary })
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(records: &[RobustnessRecord], sigmas: &[f64]) -> SweepSummary {
    let mut cells = Vec::new();
    for &sigma in sigmas {
        for method in Method::ALL {
            let mut d: Vec<f64> = records.iter().filter(|r| r.sigma == sigma && r.method == method).map(|r| r.distance).collect();
            d.sort_by(f64::total_cmp);
            let n = d.len();
            let mean = if n == 0 { f64::NAN } else { d.iter().sum::<f64>() / n as f64 };
            cells.push(SummaryCell { sigma, method, n, mean, median: quantile(&d, 0.5), q1: quantile(&d, 0.25), q3: quantile(&d, 0.75) });
        }
    }
    let monotone_fraction = Method::ALL
        .into_iter()
        .map(|m| {
            let means: Vec<f64> = cells.iter().filter(|c| c.method == m).map(|c| c.mean).collect();
            let steps = means.len().saturating_sub(1);
            let up = means.windows(2).filter(|w| w[1] >= w[0]).count();
            (m, if steps == 0 { 1.0 } else { up as f64 / steps as f64 })
        })
        .collect();
    SweepSummary { cells, monotone_fraction }
}
