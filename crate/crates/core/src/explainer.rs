//! Local surrogate explanations over superpixels.
//!
//! Random subsets of superpixels are occluded, the classifier is queried on
//! each perturbed image, and a weighted ridge regression from the binary
//! inclusion vectors to the explained class probability gives one
//! coefficient per superpixel. Samples are weighted by how close their
//! prediction stays to the unperturbed one.

use std::cmp::Ordering;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, TrinaryMask};
use crate::linalg::DenseMatrix;
use crate::predictor::{predict_batch, Classifier, ProbabilityVector};
use crate::segmentation::SuperpixelMap;

/// Blend factor toward green/red in overlays.
pub const OVERLAY_ALPHA: f64 = 0.4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Occlusion {
    /// Excluded superpixels take their own mean color.
    #[default]
    MeanColor,
    /// Excluded superpixels become 0.5 gray.
    ConstantGray,
    /// Excluded superpixels become 0, the background of dark-field images
    /// such as handwritten digits.
    Black,
}

/// How far a perturbed prediction is from the baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    /// Absolute difference of the explained class probability.
    #[default]
    TargetClass,
    /// Euclidean distance between full probability vectors.
    L2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub num_samples: usize,
    pub num_features: usize,
    pub kernel_width: f64,
    pub ridge_alpha: f64,
    pub occlusion: Occlusion,
    /// `None` explains the most probable class of the unperturbed image.
    pub target_class: Option<usize>,
    pub distance: DistanceMode,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            num_samples: 1000,
            num_features: 5,
            kernel_width: 0.25,
            ridge_alpha: 1.0,
            occlusion: Occlusion::MeanColor,
            target_class: None,
            distance: DistanceMode::TargetClass,
            seed: 0,
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples < 2 {
            return Err(Error::InvalidConfig("num_samples must be at least 2".into()));
        }
        if self.num_features == 0 {
            return Err(Error::InvalidConfig("num_features must be at least 1".into()));
        }
        if !(self.kernel_width > 0.0) || !self.kernel_width.is_finite() {
            return Err(Error::InvalidConfig("kernel_width must be positive".into()));
        }
        if !(self.ridge_alpha >= 0.0) || !self.ridge_alpha.is_finite() {
            return Err(Error::InvalidConfig("ridge_alpha must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSample {
    pub inclusion: Vec<bool>,
    pub probs: ProbabilityVector,
    pub dist: f64,
    pub simscore: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub positive_pct: f64,
    pub negative_pct: f64,
    pub neutral_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub target_class: usize,
    pub class_names: Vec<String>,
    pub baseline_probs: Vec<f64>,
    pub weights: Vec<f64>,
    pub picked: Vec<usize>,
    pub intercept: f64,
    #[serde(rename = "r2")]
    pub surrogate_r2: f64,
    pub coverage: Coverage,
}

impl Explanation {
    pub fn is_picked(&self, label: usize) -> bool {
        self.picked.contains(&label)
    }

    /// Sign of each superpixel's contribution: picked superpixels get the
    /// sign of their weight, all others 0.
    pub fn signs(&self) -> Vec<i8> {
        let mut out = vec![0i8; self.weights.len()];
        for &j in &self.picked {
            out[j] = match self.weights[j].partial_cmp(&0.0) {
                Some(Ordering::Greater) => 1,
                Some(Ordering::Less) => -1,
                _ => 0,
            };
        }
        out
    }
}

/// `n` inclusion vectors over `k` superpixels. The first keeps everything;
/// the rest keep each superpixel independently with probability 1/2.
pub fn generate_perturbations(k: usize, n: usize, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    if n > 0 {
        out.push(vec![true; k]);
    }
    for _ in 1..n {
        out.push((0..k).map(|_| rng.gen_bool(0.5)).collect());
    }
    out
}

/// Precomputed superpixel membership and fill colors for fast rendering.
pub struct Occluder<'a> {
    img: &'a ImageTensor,
    labels: &'a [u32],
    fills: Vec<Vec<f64>>,
}

impl<'a> Occluder<'a> {
    pub fn new(img: &'a ImageTensor, sp: &'a SuperpixelMap, mode: Occlusion) -> Result<Self> {
        if img.dims() != sp.dims() {
            return Err(Error::dims(sp.dims(), img.dims()));
        }
        let c = img.channels();
        let k = sp.num_superpixels();
        let fills = match mode {
            Occlusion::ConstantGray => vec![vec![0.5; c]; k],
            Occlusion::Black => vec![vec![0.0; c]; k],
            Occlusion::MeanColor => {
                let mut sums = vec![vec![0.0; c]; k];
                let counts = sp.pixel_counts();
                for (i, &l) in sp.labels().iter().enumerate() {
                    for (s, v) in sums[l as usize].iter_mut().zip(img.pixel(i)) {
                        *s += v;
                    }
                }
                for (s, &n) in sums.iter_mut().zip(&counts) {
                    s.iter_mut().for_each(|v| *v /= n as f64);
                }
                sums
            }
        };
        Ok(Self { img, labels: sp.labels(), fills })
    }

    pub fn render(&self, inclusion: &[bool]) -> Result<ImageTensor> {
        if inclusion.len() != self.fills.len() {
            return Err(Error::LengthMismatch { expected: self.fills.len(), actual: inclusion.len() });
        }
        let mut out = self.img.clone();
        for (i, &l) in self.labels.iter().enumerate() {
            if !inclusion[l as usize] {
                out.set_pixel(i, &self.fills[l as usize]);
            }
        }
        Ok(out)
    }
}

pub fn render_perturbed(img: &ImageTensor, sp: &SuperpixelMap, inclusion: &[bool], occlusion: Occlusion) -> Result<ImageTensor> {
    Occluder::new(img, sp, occlusion)?.render(inclusion)
}

/// Gaussian kernel `exp(-dist² / width²)`.
pub fn similarity(dist: f64, kernel_width: f64) -> f64 {
    (-(dist * dist) / (kernel_width * kernel_width)).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub r2: f64,
}

/// Weighted ridge regression of the target-class probability on the
/// inclusion bits. Minimizes `Σ wᵢ (yᵢ - β₀ - βᵀxᵢ)² + α‖β‖²`; the intercept
/// is not penalized.
pub fn fit_surrogate(samples: &[PerturbationSample], target_class: usize, ridge_alpha: f64) -> Result<SurrogateFit> {
    let rows: Vec<(&[bool], f64, f64)> = samples
        .iter()
        .map(|s| (s.inclusion.as_slice(), s.probs.get(target_class), s.simscore))
        .collect();
    fit_weighted_ridge(&rows, ridge_alpha)
}

/// Core of [`fit_surrogate`] on `(x, y, weight)` rows.
pub fn fit_weighted_ridge(rows: &[(&[bool], f64, f64)], alpha: f64) -> Result<SurrogateFit> {
    if rows.len() < 2 {
        return Err(Error::InvalidConfig("surrogate fit needs at least 2 samples".into()));
    }
    let k = rows[0].0.len();
    if rows.iter().any(|r| r.0.len() != k) {
        return Err(Error::LengthMismatch { expected: k, actual: rows.iter().map(|r| r.0.len()).find(|&l| l != k).unwrap_or(k) });
    }
    if rows.iter().all(|r| r.0 == rows[0].0) {
        return Err(Error::SingularSystem("all perturbation vectors are identical".into()));
    }
    let total_w: f64 = rows.iter().map(|r| r.2).sum();
    if !(total_w > 0.0) {
        return Err(Error::SingularSystem("sample weights sum to zero".into()));
    }
    let mut x_mean = vec![0.0; k];
    let mut y_mean = 0.0;
    for (x, y, w) in rows {
        for (m, &b) in x_mean.iter_mut().zip(x.iter()) {
            if b {
                *m += w;
            }
        }
        y_mean += w * y;
    }
    x_mean.iter_mut().for_each(|m| *m /= total_w);
    y_mean /= total_w;

    let mut gram = DenseMatrix::zeros(k);
    let mut rhs = vec![0.0; k];
    let mut xc = vec![0.0; k];
    for (x, y, w) in rows {
        for j in 0..k {
            xc[j] = f64::from(u8::from(x[j])) - x_mean[j];
        }
        let yc = y - y_mean;
        for a in 0..k {
            let wa = w * xc[a];
            rhs[a] += wa * yc;
            for b in a..k {
                gram.add(a, b, wa * xc[b]);
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram.add(a, b, gram.get(b, a));
        }
        gram.add(a, a, alpha);
    }
    let weights = gram.cholesky_solve(&rhs, 1e-12)?;
    let intercept = y_mean - weights.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();

    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (x, y, w) in rows {
        let pred = intercept + x.iter().zip(&weights).filter(|(b, _)| **b).map(|(_, c)| c).sum::<f64>();
        ss_res += w * (y - pred).powi(2);
        ss_tot += w * (y - y_mean).powi(2);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(SurrogateFit { weights, intercept, r2 })
}

/// Indices of the `m` largest `|weight|`, ties broken by lower index.
pub fn pick_top(weights: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].abs().total_cmp(&weights[a].abs()).then(a.cmp(&b)));
    idx.truncate(m.min(weights.len()));
    idx
}

pub fn coverage(sp: &SuperpixelMap, weights: &[f64], picked: &[usize]) -> Coverage {
    let counts = sp.pixel_counts();
    let total = sp.labels().len() as f64;
    let (mut pos, mut neg) = (0usize, 0usize);
    for &j in picked {
        if weights[j] > 0.0 {
            pos += counts[j];
        } else if weights[j] < 0.0 {
            neg += counts[j];
        }
    }
    let positive_pct = 100.0 * pos as f64 / total;
    let negative_pct = 100.0 * neg as f64 / total;
    Coverage { positive_pct, negative_pct, neutral_pct: 100.0 * (sp.labels().len() - pos - neg) as f64 / total }
}

/// Runs the full perturb, predict, weight, fit and pick pipeline.
pub fn explain(img: &ImageTensor, sp: &SuperpixelMap, model: &dyn Classifier, cfg: &ExplainConfig) -> Result<Explanation> {
    explain_with_samples(img, sp, model, cfg).map(|(e, _)| e)
}

/// [`explain`], also returning every perturbation sample in generation order.
pub fn explain_with_samples(
    img: &ImageTensor,
    sp: &SuperpixelMap,
    model: &dyn Classifier,
    cfg: &ExplainConfig,
) -> Result<(Explanation, Vec<PerturbationSample>)> {
    cfg.validate()?;
    let k = sp.num_superpixels();
    if cfg.num_samples < 4 * k {
        log::warn!("{} samples for {k} superpixels; at least {} recommended", cfg.num_samples, 4 * k);
    }
    let occluder = Occluder::new(img, sp, cfg.occlusion)?;
    let inclusions = generate_perturbations(k, cfg.num_samples, cfg.seed);

    let chunk = model.batch_limit().max(1);
    let mut probs = Vec::with_capacity(inclusions.len());
    for batch in inclusions.chunks(chunk) {
        let images = batch.iter().map(|inc| occluder.render(inc)).collect::<Result<Vec<_>>>()?;
        probs.extend(predict_batch(model, &images)?);
    }
    let baseline = probs[0].clone();
    let target = cfg.target_class.unwrap_or_else(|| baseline.argmax());
    if target >= baseline.len() {
        return Err(Error::InvalidConfig(format!("target class {target} outside {} classes", baseline.len())));
    }

    let samples: Vec<PerturbationSample> = inclusions
        .into_iter()
        .zip(probs)
        .map(|(inclusion, p)| {
            let dist = match cfg.distance {
                DistanceMode::TargetClass => (baseline.get(target) - p.get(target)).abs(),
                DistanceMode::L2 => {
                    baseline.values().iter().zip(p.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
                }
            };
            PerturbationSample { inclusion, probs: p, dist, simscore: similarity(dist, cfg.kernel_width) }
        })
        .collect();

    let fit = fit_surrogate(&samples, target, cfg.ridge_alpha)?;
    let picked = pick_top(&fit.weights, cfg.num_features);
    let coverage = coverage(sp, &fit.weights, &picked);
    let explanation = Explanation {
        target_class: target,
        class_names: baseline.class_names().to_vec(),
        baseline_probs: baseline.values().to_vec(),
        weights: fit.weights,
        picked,
        intercept: fit.intercept,
        surrogate_r2: fit.r2,
        coverage,
    };
    Ok((explanation, samples))
}

/// An image with an explanation already blended in. Kept distinct from
/// [`ImageTensor`] so an overlay cannot be fed back into [`render_overlay`].
#[derive(Clone, Debug, PartialEq)]
pub struct Overlay(ImageTensor);

impl Overlay {
    pub fn image(&self) -> &ImageTensor {
        &self.0
    }

    pub fn into_image(self) -> ImageTensor {
        self.0
    }
}

/// Blends picked superpixels toward green (positive) or red (negative).
pub fn render_overlay(img: &ImageTensor, sp: &SuperpixelMap, exp: &Explanation) -> Result<Overlay> {
    if img.dims() != sp.dims() {
        return Err(Error::dims(sp.dims(), img.dims()));
    }
    if exp.weights.len() != sp.num_superpixels() {
        return Err(Error::LengthMismatch { expected: sp.num_superpixels(), actual: exp.weights.len() });
    }
    let signs = exp.signs();
    let mut out = img.to_rgb();
    for (i, &l) in sp.labels().iter().enumerate() {
        let tint = match signs[l as usize] {
            1 => [0.0, 1.0, 0.0],
            -1 => [1.0, 0.0, 0.0],
            _ => continue,
        };
        let px: Vec<f64> = out.pixel(i).iter().zip(tint).map(|(v, t)| (1.0 - OVERLAY_ALPHA) * v + OVERLAY_ALPHA * t).collect();
        out.set_pixel(i, &px);
    }
    Ok(Overlay(out))
}

pub fn trinary_mask(sp: &SuperpixelMap, exp: &Explanation) -> Result<TrinaryMask> {
    if exp.weights.len() != sp.num_superpixels() {
        return Err(Error::LengthMismatch { expected: sp.num_superpixels(), actual: exp.weights.len() });
    }
    let signs = exp.signs();
    let (h, w) = sp.dims();
    TrinaryMask::new(h, w, sp.labels().iter().map(|&l| signs[l as usize]).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub class_index: usize,
    pub class_name: String,
    pub original_pct: f64,
    pub edited_pct: f64,
    /// `edited_pct - original_pct`, in percentage points.
    pub delta: f64,
    /// 1-based rank by probability.
    pub original_rank: usize,
    pub edited_rank: usize,
    /// Positive when the class moved up.
    pub rank_change: i64,
}

fn ranks(p: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let mut rank = vec![0; p.len()];
    for (r, &i) in idx.iter().enumerate() {
        rank[i] = r + 1;
    }
    rank
}

/// Per-class probabilities before and after an edit, most probable original
/// class first.
pub fn compare_predictions(model: &dyn Classifier, original: &ImageTensor, edited: &ImageTensor) -> Result<Vec<ReportRow>> {
    let out = predict_batch(model, &[original.clone(), edited.clone()])?;
    Ok(report_rows(&out[0], &out[1]))
}

pub fn report_rows(original: &ProbabilityVector, edited: &ProbabilityVector) -> Vec<ReportRow> {
    let (a, b) = (original.values(), edited.values());
    let (ra, rb) = (ranks(a), ranks(b));
    let names: Arc<[String]> = original.shared_class_names();
    let mut rows: Vec<ReportRow> = (0..a.len())
        .map(|c| ReportRow {
            class_index: c,
            class_name: names[c].clone(),
            original_pct: 100.0 * a[c],
            edited_pct: 100.0 * b[c],
            delta: 100.0 * (b[c] - a[c]),
            original_rank: ra[c],
            edited_rank: rb[c],
            rank_change: ra[c] as i64 - rb[c] as i64,
        })
        .collect();
    rows.sort_by_key(|r| r.original_rank);
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{InputDims, LinearClassifier};

    fn strip_map(k: usize, width: usize) -> SuperpixelMap {
        let labels = (0..width * k).map(|i| (i / width) as u32).collect();
        SuperpixelMap::new(k, width, k, vec![], labels).unwrap()
    }

    fn names(n: usize) -> Arc<[String]> {
        (0..n).map(|c| format!("c{c}")).collect::<Vec<_>>().into()
    }

    /// Probability of class 1 = `f(fraction of occluded-to-gray pixels in each row)`.
    struct RowModel<F: Fn(&[f64]) -> f64 + Send + Sync> {
        dims: InputDims,
        f: F,
    }

    impl<F: Fn(&[f64]) -> f64 + Send + Sync> Classifier for RowModel<F> {
        fn input_dims(&self) -> InputDims {
            self.dims
        }

        fn predict_conformed(&self, imgs: &[ImageTensor]) -> Result<Vec<ProbabilityVector>> {
            imgs.iter()
                .map(|img| {
                    let p = (self.f)(img.data()).clamp(0.0, 1.0);
                    ProbabilityVector::new(vec![1.0 - p, p], names(2))
                })
                .collect()
        }
    }

    #[test]
    fn perturbations_shape() {
        let p = generate_perturbations(1, 4, 3);
        assert_eq!(p.len(), 4);
        assert_eq!(p[0], vec![true]);
        for k in [1, 3, 17] {
            assert!(generate_perturbations(k, 5, 11)[0].iter().all(|&b| b));
        }
        assert_eq!(generate_perturbations(6, 20, 1), generate_perturbations(6, 20, 1));
        assert_ne!(generate_perturbations(6, 20, 1), generate_perturbations(6, 20, 2));
    }

    #[test]
    fn keep_rate_is_fair() {
        // 99.9% binomial interval for 9999 fair draws: 0.5 ± 3.29·0.005
        let p = generate_perturbations(10, 10_000, 5);
        for j in 0..10 {
            let mean = p[1..].iter().filter(|v| v[j]).count() as f64 / 9999.0;
            assert!((0.47..=0.53).contains(&mean), "coordinate {j}: {mean}");
        }
    }

    #[test]
    fn rendering_modes() {
        let img = ImageTensor::from_fn(3, 4, 3, |y, x, c| ((y * 4 + x + c) % 5) as f64 / 5.0);
        let sp = strip_map(3, 4);
        assert_eq!(render_perturbed(&img, &sp, &[true; 3], Occlusion::MeanColor).unwrap(), img);
        let flat = ImageTensor::filled(3, 4, 3, 0.3);
        let r = render_perturbed(&flat, &sp, &[false; 3], Occlusion::MeanColor).unwrap();
        assert!(r.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
        let g = render_perturbed(&img, &sp, &[true, false, true], Occlusion::ConstantGray).unwrap();
        for i in 0..12 {
            if i / 4 == 1 {
                assert!(g.pixel(i).iter().all(|&v| v == 0.5));
            } else {
                assert_eq!(g.pixel(i), img.pixel(i));
            }
        }
        assert!(matches!(render_perturbed(&img, &sp, &[true], Occlusion::MeanColor), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn similarity_kernel() {
        assert_eq!(similarity(0.0, 0.25), 1.0);
        assert!((similarity(0.25, 0.25) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((similarity(0.25, 0.25) - 0.367879).abs() < 1e-6);
        assert!(similarity(0.1, 0.3) > similarity(0.2, 0.3));
    }

    fn sample(inclusion: Vec<bool>, y: f64, w: f64) -> PerturbationSample {
        PerturbationSample { inclusion, probs: ProbabilityVector::new(vec![1.0 - y, y], names(2)).unwrap(), dist: 0.0, simscore: w }
    }

    #[test]
    fn constant_target_gives_zero_weights() {
        let samples: Vec<_> = generate_perturbations(4, 30, 2).into_iter().map(|x| sample(x, 0.35, 1.0)).collect();
        let fit = fit_surrogate(&samples, 1, 0.0).unwrap();
        assert!(fit.weights.iter().all(|w| w.abs() < 1e-8));
        assert!((fit.intercept - 0.35).abs() < 1e-12);
    }

    #[test]
    fn huge_ridge_shrinks_to_weighted_mean() {
        let samples: Vec<_> = generate_perturbations(3, 40, 4)
            .into_iter()
            .enumerate()
            .map(|(i, x)| {
                let y = 0.2 + 0.5 * f64::from(u8::from(x[0]));
                sample(x, y, 0.5 + (i % 3) as f64 * 0.25)
            })
            .collect();
        let fit = fit_surrogate(&samples, 1, 1e9).unwrap();
        assert!(fit.weights.iter().all(|w| w.abs() < 1e-6));
        let wsum: f64 = samples.iter().map(|s| s.simscore).sum();
        let wmean: f64 = samples.iter().map(|s| s.simscore * s.probs.get(1)).sum::<f64>() / wsum;
        assert!((fit.intercept - wmean).abs() < 1e-6);
    }

    #[test]
    fn degenerate_designs() {
        let same: Vec<_> = (0..5).map(|_| sample(vec![true, false], 0.5, 1.0)).collect();
        assert!(matches!(fit_surrogate(&same, 1, 1.0), Err(Error::SingularSystem(_))));
        // two perfectly collinear columns with no ridge
        let collinear: Vec<_> = [true, false, true, false].iter().map(|&b| sample(vec![b, b], 0.5, 1.0)).collect();
        assert!(matches!(fit_surrogate(&collinear, 1, 0.0), Err(Error::SingularSystem(_))));
        assert!(fit_surrogate(&collinear, 1, 0.1).is_ok());
        assert!(fit_surrogate(&same[..1], 1, 0.0).is_err());
    }

    #[test]
    fn weight_scaling_invariance_without_ridge() {
        let samples: Vec<_> = generate_perturbations(5, 60, 8)
            .into_iter()
            .enumerate()
            .map(|(i, x)| {
                let y = 0.1 + 0.15 * x.iter().take(3).filter(|&&b| b).count() as f64 + 0.01 * (i % 7) as f64;
                sample(x, y.min(1.0), 0.2 + (i % 5) as f64 * 0.1)
            })
            .collect();
        let a = fit_surrogate(&samples, 1, 0.0).unwrap();
        let scaled: Vec<_> = samples.iter().map(|s| PerturbationSample { simscore: s.simscore * 37.5, ..s.clone() }).collect();
        let b = fit_surrogate(&scaled, 1, 0.0).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn pick_orders_by_magnitude() {
        assert_eq!(pick_top(&[0.1, -0.5, 0.3, 0.5], 3), vec![1, 3, 2]);
        assert_eq!(pick_top(&[0.1, 0.2], 5), vec![1, 0]);
    }

    #[test]
    fn constant_model_explanation() {
        let img = ImageTensor::from_fn(4, 6, 1, |y, x, _| ((y + x) % 3) as f64 / 3.0);
        let sp = strip_map(4, 6);
        let model = LinearClassifier::zeros(InputDims::new(4, 6, 1), names(3));
        let cfg = ExplainConfig { num_samples: 64, seed: 1, ..Default::default() };
        let (exp, samples) = explain_with_samples(&img, &sp, &model, &cfg).unwrap();
        assert!(exp.weights.iter().all(|w| w.abs() < 1e-8));
        assert!((exp.coverage.neutral_pct - 100.0).abs() < 1e-9);
        assert_eq!(samples[0].dist, 0.0);
        assert_eq!(samples[0].simscore, 1.0);
        assert_eq!(exp.picked.len(), 4);
        let overlay = render_overlay(&img, &sp, &exp).unwrap();
        assert_eq!(overlay.image(), &img.to_rgb());
        assert!(trinary_mask(&sp, &exp).unwrap().data().iter().all(|&v| v == 0));
    }

    #[test]
    fn superpixel_zero_dominates() {
        // p = 0.5 + 0.4 · (fraction of row 0 left unoccluded)
        let img = ImageTensor::filled(5, 4, 1, 1.0);
        let sp = strip_map(5, 4);
        let model = RowModel {
            dims: InputDims::new(5, 4, 1),
            f: |d: &[f64]| 0.5 + 0.4 * d[..4].iter().filter(|&&v| v == 1.0).count() as f64 / 4.0,
        };
        let cfg = ExplainConfig { num_samples: 300, occlusion: Occlusion::ConstantGray, target_class: Some(1), ..Default::default() };
        let exp = explain(&img, &sp, &model, &cfg).unwrap();
        let top = pick_top(&exp.weights, 1)[0];
        assert_eq!(top, 0);
        assert!(exp.weights[0] > 0.0);
        assert_eq!(explain(&img, &sp, &model, &cfg).unwrap(), exp);
        let t = trinary_mask(&sp, &exp).unwrap();
        assert!(t.data()[..4].iter().all(|&v| v == 1));
    }

    #[test]
    fn overlay_tints_only_picked() {
        let img = ImageTensor::filled(2, 3, 3, 0.5);
        let sp = strip_map(2, 3);
        let exp = Explanation {
            target_class: 0,
            class_names: vec!["a".into()],
            baseline_probs: vec![1.0],
            weights: vec![0.3, -0.2],
            picked: vec![0],
            intercept: 0.0,
            surrogate_r2: 1.0,
            coverage: coverage(&sp, &[0.3, -0.2], &[0]),
        };
        let out = render_overlay(&img, &sp, &exp).unwrap().into_image();
        assert!((out.get(0, 0, 1) - (0.6 * 0.5 + 0.4)).abs() < 1e-12);
        assert!((out.get(0, 0, 0) - 0.3).abs() < 1e-12);
        assert_eq!(out.pixel(4), img.pixel(4));
        assert!((exp.coverage.positive_pct - 50.0).abs() < 1e-12);
        let mut neg = exp.clone();
        neg.weights.iter_mut().for_each(|w| *w = -*w);
        let a = trinary_mask(&sp, &exp).unwrap();
        let b = trinary_mask(&sp, &neg).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| *x == -*y));
    }

    #[test]
    fn explanation_json_fields() {
        let exp = Explanation {
            target_class: 1,
            class_names: vec!["a".into(), "b".into()],
            baseline_probs: vec![0.4, 0.6],
            weights: vec![0.1],
            picked: vec![0],
            intercept: 0.5,
            surrogate_r2: 0.9,
            coverage: Coverage { positive_pct: 100.0, negative_pct: 0.0, neutral_pct: 0.0 },
        };
        let v = serde_json::to_value(&exp).unwrap();
        for key in ["target_class", "class_names", "baseline_probs", "weights", "picked", "intercept", "r2", "coverage"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["coverage"]["neutral_pct"], 0.0);
    }

    #[test]
    fn report_identity_and_ordering() {
        let names: Arc<[String]> = vec!["x".to_string(), "y".to_string(), "z".to_string()].into();
        let dims = InputDims::new(1, 2, 1);
        let model = LinearClassifier::new(dims, names, vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0], vec![0.0; 3]).unwrap();
        let a = ImageTensor::new(1, 2, 1, vec![0.9, 0.1]).unwrap();
        let rows = compare_predictions(&model, &a, &a).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.delta == 0.0 && r.rank_change == 0));
        assert_eq!(rows[0].class_name, "x");
        assert!(rows.windows(2).all(|w| w[0].original_pct >= w[1].original_pct));
    }
}
