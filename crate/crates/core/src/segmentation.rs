//! Superpixel generation by K-means, optionally constrained by a user mask.
//!
//! With a mask, the pixels inside and outside are clustered independently so
//! no superpixel ever straddles the user's boundary. Labels `0..inner_k` lie
//! inside the mask and `inner_k..K` outside.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, RegionMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub inner_k: usize,
    pub outer_k: usize,
    /// Weight of the normalized (row, col) features relative to color.
    pub spatial_weight: f64,
    pub max_iters: usize,
    /// Convergence threshold on the largest centroid shift, in feature units.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self { inner_k: 5, outer_k: 15, spatial_weight: 1.0, max_iters: 50, tol: 1e-4, seed: 0 }
    }
}

impl SegmentationConfig {
    pub fn with_counts(mut self, inner_k: usize, outer_k: usize) -> Self {
        self.inner_k = inner_k;
        self.outer_k = outer_k;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if !(self.spatial_weight >= 0.0) || !self.spatial_weight.is_finite() {
            return Err(Error::InvalidConfig("spatial_weight must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Per-pixel superpixel labels plus which labels lie inside the user mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SuperpixelMapRepr")]
pub struct SuperpixelMap {
    height: usize,
    width: usize,
    num_superpixels: usize,
    inner_labels: Vec<u32>,
    labels: Vec<u32>,
}

#[derive(Deserialize)]
struct SuperpixelMapRepr {
    height: usize,
    width: usize,
    num_superpixels: usize,
    inner_labels: Vec<u32>,
    labels: Vec<u32>,
}

impl TryFrom<SuperpixelMapRepr> for SuperpixelMap {
    type Error = Error;

    fn try_from(r: SuperpixelMapRepr) -> Result<Self> {
        SuperpixelMap::new(r.height, r.width, r.num_superpixels, r.inner_labels, r.labels)
    }
}

impl SuperpixelMap {
    /// Validates that every label in `0..num_superpixels` is used and that
    /// inner labels are in range.
    pub fn new(
        height: usize,
        width: usize,
        num_superpixels: usize,
        mut inner_labels: Vec<u32>,
        labels: Vec<u32>,
    ) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::LengthMismatch { expected: height * width, actual: labels.len() });
        }
        let mut seen = vec![false; num_superpixels];
        for &l in &labels {
            let slot = seen
                .get_mut(l as usize)
                .ok_or_else(|| Error::InvalidConfig(format!("label {l} >= {num_superpixels}")))?;
            *slot = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidConfig(format!("label {missing} has no pixels")));
        }
        inner_labels.sort_unstable();
        inner_labels.dedup();
        if inner_labels.iter().any(|&l| l as usize >= num_superpixels) {
            return Err(Error::InvalidConfig("inner label out of range".into()));
        }
        Ok(Self { height, width, num_superpixels, inner_labels, labels })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn num_superpixels(&self) -> usize {
        self.num_superpixels
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn inner_labels(&self) -> &[u32] {
        &self.inner_labels
    }

    pub fn is_inner(&self, label: u32) -> bool {
        self.inner_labels.binary_search(&label).is_ok()
    }

    /// Pixel footprint of the inner labels; empty for unconstrained maps.
    pub fn region_mask(&self) -> RegionMask {
        let data = self.labels.iter().map(|&l| self.is_inner(l)).collect();
        RegionMask::new(self.height, self.width, data).expect("labels sized to image")
    }

    pub fn pixel_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_superpixels];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Linear pixel indices of each superpixel.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_superpixels];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    /// Indexed-color PNG whose pixel values are the labels. Maps with more
    /// than 256 labels fall back to 16-bit grayscale.
    pub fn encode_label_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            let data: Vec<u8> = if self.num_superpixels <= 256 {
                enc.set_color(png::ColorType::Indexed);
                enc.set_depth(png::BitDepth::Eight);
                enc.set_palette(label_palette(self.num_superpixels));
                self.labels.iter().map(|&l| l as u8).collect()
            } else {
                enc.set_color(png::ColorType::Grayscale);
                enc.set_depth(png::BitDepth::Sixteen);
                self.labels.iter().flat_map(|&l| (l as u16).to_be_bytes()).collect()
            };
            let mut writer = enc.write_header().expect("PNG header into memory");
            writer.write_image_data(&data).expect("PNG data into memory");
        }
        out
    }

    /// Reads back the raw label indices written by [`Self::encode_label_png`].
    pub fn decode_label_png(bytes: &[u8]) -> Result<(usize, usize, Vec<u32>)> {
        let mut dec = png::Decoder::new(bytes);
        dec.set_transformations(png::Transformations::IDENTITY);
        let mut reader = dec.read_info().map_err(|e| Error::MalformedImage(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::MalformedImage(e.to_string()))?;
        let buf = &buf[..info.buffer_size()];
        let labels = match info.bit_depth {
            png::BitDepth::Eight => buf.iter().map(|&b| u32::from(b)).collect(),
            png::BitDepth::Sixteen => buf.chunks_exact(2).map(|c| u32::from(u16::from_be_bytes([c[0], c[1]]))).collect(),
            d => return Err(Error::UnsupportedFormat(format!("label PNG bit depth {d:?}"))),
        };
        Ok((info.height as usize, info.width as usize, labels))
    }
}

fn label_palette(k: usize) -> Vec<u8> {
    (0..k)
        .flat_map(|l| {
            let h = (l as u32).wrapping_mul(2_654_435_761);
            [(h >> 24) as u8, (h >> 16) as u8, (h >> 8) as u8]
        })
        .collect()
}

/// Splits `total_k` superpixels between the inside and outside of `mask` in
/// proportion to their areas, so superpixels come out roughly equal in size.
pub fn suggest_counts(mask: &RegionMask, total_k: usize) -> Result<(usize, usize)> {
    if total_k < 2 {
        return Err(Error::InvalidConfig("total_k must be at least 2".into()));
    }
    let selected = mask.count();
    if selected == 0 {
        return Err(Error::EmptyMask);
    }
    let area = (mask.height() * mask.width()) as f64;
    let mut inner = ((total_k as f64 * selected as f64 / area).round() as usize).max(1);
    if !mask.is_full() && inner >= total_k {
        inner = total_k - 1;
    }
    Ok((inner, total_k - inner))
}

const FEATURES: usize = 5;

fn features(img: &ImageTensor, region: &[usize], spatial_weight: f64) -> Vec<f64> {
    let (h, w) = img.dims();
    let mut out = Vec::with_capacity(region.len() * FEATURES);
    for &i in region {
        let px = img.pixel(i);
        let (r, g, b) = if px.len() == 1 { (px[0], px[0], px[0]) } else { (px[0], px[1], px[2]) };
        let (y, x) = (i / w, i % w);
        out.extend_from_slice(&[
            r,
            g,
            b,
            spatial_weight * y as f64 / h as f64,
            spatial_weight * x as f64 / w as f64,
        ]);
    }
    out
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's K-means with k-means++ seeding over rows of `points`.
///
/// Returns one label per point; every cluster is nonempty when `n >= k`.
pub(crate) fn kmeans(points: &[f64], dim: usize, k: usize, max_iters: usize, tol: f64, seed: u64) -> Vec<usize> {
    let n = points.len() / dim;
    assert!(k >= 1 && n >= k);
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut centers = Vec::with_capacity(k * dim);
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    centers.extend_from_slice(point(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(point(i), point(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just past the final sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            chosen.iter().position(|c| !c).expect("n >= k")
        };
        chosen[pick] = true;
        let c = point(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(point(i), &c));
        }
        centers.extend_from_slice(&c);
    }

    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut prev_sse = f64::INFINITY;
    for _ in 0..max_iters {
        let sse = assign(points, dim, &centers, &mut labels, &mut dists);
        debug_assert!(sse <= prev_sse + 1e-9 * (1.0 + prev_sse.abs()), "K-means SSE increased: {prev_sse} -> {sse}");
        prev_sse = sse;
        repair_empty(points, dim, k, &mut centers, &mut labels, &mut dists);
        let updated = centroids(points, dim, k, &labels, &centers);
        let shift = (0..k)
            .map(|j| sq_dist(&centers[j * dim..(j + 1) * dim], &updated[j * dim..(j + 1) * dim]).sqrt())
            .fold(0.0, f64::max);
        centers = updated;
        if shift < tol {
            break;
        }
    }
    assign(points, dim, &centers, &mut labels, &mut dists);
    repair_empty(points, dim, k, &mut centers, &mut labels, &mut dists);
    labels
}

fn assign(points: &[f64], dim: usize, centers: &[f64], labels: &mut [usize], dists: &mut [f64]) -> f64 {
    let k = centers.len() / dim;
    let mut sse = 0.0;
    for (i, p) in points.chunks_exact(dim).enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for j in 0..k {
            let d = sq_dist(p, &centers[j * dim..(j + 1) * dim]);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        labels[i] = best;
        dists[i] = best_d;
        sse += best_d;
    }
    sse
}

/// Gives every empty cluster the point currently farthest from its centroid,
/// taken from a cluster that can spare it.
fn repair_empty(points: &[f64], dim: usize, k: usize, centers: &mut [f64], labels: &mut [usize], dists: &mut [f64]) {
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let far = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            })
            .expect("n >= k leaves a cluster with a spare point");
        counts[labels[far]] -= 1;
        counts[j] = 1;
        labels[far] = j;
        dists[far] = 0.0;
        centers[j * dim..(j + 1) * dim].copy_from_slice(&points[far * dim..(far + 1) * dim]);
    }
}

fn centroids(points: &[f64], dim: usize, k: usize, labels: &[usize], previous: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.chunks_exact(dim).zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(p) {
            *s += v;
        }
    }
    for j in 0..k {
        if counts[j] == 0 {
            sums[j * dim..(j + 1) * dim].copy_from_slice(&previous[j * dim..(j + 1) * dim]);
        } else {
            sums[j * dim..(j + 1) * dim].iter_mut().for_each(|s| *s /= counts[j] as f64);
        }
    }
    sums
}

/// Clusters the pixels listed in `region` into `k` groups. The result is
/// aligned with `region`.
pub fn segment_region(img: &ImageTensor, region: &[usize], k: usize, cfg: &SegmentationConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if region.len() < k {
        return Err(Error::TooFewPixels { pixels: region.len(), k });
    }
    if k == 1 {
        return Ok(vec![0; region.len()]);
    }
    let pts = features(img, region, cfg.spatial_weight);
    Ok(kmeans(&pts, FEATURES, k, cfg.max_iters, cfg.tol, cfg.seed))
}

/// Mask-constrained segmentation: `cfg.inner_k` clusters inside the mask and
/// `cfg.outer_k` outside.
pub fn segment(img: &ImageTensor, mask: &RegionMask, cfg: &SegmentationConfig) -> Result<SuperpixelMap> {
    mask.require_dims(img.dims())?;
    mask.require_nonempty()?;
    if cfg.inner_k == 0 {
        return Err(Error::InvalidConfig("inner_k must be at least 1".into()));
    }
    let inner = mask.indices();
    let outer = mask.complement().indices();
    if outer.is_empty() && cfg.outer_k > 0 {
        return Err(Error::TooFewPixels { pixels: 0, k: cfg.outer_k });
    }
    if !outer.is_empty() && cfg.outer_k == 0 {
        return Err(Error::InvalidConfig("outer_k must be at least 1 when the mask leaves pixels outside".into()));
    }

    let inner_labels = segment_region(img, &inner, cfg.inner_k, cfg)?;
    let mut labels = vec![0u32; img.num_pixels()];
    for (&i, &l) in inner.iter().zip(&inner_labels) {
        labels[i] = l as u32;
    }
    if !outer.is_empty() {
        // decorrelate the two regions' seeding
        let outer_cfg = SegmentationConfig { seed: cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15), ..cfg.clone() };
        let outer_labels = segment_region(img, &outer, cfg.outer_k, &outer_cfg)?;
        for (&i, &l) in outer.iter().zip(&outer_labels) {
            labels[i] = (cfg.inner_k + l) as u32;
        }
    }
    let inner_set: Vec<u32> = (0..cfg.inner_k as u32).collect();
    SuperpixelMap::new(img.height(), img.width(), cfg.inner_k + cfg.outer_k, inner_set, labels)
}

/// Unconstrained K-means over the whole image.
pub fn auto_segment(img: &ImageTensor, k: usize, cfg: &SegmentationConfig) -> Result<SuperpixelMap> {
    let all: Vec<usize> = (0..img.num_pixels()).collect();
    let labels = segment_region(img, &all, k, cfg)?;
    SuperpixelMap::new(img.height(), img.width(), k, Vec::new(), labels.into_iter().map(|l| l as u32).collect())
}

/// Distinct labels present, for invariant checks.
pub fn distinct_labels(sp: &SuperpixelMap) -> BTreeSet<u32> {
    sp.labels().iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k_in: usize, k_out: usize, lambda: f64) -> SegmentationConfig {
        SegmentationConfig { spatial_weight: lambda, ..Default::default() }.with_counts(k_in, k_out)
    }

    #[test]
    fn suggest_counts_examples() {
        let mask = RegionMask::from_fn(100, 100, |y, x| y < 50 && x < 50);
        assert_eq!(mask.count(), 2500);
        assert_eq!(suggest_counts(&mask, 20).unwrap(), (5, 15));
        let half = RegionMask::from_fn(100, 100, |y, _| y < 50);
        assert_eq!(suggest_counts(&half, 10).unwrap(), (5, 5));
        let one = RegionMask::from_fn(100, 100, |y, x| y == 3 && x == 7);
        assert_eq!(suggest_counts(&one, 10).unwrap(), (1, 9));
        let nearly = RegionMask::from_fn(10, 10, |y, x| !(y == 0 && x == 0));
        assert_eq!(suggest_counts(&nearly, 4).unwrap(), (3, 1));
        assert_eq!(suggest_counts(&RegionMask::full(4, 4), 6).unwrap(), (6, 0));
        assert!(suggest_counts(&half, 1).is_err());
    }

    #[test]
    fn two_tone_split_without_spatial_term() {
        let img = ImageTensor::from_fn(8, 8, 3, |_, x, _| if x < 4 { 0.0 } else { 1.0 });
        let sp = auto_segment(&img, 2, &cfg(1, 0, 0.0)).unwrap();
        let l = sp.labels();
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(l[y * 8 + x] == l[0], x < 4);
            }
        }
    }

    #[test]
    fn one_cluster_per_pixel() {
        let img = ImageTensor::from_fn(3, 4, 1, |y, x, _| (y * 4 + x) as f64 / 11.0);
        let region: Vec<usize> = (0..12).collect();
        let labels = segment_region(&img, &region, 12, &cfg(1, 0, 0.0)).unwrap();
        let distinct: BTreeSet<_> = labels.iter().collect();
        assert_eq!(distinct.len(), 12);
        // duplicate colors with no spatial term still end up one per cluster
        let flat = ImageTensor::filled(2, 3, 1, 0.4);
        let labels = segment_region(&flat, &(0..6).collect::<Vec<_>>(), 6, &cfg(1, 0, 0.0)).unwrap();
        assert_eq!(labels.iter().collect::<BTreeSet<_>>().len(), 6);
    }

    #[test]
    fn too_few_pixels() {
        let img = ImageTensor::filled(2, 2, 1, 0.5);
        assert!(matches!(
            segment_region(&img, &[0, 1], 3, &cfg(1, 0, 1.0)),
            Err(Error::TooFewPixels { pixels: 2, k: 3 })
        ));
    }

    #[test]
    fn full_mask_degenerate_outer() {
        let img = ImageTensor::from_fn(6, 6, 3, |y, x, c| ((y * 3 + x * 5 + c) % 7) as f64 / 7.0);
        let sp = segment(&img, &RegionMask::full(6, 6), &cfg(4, 0, 1.0)).unwrap();
        assert_eq!(sp.num_superpixels(), 4);
        assert_eq!(sp.inner_labels(), &[0, 1, 2, 3]);
    }

    #[test]
    fn single_cluster_per_region_reproduces_mask() {
        let img = ImageTensor::from_fn(7, 9, 3, |y, x, c| ((y + 2 * x + c) % 5) as f64 / 5.0);
        let mask = RegionMask::from_fn(7, 9, |y, x| (2..5).contains(&y) && (3..8).contains(&x));
        let sp = segment(&img, &mask, &cfg(1, 1, 1.0)).unwrap();
        for (i, &l) in sp.labels().iter().enumerate() {
            assert_eq!(l, if mask.at(i) { 0 } else { 1 });
        }
        assert_eq!(sp.region_mask(), mask);
    }

    #[test]
    fn checkerboard_mask_keeps_separation() {
        let img = ImageTensor::from_fn(8, 8, 3, |y, x, c| ((y * 7 + x * 3 + c) % 11) as f64 / 11.0);
        let mask = RegionMask::from_fn(8, 8, |y, x| (y / 2 + x / 2) % 2 == 0);
        let sp = segment(&img, &mask, &cfg(2, 2, 1.0)).unwrap();
        assert_eq!(distinct_labels(&sp).len(), 4);
        for (i, &l) in sp.labels().iter().enumerate() {
            assert_eq!(sp.is_inner(l), mask.at(i));
        }
    }

    #[test]
    fn outer_k_zero_requires_full_mask() {
        let img = ImageTensor::filled(4, 4, 1, 0.2);
        let mask = RegionMask::from_fn(4, 4, |y, _| y < 2);
        assert!(matches!(segment(&img, &mask, &cfg(2, 0, 1.0)), Err(Error::InvalidConfig(_))));
        assert!(matches!(segment(&img, &RegionMask::full(4, 4), &cfg(2, 1, 1.0)), Err(Error::TooFewPixels { .. })));
        assert!(matches!(segment(&img, &RegionMask::empty(4, 4), &cfg(2, 1, 1.0)), Err(Error::EmptyMask)));
    }

    #[test]
    fn label_png_round_trip() {
        let img = ImageTensor::from_fn(9, 11, 3, |y, x, c| ((y * 5 + x * 3 + c) % 13) as f64 / 13.0);
        let sp = auto_segment(&img, 6, &cfg(1, 0, 1.0)).unwrap();
        let (h, w, labels) = SuperpixelMap::decode_label_png(&sp.encode_label_png()).unwrap();
        assert_eq!((h, w), (9, 11));
        assert_eq!(labels, sp.labels());
    }

    #[test]
    fn json_shape_and_validation() {
        let sp = SuperpixelMap::new(1, 3, 2, vec![0], vec![0, 1, 1]).unwrap();
        let v = serde_json::to_value(&sp).unwrap();
        assert_eq!(v["num_superpixels"], 2);
        assert_eq!(v["labels"], serde_json::json!([0, 1, 1]));
        let back: SuperpixelMap = serde_json::from_value(v).unwrap();
        assert_eq!(back, sp);
        let bad = serde_json::json!({"height":1,"width":2,"num_superpixels":3,"inner_labels":[],"labels":[0,1]});
        assert!(serde_json::from_value::<SuperpixelMap>(bad).is_err());
    }
}
