//! Image, mask and label-map primitives shared by every other module.
//!
//! Pixel values are always `f64` in `[0, 1]`, stored row-major with channels
//! interleaved. Conversion to 8-bit happens only when encoding.

use std::io::Cursor;

use image::{DynamicImage, GenericImageView, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold applied to decoded mask values; a pixel is selected when any
/// channel exceeds it.
pub const MASK_THRESHOLD: f64 = 0.5;

pub fn clip01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    /// Builds an image from in-range values. Values outside `[0, 1]` are
    /// rejected; use [`ImageTensor::clipped`] to clamp instead.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::check_shape(height, width, channels, data.len())?;
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::MalformedImage(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { height, width, channels, data })
    }

    /// Builds an image, clamping every value into `[0, 1]`.
    pub fn clipped(height: usize, width: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        Self::check_shape(height, width, channels, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedImage("non-finite pixel value".into()));
        }
        data.iter_mut().for_each(|v| *v = clip01(*v));
        Ok(Self { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self::clipped(height, width, channels, vec![value; height * width * channels])
            .expect("filled image has a valid shape")
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::clipped(height, width, channels, data).expect("generated image has a valid shape")
    }

    fn check_shape(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
        if height == 0 || width == 0 {
            return Err(Error::MalformedImage("image has a zero dimension".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::MalformedImage(format!("{channels} channels; expected 1 or 3")));
        }
        if len != height * width * channels {
            return Err(Error::LengthMismatch { expected: height * width * channels, actual: len });
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Channel values of pixel at linear index `i`.
    #[inline]
    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    /// Writes a pixel, clamping values into range.
    #[inline]
    pub fn set_pixel(&mut self, i: usize, values: &[f64]) {
        let c = self.channels;
        for (dst, v) in self.data[i * c..(i + 1) * c].iter_mut().zip(values) {
            *dst = clip01(*v);
        }
    }

    /// Converts to three channels, replicating gray when needed.
    pub fn to_rgb(&self) -> ImageTensor {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        ImageTensor { height: self.height, width: self.width, channels: 3, data }
    }

    pub fn to_gray(&self) -> ImageTensor {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self.data.chunks_exact(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect();
        ImageTensor { height: self.height, width: self.width, channels: 1, data }
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let bytes: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 1 {
            DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).expect("buffer size"))
        } else {
            DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, bytes).expect("buffer size"))
        }
    }

    pub fn encode_png(&self) -> Vec<u8> {
        encode_dynamic_png(&self.to_dynamic())
    }
}

fn to_u8(v: f64) -> u8 {
    (clip01(v) * 255.0).round() as u8
}

fn encode_dynamic_png(img: &DynamicImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("PNG encoding into memory cannot fail");
    out.into_inner()
}

fn load_dynamic(bytes: &[u8]) -> Result<DynamicImage> {
    let format = image::guess_format(bytes).map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::UnsupportedFormat(format!("{format:?}")));
    }
    image::load_from_memory_with_format(bytes, format).map_err(|e| Error::MalformedImage(e.to_string()))
}

/// Decodes PNG or JPEG bytes. Grayscale sources produce a single channel.
pub fn decode_image(bytes: &[u8]) -> Result<ImageTensor> {
    let img = load_dynamic(bytes)?;
    let (w, h) = img.dimensions();
    let (channels, raw) = if img.color().has_color() {
        (3, img.to_rgb8().into_raw())
    } else {
        (1, img.to_luma8().into_raw())
    };
    let data = raw.into_iter().map(|b| f64::from(b) / 255.0).collect();
    ImageTensor::new(h as usize, w as usize, channels, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMethod {
    #[default]
    Bilinear,
    Nearest,
}

/// Source coordinate for destination index `i` under pixel-center alignment.
#[inline]
fn src_coord(i: usize, scale: f64) -> f64 {
    (i as f64 + 0.5) * scale - 0.5
}

#[inline]
fn nearest_index(i: usize, scale: f64, len: usize) -> usize {
    (((i as f64 + 0.5) * scale).floor() as usize).min(len - 1)
}

/// Resamples to `(height, width)`. Identical dimensions return an exact copy.
pub fn resample(img: &ImageTensor, dims: (usize, usize), method: ResampleMethod) -> Result<ImageTensor> {
    let (oh, ow) = dims;
    if oh == 0 || ow == 0 {
        return Err(Error::InvalidConfig("resample dimensions must be positive".into()));
    }
    if dims == img.dims() {
        return Ok(img.clone());
    }
    let (h, w, c) = (img.height, img.width, img.channels);
    let sy = h as f64 / oh as f64;
    let sx = w as f64 / ow as f64;
    let mut data = Vec::with_capacity(oh * ow * c);
    match method {
        ResampleMethod::Nearest => {
            for y in 0..oh {
                let yy = nearest_index(y, sy, h);
                for x in 0..ow {
                    let xx = nearest_index(x, sx, w);
                    data.extend_from_slice(img.pixel(yy * w + xx));
                }
            }
        }
        ResampleMethod::Bilinear => {
            for y in 0..oh {
                let fy = src_coord(y, sy).clamp(0.0, (h - 1) as f64);
                let y0 = fy.floor() as usize;
                let y1 = (y0 + 1).min(h - 1);
                let ty = fy - y0 as f64;
                for x in 0..ow {
                    let fx = src_coord(x, sx).clamp(0.0, (w - 1) as f64);
                    let x0 = fx.floor() as usize;
                    let x1 = (x0 + 1).min(w - 1);
                    let tx = fx - x0 as f64;
                    for ch in 0..c {
                        let top = img.get(y0, x0, ch) * (1.0 - tx) + img.get(y0, x1, ch) * tx;
                        let bot = img.get(y1, x0, ch) * (1.0 - tx) + img.get(y1, x1, ch) * tx;
                        data.push(top * (1.0 - ty) + bot * ty);
                    }
                }
            }
        }
    }
    ImageTensor::clipped(oh, ow, c, data)
}

/// Bilinear sample at fractional `(y, x)` with edge clamping.
pub fn sample_bilinear(img: &ImageTensor, y: f64, x: f64, out: &mut [f64]) {
    let (h, w) = img.dims();
    let fy = y.clamp(0.0, (h - 1) as f64);
    let fx = x.clamp(0.0, (w - 1) as f64);
    let y0 = fy.floor() as usize;
    let x0 = fx.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let ty = fy - y0 as f64;
    let tx = fx - x0 as f64;
    for (ch, o) in out.iter_mut().enumerate().take(img.channels) {
        let top = img.get(y0, x0, ch) * (1.0 - tx) + img.get(y0, x1, ch) * tx;
        let bot = img.get(y1, x0, ch) * (1.0 - tx) + img.get(y1, x1, ch) * tx;
        *o = top * (1.0 - ty) + bot * ty;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl RegionMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::LengthMismatch { expected: height * width, actual: data.len() });
        }
        Ok(Self { height, width, data })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![false; height * width] }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![true; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn at(&self, i: usize) -> bool {
        self.data[i]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn is_full(&self) -> bool {
        self.data.iter().all(|&b| b)
    }

    pub fn complement(&self) -> RegionMask {
        RegionMask { height: self.height, width: self.width, data: self.data.iter().map(|b| !b).collect() }
    }

    /// Linear indices of selected pixels, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.data.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect()
    }

    /// Centroid `(row, col)` of the selected pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut n = 0usize;
        let (mut sy, mut sx) = (0.0, 0.0);
        for (i, _) in self.data.iter().enumerate().filter(|(_, &b)| b) {
            n += 1;
            sy += (i / self.width) as f64;
            sx += (i % self.width) as f64;
        }
        (n > 0).then(|| (sy / n as f64, sx / n as f64))
    }

    /// Fails with [`Error::EmptyMask`] when nothing is selected.
    pub fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyMask)
        } else {
            Ok(())
        }
    }

    pub fn require_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::dims(dims, self.dims()));
        }
        Ok(())
    }

    /// Nearest-neighbor resize; masks never blend.
    pub fn resize_nearest(&self, dims: (usize, usize)) -> RegionMask {
        if dims == self.dims() {
            return self.clone();
        }
        let (oh, ow) = dims;
        let sy = self.height as f64 / oh as f64;
        let sx = self.width as f64 / ow as f64;
        RegionMask::from_fn(oh, ow, |y, x| {
            self.get(nearest_index(y, sy, self.height), nearest_index(x, sx, self.width))
        })
    }

    /// One-pixel morphological closing (3x3 dilation then erosion), computed
    /// on a grid padded by one unselected pixel so the border neither grows
    /// nor erodes the selection.
    pub fn close3x3(&self) -> RegionMask {
        let (h, w) = (self.height + 2, self.width + 2);
        let padded = RegionMask::from_fn(h, w, |y, x| {
            y >= 1 && x >= 1 && y <= self.height && x <= self.width && self.get(y - 1, x - 1)
        });
        let window = |m: &RegionMask, y: usize, x: usize, all: bool| {
            let mut acc = all;
            for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    acc = if all { acc && m.get(yy, xx) } else { acc || m.get(yy, xx) };
                }
            }
            acc
        };
        let dilated = RegionMask::from_fn(h, w, |y, x| window(&padded, y, x, false));
        RegionMask::from_fn(self.height, self.width, |y, x| window(&dilated, y + 1, x + 1, true))
    }

    /// White-on-black 8-bit PNG.
    pub fn encode_png(&self) -> Vec<u8> {
        let bytes = self.data.iter().map(|&b| if b { 255u8 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes).expect("buffer size");
        encode_dynamic_png(&DynamicImage::ImageLuma8(img))
    }

    /// Rasterizes a closed polygon with the even-odd rule, sampling at pixel
    /// centers. Vertices are `[x, y]` in pixel coordinates.
    pub fn from_polygon(height: usize, width: usize, vertices: &[[f64; 2]]) -> Result<RegionMask> {
        if vertices.len() < 3 {
            return Err(Error::InvalidConfig("polygon needs at least 3 vertices".into()));
        }
        let mut mask = RegionMask::empty(height, width);
        let n = vertices.len();
        let mut crossings = Vec::new();
        for y in 0..height {
            let py = y as f64 + 0.5;
            crossings.clear();
            for i in 0..n {
                let [x0, y0] = vertices[i];
                let [x1, y1] = vertices[(i + 1) % n];
                if (y0 <= py) != (y1 <= py) {
                    crossings.push(x0 + (py - y0) / (y1 - y0) * (x1 - x0));
                }
            }
            crossings.sort_by(f64::total_cmp);
            for pair in crossings.chunks_exact(2) {
                // pixel centers strictly inside [pair[0], pair[1])
                let start = (pair[0] - 0.5).ceil().max(0.0) as usize;
                let end = ((pair[1] - 0.5).ceil().max(0.0) as usize).min(width);
                for x in start..end {
                    mask.data[y * width + x] = true;
                }
            }
        }
        Ok(mask)
    }
}

/// Decodes an uploaded mask and resizes it to `dims` with nearest neighbor.
pub fn decode_mask(bytes: &[u8], dims: (usize, usize)) -> Result<RegionMask> {
    let img = decode_image(bytes)?;
    let c = img.channels();
    let data = img
        .data()
        .chunks_exact(c)
        .map(|px| px.iter().any(|&v| v > MASK_THRESHOLD))
        .collect();
    let mask = RegionMask::new(img.height(), img.width(), data)?.resize_nearest(dims);
    mask.require_nonempty()?;
    Ok(mask)
}

/// Per-pixel influence map with values in {-1, 0, +1}.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrinaryMask {
    height: usize,
    width: usize,
    data: Vec<i8>,
}

impl TrinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<i8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::LengthMismatch { expected: height * width, actual: data.len() });
        }
        if let Some(v) = data.iter().find(|v| !(-1..=1).contains(*v)) {
            return Err(Error::InvalidConfig(format!("trinary value {v} outside {{-1, 0, 1}}")));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0; height * width] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    /// Gray PNG: -1 → 0, 0 → 128, +1 → 255.
    pub fn encode_png(&self) -> Vec<u8> {
        let bytes = self
            .data
            .iter()
            .map(|&v| match v {
                -1 => 0u8,
                0 => 128,
                _ => 255,
            })
            .collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes).expect("buffer size");
        encode_dynamic_png(&DynamicImage::ImageLuma8(img))
    }

    pub fn decode_png(bytes: &[u8]) -> Result<TrinaryMask> {
        let img = load_dynamic(bytes)?.to_luma8();
        let (w, h) = img.dimensions();
        let data = img
            .into_raw()
            .into_iter()
            .map(|b| match b {
                0..=63 => -1,
                64..=191 => 0,
                _ => 1,
            })
            .collect();
        TrinaryMask::new(h as usize, w as usize, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_png(w: u32, h: u32, v: u8) -> Vec<u8> {
        let img = image::GrayImage::from_pixel(w, h, image::Luma([v]));
        encode_dynamic_png(&DynamicImage::ImageLuma8(img))
    }

    fn rgb_png(w: u32, h: u32, v: [u8; 3]) -> Vec<u8> {
        let img = image::RgbImage::from_pixel(w, h, image::Rgb(v));
        encode_dynamic_png(&DynamicImage::ImageRgb8(img))
    }

    #[test]
    fn decode_white_and_black() {
        let white = decode_image(&rgb_png(2, 2, [255; 3])).unwrap();
        assert_eq!(white.channels(), 3);
        assert!(white.data().iter().all(|&v| v == 1.0));
        let black = decode_image(&rgb_png(2, 2, [0; 3])).unwrap();
        assert!(black.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decode_gray_128_matches_byte_over_255() {
        let img = decode_image(&gray_png(3, 2, 128)).unwrap();
        assert_eq!(img.channels(), 1);
        let oracle = 128.0 / 255.0;
        assert!(img.data().iter().all(|&v| (v - oracle).abs() < 1e-12));
        assert!((oracle - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(matches!(decode_image(b"not an image"), Err(Error::UnsupportedFormat(_))));
        let mut png = gray_png(4, 4, 9);
        png.truncate(png.len() / 2);
        assert!(matches!(decode_image(&png), Err(Error::MalformedImage(_))));
    }

    #[test]
    fn png_round_trip_is_lossless() {
        let img = ImageTensor::from_fn(5, 7, 3, |y, x, c| ((y * 31 + x * 7 + c * 50) % 256) as f64 / 255.0);
        let back = decode_image(&img.encode_png()).unwrap();
        assert_eq!(back, img);
        assert_eq!(decode_image(&back.encode_png()).unwrap(), back);
    }

    #[test]
    fn mask_decoding() {
        let full = decode_mask(&gray_png(3, 3, 255), (3, 3)).unwrap();
        assert!(full.is_full());
        assert!(matches!(decode_mask(&gray_png(3, 3, 0), (3, 3)), Err(Error::EmptyMask)));
        // 128/255 > 0.5, 127/255 < 0.5
        assert!(decode_mask(&gray_png(2, 2, 128), (2, 2)).unwrap().is_full());
        assert!(decode_mask(&gray_png(2, 2, 127), (2, 2)).is_err());
    }

    #[test]
    fn mask_upsampling_replicates_blocks() {
        let mut src = image::GrayImage::new(4, 4);
        for (x, y, p) in src.enumerate_pixels_mut() {
            p.0[0] = if (x + y) % 2 == 0 { 255 } else { 0 };
        }
        let bytes = encode_dynamic_png(&DynamicImage::ImageLuma8(src));
        let mask = decode_mask(&bytes, (8, 8)).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(mask.get(y, x), (x / 2 + y / 2) % 2 == 0, "({y},{x})");
            }
        }
    }

    #[test]
    fn clip_values() {
        assert_eq!(clip01(1.3), 1.0);
        assert_eq!(clip01(-0.2), 0.0);
        assert_eq!(clip01(0.5), 0.5);
        let img = ImageTensor::clipped(1, 3, 1, vec![1.3, -0.2, 0.5]).unwrap();
        assert_eq!(img.data(), &[1.0, 0.0, 0.5]);
        assert!(ImageTensor::new(1, 1, 1, vec![1.5]).is_err());
        assert!(ImageTensor::clipped(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn resample_identity_and_constant() {
        let img = ImageTensor::from_fn(4, 5, 3, |y, x, c| (y + x + c) as f64 / 12.0);
        assert_eq!(resample(&img, (4, 5), ResampleMethod::Bilinear).unwrap(), img);
        let flat = ImageTensor::filled(3, 3, 1, 0.37);
        for dims in [(1, 1), (7, 2), (10, 10)] {
            for m in [ResampleMethod::Bilinear, ResampleMethod::Nearest] {
                let out = resample(&flat, dims, m).unwrap();
                assert_eq!(out.dims(), dims);
                assert!(out.data().iter().all(|&v| (v - 0.37).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn bilinear_upsample_matches_direct_formula() {
        let img = ImageTensor::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        let out = resample(&img, (1, 4), ResampleMethod::Bilinear).unwrap();
        // oracle: source x = (i + 0.5) * 0.5 - 0.5 clamped to [0, 1]; value = x
        let oracle: Vec<f64> = (0..4).map(|i| ((i as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 1.0)).collect();
        assert_eq!(out.data(), oracle.as_slice());
        assert!(out.data().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn polygon_even_odd() {
        let tri = RegionMask::from_polygon(10, 10, &[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]).unwrap();
        assert!(tri.get(0, 0));
        assert!(!tri.get(9, 9));
        assert!(tri.count() > 40 && tri.count() < 60);
        let sq = RegionMask::from_polygon(4, 4, &[[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]]).unwrap();
        assert!(sq.is_full());
        assert!(RegionMask::from_polygon(4, 4, &[[0.0, 0.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn closing_fills_single_pixel_gap() {
        let mut m = RegionMask::from_fn(5, 7, |y, x| (1..=3).contains(&y) && (1..=5).contains(&x));
        m.set(2, 3, false);
        let closed = m.close3x3();
        assert!(closed.get(2, 3));
        assert!(!closed.get(0, 0));
    }

    #[test]
    fn trinary_png_round_trip() {
        let t = TrinaryMask::new(2, 3, vec![-1, 0, 1, 1, 0, -1]).unwrap();
        assert_eq!(TrinaryMask::decode_png(&t.encode_png()).unwrap(), t);
        assert!(TrinaryMask::new(1, 1, vec![2]).is_err());
    }
}
