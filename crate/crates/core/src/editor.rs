//! Declarative edits of a masked region: color offsets, translation,
//! rotation, removal and scaling. Pixels uncovered by a geometric edit are
//! filled by biharmonic inpainting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{sample_bilinear, ImageTensor, RegionMask};
use crate::inpaint::inpaint_biharmonic;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum EditOp {
    /// Additive per-channel offsets. Grayscale images receive the mean offset.
    Color {
        #[serde(default)]
        dr: f64,
        #[serde(default)]
        dg: f64,
        #[serde(default)]
        db: f64,
    },
    /// Translation in pixels; positive `dx` moves right, positive `dy` down.
    Shift {
        #[serde(default)]
        dx: f64,
        #[serde(default)]
        dy: f64,
    },
    /// Rotation in degrees about the region centroid, counterclockwise as
    /// displayed.
    Rotate { angle: f64 },
    Remove,
    /// Scales the region's linear size about its centroid.
    Expand { power: f64 },
}

impl EditOp {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        match *self {
            EditOp::Color { dr, dg, db } => {
                if [dr, dg, db].iter().any(|v| !(-1.0..=1.0).contains(v)) {
                    return bad("color offsets must lie in [-1, 1]");
                }
            }
            EditOp::Shift { dx, dy } => {
                if !dx.is_finite() || !dy.is_finite() {
                    return bad("shift must be finite");
                }
            }
            EditOp::Rotate { angle } => {
                if !angle.is_finite() {
                    return bad("angle must be finite");
                }
            }
            EditOp::Expand { power } => {
                if !(power > 0.0) || !power.is_finite() {
                    return bad("expansion power must be positive");
                }
            }
            EditOp::Remove => {}
        }
        Ok(())
    }
}

/// Ordered list of edits; applied first to last.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EditSpec(pub Vec<EditOp>);

impl EditSpec {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.0.iter().try_for_each(EditOp::validate)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EditResult {
    pub image: ImageTensor,
    /// Footprint of the region after the edits.
    pub mask: RegionMask,
    pub inpainted_pixels: usize,
}

pub fn apply_edits(img: &ImageTensor, mask: &RegionMask, spec: &EditSpec) -> Result<EditResult> {
    mask.require_dims(img.dims())?;
    mask.require_nonempty()?;
    spec.validate()?;
    let mut state = EditResult { image: img.clone(), mask: mask.clone(), inpainted_pixels: 0 };
    for op in &spec.0 {
        state.mask.require_nonempty()?;
        let step = match *op {
            EditOp::Color { dr, dg, db } => color_region(&state.image, &state.mask, [dr, dg, db]),
            EditOp::Shift { dx, dy } => shift_region(&state.image, &state.mask, dx, dy)?,
            EditOp::Rotate { angle } => rotate_region(&state.image, &state.mask, angle)?,
            EditOp::Remove => remove_region(&state.image, &state.mask)?,
            EditOp::Expand { power } => expand_region(&state.image, &state.mask, power)?,
        };
        state = EditResult { inpainted_pixels: state.inpainted_pixels + step.inpainted_pixels, ..step };
    }
    Ok(state)
}

pub fn color_region(img: &ImageTensor, mask: &RegionMask, offsets: [f64; 3]) -> EditResult {
    let c = img.channels();
    let delta: Vec<f64> = if c == 3 { offsets.to_vec() } else { vec![offsets.iter().sum::<f64>() / 3.0] };
    let mut out = img.clone();
    let mut px = vec![0.0; c];
    for i in mask.indices() {
        for (k, v) in px.iter_mut().enumerate() {
            *v = img.pixel(i)[k] + delta[k];
        }
        out.set_pixel(i, &px);
    }
    EditResult { image: out, mask: mask.clone(), inpainted_pixels: 0 }
}

pub fn shift_region(img: &ImageTensor, mask: &RegionMask, dx: f64, dy: f64) -> Result<EditResult> {
    if dx == 0.0 && dy == 0.0 {
        return identity(img, mask);
    }
    warp_region(img, mask, |y, x| (y - dy, x - dx))
}

/// Rotates the region about its centroid (snapped to the half-pixel grid).
pub fn rotate_region(img: &ImageTensor, mask: &RegionMask, angle: f64) -> Result<EditResult> {
    if angle == 0.0 {
        return identity(img, mask);
    }
    let (cy, cx) = snapped_centroid(mask)?;
    let (sin, cos) = angle.to_radians().sin_cos();
    warp_region(img, mask, |y, x| {
        let (vy, vx) = (y - cy, x - cx);
        (cy + vx * sin + vy * cos, cx + vx * cos - vy * sin)
    })
}

/// Scales the region by `power` about its centroid; values below 1 shrink it.
pub fn expand_region(img: &ImageTensor, mask: &RegionMask, power: f64) -> Result<EditResult> {
    EditOp::Expand { power }.validate()?;
    if power == 1.0 {
        return identity(img, mask);
    }
    let (cy, cx) = snapped_centroid(mask)?;
    warp_region(img, mask, |y, x| (cy + (y - cy) / power, cx + (x - cx) / power))
}

/// Replaces the region by the biharmonic fill of its surroundings.
pub fn remove_region(img: &ImageTensor, mask: &RegionMask) -> Result<EditResult> {
    mask.require_dims(img.dims())?;
    mask.require_nonempty()?;
    if mask.is_full() {
        return Err(Error::MaskCoversEverything);
    }
    let image = inpaint_biharmonic(img, mask)?;
    Ok(EditResult { image, mask: RegionMask::empty(img.height(), img.width()), inpainted_pixels: mask.count() })
}

fn identity(img: &ImageTensor, mask: &RegionMask) -> Result<EditResult> {
    mask.require_dims(img.dims())?;
    mask.require_nonempty()?;
    Ok(EditResult { image: img.clone(), mask: mask.clone(), inpainted_pixels: 0 })
}

fn snapped_centroid(mask: &RegionMask) -> Result<(f64, f64)> {
    let (cy, cx) = mask.centroid().ok_or(Error::EmptyMask)?;
    Ok(((cy * 2.0).round() / 2.0, (cx * 2.0).round() / 2.0))
}

/// Moves the region's content through `inverse`, which maps a destination
/// pixel `(row, col)` to its source position.
///
/// The new footprint is the set of destination pixels whose nearest source
/// pixel lies in the mask. Content is sampled bilinearly from masked source
/// pixels only, so the background never bleeds into the moved region. The
/// original footprint is inpainted first, then the moved content is pasted
/// over it.
fn warp_region(img: &ImageTensor, mask: &RegionMask, inverse: impl Fn(f64, f64) -> (f64, f64)) -> Result<EditResult> {
    mask.require_dims(img.dims())?;
    mask.require_nonempty()?;
    let (h, w) = img.dims();
    let c = img.channels();
    let mut footprint = RegionMask::empty(h, w);
    let mut content = vec![0.0; h * w * c];
    let mut px = vec![0.0; c];
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = inverse(y as f64, x as f64);
            let (ny, nx) = (sy.round(), sx.round());
            if ny < 0.0 || nx < 0.0 || ny >= h as f64 || nx >= w as f64 || !mask.get(ny as usize, nx as usize) {
                continue;
            }
            footprint.set(y, x, true);
            sample_masked(img, mask, sy, sx, (ny as usize, nx as usize), &mut px);
            let i = y * w + x;
            content[i * c..(i + 1) * c].copy_from_slice(&px);
        }
    }
    if footprint.is_empty() {
        return Err(Error::RegionLeftImage);
    }
    let exposed = RegionMask::from_fn(h, w, |y, x| mask.get(y, x) && !footprint.get(y, x));
    let inpainted_pixels = exposed.count();
    let mut image = if inpainted_pixels > 0 { inpaint_biharmonic(img, mask)? } else { img.clone() };
    for i in footprint.indices() {
        image.set_pixel(i, &content[i * c..(i + 1) * c]);
    }
    Ok(EditResult { image, mask: footprint, inpainted_pixels })
}

/// Bilinear sample restricted to masked pixels, renormalizing the weights.
fn sample_masked(img: &ImageTensor, mask: &RegionMask, y: f64, x: f64, nearest: (usize, usize), out: &mut [f64]) {
    let (h, w) = img.dims();
    let (y0, x0) = (y.floor(), x.floor());
    let (ty, tx) = (y - y0, x - x0);
    let mut total = 0.0;
    out.iter_mut().for_each(|v| *v = 0.0);
    for (dy, wy) in [(0.0, 1.0 - ty), (1.0, ty)] {
        for (dx, wx) in [(0.0, 1.0 - tx), (1.0, tx)] {
            let (yy, xx) = (y0 + dy, x0 + dx);
            let wgt = wy * wx;
            if wgt <= 0.0 || yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
                continue;
            }
            let (yy, xx) = (yy as usize, xx as usize);
            if !mask.get(yy, xx) {
                continue;
            }
            total += wgt;
            for (o, v) in out.iter_mut().zip(img.pixel(yy * w + xx)) {
                *o += wgt * v;
            }
        }
    }
    if total > 1e-12 {
        out.iter_mut().for_each(|v| *v /= total);
    } else {
        sample_bilinear(img, nearest.0 as f64, nearest.1 as f64, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(h: usize, w: usize, y0: usize, x0: usize, side: usize) -> RegionMask {
        RegionMask::from_fn(h, w, |y, x| (y0..y0 + side).contains(&y) && (x0..x0 + side).contains(&x))
    }

    fn scene() -> (ImageTensor, RegionMask) {
        let mask = square(40, 40, 12, 14, 9);
        let img = ImageTensor::from_fn(40, 40, 3, |y, x, c| {
            if mask.get(y, x) {
                0.2 + 0.05 * ((y + 2 * x + c) % 7) as f64
            } else {
                0.6
            }
        });
        (img, mask)
    }

    #[test]
    fn edit_spec_json_schema() {
        let json = r#"[{"op":"color","dr":0.1,"dg":0,"db":-0.2},{"op":"shift","dx":10,"dy":10},
            {"op":"rotate","angle":180},{"op":"remove"},{"op":"expand","power":1.4}]"#;
        let spec: EditSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.0.len(), 5);
        assert_eq!(spec.0[4], EditOp::Expand { power: 1.4 });
        let back = serde_json::to_value(&spec).unwrap();
        assert_eq!(back[3], serde_json::json!({"op": "remove"}));
        assert_eq!(back[1], serde_json::json!({"op": "shift", "dx": 10.0, "dy": 10.0}));
    }

    #[test]
    fn empty_spec_is_identity() {
        let (img, mask) = scene();
        let out = apply_edits(&img, &mask, &EditSpec::default()).unwrap();
        assert_eq!(out.image, img);
        assert_eq!(out.mask, mask);
        assert_eq!(out.inpainted_pixels, 0);
    }

    #[test]
    fn color_clips_at_one() {
        let img = ImageTensor::filled(6, 6, 3, 1.0);
        let mask = square(6, 6, 1, 1, 3);
        let spec = EditSpec(vec![EditOp::Color { dr: 0.2, dg: 0.0, db: 0.0 }]);
        let out = apply_edits(&img, &mask, &spec).unwrap();
        assert!(out.image.data().iter().all(|&v| v == 1.0));
        let dark = ImageTensor::filled(6, 6, 3, 0.5);
        let out = apply_edits(&dark, &mask, &EditSpec(vec![EditOp::Color { dr: 0.0, dg: -0.3, db: 0.0 }])).unwrap();
        assert!((out.image.get(2, 2, 1) - 0.2).abs() < 1e-12);
        assert_eq!(out.image.get(0, 0, 1), 0.5);
    }

    #[test]
    fn shift_there_and_back() {
        let (img, mask) = scene();
        let spec = EditSpec(vec![EditOp::Shift { dx: 10.0, dy: 10.0 }, EditOp::Shift { dx: -10.0, dy: -10.0 }]);
        let out = apply_edits(&img, &mask, &spec).unwrap();
        assert_eq!(out.mask, mask);
        for (a, b) in out.image.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn shift_moves_footprint_and_inpaints() {
        let (img, mask) = scene();
        let out = shift_region(&img, &mask, 3.0, 0.0).unwrap();
        assert_eq!(out.mask, square(40, 40, 12, 17, 9));
        assert_eq!(out.inpainted_pixels, 27);
        assert!((out.image.get(12, 14, 0) - 0.6).abs() < 1e-6);
        assert_eq!(out.image.pixel(12 * 40 + 17), img.pixel(12 * 40 + 14));
    }

    #[test]
    fn shift_off_image() {
        let (img, mask) = scene();
        assert!(matches!(shift_region(&img, &mask, 100.0, 0.0), Err(Error::RegionLeftImage)));
    }

    #[test]
    fn rotation_identities() {
        let (img, mask) = scene();
        let zero = rotate_region(&img, &mask, 0.0).unwrap();
        assert_eq!(zero.image, img);
        let full = rotate_region(&img, &mask, 360.0).unwrap();
        assert_eq!(full.mask, mask);
        for i in mask.indices() {
            for (a, b) in full.image.pixel(i).iter().zip(img.pixel(i)) {
                assert!((a - b).abs() <= 2.0 / 255.0);
            }
        }
        let half = rotate_region(&img, &mask, 180.0).unwrap();
        assert_eq!(half.mask, mask);
        let twice = rotate_region(&half.image, &half.mask, 180.0).unwrap();
        assert_eq!(twice.mask, mask);
        for (a, b) in twice.image.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rotate_180_flips_content() {
        let (img, mask) = scene();
        let out = rotate_region(&img, &mask, 180.0).unwrap();
        // centroid (16, 18); (12, 14) maps to (20, 22)
        assert_eq!(out.image.pixel(12 * 40 + 14), img.pixel(20 * 40 + 22));
    }

    fn disk(n: usize, r: f64) -> RegionMask {
        let c = (n as f64 - 1.0) / 2.0;
        RegionMask::from_fn(n, n, |y, x| (y as f64 - c).powi(2) + (x as f64 - c).powi(2) <= r * r)
    }

    #[test]
    fn expansion_scales_area() {
        let mask = disk(61, 10.0);
        let img = ImageTensor::from_fn(61, 61, 1, |y, x, _| if mask.get(y, x) { 0.9 } else { 0.1 });
        let area = mask.count() as f64;
        let grown = expand_region(&img, &mask, 2.0).unwrap();
        assert!((grown.mask.count() as f64 / area - 4.0).abs() <= 0.05 * 4.0);
        assert_eq!(grown.inpainted_pixels, 0);
        let shrunk = expand_region(&img, &mask, 0.5).unwrap();
        assert!((shrunk.mask.count() as f64 / area - 0.25).abs() <= 0.05 * 0.25);
        assert_eq!(shrunk.inpainted_pixels, mask.count() - shrunk.mask.count());
        // the annulus left behind is filled from the background
        assert!((shrunk.image.get(30, 30 + 8, 0) - 0.1).abs() < 1e-6);
        assert_eq!(expand_region(&img, &mask, 1.0).unwrap().image, img);
        assert!(expand_region(&img, &mask, 0.0).is_err());
    }

    #[test]
    fn remove_fills_and_preserves_rest() {
        let img = ImageTensor::filled(20, 20, 3, 0.3);
        let mask = square(20, 20, 5, 6, 6);
        let mut holed = img.clone();
        for i in mask.indices() {
            holed.set_pixel(i, &[0.9, 0.0, 0.4]);
        }
        let out = remove_region(&holed, &mask).unwrap();
        assert!(out.image.data().iter().all(|v| (v - 0.3).abs() < 1e-6));
        assert!(out.mask.is_empty());
        assert!(matches!(remove_region(&img, &RegionMask::full(20, 20)), Err(Error::MaskCoversEverything)));
    }

    #[test]
    fn untouched_pixels_are_bit_identical() {
        let img = ImageTensor::from_fn(30, 30, 3, |y, x, c| ((y * 3 + x * 5 + c * 7) % 17) as f64 / 17.0);
        let mask = square(30, 30, 8, 8, 7);
        for spec in [
            vec![EditOp::Shift { dx: 4.0, dy: -2.0 }],
            vec![EditOp::Rotate { angle: 37.0 }],
            vec![EditOp::Expand { power: 1.4 }],
            vec![EditOp::Expand { power: 0.6 }],
            vec![EditOp::Remove],
        ] {
            let out = apply_edits(&img, &mask, &EditSpec(spec.clone())).unwrap();
            for i in 0..900 {
                if !mask.at(i) && !out.mask.at(i) {
                    assert_eq!(out.image.pixel(i), img.pixel(i), "{spec:?} pixel {i}");
                }
            }
        }
    }

    #[test]
    fn removal_empties_mask_for_later_ops() {
        let (img, mask) = scene();
        let spec = EditSpec(vec![EditOp::Remove, EditOp::Shift { dx: 1.0, dy: 0.0 }]);
        assert!(matches!(apply_edits(&img, &mask, &spec), Err(Error::EmptyMask)));
    }

    #[test]
    fn validation() {
        let (img, mask) = scene();
        for op in [EditOp::Color { dr: 1.5, dg: 0.0, db: 0.0 }, EditOp::Expand { power: -1.0 }] {
            assert!(matches!(apply_edits(&img, &mask, &EditSpec(vec![op])), Err(Error::InvalidConfig(_))));
        }
        assert!(matches!(apply_edits(&img, &RegionMask::empty(40, 40), &EditSpec::default()), Err(Error::EmptyMask)));
    }
}
