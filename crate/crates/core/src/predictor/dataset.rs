//! Labeled image sets: IDX files (optionally gzip-compressed) or a directory
//! of PNGs with a `labels.csv`.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::GzDecoder;

use super::{digit_class_names, InputDims};
use crate::error::{Error, Result};
use crate::image::{decode_image, ImageTensor};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug)]
pub struct LabeledImages {
    pub images: Vec<ImageTensor>,
    pub labels: Vec<usize>,
    pub class_names: Arc<[String]>,
}

impl LabeledImages {
    pub fn new(images: Vec<ImageTensor>, labels: Vec<usize>, class_names: Arc<[String]>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Dataset(format!("{} images but {} labels", images.len(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::Dataset(format!("label {bad} outside {} classes", class_names.len())));
        }
        if let Some(first) = images.first() {
            let shape = (first.dims(), first.channels());
            if images.iter().any(|i| (i.dims(), i.channels()) != shape) {
                return Err(Error::Dataset("images differ in shape".into()));
            }
        }
        Ok(Self { images, labels, class_names })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dims(&self) -> Result<InputDims> {
        let first = self.images.first().ok_or_else(|| Error::Dataset("empty dataset".into()))?;
        Ok(InputDims::new(first.height(), first.width(), first.channels()))
    }

    pub fn truncate(mut self, n: usize) -> Self {
        self.images.truncate(n);
        self.labels.truncate(n);
        self
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Dataset("truncated IDX header".into()))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<ImageTensor>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Dataset(format!("IDX image magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let h = be_u32(bytes, 8)? as usize;
    let w = be_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    if body.len() < n * h * w {
        return Err(Error::Dataset(format!("IDX holds {} bytes, header promises {}", body.len(), n * h * w)));
    }
    body.chunks_exact(h * w)
        .take(n)
        .map(|px| ImageTensor::new(h, w, 1, px.iter().map(|&b| f64::from(b) / 255.0).collect()))
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Dataset(format!("IDX label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Dataset("truncated IDX labels".into()));
    }
    Ok(body[..n].iter().map(|&b| usize::from(b)).collect())
}

/// Serializes 8-bit grayscale images in IDX format.
pub fn encode_idx_images(images: &[ImageTensor]) -> Vec<u8> {
    let (h, w) = images.first().map_or((0, 0), |i| i.dims());
    let mut out = Vec::with_capacity(16 + images.len() * h * w);
    for v in [IDX_IMAGES_MAGIC, images.len() as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend(img.to_gray().data().iter().map(|&v| (v * 255.0).round() as u8));
    }
    out
}

pub fn encode_idx_labels(labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend(labels.iter().map(|&l| l as u8));
    out
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledImages> {
    let imgs = parse_idx_images(&read_maybe_gz(images)?)?;
    let labels = parse_idx_labels(&read_maybe_gz(labels)?)?;
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    let names = if classes == 10 { digit_class_names() } else { (0..classes).map(|c| c.to_string()).collect::<Vec<_>>().into() };
    LabeledImages::new(imgs, labels, names)
}

/// Loads `labels.csv` (`filename,label` rows; a non-numeric first row is
/// treated as a header) and the PNG/JPEG files it names.
pub fn load_png_dir(dir: &Path) -> Result<LabeledImages> {
    let csv = std::fs::read_to_string(dir.join("labels.csv"))
        .map_err(|e| Error::Dataset(format!("{}: {e}", dir.join("labels.csv").display())))?;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (row, line) in csv.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (file, label) = line
            .split_once(',')
            .ok_or_else(|| Error::Dataset(format!("labels.csv row {}: expected filename,label", row + 1)))?;
        let label = match label.trim().parse::<usize>() {
            Ok(l) => l,
            Err(_) if row == 0 => continue,
            Err(_) => return Err(Error::Dataset(format!("labels.csv row {}: bad label {label:?}", row + 1))),
        };
        let bytes = std::fs::read(dir.join(file.trim()))?;
        images.push(decode_image(&bytes)?);
        labels.push(label);
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    let names: Arc<[String]> = (0..classes).map(|c| c.to_string()).collect::<Vec<_>>().into();
    LabeledImages::new(images, labels, names)
}

/// Train and test splits found in a dataset directory.
#[derive(Clone, Debug)]
pub struct DatasetSplits {
    pub train: Option<LabeledImages>,
    pub test: LabeledImages,
}

fn find_idx(dir: &Path, stem: &str) -> Option<PathBuf> {
    [stem.to_string(), format!("{stem}.gz")].into_iter().map(|f| dir.join(f)).find(|p| p.is_file())
}

/// MNIST-style IDX files (`train-*`, `t10k-*`) or a PNG directory. A PNG
/// directory provides only a test split.
pub fn load_dataset_dir(dir: &Path) -> Result<DatasetSplits> {
    if let (Some(ti), Some(tl)) = (find_idx(dir, "t10k-images-idx3-ubyte"), find_idx(dir, "t10k-labels-idx1-ubyte")) {
        let test = load_idx(&ti, &tl)?;
        let train = match (find_idx(dir, "train-images-idx3-ubyte"), find_idx(dir, "train-labels-idx1-ubyte")) {
            (Some(i), Some(l)) => Some(load_idx(&i, &l)?),
            _ => None,
        };
        return Ok(DatasetSplits { train, test });
    }
    if dir.join("labels.csv").is_file() {
        return Ok(DatasetSplits { train: None, test: load_png_dir(dir)? });
    }
    Err(Error::Dataset(format!("{}: no IDX files or labels.csv", dir.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_round_trip_and_magic() {
        let imgs: Vec<_> = (0..3).map(|k| ImageTensor::from_fn(2, 3, 1, |y, x, _| ((k + y + x) * 40) as f64 / 255.0)).collect();
        let bytes = encode_idx_images(&imgs);
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        assert_eq!(parse_idx_images(&bytes).unwrap(), imgs);
        let lb = encode_idx_labels(&[3, 1, 4]);
        assert_eq!(&lb[..4], &[0, 0, 8, 1]);
        assert_eq!(parse_idx_labels(&lb).unwrap(), vec![3, 1, 4]);
        assert!(parse_idx_images(&lb).is_err());
        assert!(parse_idx_labels(&bytes[..6]).is_err());
    }

    #[test]
    fn loads_gz_and_png_dirs() {
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let imgs: Vec<_> = (0..4).map(|k| ImageTensor::filled(4, 4, 1, k as f64 / 4.0)).collect();
        let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
        gz.write_all(&encode_idx_images(&imgs)).unwrap();
        std::fs::write(dir.path().join("t10k-images-idx3-ubyte.gz"), gz.finish().unwrap()).unwrap();
        std::fs::write(dir.path().join("t10k-labels-idx1-ubyte"), encode_idx_labels(&[0, 1, 2, 3])).unwrap();
        let splits = load_dataset_dir(dir.path()).unwrap();
        assert!(splits.train.is_none());
        assert_eq!(splits.test.len(), 4);
        assert_eq!(splits.test.labels, vec![0, 1, 2, 3]);

        let png_dir = tempfile::tempdir().unwrap();
        std::fs::write(png_dir.path().join("a.png"), imgs[1].encode_png()).unwrap();
        std::fs::write(png_dir.path().join("b.png"), imgs[2].encode_png()).unwrap();
        std::fs::write(png_dir.path().join("labels.csv"), "filename,label\na.png,7\nb.png,2\n").unwrap();
        let splits = load_dataset_dir(png_dir.path()).unwrap();
        assert_eq!(splits.test.labels, vec![7, 2]);
        assert!(load_dataset_dir(tempfile::tempdir().unwrap().path()).is_err());
    }
}
