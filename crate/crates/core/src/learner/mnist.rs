//! IDX reader for the MNIST files (big-endian 32-bit header fields).

use std::fs;
use std::path::Path;

use super::{Dataset, LearnerError};

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;
const MNIST_CLASSES: usize = 10;

fn format_err(field: &'static str, reason: impl Into<String>) -> LearnerError {
    LearnerError::Format { field, reason: reason.into() }
}

fn read_u32(bytes: &[u8], offset: usize, field: &'static str) -> Result<u32, LearnerError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(field, format!("file truncated at byte {offset}")))
}

/// Parses an image file. Returns `(count, rows, cols, pixels)` with pixels
/// scaled into `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f64>), LearnerError> {
    let magic = read_u32(bytes, 0, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(format_err("image magic", format!("expected 0x{IMAGE_MAGIC:08x}, found 0x{magic:08x}")));
    }
    let count = read_u32(bytes, 4, "image count")? as usize;
    let rows = read_u32(bytes, 8, "image rows")? as usize;
    let cols = read_u32(bytes, 12, "image cols")? as usize;
    let body = &bytes[16..];
    let expected = count * rows * cols;
    if body.len() != expected {
        return Err(format_err(
            "image pixels",
            format!("expected {expected} bytes for {count}x{rows}x{cols}, found {}", body.len()),
        ));
    }
    Ok((count, rows, cols, body.iter().map(|&p| f64::from(p) / 255.0).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>, LearnerError> {
    let magic = read_u32(bytes, 0, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(format_err("label magic", format!("expected 0x{LABEL_MAGIC:08x}, found 0x{magic:08x}")));
    }
    let count = read_u32(bytes, 4, "label count")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(format_err("labels", format!("expected {count} bytes, found {}", body.len())));
    }
    Ok(body.iter().map(|&l| usize::from(l)).collect())
}

fn read_file(path: &Path) -> Result<Vec<u8>, LearnerError> {
    fs::read(path).map_err(|source| LearnerError::Io { path: path.display().to_string(), source })
}

pub fn load_mnist(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset, LearnerError> {
    let (count, rows, cols, pixels) = parse_idx_images(&read_file(images.as_ref())?)?;
    let labels = parse_idx_labels(&read_file(labels.as_ref())?)?;
    if labels.len() != count {
        return Err(format_err("label count", format!("{} labels for {count} images", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= MNIST_CLASSES) {
        return Err(format_err("labels", format!("label {bad} is not a digit")));
    }
    Dataset::new(pixels, labels, rows * cols, MNIST_CLASSES)
}

/// Loads the standard training files from `dir`, optionally keeping only
/// the first `limit` examples.
pub fn load_mnist_dir(dir: impl AsRef<Path>, limit: Option<usize>) -> Result<Dataset, LearnerError> {
    let dir = dir.as_ref();
    let data = load_mnist(dir.join(MNIST_TRAIN_IMAGES), dir.join(MNIST_TRAIN_LABELS))?;
    Ok(match limit {
        Some(k) if k < data.len() => data.subset(&(0..k).collect::<Vec<_>>()),
        _ => data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGE_MAGIC, count, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn labels(values: &[u8]) -> Vec<u8> {
        let mut b = LABEL_MAGIC.to_be_bytes().to_vec();
        b.extend_from_slice(&(values.len() as u32).to_be_bytes());
        b.extend_from_slice(values);
        b
    }

    #[test]
    fn parses_and_scales_pixels() {
        let (count, rows, cols, px) = parse_idx_images(&images(2, 1, 2, &[0, 255, 51, 102])).unwrap();
        assert_eq!((count, rows, cols), (2, 1, 2));
        assert_eq!(px, vec![0.0, 1.0, 0.2, 0.4]);
        assert_eq!(parse_idx_labels(&labels(&[3, 7])).unwrap(), vec![3, 7]);
    }

    #[test]
    fn format_errors_name_the_field() {
        let field = |e: LearnerError| match e {
            LearnerError::Format { field, .. } => field,
            other => panic!("unexpected {other}"),
        };
        assert_eq!(field(parse_idx_images(&[]).unwrap_err()), "image magic");
        assert_eq!(field(parse_idx_images(&labels(&[1])).unwrap_err()), "image magic");
        assert_eq!(field(parse_idx_images(&images(2, 1, 2, &[0, 1, 2])).unwrap_err()), "image pixels");
        assert_eq!(field(parse_idx_images(&images(2, 1, 2, &[])[..10]).unwrap_err()), "image rows");
        assert_eq!(field(parse_idx_labels(&[]).unwrap_err()), "label magic");
        let mut short = labels(&[1, 2]);
        short.pop();
        assert_eq!(field(parse_idx_labels(&short).unwrap_err()), "labels");
    }

    #[test]
    fn count_mismatch_between_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MNIST_TRAIN_IMAGES), images(2, 2, 2, &[9; 8])).unwrap();
        fs::write(dir.path().join(MNIST_TRAIN_LABELS), labels(&[1, 2, 3])).unwrap();
        let err = load_mnist_dir(dir.path(), None).unwrap_err();
        assert!(matches!(err, LearnerError::Format { field: "label count", .. }), "{err}");

        fs::write(dir.path().join(MNIST_TRAIN_LABELS), labels(&[1, 2])).unwrap();
        let data = load_mnist_dir(dir.path(), None).unwrap();
        assert_eq!((data.len(), data.input_dim()), (2, 4));
        assert_eq!(load_mnist_dir(dir.path(), Some(1)).unwrap().len(), 1);
    }

    #[test]
    fn empty_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        fs::write(&img, b"").unwrap();
        fs::write(&lbl, labels(&[])).unwrap();
        assert!(matches!(load_mnist(&img, &lbl), Err(LearnerError::Format { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_mnist("/nonexistent/a", "/nonexistent/b"), Err(LearnerError::Io { .. })));
    }
}
