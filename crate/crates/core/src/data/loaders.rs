use std::path::{Path, PathBuf};

use super::{Dataset, ImageGeometry};
use crate::error::{Error, Result};
use crate::ndgrad::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 32 * 32;

/// `[0, 255]` byte to `[-1, 1]`.
pub fn byte_to_unit(b: u8) -> f64 {
    f64::from(b) / 127.5 - 1.0
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Length {
            path: path.to_path_buf(),
            msg: format!("truncated header ({} bytes)", bytes.len()),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            found,
            expected,
        });
    }
    Ok(())
}

/// Parses an IDX3 image file and its IDX1 label file.
pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = read(images_path)?;
    let lab = read(labels_path)?;
    check_magic(&img, IDX_IMAGES_MAGIC, images_path)?;
    check_magic(&lab, IDX_LABELS_MAGIC, labels_path)?;

    let count = be_u32(&img, 4, images_path)? as usize;
    let rows = be_u32(&img, 8, images_path)? as usize;
    let cols = be_u32(&img, 12, images_path)? as usize;
    let n_labels = be_u32(&lab, 4, labels_path)? as usize;

    let pixels = rows * cols;
    let need = 16 + count * pixels;
    if img.len() < need {
        return Err(Error::Length {
            path: images_path.to_path_buf(),
            msg: format!("expected {need} bytes for {count} images, found {}", img.len()),
        });
    }
    if lab.len() < 8 + n_labels {
        return Err(Error::Length {
            path: labels_path.to_path_buf(),
            msg: format!(
                "expected {} bytes for {n_labels} labels, found {}",
                8 + n_labels,
                lab.len()
            ),
        });
    }
    if n_labels != count {
        return Err(Error::Consistency(format!(
            "{} holds {count} images but {} holds {n_labels} labels",
            images_path.display(),
            labels_path.display()
        )));
    }

    let data = img[16..need].iter().map(|&b| byte_to_unit(b)).collect();
    let labels = lab[8..8 + count].to_vec();
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(Error::Label {
            path: labels_path.to_path_buf(),
            record: pos,
            label: labels[pos],
        });
    }
    Ok(Dataset {
        images: Tensor::new(vec![count, pixels], data)?,
        labels,
        geometry: ImageGeometry {
            channels: 1,
            height: rows,
            width: cols,
        },
    })
}

/// Parses one or more CIFAR-10 binary batches (`<label><R plane><G plane><B plane>` records).
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for p in batch_paths {
        let path = p.as_ref();
        let bytes = read(path)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD_LEN != 0 {
            return Err(Error::Length {
                path: PathBuf::from(path),
                msg: format!(
                    "{} bytes is not a whole number of {CIFAR_RECORD_LEN}-byte records",
                    bytes.len()
                ),
            });
        }
        for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
            if rec[0] > 9 {
                return Err(Error::Label {
                    path: PathBuf::from(path),
                    record: i,
                    label: rec[0],
                });
            }
            labels.push(rec[0]);
            data.extend(rec[1..].iter().map(|&b| byte_to_unit(b)));
        }
    }
    let n = labels.len();
    Ok(Dataset {
        images: Tensor::new(vec![n, CIFAR_RECORD_LEN - 1], data)?,
        labels,
        geometry: ImageGeometry {
            channels: 3,
            height: 32,
            width: 32,
        },
    })
}

/// IDX3 image bytes for `count` images of `rows × cols`.
pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn endpoint_mapping() {
        assert_eq!(byte_to_unit(0), -1.0);
        assert_eq!(byte_to_unit(255), 1.0);
        assert!((byte_to_unit(127) - (-0.003_921_568_627_450_98)).abs() < 1e-15);
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..2 * 4 * 3).map(|i| (i * 11) as u8).collect();
        let ip = write(dir.path(), "img", &encode_idx_images(4, 3, &pixels));
        let lp = write(dir.path(), "lab", &encode_idx_labels(&[7, 2]));
        let ds = load_mnist(&ip, &lp).unwrap();
        assert_eq!(ds.images.shape(), &[2, 12]);
        assert_eq!(ds.labels, vec![7, 2]);
        assert_eq!(ds.geometry.dim(), 12);
        for (v, b) in ds.images.data().iter().zip(&pixels) {
            assert_eq!(*v, byte_to_unit(*b));
        }
    }

    #[test]
    fn idx_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = encode_idx_images(2, 2, &[0; 4]);
        bytes[..4].copy_from_slice(&[0, 0, 0, 0]);
        let ip = write(dir.path(), "img", &bytes);
        let lp = write(dir.path(), "lab", &encode_idx_labels(&[1]));
        assert!(matches!(load_mnist(&ip, &lp), Err(Error::Format { found: 0, .. })));
    }

    #[test]
    fn idx_truncated_and_mismatched() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = encode_idx_images(2, 2, &[0; 8]);
        bytes.pop();
        let ip = write(dir.path(), "img", &bytes);
        let lp = write(dir.path(), "lab", &encode_idx_labels(&[1, 2]));
        assert!(matches!(load_mnist(&ip, &lp), Err(Error::Length { .. })));

        let ip = write(dir.path(), "img2", &encode_idx_images(2, 2, &[0; 8]));
        let lp = write(dir.path(), "lab2", &encode_idx_labels(&[1, 2, 3]));
        assert!(matches!(load_mnist(&ip, &lp), Err(Error::Consistency(_))));
    }

    #[test]
    fn cifar_round_trip_keeps_planar_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = vec![3u8];
        rec.extend(std::iter::repeat(0u8).take(1024));
        rec.extend(std::iter::repeat(127u8).take(1024));
        rec.extend(std::iter::repeat(255u8).take(1024));
        let p = write(dir.path(), "b.bin", &rec);
        let ds = load_cifar10(&[p]).unwrap();
        assert_eq!(ds.labels, vec![3]);
        let px = ds.images.data();
        assert_eq!(px[0], -1.0);
        assert!((px[1024] + 0.0039).abs() < 1e-4);
        assert_eq!(px[3071], 1.0);
    }

    #[test]
    fn cifar_length_and_label_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "short.bin", &[0u8; 3074]);
        assert!(matches!(load_cifar10(&[p]), Err(Error::Length { .. })));
        let mut rec = vec![0u8; CIFAR_RECORD_LEN];
        rec[0] = 10;
        let p = write(dir.path(), "lab.bin", &rec);
        assert!(matches!(load_cifar10(&[p]), Err(Error::Label { label: 10, .. })));
    }
}
