//! Dataset loading, stored-pattern selection and cue corruption.
//!
//! Pixels are held in `[-1, 1]` (byte `b` maps to `b / 127.5 - 1`) and each
//! image is flattened channel-major, row-major within a channel.

mod corrupt;
mod loaders;
mod rng;

pub use corrupt::{corrupt, CorruptionSpec, MaskSide};
pub use loaders::{
    byte_to_unit, encode_idx_images, encode_idx_labels, load_cifar10, load_mnist,
    CIFAR_RECORD_LEN, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use rng::Rng;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageGeometry {
    pub fn dim(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// A set of images (one per row of `images`) with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<u8>,
    pub geometry: ImageGeometry,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        self.images.row_slice(i)
    }

    /// New dataset holding rows `indices` in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.geometry.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        Dataset {
            images: Tensor::new(vec![indices.len(), d], data).expect("subset shape"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            geometry: self.geometry,
        }
    }
}

/// Indices of a class-stratified random subset of size `n`: classes are
/// visited round-robin in label order, each contributing its next randomly
/// ordered member.
pub fn select_indices(ds: &Dataset, n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if n > ds.len() {
        return Err(Error::Capacity {
            requested: n,
            available: ds.len(),
        });
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); 10];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[usize::from(l)].push(i);
    }
    for members in by_class.iter_mut() {
        rng.shuffle(members);
    }
    let mut cursors = vec![0usize; 10];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        for (class, members) in by_class.iter().enumerate() {
            if out.len() == n {
                break;
            }
            if cursors[class] < members.len() {
                out.push(members[cursors[class]]);
                cursors[class] += 1;
            }
        }
    }
    Ok(out)
}

pub fn select_patterns(ds: &Dataset, n: usize, rng: &mut Rng) -> Result<Dataset> {
    let idx = select_indices(ds, n, rng)?;
    Ok(ds.subset(&idx))
}
