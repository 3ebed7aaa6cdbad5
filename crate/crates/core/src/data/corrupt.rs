use serde::{Deserialize, Serialize};

use super::{ImageGeometry, Rng};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskSide {
    Top,
    Bottom,
    Left,
    Right,
}

fn default_fill() -> f64 {
    -1.0
}

/// How a retrieval cue is derived from a stored image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionSpec {
    /// Overwrite one half of the image (every channel) with `fill`.
    HalfMask {
        side: MaskSide,
        #[serde(default = "default_fill")]
        fill: f64,
    },
    /// Additive i.i.d. `N(0, sigma²)` noise. The result is left unclamped
    /// unless `clamp` is set.
    GaussianNoise {
        sigma: f64,
        #[serde(default)]
        clamp: bool,
    },
}

impl CorruptionSpec {
    pub fn half_mask(side: MaskSide) -> Self {
        Self::HalfMask { side, fill: -1.0 }
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self::GaussianNoise {
            sigma,
            clamp: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::GaussianNoise { sigma, .. } if !(sigma >= 0.0 && sigma.is_finite()) => Err(
                Error::Invalid(format!("noise sigma must be finite and >= 0, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    /// Short stable label, e.g. `mask_bottom` or `sigma_0.5`.
    pub fn label(&self) -> String {
        match self {
            Self::HalfMask { side, .. } => format!("mask_{}", format!("{side:?}").to_lowercase()),
            Self::GaussianNoise { sigma, .. } => format!("sigma_{sigma}"),
        }
    }

    /// Numeric tag used in RNG sub-stream derivation.
    pub fn stream_tag(&self) -> u64 {
        match *self {
            Self::HalfMask { side, .. } => side as u64,
            Self::GaussianNoise { sigma, .. } => 0x1000 ^ sigma.to_bits(),
        }
    }
}

/// True when pixel `(row, col)` falls in the masked half.
fn masked(side: MaskSide, row: usize, col: usize, g: &ImageGeometry) -> bool {
    // the kept half rounds up for odd sizes
    match side {
        MaskSide::Bottom => row >= g.height.div_ceil(2),
        MaskSide::Top => row < g.height / 2,
        MaskSide::Right => col >= g.width.div_ceil(2),
        MaskSide::Left => col < g.width / 2,
    }
}

/// Returns a corrupted copy of the channel-major image `x`.
pub fn corrupt(x: &[f64], spec: &CorruptionSpec, geometry: &ImageGeometry, rng: &mut Rng) -> Vec<f64> {
    let mut out = x.to_vec();
    match *spec {
        CorruptionSpec::HalfMask { side, fill } => {
            let plane = geometry.height * geometry.width;
            for (i, v) in out.iter_mut().enumerate() {
                let p = i % plane;
                if masked(side, p / geometry.width, p % geometry.width, geometry) {
                    *v = fill;
                }
            }
        }
        CorruptionSpec::GaussianNoise { sigma, clamp } => {
            if sigma > 0.0 {
                for v in out.iter_mut() {
                    *v += sigma * rng.normal();
                    if clamp {
                        *v = v.clamp(-1.0, 1.0);
                    }
                }
            }
        }
    }
    out
}
