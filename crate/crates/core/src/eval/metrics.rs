use crate::data::ImageGeometry;
use crate::error::{Error, Result};

/// Retrieval threshold on the summed squared error over raw `[-1, 1]` pixels.
/// It does not scale with image size.
pub const SSE_THRESHOLD: f64 = 50.0;

/// Fraction of latent signs that must agree for a latent-space hit.
pub const LATENT_AGREEMENT: f64 = 0.99;

fn same_len(a: &[f64], b: &[f64], op: &'static str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            op,
            lhs: vec![a.len()],
            rhs: vec![b.len()],
        });
    }
    Ok(())
}

pub fn sse(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b, "sse")?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `Σ (x̂ᵢ − xᵢ)² ≤ threshold`, boundary included.
pub fn retrieval_correct(x_hat: &[f64], x: &[f64], threshold: f64) -> Result<bool> {
    Ok(sse(x_hat, x)? <= threshold)
}

fn sign(v: f64) -> bool {
    v >= 0.0
}

/// Number of components whose signs agree, treating zero as positive.
pub fn sign_agreements(v: &[f64], z: &[f64]) -> Result<usize> {
    same_len(v, z, "sign_agreements")?;
    Ok(v.iter().zip(z).filter(|(a, b)| sign(**a) == sign(**b)).count())
}

/// True when at least `⌈fraction · N⌉` signs agree.
pub fn latent_correct_frac(v: &[f64], z: &[f64], fraction: f64) -> Result<bool> {
    let agree = sign_agreements(v, z)?;
    // the small slack keeps 0.99 · 100 from rounding up to 100
    let need = (fraction * v.len() as f64 - 1e-9).ceil();
    Ok(agree as f64 >= need)
}

pub fn latent_correct(v: &[f64], z: &[f64]) -> Result<bool> {
    latent_correct_frac(v, z, LATENT_AGREEMENT)
}

/// Mean squared error per pixel of one image pair.
pub fn mse_metric(x_hat: &[f64], x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Invalid("mse of empty images".into()));
    }
    Ok(sse(x_hat, x)? / x.len() as f64)
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_RANGE: f64 = 2.0;
const SSIM_C1: f64 = (0.01 * SSIM_RANGE) * (0.01 * SSIM_RANGE);
const SSIM_C2: f64 = (0.03 * SSIM_RANGE) * (0.03 * SSIM_RANGE);

fn gaussian_taps(len: usize) -> Vec<f64> {
    let c = (len as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over channels and every window position that fits inside the
/// image. Images smaller than the window use a window cropped to the image.
pub fn ssim_metric(x_hat: &[f64], x: &[f64], geometry: &ImageGeometry) -> Result<f64> {
    same_len(x_hat, x, "ssim")?;
    let ImageGeometry {
        channels,
        height: h,
        width: w,
    } = *geometry;
    if channels * h * w == 0 {
        return Err(Error::Invalid("ssim of zero-size image".into()));
    }
    if x.len() != geometry.dim() {
        return Err(Error::Shape {
            op: "ssim",
            lhs: vec![x.len()],
            rhs: vec![channels, h, w],
        });
    }
    let wh = SSIM_WINDOW.min(h);
    let ww = SSIM_WINDOW.min(w);
    let gy = gaussian_taps(wh);
    let gx = gaussian_taps(ww);
    let (oh, ow) = (h - wh + 1, w - ww + 1);
    let mut total = 0.0;
    for c in 0..channels {
        let a = &x_hat[c * h * w..(c + 1) * h * w];
        let b = &x[c * h * w..(c + 1) * h * w];
        for r0 in 0..oh {
            for c0 in 0..ow {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, &ky) in gy.iter().enumerate() {
                    let row = (r0 + i) * w + c0;
                    for (j, &kx) in gx.iter().enumerate() {
                        let k = ky * kx;
                        let (p, q) = (a[row + j], b[row + j]);
                        ma += k * p;
                        mb += k * q;
                        saa += k * p * p;
                        sbb += k * q * q;
                        sab += k * p * q;
                    }
                }
                let va = saa - ma * ma;
                let vb = sbb - mb * mb;
                let cov = sab - ma * mb;
                total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            }
        }
    }
    Ok(total / (channels * oh * ow) as f64)
}
