//! Reconstruction-quality metrics: MSE, PSNR and a uniform-window SSIM.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// A reference image and a candidate of the same shape.
#[derive(Debug, Clone, Copy)]
pub struct ImagePair<'a> {
    reference: &'a Tensor,
    candidate: &'a Tensor,
    value_range: f64,
}

impl<'a> ImagePair<'a> {
    pub fn new(reference: &'a Tensor, candidate: &'a Tensor, value_range: f64) -> Result<Self> {
        if !reference.same_shape(candidate) {
            return Err(Error::ShapeMismatch(format!(
                "reference {:?} vs candidate {:?}",
                reference.shape(),
                candidate.shape()
            )));
        }
        if !(value_range > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "value range must be positive, got {value_range}"
            )));
        }
        Ok(Self { reference, candidate, value_range })
    }

    pub fn value_range(&self) -> f64 {
        self.value_range
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quality {
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn mse(pair: &ImagePair) -> f64 {
    let a = pair.reference.data();
    let b = pair.candidate.data();
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// PSNR in dB for a given MSE; `+inf` when the images are identical.
pub fn psnr_from_mse(mse: f64, value_range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (value_range * value_range / mse).log10()
    }
}

pub fn psnr(pair: &ImagePair) -> f64 {
    psnr_from_mse(mse(pair), pair.value_range)
}

/// Mean SSIM over every `window x window` patch (stride 1) of a 2-D image.
pub fn ssim(pair: &ImagePair, window: usize, k1: f64, k2: f64) -> Result<f64> {
    let shape = pair.reference.shape();
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch(format!("SSIM needs a 2-D image, got {shape:?}")));
    }
    let (rows, cols) = (shape[0], shape[1]);
    if window == 0 || rows < window || cols < window {
        return Err(Error::InvalidArgument(format!(
            "image {rows}x{cols} is smaller than the {window}x{window} window"
        )));
    }
    let c1 = (k1 * pair.value_range).powi(2);
    let c2 = (k2 * pair.value_range).powi(2);
    let x = pair.reference;
    let y = pair.candidate;
    let n = (window * window) as f64;

    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=rows - window {
        for c0 in 0..=cols - window {
            let (mut sx, mut sy) = (0.0, 0.0);
            for r in r0..r0 + window {
                for c in c0..c0 + window {
                    sx += x.at(r, c);
                    sy += y.at(r, c);
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for r in r0..r0 + window {
                for c in c0..c0 + window {
                    let dx = x.at(r, c) - mx;
                    let dy = y.at(r, c) - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cxy += dx * dy;
                }
            }
            let (vx, vy, cxy) = (vx / n, vy / n, cxy / n);
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// MSE, PSNR and SSIM with the default window and constants. Images smaller
/// than the window are scored with a single whole-image window.
pub fn quality(pair: &ImagePair) -> Result<Quality> {
    let shape = pair.reference.shape();
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch(format!("expected a 2-D image, got {shape:?}")));
    }
    let window = SSIM_WINDOW.min(shape[0]).min(shape[1]);
    let m = mse(pair);
    Ok(Quality {
        mse: m,
        psnr: psnr_from_mse(m, pair.value_range),
        ssim: ssim(pair, window, SSIM_K1, SSIM_K2)?,
    })
}
