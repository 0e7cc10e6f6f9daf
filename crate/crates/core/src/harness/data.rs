//! Synthetic datasets and image resampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::Sample;
use crate::tensor::Tensor;

/// Gaussian blobs: class `k` is centred at `scale · e_{k mod dims}` (with the
/// sign flipped for every second wrap when `classes > dims`), and points are
/// spread with standard deviation `spread`. Samples are interleaved by class.
pub fn gen_blobs(
    n_per_class: usize,
    dims: usize,
    classes: usize,
    spread: f64,
    scale: f64,
    seed: u64,
) -> Result<Vec<Sample>> {
    if classes < 2 {
        return Err(Error::InvalidArgument("blobs need at least two classes".into()));
    }
    if dims == 0 || n_per_class == 0 {
        return Err(Error::InvalidArgument("blobs need positive dims and class size".into()));
    }
    if classes > 2 * dims {
        return Err(Error::InvalidArgument(format!(
            "{classes} classes do not fit on the axes of a {dims}-dimensional space"
        )));
    }
    if !(spread >= 0.0) {
        return Err(Error::InvalidArgument(format!("spread must be non-negative, got {spread}")));
    }
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|k| {
            let mut c = vec![0.0; dims];
            c[k % dims] = if (k / dims) % 2 == 0 { scale } else { -scale };
            c
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spread.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut out = Vec::with_capacity(n_per_class * classes);
    for _ in 0..n_per_class {
        for (label, center) in centers.iter().enumerate() {
            let x: Vec<f64> = center
                .iter()
                .map(|&c| if spread == 0.0 { c } else { c + noise.sample(&mut rng) })
                .collect();
            out.push(Sample { x: Tensor::vector(x)?, label });
        }
    }
    Ok(out)
}

/// Non-overlapping `k x k` block means of a 2-D image.
pub fn downsample(image: &Tensor, k: usize) -> Result<Tensor> {
    let shape = image.shape();
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch(format!("downsample needs a 2-D image, got {shape:?}")));
    }
    let (rows, cols) = (shape[0], shape[1]);
    if k == 0 || rows % k != 0 || cols % k != 0 {
        return Err(Error::InvalidArgument(format!(
            "{rows}x{cols} image is not divisible by factor {k}"
        )));
    }
    let (out_r, out_c) = (rows / k, cols / k);
    let area = (k * k) as f64;
    let mut data = Vec::with_capacity(out_r * out_c);
    for br in 0..out_r {
        for bc in 0..out_c {
            let mut sum = 0.0;
            for r in br * k..(br + 1) * k {
                for c in bc * k..(bc + 1) * k {
                    sum += image.at(r, c);
                }
            }
            data.push(sum / area);
        }
    }
    Tensor::matrix(out_r, out_c, data)
}

/// Smooth random images in `[0, 1]`: a sum of a few random 2-D cosine waves,
/// rescaled to the unit range. Used where no image files are available.
pub fn gen_smooth_image(rows: usize, cols: usize, seed: u64) -> Result<Tensor> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.2..1.2),
                rng.random_range(0.2..1.2),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.5..1.0),
            )
        })
        .collect();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let v: f64 = waves
                .iter()
                .map(|&(fr, fc, ph, amp)| amp * (fr * r as f64 + fc * c as f64 + ph).cos())
                .sum();
            data.push(v);
        }
    }
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    Tensor::matrix(rows, cols, data.into_iter().map(|v| (v - lo) / span).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{self, Activation, MlpSpec, Params};

    #[test]
    fn zero_spread_puts_points_on_centers() {
        let data = gen_blobs(5, 3, 3, 0.0, 2.0, 1).unwrap();
        for s in &data {
            let mut c = vec![0.0; 3];
            c[s.label] = 2.0;
            assert_eq!(s.x.data(), c.as_slice());
        }
    }

    #[test]
    fn blobs_are_deterministic() {
        assert_eq!(gen_blobs(10, 4, 3, 0.3, 1.0, 7).unwrap(), gen_blobs(10, 4, 3, 0.3, 1.0, 7).unwrap());
        assert!(gen_blobs(10, 4, 1, 0.3, 1.0, 7).is_err());
    }

    #[test]
    fn separable_blobs_train_to_full_accuracy() {
        // Centers at distance 2 (scale sqrt(2) on orthogonal axes).
        let data = gen_blobs(50, 2, 2, 0.1, 2f64.sqrt(), 3).unwrap();
        let spec = MlpSpec::new(vec![2, 2], Activation::Tanh).unwrap();
        let mut p = Params::zeros(&spec);
        for _ in 0..200 {
            let (_, g) = nn::batch_loss_and_grad(&spec, &p, &data).unwrap();
            p = nn::sgd_step(&p, &g, 0.5).unwrap();
        }
        assert_eq!(nn::accuracy(&spec, &p, &data).unwrap(), 1.0);
    }

    #[test]
    fn downsample_block_means() {
        let img = Tensor::matrix(2, 2, vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        assert_eq!(downsample(&img, 2).unwrap().data(), &[3.0]);
        let flat = Tensor::matrix(4, 6, vec![5.0; 24]).unwrap();
        assert!(downsample(&flat, 2).unwrap().data().iter().all(|&v| v == 5.0));
        assert!(downsample(&flat, 4).is_err());
    }

    #[test]
    fn downsample_preserves_mean() {
        let img = gen_smooth_image(28, 28, 4).unwrap().map(|v| (v * 255.0).round());
        let small = downsample(&img, 2).unwrap();
        assert_eq!(small.shape(), &[14, 14]);
        assert!((small.mean() - img.mean()).abs() < 1e-12);
    }

    #[test]
    fn smooth_images_span_unit_range() {
        let img = gen_smooth_image(8, 8, 1).unwrap();
        let lo = img.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = img.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (0.0, 1.0));
    }
}
