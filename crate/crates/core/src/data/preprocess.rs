use ndarray::Array2;

use super::FingerprintSample;
use crate::{Error, Result};

/// `side` must be positive and divisible by `2^depth` so every pooling
/// level halves exactly.
pub fn validate_side(side: usize, depth: usize) -> Result<()> {
    let unit = 1usize << depth;
    if side == 0 || !side.is_multiple_of(unit) {
        return Err(Error::Config(format!(
            "input side {side} is not a positive multiple of 2^{depth} = {unit}"
        )));
    }
    Ok(())
}

/// Half-pixel-centred bilinear resampling to `(out_h, out_w)`.
pub fn resize_bilinear(src: &Array2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (h, w) = src.dim();
    if (h, w) == (out_h, out_w) {
        return src.clone();
    }
    let coord = |d: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let s = ((d as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let ys: Vec<_> = (0..out_h).map(|y| coord(y, h, out_h)).collect();
    let xs: Vec<_> = (0..out_w).map(|x| coord(x, w, out_w)).collect();
    Array2::from_shape_fn((out_h, out_w), |(y, x)| {
        let (y0, y1, fy) = ys[y];
        let (x0, x1, fx) = xs[x];
        let top = src[[y0, x0]] * (1.0 - fx) + src[[y0, x1]] * fx;
        let bottom = src[[y1, x0]] * (1.0 - fx) + src[[y1, x1]] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Nearest-neighbour resampling; preserves the value set of `src`.
pub fn resize_nearest<T: Copy>(src: &Array2<T>, out_h: usize, out_w: usize) -> Array2<T> {
    let (h, w) = src.dim();
    let pick = |d: usize, n_in: usize, n_out: usize| -> usize {
        (((d as f64 + 0.5) * n_in as f64 / n_out as f64).floor() as usize).min(n_in - 1)
    };
    let ys: Vec<usize> = (0..out_h).map(|y| pick(y, h, out_h)).collect();
    let xs: Vec<usize> = (0..out_w).map(|x| pick(x, w, out_w)).collect();
    Array2::from_shape_fn((out_h, out_w), |(y, x)| src[[ys[y], xs[x]]])
}

/// Resamples a sample to `side × side`: bilinear for the image, nearest for
/// the mask. `native_size` is kept so predictions can be mapped back.
pub fn preprocess(
    sample: &FingerprintSample,
    side: usize,
    depth: usize,
) -> Result<FingerprintSample> {
    validate_side(side, depth)?;
    let mut out = sample.clone();
    out.image = resize_bilinear(&sample.image, side, side);
    out.mask = sample.mask.as_ref().map(|m| resize_nearest(m, side, side));
    Ok(out)
}
