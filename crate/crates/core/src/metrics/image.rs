use crate::datamodel::{PixelMask, RawImage};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_dims<T: Scalar>(a: &RawImage<T>, b: &RawImage<T>) -> Result<()> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::shape(format!(
            "images are {}x{} and {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// Mean absolute difference over every entry, on the `[0,1]` scale.
pub fn l1_distance<T: Scalar>(a: &RawImage<T>, b: &RawImage<T>) -> Result<f64> {
    same_dims(a, b)?;
    let sum: f64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x.as_f64() - y.as_f64()).abs()).sum();
    Ok(sum / a.pixels().len() as f64)
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-(i as f64 - mid).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable valid-mode filtering of one `h x w` plane.
fn filter(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (i, kv) in k.iter().enumerate() {
            let src = &rows[(y + i) * ow..(y + i + 1) * ow];
            for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += kv * s;
            }
        }
    }
    out
}

/// Structural similarity with an 11x11 Gaussian window (sigma 1.5) and unit dynamic range,
/// averaged over channels and every fully covered window position.
pub fn ssim<T: Scalar>(a: &RawImage<T>, b: &RawImage<T>) -> Result<f64> {
    same_dims(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "SSIM needs both sides at least {SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let k = gaussian_window();
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        let plane = |img: &RawImage<T>| -> Vec<f64> {
            (0..h * w).map(|i| img.get(i / w, i % w, c).as_f64()).collect()
        };
        let (x, y) = (plane(a), plane(b));
        let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
        let mx = filter(&x, h, w, &k);
        let my = filter(&y, h, w, &k);
        let mxx = filter(&prod(&x, &x), h, w, &k);
        let myy = filter(&prod(&y, &y), h, w, &k);
        let mxy = filter(&prod(&x, &y), h, w, &k);
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cov = mxy[i] - ux * uy;
            total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        count += mx.len();
    }
    Ok(total / count as f64)
}

/// Copy of `img` with every pixel outside `mask` set to 0.
pub fn apply_mask<T: Scalar>(img: &RawImage<T>, mask: &PixelMask) -> Result<RawImage<T>> {
    if (img.height(), img.width()) != (mask.height(), mask.width()) {
        return Err(Error::shape(format!(
            "{}x{} mask for a {}x{} image",
            mask.height(),
            mask.width(),
            img.height(),
            img.width()
        )));
    }
    RawImage::from_fn(img.height(), img.width(), |y, x, c| {
        if mask.get(y, x) {
            img.get(y, x, c)
        } else {
            T::zero()
        }
    })
}

/// Both images with the background (mask 0) zeroed, ready for L1, SSIM or embedding.
pub fn masked_metrics<T: Scalar>(
    pred: &RawImage<T>,
    gt: &RawImage<T>,
    mask: &PixelMask,
) -> Result<(RawImage<T>, RawImage<T>)> {
    same_dims(pred, gt)?;
    Ok((apply_mask(pred, mask)?, apply_mask(gt, mask)?))
}
