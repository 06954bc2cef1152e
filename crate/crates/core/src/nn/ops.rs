use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Sum with eight independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn sum<T: Scalar>(xs: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = xs.chunks_exact(8);
    let rest = chunks.remainder();
    for c in chunks {
        for i in 0..8 {
            acc[i] += c[i];
        }
    }
    let mut total = rest.iter().copied().sum::<T>();
    for a in acc {
        total += a;
    }
    total
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let mut total = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(&x, &y)| x * y)
        .sum::<T>();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    for v in acc {
        total += v;
    }
    total
}

/// Normalizes every `(sample, channel)` plane to zero mean and unit variance in place.
///
/// Returns the per-plane inverse standard deviations needed by the backward pass.
pub fn instance_norm<T: Scalar>(x: &mut Tensor<T>) -> Vec<T> {
    let len = x.plane_len();
    let inv_len = T::one() / T::lit(len as f64);
    let eps = T::lit(INSTANCE_NORM_EPS);
    x.data_mut()
        .chunks_mut(len)
        .map(|plane| {
            let mean = sum(plane) * inv_len;
            for v in plane.iter_mut() {
                *v -= mean;
            }
            let var = dot(plane, plane) * inv_len;
            let inv = T::one() / (var + eps).sqrt();
            for v in plane.iter_mut() {
                *v *= inv;
            }
            inv
        })
        .collect()
}

/// Turns the gradient w.r.t. the normalized output into the gradient w.r.t. the input, in place.
pub fn instance_norm_backward<T: Scalar>(normalized: &Tensor<T>, inv_std: &[T], grad: &mut Tensor<T>) {
    let len = normalized.plane_len();
    let inv_len = T::one() / T::lit(len as f64);
    for ((g, xh), &inv) in grad
        .data_mut()
        .chunks_mut(len)
        .zip(normalized.data().chunks(len))
        .zip(inv_std)
    {
        let mean_g = sum(g) * inv_len;
        let mean_gx = dot(g, xh) * inv_len;
        for (gi, &xi) in g.iter_mut().zip(xh) {
            *gi = inv * (*gi - mean_g - xi * mean_gx);
        }
    }
}

/// Per-pixel softmax across the channel axis.
pub fn softmax_channels<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = logits.shape();
    let hw = h * w;
    let mut out = Tensor::zeros(logits.shape());
    for s in 0..n {
        let src = logits.sample(s);
        let dst = out.sample_mut(s);
        for p in 0..hw {
            let mut max = T::neg_infinity();
            for ch in 0..c {
                max = max.max(src[ch * hw + p]);
            }
            let mut total = T::zero();
            for ch in 0..c {
                let e = (src[ch * hw + p] - max).exp();
                dst[ch * hw + p] = e;
                total += e;
            }
            for ch in 0..c {
                dst[ch * hw + p] /= total;
            }
        }
    }
    out
}

/// Gradient w.r.t. softmax logits given the probabilities and the gradient w.r.t. them.
pub fn softmax_channels_backward<T: Scalar>(probs: &Tensor<T>, grad_probs: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = probs.shape();
    let hw = h * w;
    let mut out = Tensor::zeros(probs.shape());
    for s in 0..n {
        let p = probs.sample(s);
        let g = grad_probs.sample(s);
        let d = out.sample_mut(s);
        for px in 0..hw {
            let dot = (0..c).map(|ch| p[ch * hw + px] * g[ch * hw + px]).sum::<T>();
            for ch in 0..c {
                let i = ch * hw + px;
                d[i] = p[i] * (g[i] - dot);
            }
        }
    }
    out
}

/// Nearest-neighbour upsampling by a factor of two.
pub fn upsample_nearest2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
    for (src, dst) in x.data().chunks(h * w).zip(out.data_mut().chunks_mut(4 * h * w)) {
        for y in 0..2 * h {
            let row = &src[(y / 2) * w..(y / 2 + 1) * w];
            let d = &mut dst[y * 2 * w..(y + 1) * 2 * w];
            for (x2, v) in d.iter_mut().enumerate() {
                *v = row[x2 / 2];
            }
        }
    }
    out
}

/// Adjoint of [`upsample_nearest2`]: sums each 2x2 block.
pub fn upsample_nearest2_backward<T: Scalar>(grad: &Tensor<T>) -> Tensor<T> {
    let [n, c, h2, w2] = grad.shape();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = Tensor::zeros([n, c, h, w]);
    for (src, dst) in grad.data().chunks(h2 * w2).zip(out.data_mut().chunks_mut(h * w)) {
        for y in 0..h2 {
            for x in 0..w2 {
                dst[(y / 2) * w + x / 2] += src[y * w2 + x];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..shape.iter().product::<usize>())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    fn weighted_sum(a: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
        a.data().iter().zip(r.data()).map(|(x, y)| x * y).sum()
    }

    fn check_fd(x: &Tensor<f64>, analytic: &Tensor<f64>, f: impl Fn(&Tensor<f64>) -> f64) {
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let num = (f(&xp) - f(&xm)) / (2.0 * h);
            let a = analytic.data()[i];
            assert!((num - a).abs() <= 1e-6 * (1.0 + a.abs()), "[{i}] {num} vs {a}");
        }
    }

    #[test]
    fn instance_norm_moments_and_gradient() {
        let x = random([2, 3, 4, 5], 1);
        let mut y = x.clone();
        let inv = instance_norm(&mut y);
        for plane in y.data().chunks(20) {
            let mean: f64 = plane.iter().sum::<f64>() / 20.0;
            let var: f64 = plane.iter().map(|v| v * v).sum::<f64>() / 20.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
        let r = random(x.shape(), 2);
        let mut g = r.clone();
        instance_norm_backward(&y, &inv, &mut g);
        check_fd(&x, &g, |x| {
            let mut y = x.clone();
            instance_norm(&mut y);
            weighted_sum(&y, &r)
        });
    }

    #[test]
    fn softmax_is_simplex_and_differentiates() {
        let x = random([2, 4, 3, 3], 3);
        let p = softmax_channels(&x);
        for n in 0..2 {
            for px in 0..9 {
                let s: f64 = (0..4).map(|c| p.sample(n)[c * 9 + px]).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        let r = random(x.shape(), 4);
        let g = softmax_channels_backward(&p, &r);
        check_fd(&x, &g, |x| weighted_sum(&softmax_channels(x), &r));
    }

    #[test]
    fn upsample_adjoint() {
        let x = random([1, 2, 3, 4], 5);
        let up = upsample_nearest2(&x);
        assert_eq!(up.shape(), [1, 2, 6, 8]);
        assert_eq!(up.at(0, 1, 5, 7), x.at(0, 1, 2, 3));
        let r = random(up.shape(), 6);
        // <up(x), r> == <x, up^T(r)>
        let lhs = weighted_sum(&up, &r);
        let rhs = weighted_sum(&x, &upsample_nearest2_backward(&r));
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
