use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Param;
use crate::scalar::{gemm, Op, Scalar};
use crate::tensor::Tensor;

const OUTSIDE: usize = usize::MAX;

/// Border handling for convolutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    Zeros,
    /// Mirror without repeating the edge pixel.
    Reflect,
}

/// 2-D convolution with square kernels, computed as im2col followed by GEMM.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub padding: Padding,
    /// `out_channels x (in_channels * kernel * kernel)`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

/// Source index tables for one input size.
struct Geometry {
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn source_index(pos: isize, len: usize, padding: Padding) -> usize {
    let n = len as isize;
    if (0..n).contains(&pos) {
        return pos as usize;
    }
    match padding {
        Padding::Zeros => OUTSIDE,
        Padding::Reflect => {
            let r = if pos < 0 { -pos } else { 2 * (n - 1) - pos };
            debug_assert!((0..n).contains(&r), "reflection pad wider than input");
            r as usize
        }
    }
}

impl<T: Scalar> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        padding: Padding,
        init_std: f64,
        rng: &mut R,
    ) -> Self {
        let fan = in_channels * kernel * kernel;
        let normal = Normal::new(0.0, init_std).expect("finite std");
        let weight: Vec<T> = (0..out_channels * fan)
            .map(|_| T::lit(normal.sample(rng)))
            .collect();
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            padding,
            weight: Param::new(weight),
            bias: Param::new(vec![T::zero(); out_channels]),
        }
    }

    /// Drops the bias term (used when a normalization follows).
    pub fn without_bias(mut self) -> Self {
        self.bias = Param::new(Vec::new());
        self
    }

    pub fn has_bias(&self) -> bool {
        !self.bias.is_empty()
    }

    pub fn out_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (hp, wp) = (h + 2 * self.pad, w + 2 * self.pad);
        if hp < self.kernel || wp < self.kernel {
            return None;
        }
        Some((
            (hp - self.kernel) / self.stride + 1,
            (wp - self.kernel) / self.stride + 1,
        ))
    }

    fn geometry(&self, h: usize, w: usize) -> Geometry {
        let (out_h, out_w) = self
            .out_size(h, w)
            .unwrap_or_else(|| panic!("input {h}x{w} smaller than {}x{} kernel", self.kernel, self.kernel));
        let table = |out: usize, len: usize| {
            let mut t = Vec::with_capacity(self.kernel * out);
            for k in 0..self.kernel {
                for o in 0..out {
                    let pos = (o * self.stride + k) as isize - self.pad as isize;
                    t.push(source_index(pos, len, self.padding));
                }
            }
            t
        };
        Geometry {
            h,
            w,
            out_h,
            out_w,
            rows: table(out_h, h),
            cols: table(out_w, w),
        }
    }

    /// Copies one input plane into a `(h + 2p) x (w + 2p)` buffer with the border filled in.
    fn pad_plane(&self, g: &Geometry, src: &[T], dst: &mut [T]) {
        let (hp, wp, p) = (g.h + 2 * self.pad, g.w + 2 * self.pad, self.pad);
        for py in 0..hp {
            let row = &mut dst[py * wp..(py + 1) * wp];
            let sy = source_index(py as isize - p as isize, g.h, self.padding);
            if sy == OUTSIDE {
                row.fill(T::zero());
                continue;
            }
            let srow = &src[sy * g.w..(sy + 1) * g.w];
            row[p..p + g.w].copy_from_slice(srow);
            for px in (0..p).chain(p + g.w..wp) {
                let sx = source_index(px as isize - p as isize, g.w, self.padding);
                row[px] = if sx == OUTSIDE { T::zero() } else { srow[sx] };
            }
        }
    }

    /// Adjoint of [`Self::pad_plane`]: folds a padded gradient buffer back onto the plane.
    fn fold_plane(&self, g: &Geometry, padded: &[T], dst: &mut [T]) {
        let (hp, wp, p) = (g.h + 2 * self.pad, g.w + 2 * self.pad, self.pad);
        for py in 0..hp {
            let sy = source_index(py as isize - p as isize, g.h, self.padding);
            if sy == OUTSIDE {
                continue;
            }
            let prow = &padded[py * wp..(py + 1) * wp];
            let drow = &mut dst[sy * g.w..(sy + 1) * g.w];
            for (d, &v) in drow.iter_mut().zip(&prow[p..p + g.w]) {
                *d += v;
            }
            for px in (0..p).chain(p + g.w..wp) {
                let sx = source_index(px as isize - p as isize, g.w, self.padding);
                if sx != OUTSIDE {
                    drow[sx] += prow[px];
                }
            }
        }
    }

    fn padded_len(&self, g: &Geometry) -> usize {
        (g.h + 2 * self.pad) * (g.w + 2 * self.pad)
    }

    /// Stride-1 convolutions with at most this many outputs skip im2col.
    const DIRECT_MAX_OUT: usize = 4;

    fn use_direct(&self) -> bool {
        self.stride == 1 && self.out_channels <= Self::DIRECT_MAX_OUT
    }

    fn im2col(&self, g: &Geometry, x: &[T], col: &mut [T], scratch: &mut Vec<T>) {
        let k = self.kernel;
        let p = g.out_h * g.out_w;
        if self.stride == 1 {
            let wp = g.w + 2 * self.pad;
            scratch.resize(self.padded_len(g), T::zero());
            for ci in 0..self.in_channels {
                self.pad_plane(g, &x[ci * g.h * g.w..(ci + 1) * g.h * g.w], scratch);
                for ki in 0..k {
                    for kj in 0..k {
                        let r = (ci * k + ki) * k + kj;
                        let dst = &mut col[r * p..(r + 1) * p];
                        for (oh, d) in dst.chunks_mut(g.out_w).enumerate() {
                            let at = (oh + ki) * wp + kj;
                            d.copy_from_slice(&scratch[at..at + g.out_w]);
                        }
                    }
                }
            }
            return;
        }
        for ci in 0..self.in_channels {
            let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ki in 0..k {
                let rows = &g.rows[ki * g.out_h..(ki + 1) * g.out_h];
                for kj in 0..k {
                    let cols = &g.cols[kj * g.out_w..(kj + 1) * g.out_w];
                    let r = (ci * k + ki) * k + kj;
                    let dst = &mut col[r * p..(r + 1) * p];
                    for (oh, &ih) in rows.iter().enumerate() {
                        let d = &mut dst[oh * g.out_w..(oh + 1) * g.out_w];
                        if ih == OUTSIDE {
                            d.fill(T::zero());
                            continue;
                        }
                        let src = &plane[ih * g.w..(ih + 1) * g.w];
                        for (v, &iw) in d.iter_mut().zip(cols) {
                            *v = if iw == OUTSIDE { T::zero() } else { src[iw] };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, g: &Geometry, col: &[T], dx: &mut [T], scratch: &mut Vec<T>) {
        let k = self.kernel;
        let p = g.out_h * g.out_w;
        if self.stride == 1 {
            let wp = g.w + 2 * self.pad;
            scratch.resize(self.padded_len(g), T::zero());
            for ci in 0..self.in_channels {
                scratch.fill(T::zero());
                for ki in 0..k {
                    for kj in 0..k {
                        let r = (ci * k + ki) * k + kj;
                        let src = &col[r * p..(r + 1) * p];
                        for (oh, s) in src.chunks(g.out_w).enumerate() {
                            let at = (oh + ki) * wp + kj;
                            for (d, &v) in scratch[at..at + g.out_w].iter_mut().zip(s) {
                                *d += v;
                            }
                        }
                    }
                }
                self.fold_plane(g, scratch, &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w]);
            }
            return;
        }
        for ci in 0..self.in_channels {
            let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ki in 0..k {
                let rows = &g.rows[ki * g.out_h..(ki + 1) * g.out_h];
                for kj in 0..k {
                    let cols = &g.cols[kj * g.out_w..(kj + 1) * g.out_w];
                    let r = (ci * k + ki) * k + kj;
                    let src = &col[r * p..(r + 1) * p];
                    for (oh, &ih) in rows.iter().enumerate() {
                        if ih == OUTSIDE {
                            continue;
                        }
                        let s = &src[oh * g.out_w..(oh + 1) * g.out_w];
                        let dst = &mut plane[ih * g.w..(ih + 1) * g.w];
                        for (&v, &iw) in s.iter().zip(cols) {
                            if iw != OUTSIDE {
                                dst[iw] += v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Pads every channel of one sample into a contiguous buffer.
    fn pad_sample(&self, g: &Geometry, x: &[T], out: &mut Vec<T>) {
        let plen = self.padded_len(g);
        out.resize(self.in_channels * plen, T::zero());
        for ci in 0..self.in_channels {
            self.pad_plane(g, &x[ci * g.h * g.w..(ci + 1) * g.h * g.w], &mut out[ci * plen..(ci + 1) * plen]);
        }
    }

    /// Shifted-row accumulation for narrow stride-1 convolutions.
    fn forward_direct(&self, g: &Geometry, x: &[T], y: &mut [T], padded: &mut Vec<T>) {
        let k = self.kernel;
        let wp = g.w + 2 * self.pad;
        let plen = self.padded_len(g);
        let p = g.out_h * g.out_w;
        self.pad_sample(g, x, padded);
        for oc in 0..self.out_channels {
            let out = &mut y[oc * p..(oc + 1) * p];
            out.fill(self.bias.value.get(oc).copied().unwrap_or_else(T::zero));
            for ci in 0..self.in_channels {
                let src = &padded[ci * plen..(ci + 1) * plen];
                for ki in 0..k {
                    for kj in 0..k {
                        let wv = self.weight.value[((oc * self.in_channels + ci) * k + ki) * k + kj];
                        for (oh, row) in out.chunks_mut(g.out_w).enumerate() {
                            let at = (oh + ki) * wp + kj;
                            for (d, &v) in row.iter_mut().zip(&src[at..at + g.out_w]) {
                                *d += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_direct(
        &mut self,
        g: &Geometry,
        x: &[T],
        dy: &[T],
        dx: Option<&mut [T]>,
        need_params: bool,
        padded: &mut Vec<T>,
        dpadded: &mut Vec<T>,
    ) {
        let k = self.kernel;
        let wp = g.w + 2 * self.pad;
        let plen = self.padded_len(g);
        let p = g.out_h * g.out_w;
        if need_params {
            self.pad_sample(g, x, padded);
        }
        let want_dx = dx.is_some();
        if want_dx {
            dpadded.clear();
            dpadded.resize(self.in_channels * plen, T::zero());
        }
        for oc in 0..self.out_channels {
            let g_out = &dy[oc * p..(oc + 1) * p];
            if need_params && self.has_bias() {
                self.bias.grad[oc] += g_out.iter().copied().sum::<T>();
            }
            for ci in 0..self.in_channels {
                for ki in 0..k {
                    for kj in 0..k {
                        let widx = ((oc * self.in_channels + ci) * k + ki) * k + kj;
                        let wv = self.weight.value[widx];
                        let mut acc = T::zero();
                        for (oh, row) in g_out.chunks(g.out_w).enumerate() {
                            let at = ci * plen + (oh + ki) * wp + kj;
                            if need_params {
                                acc += super::ops::dot(row, &padded[at..at + g.out_w]);
                            }
                            if want_dx {
                                for (d, &v) in dpadded[at..at + g.out_w].iter_mut().zip(row) {
                                    *d += wv * v;
                                }
                            }
                        }
                        if need_params {
                            self.weight.grad[widx] += acc;
                        }
                    }
                }
            }
        }
        if let Some(dx) = dx {
            for ci in 0..self.in_channels {
                self.fold_plane(g, &dpadded[ci * plen..(ci + 1) * plen], &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w]);
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c(), self.in_channels, "conv input channels");
        let g = self.geometry(x.h(), x.w());
        let p = g.out_h * g.out_w;
        let mut y = Tensor::zeros([x.n(), self.out_channels, g.out_h, g.out_w]);
        let mut scratch = Vec::new();
        if self.use_direct() {
            for n in 0..x.n() {
                self.forward_direct(&g, x.sample(n), y.sample_mut(n), &mut scratch);
            }
            return y;
        }
        let kdim = self.in_channels * self.kernel * self.kernel;
        let mut col = vec![T::zero(); kdim * p];
        for n in 0..x.n() {
            self.im2col(&g, x.sample(n), &mut col, &mut scratch);
            let out = y.sample_mut(n);
            for (oc, chunk) in out.chunks_mut(p).enumerate() {
                chunk.fill(self.bias.value.get(oc).copied().unwrap_or_else(T::zero));
            }
            gemm(
                self.out_channels,
                kdim,
                p,
                &self.weight.value,
                Op::N,
                &col,
                Op::N,
                T::one(),
                out,
            );
        }
        y
    }

    /// Accumulates parameter gradients (when `need_params`) and returns the input gradient
    /// (when `need_input`).
    pub fn backward(
        &mut self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        need_input: bool,
        need_params: bool,
    ) -> Option<Tensor<T>> {
        let g = self.geometry(x.h(), x.w());
        let p = g.out_h * g.out_w;
        assert_eq!(dy.shape(), [x.n(), self.out_channels, g.out_h, g.out_w], "conv dy shape");
        let mut dx = need_input.then(|| Tensor::zeros(x.shape()));
        let mut scratch = Vec::new();
        if self.use_direct() {
            let mut dscratch = Vec::new();
            for n in 0..x.n() {
                let dxn = dx.as_mut().map(|t| t.sample_mut(n));
                self.backward_direct(&g, x.sample(n), dy.sample(n), dxn, need_params, &mut scratch, &mut dscratch);
            }
            return dx;
        }
        let kdim = self.in_channels * self.kernel * self.kernel;
        let mut col = vec![T::zero(); kdim * p];
        for n in 0..x.n() {
            let dyn_ = dy.sample(n);
            if need_params {
                self.im2col(&g, x.sample(n), &mut col, &mut scratch);
                gemm(
                    self.out_channels,
                    p,
                    kdim,
                    dyn_,
                    Op::N,
                    &col,
                    Op::T,
                    T::one(),
                    &mut self.weight.grad,
                );
                if self.has_bias() {
                    for (oc, chunk) in dyn_.chunks(p).enumerate() {
                        self.bias.grad[oc] += chunk.iter().copied().sum::<T>();
                    }
                }
            }
            if let Some(dx) = dx.as_mut() {
                gemm(
                    kdim,
                    self.out_channels,
                    p,
                    &self.weight.value,
                    Op::T,
                    dyn_,
                    Op::N,
                    T::zero(),
                    &mut col,
                );
                self.col2im(&g, &col, dx.sample_mut(n), &mut scratch);
            }
        }
        dx
    }
}
