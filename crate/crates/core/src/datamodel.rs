//! Value types shared by every other module and the `[0,1] <-> [-1,1]` conventions.
//!
//! Images are stored interleaved (`H x W x 3`, row-major); networks consume planar stacks
//! produced by [`concat_pair`]. Class maps hold integer labels, class volumes hold one value per
//! `(pixel, class)`, again interleaved.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Smallest accepted image side.
pub const MIN_SIDE: usize = 8;
/// Tolerance for per-pixel simplex sums.
pub const SIMPLEX_TOL: f64 = 1e-5;

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::shape(format!(
            "image {height}x{width} is smaller than {MIN_SIDE}x{MIN_SIDE}"
        )));
    }
    Ok(())
}

fn check_range<T: Scalar>(what: &'static str, values: &[T], lo: f64, hi: f64) -> Result<()> {
    match values
        .iter()
        .find(|v| !(v.as_f64() >= lo && v.as_f64() <= hi))
    {
        Some(v) => Err(Error::OutOfRange {
            what,
            value: v.as_f64(),
            lo,
            hi,
        }),
        None => Ok(()),
    }
}

/// `2v - 1`, mapping `[0,1]` onto `[-1,1]`.
pub fn zero_center<T: Scalar>(v: T) -> Result<T> {
    check_range("zero_center input", &[v], 0.0, 1.0)?;
    Ok(v + v - T::one())
}

/// Inverse of [`zero_center`].
pub fn de_center<T: Scalar>(v: T) -> Result<T> {
    check_range("de_center input", &[v], -1.0, 1.0)?;
    Ok((v + T::one()) * T::lit(0.5))
}

/// Slice version of [`zero_center`].
pub fn zero_center_all<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    check_range("zero_center input", values, 0.0, 1.0)?;
    Ok(values.iter().map(|&v| v + v - T::one()).collect())
}

/// Slice version of [`de_center`].
pub fn de_center_all<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    check_range("de_center input", values, -1.0, 1.0)?;
    let half = T::lit(0.5);
    Ok(values.iter().map(|&v| (v + T::one()) * half).collect())
}

/// RGB image with entries in `[0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawImage<T> {
    height: usize,
    width: usize,
    pixels: Vec<T>,
}

impl<T: Scalar> RawImage<T> {
    pub fn new(height: usize, width: usize, pixels: Vec<T>) -> Result<Self> {
        check_dims(height, width)?;
        if pixels.len() != height * width * 3 {
            return Err(Error::shape(format!(
                "{height}x{width}x3 image given {} values",
                pixels.len()
            )));
        }
        check_range("raw image pixel", &pixels, 0.0, 1.0)?;
        Ok(RawImage {
            height,
            width,
            pixels,
        })
    }

    /// Builds from a per-(row, col, channel) function; values are clamped into `[0,1]`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    pixels.push(f(y, x, c).max(T::zero()).min(T::one()));
                }
            }
        }
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }
    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    pub fn zero_center(&self) -> NormImage<T> {
        NormImage {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|&v| v + v - T::one()).collect(),
        }
    }
}

/// RGB image with entries in `[-1,1]`, the generator-side representation.
#[derive(Clone, Debug, PartialEq)]
pub struct NormImage<T> {
    height: usize,
    width: usize,
    pixels: Vec<T>,
}

impl<T: Scalar> NormImage<T> {
    pub fn new(height: usize, width: usize, pixels: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width * 3 {
            return Err(Error::shape(format!(
                "{height}x{width}x3 image given {} values",
                pixels.len()
            )));
        }
        check_range("normalized image pixel", &pixels, -1.0, 1.0)?;
        Ok(NormImage {
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }
    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    pub fn de_center(&self) -> RawImage<T> {
        let half = T::lit(0.5);
        RawImage {
            height: self.height,
            width: self.width,
            pixels: self
                .pixels
                .iter()
                .map(|&v| ((v + T::one()) * half).max(T::zero()).min(T::one()))
                .collect(),
        }
    }

    /// Planar `[1, 3, H, W]` view.
    pub fn to_planes(&self) -> Tensor<T> {
        let hw = self.height * self.width;
        let mut t = Tensor::zeros([1, 3, self.height, self.width]);
        let d = t.data_mut();
        for (p, px) in self.pixels.chunks(3).enumerate() {
            for c in 0..3 {
                d[c * hw + p] = px[c];
            }
        }
        t
    }

    /// Reads sample `n` of a planar `[N, 3, H, W]` tensor.
    pub fn from_planes(planes: &Tensor<T>, n: usize) -> Result<Self> {
        if planes.c() != 3 {
            return Err(Error::shape(format!("expected 3 image planes, got {}", planes.c())));
        }
        let (h, w) = (planes.h(), planes.w());
        let hw = h * w;
        let src = planes.sample(n);
        let mut pixels = Vec::with_capacity(hw * 3);
        for p in 0..hw {
            for c in 0..3 {
                pixels.push(src[c * hw + p]);
            }
        }
        Self::new(h, w, pixels)
    }
}

/// Per-pixel integer labels in `[0, classes)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMap {
    height: usize,
    width: usize,
    classes: usize,
    labels: Vec<u16>,
}

impl ClassMap {
    pub fn new(height: usize, width: usize, classes: usize, labels: Vec<u16>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config(format!("class count {classes} must be at least 2")));
        }
        if labels.len() != height * width {
            return Err(Error::shape(format!(
                "{height}x{width} class map given {} labels",
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l as usize >= classes) {
            return Err(Error::InvalidLabel {
                row: i / width,
                col: i % width,
                label: labels[i] as usize,
                classes,
            });
        }
        Ok(ClassMap {
            height,
            width,
            classes,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn classes(&self) -> usize {
        self.classes
    }
    pub fn labels(&self) -> &[u16] {
        &self.labels
    }
    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u16 {
        self.labels[y * self.width + x]
    }

    /// Binary mask of pixels whose label is in `foreground`.
    pub fn mask_of(&self, foreground: &[u16]) -> PixelMask {
        PixelMask {
            height: self.height,
            width: self.width,
            mask: self
                .labels
                .iter()
                .map(|l| foreground.contains(l) as u8)
                .collect(),
        }
    }
}

/// How a [`ClassVolume`] stores its per-class values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VolumeMode {
    /// Zero-centered one-hot: every entry is -1 or +1.
    Encoded,
    /// Per-pixel probabilities summing to one.
    Simplex,
}

/// `H x W x M` per-class values.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassVolume<T> {
    height: usize,
    width: usize,
    classes: usize,
    mode: VolumeMode,
    values: Vec<T>,
}

impl<T: Scalar> ClassVolume<T> {
    pub fn new(height: usize, width: usize, classes: usize, mode: VolumeMode, values: Vec<T>) -> Result<Self> {
        if values.len() != height * width * classes {
            return Err(Error::shape(format!(
                "{height}x{width}x{classes} volume given {} values",
                values.len()
            )));
        }
        match mode {
            VolumeMode::Encoded => {
                if let Some(v) = values.iter().find(|&&v| v != T::one() && v != -T::one()) {
                    return Err(Error::Mode(format!("encoded volume holds {v}, not ±1")));
                }
            }
            VolumeMode::Simplex => {
                for (p, px) in values.chunks(classes).enumerate() {
                    let sum: f64 = px.iter().map(|v| v.as_f64()).sum();
                    if px.iter().any(|v| v.as_f64() < 0.0) || (sum - 1.0).abs() > SIMPLEX_TOL {
                        return Err(Error::Mode(format!(
                            "pixel {p} is not a probability vector (sum {sum})"
                        )));
                    }
                }
            }
        }
        Ok(ClassVolume {
            height,
            width,
            classes,
            mode,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn classes(&self) -> usize {
        self.classes
    }
    pub fn mode(&self) -> VolumeMode {
        self.mode
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.values[(y * self.width + x) * self.classes + c]
    }

    /// Class planes in `[-1,1]`: encoded volumes as stored, simplex volumes as `2p - 1`.
    pub fn centered_planes(&self) -> Tensor<T> {
        let hw = self.height * self.width;
        let mut t = Tensor::zeros([1, self.classes, self.height, self.width]);
        let d = t.data_mut();
        for (p, px) in self.values.chunks(self.classes).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                d[c * hw + p] = match self.mode {
                    VolumeMode::Encoded => v,
                    VolumeMode::Simplex => v + v - T::one(),
                };
            }
        }
        t
    }

    /// Simplex volume read from sample `n` of planar `[N, M, H, W]` probabilities.
    pub fn from_prob_planes(planes: &Tensor<T>, n: usize) -> Result<Self> {
        let (m, h, w) = (planes.c(), planes.h(), planes.w());
        let hw = h * w;
        let src = planes.sample(n);
        let mut values = Vec::with_capacity(hw * m);
        for p in 0..hw {
            for c in 0..m {
                values.push(src[c * hw + p]);
            }
        }
        Self::new(h, w, m, VolumeMode::Simplex, values)
    }
}

/// Binary per-pixel indicator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelMask {
    height: usize,
    width: usize,
    mask: Vec<u8>,
}

impl PixelMask {
    pub fn new(height: usize, width: usize, mask: Vec<u8>) -> Result<Self> {
        if mask.len() != height * width {
            return Err(Error::shape(format!(
                "{height}x{width} mask given {} values",
                mask.len()
            )));
        }
        if let Some(v) = mask.iter().find(|&&v| v > 1) {
            return Err(Error::OutOfRange {
                what: "mask entry",
                value: *v as f64,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(PixelMask {
            height,
            width,
            mask,
        })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        PixelMask {
            height,
            width,
            mask: vec![value as u8; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn as_slice(&self) -> &[u8] {
        &self.mask
    }
    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.mask[y * self.width + x] != 0
    }
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&v| v != 0).count()
    }
}

/// Image plus aligned class volume for one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPair<T> {
    image: NormImage<T>,
    classes: ClassVolume<T>,
}

impl<T: Scalar> LabeledPair<T> {
    pub fn new(image: NormImage<T>, classes: ClassVolume<T>) -> Result<Self> {
        if image.height() != classes.height() || image.width() != classes.width() {
            return Err(Error::shape(format!(
                "image {}x{} vs class volume {}x{}",
                image.height(),
                image.width(),
                classes.height(),
                classes.width()
            )));
        }
        Ok(LabeledPair { image, classes })
    }

    /// Zero-centers a raw image and encodes its class map.
    pub fn from_raw(image: &RawImage<T>, cmap: &ClassMap) -> Result<Self> {
        Self::new(image.zero_center(), encode_classes(cmap, cmap.classes())?)
    }

    pub fn image(&self) -> &NormImage<T> {
        &self.image
    }
    pub fn classes(&self) -> &ClassVolume<T> {
        &self.classes
    }
    pub fn num_classes(&self) -> usize {
        self.classes.classes()
    }
    pub fn height(&self) -> usize {
        self.image.height()
    }
    pub fn width(&self) -> usize {
        self.image.width()
    }
    pub fn depth(&self) -> usize {
        3 + self.classes.classes()
    }
}

/// Exact one-hot volume (simplex mode).
pub fn one_hot_encode<T: Scalar>(cmap: &ClassMap, classes: usize) -> Result<ClassVolume<T>> {
    one_hot(cmap, classes, T::zero(), VolumeMode::Simplex)
}

/// Zero-centered one-hot volume (encoded mode).
pub fn encode_classes<T: Scalar>(cmap: &ClassMap, classes: usize) -> Result<ClassVolume<T>> {
    one_hot(cmap, classes, -T::one(), VolumeMode::Encoded)
}

fn one_hot<T: Scalar>(cmap: &ClassMap, classes: usize, off: T, mode: VolumeMode) -> Result<ClassVolume<T>> {
    let mut values = vec![off; cmap.labels.len() * classes];
    for (i, &l) in cmap.labels.iter().enumerate() {
        let l = l as usize;
        if l >= classes {
            return Err(Error::InvalidLabel {
                row: i / cmap.width,
                col: i % cmap.width,
                label: l,
                classes,
            });
        }
        values[i * classes + l] = T::one();
    }
    Ok(ClassVolume {
        height: cmap.height,
        width: cmap.width,
        classes,
        mode,
        values,
    })
}

/// Per-pixel argmax; ties resolve to the lowest class index.
pub fn argmax_decode<T: Scalar>(cv: &ClassVolume<T>) -> Result<ClassMap> {
    if cv.mode != VolumeMode::Simplex {
        return Err(Error::Mode("argmax_decode needs a simplex volume".into()));
    }
    let labels = cv
        .values
        .chunks(cv.classes)
        .map(|px| {
            let mut best = 0;
            for (c, &v) in px.iter().enumerate().skip(1) {
                if v > px[best] {
                    best = c;
                }
            }
            best as u16
        })
        .collect();
    ClassMap::new(cv.height, cv.width, cv.classes, labels)
}

/// Argmax of sample `n` of planar `[N, M, H, W]` probabilities, without the simplex check.
pub fn argmax_planes<T: Scalar>(probs: &Tensor<T>, n: usize) -> ClassMap {
    let (m, h, w) = (probs.c(), probs.h(), probs.w());
    let hw = h * w;
    let src = probs.sample(n);
    let labels = (0..hw)
        .map(|p| {
            let mut best = 0;
            for c in 1..m {
                if src[c * hw + p] > src[best * hw + p] {
                    best = c;
                }
            }
            best as u16
        })
        .collect();
    ClassMap {
        height: h,
        width: w,
        classes: m,
        labels,
    }
}

/// Planar `[1, 3 + M, H, W]` stack: image planes, then zero-centered class planes.
pub fn concat_pair<T: Scalar>(pair: &LabeledPair<T>) -> Result<Tensor<T>> {
    Tensor::concat_channels(&pair.image.to_planes(), &pair.classes.centered_planes())
}

/// Inverse of [`concat_pair`] for sample `n` of a stack.
///
/// `mode` states how the class planes should be read back: `Encoded` keeps the ±1 planes,
/// `Simplex` maps `2p - 1` back to probabilities.
pub fn split_pair<T: Scalar>(stack: &Tensor<T>, n: usize, mode: VolumeMode) -> Result<LabeledPair<T>> {
    if stack.c() < 5 {
        return Err(Error::shape(format!(
            "a pair stack needs at least 5 channels, got {}",
            stack.c()
        )));
    }
    let (h, w, m) = (stack.h(), stack.w(), stack.c() - 3);
    let hw = h * w;
    let src = stack.sample(n);
    let mut pixels = Vec::with_capacity(hw * 3);
    let mut values = Vec::with_capacity(hw * m);
    let half = T::lit(0.5);
    for p in 0..hw {
        for c in 0..3 {
            pixels.push(src[c * hw + p]);
        }
        for c in 0..m {
            let v = src[(3 + c) * hw + p];
            values.push(match mode {
                VolumeMode::Encoded => v,
                VolumeMode::Simplex => (v + T::one()) * half,
            });
        }
    }
    LabeledPair::new(
        NormImage::new(h, w, pixels)?,
        ClassVolume::new(h, w, m, mode, values)?,
    )
}
