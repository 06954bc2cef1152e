//! Procedural object-transfiguration datasets: one flat-colored geometric shape on a random
//! background, with an exact two-class label map (0 = background, 1 = shape).

mod background;

pub use background::{synth_background, BackgroundSpec};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{ClassMap, PixelMask, RawImage};
use crate::error::{Error, Result};
use crate::io::{encode_label_png, encode_rgb_png, DatasetMeta, SPLITS};
use crate::scalar::Scalar;
use crate::seed::derive_seed;

/// Minimum distance in pixels between any shape pixel and the image border.
pub const MARGIN: f64 = 2.0;
/// Default image side.
pub const DEFAULT_SIDE: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Triangle => "triangle",
        }
    }
}

/// Ordered pair of distinct shapes, named like `circle2square`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Scenario {
    source: ShapeKind,
    target: ShapeKind,
}

impl Scenario {
    pub fn new(source: ShapeKind, target: ShapeKind) -> Result<Self> {
        if source == target {
            return Err(Error::Config(format!(
                "scenario needs two different shapes, got {} twice",
                source.name()
            )));
        }
        Ok(Scenario { source, target })
    }

    /// The six valid scenarios.
    pub fn all() -> Vec<Scenario> {
        let mut out = Vec::with_capacity(6);
        for s in ShapeKind::ALL {
            for t in ShapeKind::ALL {
                if s != t {
                    out.push(Scenario { source: s, target: t });
                }
            }
        }
        out
    }

    pub fn source(&self) -> ShapeKind {
        self.source
    }
    pub fn target(&self) -> ShapeKind {
        self.target
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}2{}", self.source.name(), self.target.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::all().into_iter().find(|sc| sc.to_string() == s).ok_or_else(|| {
            let names: Vec<String> = Scenario::all().iter().map(|s| s.to_string()).collect();
            Error::Config(format!("unknown scenario `{s}`; valid scenarios: {}", names.join(", ")))
        })
    }
}

/// One shape instance. `center` is `(row, col)` in continuous pixel coordinates, where pixel
/// `(r, c)` has its center at `(r + 0.5, c + 0.5)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub center: (f64, f64),
    /// Radius (circle) or half-side of the bounding box (square, triangle).
    pub size: f64,
    pub fill_color: [f64; 3],
}

impl ShapeSpec {
    /// Whether the point `(y, x)` lies inside the shape.
    pub fn contains(&self, y: f64, x: f64) -> bool {
        let (cy, cx) = self.center;
        let s = self.size;
        match self.kind {
            ShapeKind::Circle => (y - cy).powi(2) + (x - cx).powi(2) <= s * s,
            ShapeKind::Square => y >= cy - s && y < cy + s && x >= cx - s && x < cx + s,
            ShapeKind::Triangle => {
                // Apex at the top center, base along the bottom edge of the box.
                let depth = y - (cy - s);
                depth >= 0.0 && y < cy + s && (x - cx).abs() <= depth / 2.0
            }
        }
    }

    fn check_placement(&self, height: usize, width: usize) -> Result<()> {
        let (cy, cx) = self.center;
        let s = self.size;
        let fits = s > 0.0
            && cy - s >= MARGIN
            && cx - s >= MARGIN
            && cy + s <= height as f64 - MARGIN
            && cx + s <= width as f64 - MARGIN;
        if !fits {
            return Err(Error::Placement(format!(
                "{} of size {s} at ({cy}, {cx}) does not fit a {height}x{width} canvas with a {MARGIN}-pixel margin",
                self.kind.name()
            )));
        }
        Ok(())
    }
}

/// Mask of the pixels whose centers lie inside the shape.
pub fn rasterize_shape(spec: &ShapeSpec, height: usize, width: usize) -> Result<PixelMask> {
    spec.check_placement(height, width)?;
    let mut mask = vec![0u8; height * width];
    for y in 0..height {
        for x in 0..width {
            mask[y * width + x] = u8::from(spec.contains(y as f64 + 0.5, x as f64 + 0.5));
        }
    }
    PixelMask::new(height, width, mask)
}

/// Size and background settings for generated samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleOptions {
    /// Shape size range as fractions of the shorter image side.
    pub size_range: (f64, f64),
    pub background: BackgroundSpec,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            size_range: (0.15, 0.3),
            background: BackgroundSpec::SmoothNoise,
        }
    }
}

/// A generated image, its label map and the shape drawn into it.
#[derive(Clone, Debug)]
pub struct ShapeSample<T> {
    pub image: RawImage<T>,
    pub classes: ClassMap,
    pub spec: ShapeSpec,
}

/// Draws one sample; the result is a pure function of the arguments.
pub fn generate_sample<T: Scalar>(
    kind: ShapeKind,
    opts: &SampleOptions,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<ShapeSample<T>> {
    let side = height.min(width) as f64;
    let (lo, hi) = opts.size_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::Config(format!("size range ({lo}, {hi}) is invalid")));
    }
    let max_fit = (side - 2.0 * MARGIN) / 2.0;
    let (lo, hi) = (lo * side, (hi * side).min(max_fit));
    if lo > hi {
        return Err(Error::Placement(format!(
            "shapes of size {lo:.1} do not fit a {height}x{width} canvas"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let cy = rng.random_range(size + MARGIN..=height as f64 - MARGIN - size);
    let cx = rng.random_range(size + MARGIN..=width as f64 - MARGIN - size);
    let fill_color = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
    let spec = ShapeSpec {
        kind,
        center: (cy, cx),
        size,
        fill_color,
    };
    let mask = rasterize_shape(&spec, height, width)?;
    let background = synth_background::<T>(&opts.background, height, width, derive_seed(&[seed, 1]))?;
    let image = RawImage::from_fn(height, width, |y, x, c| {
        if mask.get(y, x) {
            T::lit(fill_color[c])
        } else {
            background.get(y, x, c)
        }
    })?;
    let labels = mask.as_slice().iter().map(|&m| m as u16).collect();
    Ok(ShapeSample {
        image,
        classes: ClassMap::new(height, width, 2, labels)?,
        spec,
    })
}

/// Settings of a generated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetOptions {
    /// Training samples per domain.
    pub count: usize,
    /// Held-out samples per domain.
    pub test_count: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub sample: SampleOptions,
}

impl DatasetOptions {
    /// Square images of `side`, with a fifth of `count` held out per domain.
    pub fn new(count: usize, side: usize, seed: u64) -> Self {
        DatasetOptions {
            count,
            test_count: count / 5,
            height: side,
            width: side,
            seed,
            sample: SampleOptions::default(),
        }
    }
}

#[derive(Serialize)]
struct ManifestRecord<'a> {
    split: &'a str,
    file: String,
    seed: u64,
    shape: ShapeSpec,
}

#[derive(Serialize)]
struct Manifest<'a> {
    scenario: String,
    seed: u64,
    height: usize,
    width: usize,
    options: &'a SampleOptions,
    samples: Vec<ManifestRecord<'a>>,
}

/// Seed of sample `index` in split number `split`.
pub fn sample_seed(master: u64, split: usize, index: usize) -> u64 {
    derive_seed(&[master, split as u64, index as u64])
}

/// Writes a full dataset directory and returns its metadata.
///
/// `trainA`/`testA` hold the source shape, `trainB`/`testB` the target shape. Samples are
/// generated in parallel; every file depends only on the options and its index.
pub fn generate_dataset(scenario: Scenario, opts: &DatasetOptions, out_dir: &Path) -> Result<DatasetMeta> {
    let counts = [opts.count, opts.count, opts.test_count, opts.test_count];
    let kinds = [scenario.source, scenario.target, scenario.source, scenario.target];
    let mut records = Vec::new();
    let mut meta_counts = BTreeMap::new();
    for (split_idx, split) in SPLITS.iter().enumerate() {
        let images = out_dir.join(split).join("images");
        let labels = out_dir.join(split).join("labels");
        for d in [&images, &labels] {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        type Encoded = (String, u64, Vec<u8>, Vec<u8>, ShapeSpec);
        let generated: Vec<Encoded> = (0..counts[split_idx])
            .into_par_iter()
            .map(|i| {
                let seed = sample_seed(opts.seed, split_idx, i);
                let s = generate_sample::<f32>(kinds[split_idx], &opts.sample, opts.height, opts.width, seed)?;
                Ok((format!("{i:06}.png"), seed, encode_rgb_png(&s.image), encode_label_png(&s.classes)?, s.spec))
            })
            .collect::<Result<_>>()?;
        for (file, seed, img, lab, spec) in generated {
            let ip = images.join(&file);
            fs::write(&ip, img).map_err(|e| Error::io(&ip, e))?;
            let lp = labels.join(&file);
            fs::write(&lp, lab).map_err(|e| Error::io(&lp, e))?;
            records.push(ManifestRecord {
                split,
                file,
                seed,
                shape: spec,
            });
        }
        meta_counts.insert(split.to_string(), counts[split_idx]);
    }
    let meta = DatasetMeta {
        num_classes: 2,
        scenario: scenario.to_string(),
        seed: opts.seed,
        height: opts.height,
        width: opts.width,
        counts: meta_counts,
    };
    let manifest = Manifest {
        scenario: scenario.to_string(),
        seed: opts.seed,
        height: opts.height,
        width: opts.width,
        options: &opts.sample,
        samples: records,
    };
    let write_json = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let p = out_dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    write_json("meta.json", serde_json::to_vec_pretty(&meta)?)?;
    write_json("manifest.json", serde_json::to_vec_pretty(&manifest)?)?;
    Ok(meta)
}

#[cfg(test)]
mod tests;
