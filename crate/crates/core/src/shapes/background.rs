use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::RawImage;
use crate::error::{Error, Result};
use crate::io::{list_pngs, read_rgb_png};
use crate::scalar::Scalar;

/// Source of the pixels behind the shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackgroundSpec {
    /// Independent uniform values per pixel and channel.
    UniformNoise,
    /// Two octaves of smoothly interpolated lattice noise.
    #[default]
    SmoothNoise,
    /// Random crop of a PNG file, or of a seed-chosen PNG inside a directory.
    ImageFile { path: PathBuf },
}

/// Background image; deterministic in `seed`.
pub fn synth_background<T: Scalar>(spec: &BackgroundSpec, height: usize, width: usize, seed: u64) -> Result<RawImage<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec {
        BackgroundSpec::UniformNoise => RawImage::from_fn(height, width, |_, _, _| T::lit(rng.random::<f64>())),
        BackgroundSpec::SmoothNoise => {
            let coarse = Lattice::new(&mut rng, height, width, 4);
            let fine = Lattice::new(&mut rng, height, width, 8);
            RawImage::from_fn(height, width, |y, x, c| {
                T::lit((2.0 * coarse.sample(y, x, c) + fine.sample(y, x, c)) / 3.0)
            })
        }
        BackgroundSpec::ImageFile { path } => crop_file(path, height, width, &mut rng),
    }
}

/// Random RGB values on a regular grid with `cells` intervals per side.
struct Lattice {
    cells: usize,
    step_y: f64,
    step_x: f64,
    values: Vec<[f64; 3]>,
}

impl Lattice {
    fn new(rng: &mut ChaCha8Rng, height: usize, width: usize, cells: usize) -> Self {
        let n = (cells + 1) * (cells + 1);
        let values = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        Lattice {
            cells,
            step_y: height as f64 / cells as f64,
            step_x: width as f64 / cells as f64,
            values,
        }
    }

    fn sample(&self, y: usize, x: usize, c: usize) -> f64 {
        let fy = ((y as f64 + 0.5) / self.step_y).min(self.cells as f64 - 1e-9);
        let fx = ((x as f64 + 0.5) / self.step_x).min(self.cells as f64 - 1e-9);
        let (iy, ix) = (fy as usize, fx as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (ty, tx) = (smooth(fy - iy as f64), smooth(fx - ix as f64));
        let at = |r: usize, q: usize| self.values[r * (self.cells + 1) + q][c];
        let top = at(iy, ix) * (1.0 - tx) + at(iy, ix + 1) * tx;
        let bottom = at(iy + 1, ix) * (1.0 - tx) + at(iy + 1, ix + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

fn crop_file<T: Scalar>(path: &Path, height: usize, width: usize, rng: &mut ChaCha8Rng) -> Result<RawImage<T>> {
    if !path.exists() {
        return Err(Error::MissingAsset(path.to_path_buf()));
    }
    let file = if path.is_dir() {
        let files = list_pngs(path)?;
        if files.is_empty() {
            return Err(Error::MissingAsset(path.join("*.png")));
        }
        files[rng.random_range(0..files.len())].clone()
    } else {
        path.to_path_buf()
    };
    let src = read_rgb_png::<T>(&file)?;
    if src.height() < height || src.width() < width {
        return Err(Error::BackgroundTooSmall {
            path: file,
            width: src.width(),
            height: src.height(),
            need_width: width,
            need_height: height,
        });
    }
    let oy = rng.random_range(0..=src.height() - height);
    let ox = rng.random_range(0..=src.width() - width);
    RawImage::from_fn(height, width, |y, x, c| src.get(oy + y, ox + x, c))
}
