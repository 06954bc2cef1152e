use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::RawImage;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Diagonal jitter added to both covariances when the product square root is ill-conditioned.
pub const FRECHET_JITTER: f64 = 1e-6;

/// `N x d` feature rows together with the name of the embedder that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    embedder: String,
    dim: usize,
    rows: Vec<f64>,
}

impl EmbeddingSet {
    pub fn new(embedder: impl Into<String>, dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || !rows.len().is_multiple_of(dim) {
            return Err(Error::shape(format!("{} values do not form rows of width {dim}", rows.len())));
        }
        Ok(EmbeddingSet {
            embedder: embedder.into(),
            dim,
            rows,
        })
    }

    pub fn embedder(&self) -> &str {
        &self.embedder
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Appends the rows of `other`, which must come from the same embedder.
    pub fn merge(&mut self, other: &EmbeddingSet) -> Result<()> {
        if other.dim != self.dim || other.embedder != self.embedder {
            return Err(Error::shape(format!(
                "cannot merge {}-d `{}` features into {}-d `{}` features",
                other.dim, other.embedder, self.dim, self.embedder
            )));
        }
        self.rows.extend_from_slice(&other.rows);
        Ok(())
    }

    fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.len();
        let x = DMatrix::from_row_slice(n, self.dim, &self.rows);
        let mean = x.row_mean().transpose();
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        (mean, cov)
    }
}

fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new((m + m.transpose()) * 0.5)
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = sym_eigen(m);
    let roots = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&roots) * e.eigenvectors.transpose()
}

/// `Tr((A B)^{1/2})` through the symmetric form `(A^{1/2} B A^{1/2})^{1/2}`, or `None` when
/// the product has clearly negative or non-finite eigenvalues.
fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<f64> {
    let ra = sqrt_psd(a);
    let e = sym_eigen(&(&ra * b * &ra));
    let scale = e.eigenvalues.amax().max(1.0);
    if e.eigenvalues.iter().any(|v| !v.is_finite() || *v < -1e-8 * scale) {
        return None;
    }
    Some(e.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum())
}

/// Fréchet distance between Gaussian fits of two embedding sets.
pub fn frechet_distance(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::shape(format!("feature dimensions {} and {} differ", a.dim, b.dim)));
    }
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::Config(format!("Fréchet distance needs at least 2 samples, got {}", s.len())));
        }
    }
    let (ma, ca) = a.moments();
    let (mb, cb) = b.moments();
    let mean_term = (&ma - &mb).norm_squared();
    let tr = match trace_sqrt_product(&ca, &cb) {
        Some(t) => ca.trace() + cb.trace() - 2.0 * t,
        None => {
            let eye = DMatrix::<f64>::identity(a.dim, a.dim) * FRECHET_JITTER;
            let (ja, jb) = (&ca + &eye, &cb + &eye);
            let t = trace_sqrt_product(&ja, &jb)
                .ok_or_else(|| Error::Config("covariance product has no real square root".into()))?;
            ja.trace() + jb.trace() - 2.0 * t
        }
    };
    Ok((mean_term + tr).max(0.0))
}

/// Maps an RGB image to a fixed-length feature vector.
pub trait Embedder: Send + Sync {
    /// Identifier recorded in every [`EmbeddingSet`]; distances are only comparable within one.
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, image: &RawImage<f64>) -> Result<Vec<f64>>;
}

pub fn embed_images<T: Scalar>(images: &[RawImage<T>], embedder: &dyn Embedder) -> Result<EmbeddingSet> {
    let mut rows = Vec::with_capacity(images.len() * embedder.dim());
    for img in images {
        let img64 = RawImage::new(img.height(), img.width(), img.pixels().iter().map(|v| v.as_f64()).collect())?;
        let f = embedder.embed(&img64)?;
        if f.len() != embedder.dim() {
            return Err(Error::shape(format!("embedder returned {} features, expected {}", f.len(), embedder.dim())));
        }
        rows.extend(f);
    }
    EmbeddingSet::new(embedder.id(), embedder.dim(), rows)
}

/// Box-averages an image onto a `side x side` grid, channels interleaved.
fn downsample(img: &RawImage<f64>, side: usize) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let span = |i: usize, n: usize| {
        let lo = i * n / side;
        (lo, ((i + 1) * n / side).max(lo + 1).min(n))
    };
    let mut out = Vec::with_capacity(side * side * 3);
    for i in 0..side {
        let (y0, y1) = span(i, h);
        for j in 0..side {
            let (x0, x1) = span(j, w);
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            for c in 0..3 {
                let mut s = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        s += img.get(y, x, c);
                    }
                }
                out.push(s / n);
            }
        }
    }
    out
}

/// Affine map of box-downsampled pixels: `features = W * pixels + bias`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearEmbedder {
    pub id: String,
    pub input_side: usize,
    pub dim: usize,
    /// Row-major `dim x (input_side^2 * 3)`.
    pub weights: Vec<f64>,
    #[serde(default)]
    pub bias: Vec<f64>,
}

impl LinearEmbedder {
    /// Fixed-seed Gaussian random projection of 16x16 thumbnails; needs no external asset.
    pub fn random_projection(dim: usize, seed: u64) -> Self {
        let side = 16;
        let inputs = side * side * 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (inputs as f64).sqrt();
        let weights = (0..dim * inputs)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect::<Vec<f64>>();
        LinearEmbedder {
            id: format!("random-projection-{dim}-{seed}"),
            input_side: side,
            dim,
            weights,
            bias: vec![0.0; dim],
        }
    }

    /// Loads a JSON embedder asset.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingAsset(path.to_path_buf()));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut e: LinearEmbedder = serde_json::from_slice(&bytes)?;
        if e.bias.is_empty() {
            e.bias = vec![0.0; e.dim];
        }
        e.validate()?;
        Ok(e)
    }

    fn validate(&self) -> Result<()> {
        let inputs = self.input_side * self.input_side * 3;
        if self.dim == 0 || self.input_side == 0 || self.weights.len() != self.dim * inputs || self.bias.len() != self.dim {
            return Err(Error::Config(format!(
                "embedder `{}`: expected {} weights and {} biases, found {} and {}",
                self.id,
                self.dim * inputs,
                self.dim,
                self.weights.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

impl Embedder for LinearEmbedder {
    fn id(&self) -> String {
        self.id.clone()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn embed(&self, image: &RawImage<f64>) -> Result<Vec<f64>> {
        let x = downsample(image, self.input_side);
        Ok(self
            .weights
            .chunks_exact(x.len())
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>())
            .collect())
    }
}

/// Default feature width of the built-in embedder.
pub const FALLBACK_DIM: usize = 64;
/// Seed of the built-in embedder's projection.
pub const FALLBACK_SEED: u64 = 0x00F1_D5EE;

/// The embedder named by `asset`, or the built-in random projection when `asset` is `None`.
pub fn load_embedder(asset: Option<PathBuf>) -> Result<Box<dyn Embedder>> {
    Ok(match asset {
        Some(p) => Box::new(LinearEmbedder::load(&p)?),
        None => Box::new(LinearEmbedder::random_projection(FALLBACK_DIM, FALLBACK_SEED)),
    })
}
