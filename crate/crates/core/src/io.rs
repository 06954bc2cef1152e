//! PNG images, label maps and dataset directories.
//!
//! Dataset layout: `root/{trainA,trainB,testA,testB}/{images,labels}/NNNNNN.png` plus
//! `root/meta.json`. Images are 8-bit RGB; labels are 8-bit grayscale with value = class id.

use std::collections::BTreeMap;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datamodel::{ClassMap, RawImage};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SPLITS: [&str; 4] = ["trainA", "trainB", "testA", "testB"];

fn png_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Png {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

fn encode(width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("writing to memory");
        writer.write_image_data(data).expect("buffer matches header");
    }
    out
}

/// 8-bit RGB PNG bytes; values are rounded to the nearest of 256 levels.
pub fn encode_rgb_png<T: Scalar>(img: &RawImage<T>) -> Vec<u8> {
    let data: Vec<u8> = img
        .pixels()
        .iter()
        .map(|v| (v.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    encode(img.width(), img.height(), png::ColorType::Rgb, &data)
}

/// 8-bit grayscale PNG bytes holding class ids.
pub fn encode_label_png(cmap: &ClassMap) -> Result<Vec<u8>> {
    if cmap.classes() > 256 {
        return Err(Error::Config(format!(
            "{} classes do not fit an 8-bit label image",
            cmap.classes()
        )));
    }
    let data: Vec<u8> = cmap.labels().iter().map(|&l| l as u8).collect();
    Ok(encode(cmap.width(), cmap.height(), png::ColorType::Grayscale, &data))
}

struct Decoded {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

fn decode(path: &Path, bytes: &[u8]) -> Result<Decoded> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(|e| png_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err(path, "image too large"))?;
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data).map_err(|e| png_err(path, e))?;
    data.truncate(info.buffer_size());
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(png_err(path, "unexpanded palette image")),
    };
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        channels,
        data,
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Decodes RGB, RGBA or grayscale PNG bytes into `[0,1]` values; alpha is dropped.
pub fn decode_rgb_png<T: Scalar>(path: &Path, bytes: &[u8]) -> Result<RawImage<T>> {
    let d = decode(path, bytes)?;
    let mut pixels = Vec::with_capacity(d.width * d.height * 3);
    let inv = T::lit(1.0 / 255.0);
    for px in d.data.chunks_exact(d.channels) {
        for c in 0..3 {
            let v = if d.channels < 3 { px[0] } else { px[c] };
            pixels.push(T::lit(v as f64) * inv);
        }
    }
    RawImage::new(d.height, d.width, pixels)
}

pub fn read_rgb_png<T: Scalar>(path: &Path) -> Result<RawImage<T>> {
    decode_rgb_png(path, &read_bytes(path)?)
}

pub fn write_rgb_png<T: Scalar>(path: &Path, img: &RawImage<T>) -> Result<()> {
    fs::write(path, encode_rgb_png(img)).map_err(|e| Error::io(path, e))
}

/// Reads a single-channel label image, checking every id against `classes`.
pub fn read_label_png(path: &Path, classes: usize) -> Result<ClassMap> {
    let d = decode(path, &read_bytes(path)?)?;
    if d.channels != 1 {
        return Err(png_err(path, format!("label image has {} channels, expected 1", d.channels)));
    }
    ClassMap::new(d.height, d.width, classes, d.data.iter().map(|&v| v as u16).collect())
}

pub fn write_label_png(path: &Path, cmap: &ClassMap) -> Result<()> {
    fs::write(path, encode_label_png(cmap)?).map_err(|e| Error::io(path, e))
}

/// Sorted `*.png` files directly inside `dir`.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Contents of `meta.json` at a dataset root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_classes: usize,
    pub scenario: String,
    pub seed: u64,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    /// Sample count per split directory.
    pub counts: BTreeMap<String, usize>,
}

impl DatasetMeta {
    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join("meta.json");
        Ok(serde_json::from_slice(&read_bytes(&path)?)?)
    }
}

/// One image with its label map, named after its file.
#[derive(Clone, Debug)]
pub struct LabeledFile<T> {
    pub name: String,
    pub image: RawImage<T>,
    pub labels: ClassMap,
}

/// Loads every `images/*.png` of a split directory with the same-named `labels/*.png`.
pub fn load_split<T: Scalar>(split_dir: &Path, classes: usize) -> Result<Vec<LabeledFile<T>>> {
    let images = split_dir.join("images");
    let labels = split_dir.join("labels");
    list_pngs(&images)?
        .into_iter()
        .map(|path| {
            let name = path.file_name().expect("listed file").to_string_lossy().into_owned();
            let image = read_rgb_png(&path)?;
            let label_path = labels.join(&name);
            if !label_path.exists() {
                return Err(Error::MissingAsset(label_path));
            }
            let cmap = read_label_png(&label_path, classes)?;
            if (cmap.height(), cmap.width()) != (image.height(), image.width()) {
                return Err(Error::shape(format!("{name}: label map size differs from the image")));
            }
            Ok(LabeledFile {
                name,
                image,
                labels: cmap,
            })
        })
        .collect()
}
