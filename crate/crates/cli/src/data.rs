use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pairgan::datamodel::{ClassMap, RawImage};
use pairgan::io::{list_pngs, read_label_png, DatasetMeta};

/// `dir/images` when it exists, otherwise `dir` itself.
pub fn image_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("images");
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

/// Class count recorded in a `meta.json` next to or above a split directory.
pub fn meta_classes(split_dir: &Path) -> Option<usize> {
    [Some(split_dir), split_dir.parent()]
        .into_iter()
        .flatten()
        .find_map(|d| DatasetMeta::read(d).ok())
        .map(|m| m.num_classes)
}

/// Sorted PNG files of a directory, failing when there are none.
pub fn pngs(dir: &Path, what: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        bail!("{what}: directory {} does not exist", dir.display());
    }
    let files = list_pngs(dir)?;
    if files.is_empty() {
        bail!("{what}: no PNG files in {}", dir.display());
    }
    Ok(files)
}

pub fn file_name(p: &Path) -> String {
    p.file_name().expect("file path").to_string_lossy().into_owned()
}

/// Foreground mask stored as a label PNG: every nonzero value is foreground.
pub fn read_mask(path: &Path) -> Result<pairgan::datamodel::PixelMask> {
    let labels = read_label_png(path, 256).with_context(|| format!("mask {}", path.display()))?;
    let bits = labels.labels().iter().map(|&l| u8::from(l != 0)).collect();
    Ok(pairgan::datamodel::PixelMask::new(labels.height(), labels.width(), bits)?)
}

const PALETTE: [[f32; 3]; 8] = [
    [0.0, 0.0, 0.0],
    [0.9, 0.9, 0.9],
    [0.9, 0.3, 0.2],
    [0.2, 0.6, 0.9],
    [0.3, 0.8, 0.3],
    [0.95, 0.8, 0.2],
    [0.7, 0.3, 0.8],
    [0.2, 0.8, 0.8],
];

fn class_color(c: u16) -> [f32; 3] {
    PALETTE[c as usize % PALETTE.len()]
}

pub fn colorize(map: &ClassMap) -> Result<RawImage<f32>> {
    Ok(RawImage::from_fn(map.height(), map.width(), |y, x, c| class_color(map.get(y, x))[c])?)
}

/// Panels placed left to right with a white gap, top-aligned on a white canvas.
pub fn side_by_side(panels: &[RawImage<f32>]) -> Result<RawImage<f32>> {
    const GAP: usize = 2;
    let h = panels.iter().map(|p| p.height()).max().unwrap_or(0);
    let w = panels.iter().map(|p| p.width()).sum::<usize>() + GAP * panels.len().saturating_sub(1);
    let mut offsets = Vec::with_capacity(panels.len());
    let mut x0 = 0;
    for p in panels {
        offsets.push(x0);
        x0 += p.width() + GAP;
    }
    Ok(RawImage::from_fn(h, w, |y, x, c| {
        for (p, &o) in panels.iter().zip(&offsets) {
            if x >= o && x < o + p.width() {
                return if y < p.height() { p.get(y, x - o, c) } else { 1.0 };
            }
        }
        1.0
    })?)
}
