use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use pairgan::datamodel::{argmax_decode, LabeledPair};
use pairgan::io::{load_split, write_label_png, write_rgb_png};
use pairgan::trainer::load_checkpoint;
use serde::Serialize;

use crate::data::{colorize, meta_classes, side_by_side};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Domain A to domain B.
    S2t,
    /// Domain B to domain A.
    T2s,
}

#[derive(Args, Debug, Serialize)]
pub struct TranslateArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "s2t")]
    pub direction: Direction,
    /// Split directory with `images/` and `labels/`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Expected class count; read from the dataset's meta.json when omitted.
    #[arg(long)]
    pub classes: Option<usize>,
}

pub fn run(args: &TranslateArgs) -> Result<()> {
    let expected = args.classes.or_else(|| meta_classes(&args.input));
    let state = load_checkpoint::<f32>(&args.checkpoint, expected)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let classes = state.config().classes;
    let generator = match args.direction {
        Direction::S2t => state.g_s2t(),
        Direction::T2s => state.g_t2s(),
    };
    if !args.input.join("labels").is_dir() {
        bail!("input: {} has no labels/ directory", args.input.display());
    }
    let files = load_split::<f32>(&args.input, classes).with_context(|| format!("reading {}", args.input.display()))?;
    if files.is_empty() {
        bail!("input: no images in {}", args.input.join("images").display());
    }
    let dirs = ["images", "labels", "grids"].map(|d| args.out.join(d));
    for d in &dirs {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    for f in &files {
        let pair = LabeledPair::from_raw(&f.image, &f.labels)?;
        let (img, probs) = generator.translate(&pair).with_context(|| f.name.clone())?;
        let img = img.de_center();
        let map = argmax_decode(&probs)?;
        write_rgb_png(&dirs[0].join(&f.name), &img)?;
        write_label_png(&dirs[1].join(&f.name), &map)?;
        let grid = side_by_side(&[f.image.clone(), img, colorize(&f.labels)?, colorize(&map)?])?;
        write_rgb_png(&dirs[2].join(&f.name), &grid)?;
    }
    println!("translated {} images into {}", files.len(), args.out.display());
    Ok(())
}
