use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use pairgan::datamodel::{ClassMap, PixelMask, RawImage};
use pairgan::io::{read_label_png, read_rgb_png};
use pairgan::metrics::{
    embed_images, frechet_distance, l1_distance, load_embedder, masked_metrics, segmentation_report, ssim,
    MetricReport,
};
use serde::Serialize;

use crate::data::{file_name, image_dir, meta_classes, pngs, read_mask};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    L1,
    Ssim,
    Fid,
    /// Per-class IoU, mIoU and pixel accuracy from label maps.
    Segmentation,
}

impl Metric {
    pub fn parse(s: &str) -> Result<Metric> {
        Ok(match s {
            "l1" => Metric::L1,
            "ssim" => Metric::Ssim,
            "fid" => Metric::Fid,
            "miou" | "segmentation" => Metric::Segmentation,
            _ => bail!("unknown metric `{s}`; choose from l1, ssim, fid, miou"),
        })
    }
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    /// Predictions: a directory of PNGs, or a split directory with `images/` and `labels/`.
    #[arg(long)]
    pub pred: PathBuf,
    /// References, laid out like `--pred` with matching file names.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Foreground masks as label PNGs; nonzero pixels are kept in the masked metrics.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = crate::config::default_metrics())]
    pub metrics: Vec<String>,
    /// Class count for segmentation metrics; defaults to meta.json or the largest label.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Classes left out of the mIoU mean.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<u16>,
    /// Linear embedder asset; the built-in random projection is used when unset.
    #[arg(long, env = "PAIRGAN_EMBEDDER")]
    pub embedder: Option<PathBuf>,
    /// Directory receiving report.txt and report.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_images(paths: &[PathBuf]) -> Result<Vec<RawImage<f32>>> {
    paths
        .iter()
        .map(|p| read_rgb_png(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn load_labels(dir: &Path, names: &[String], what: &str) -> Result<Vec<ClassMap>> {
    let labels = dir.join("labels");
    if !labels.is_dir() {
        bail!("segmentation metrics need label maps, but {what} has no {} directory", labels.display());
    }
    names
        .iter()
        .map(|n| {
            let p = labels.join(n);
            if !p.is_file() {
                bail!("missing label map {}", p.display());
            }
            Ok(read_label_png(&p, 256)?)
        })
        .collect()
}

fn relabel(maps: Vec<ClassMap>, classes: usize) -> Result<Vec<ClassMap>> {
    maps.into_iter()
        .map(|m| Ok(ClassMap::new(m.height(), m.width(), classes, m.labels().to_vec())?))
        .collect()
}

pub fn run(args: &EvalArgs) -> Result<MetricReport> {
    let metrics: Vec<Metric> = args.metrics.iter().map(|m| Metric::parse(m)).collect::<Result<_>>()?;
    let pred_files = pngs(&image_dir(&args.pred), "pred")?;
    let names: Vec<String> = pred_files.iter().map(|p| file_name(p)).collect();
    let ref_dir = image_dir(&args.reference);
    let ref_files: Vec<PathBuf> = names.iter().map(|n| ref_dir.join(n)).collect();
    if let Some(missing) = ref_files.iter().find(|p| !p.is_file()) {
        bail!("ref: no counterpart {} for a predicted image", missing.display());
    }
    let masks: Option<Vec<PixelMask>> = match &args.masks {
        None => None,
        Some(dir) => Some(
            names
                .iter()
                .map(|n| {
                    let p = dir.join(n);
                    if !p.is_file() {
                        bail!("masks: missing {}", p.display());
                    }
                    read_mask(&p)
                })
                .collect::<Result<_>>()?,
        ),
    };

    let mut report = MetricReport::default();
    let needs_images = metrics.iter().any(|m| *m != Metric::Segmentation);
    let (preds, refs) = if needs_images {
        (load_images(&pred_files)?, load_images(&ref_files)?)
    } else {
        (vec![], vec![])
    };
    type Pairs = (Vec<RawImage<f32>>, Vec<RawImage<f32>>);
    let masked: Option<Pairs> = match (&masks, needs_images) {
        (Some(ms), true) => {
            let mut a = Vec::with_capacity(ms.len());
            let mut b = Vec::with_capacity(ms.len());
            for ((p, r), m) in preds.iter().zip(&refs).zip(ms) {
                let (x, y) = masked_metrics(p, r, m)?;
                a.push(x);
                b.push(y);
            }
            Some((a, b))
        }
        _ => None,
    };

    for metric in &metrics {
        match metric {
            Metric::L1 | Metric::Ssim => {
                let f = if *metric == Metric::L1 { l1_distance::<f32> } else { ssim::<f32> };
                let score = |a: &[RawImage<f32>], b: &[RawImage<f32>]| -> Result<f64> {
                    let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| f(x, y)).collect::<Result<_, _>>()?;
                    Ok(mean(&v))
                };
                let full = score(&preds, &refs)?;
                let m = masked.as_ref().map(|(a, b)| score(a, b)).transpose()?;
                report.push(if *metric == Metric::L1 { "l1" } else { "ssim" }, Some(full), m);
            }
            Metric::Fid => {
                let embedder = load_embedder(args.embedder.clone())?;
                let fid = |a: &[RawImage<f32>], b: &[RawImage<f32>]| -> Result<f64> {
                    let (ea, eb) = (embed_images(a, embedder.as_ref())?, embed_images(b, embedder.as_ref())?);
                    Ok(frechet_distance(&ea, &eb)?)
                };
                let full = fid(&preds, &refs).context("fid")?;
                let m = masked.as_ref().map(|(a, b)| fid(a, b)).transpose()?;
                report.push("fid", Some(full), m);
                report.notes.push(format!("fid embedder: {}", embedder.id()));
            }
            Metric::Segmentation => {
                let p = load_labels(&args.pred, &names, "pred")?;
                let g = load_labels(&args.reference, &names, "ref")?;
                let largest = p.iter().chain(&g).flat_map(|m| m.labels().iter().copied()).max().unwrap_or(0);
                let classes = args
                    .classes
                    .or_else(|| meta_classes(&args.reference))
                    .unwrap_or(largest as usize + 1);
                let seg = segmentation_report(&relabel(p, classes)?, &relabel(g, classes)?, classes, &args.exclude)?;
                report.add_segmentation(&seg);
            }
        }
    }
    report.validate()?;
    print!("{}", report.to_text());
    if let Some(out) = &args.out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        fs::write(out.join("report.txt"), report.to_text())?;
        fs::write(out.join("report.csv"), report.to_csv())?;
    }
    Ok(report)
}
