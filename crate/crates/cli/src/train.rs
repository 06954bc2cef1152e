use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use pairgan::datamodel::LabeledPair;
use pairgan::io::{load_split, LabeledFile};
use pairgan::trainer::{fit, load_checkpoint, Batch};
use pairgan::TrainState;

use crate::config::RunConfig;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Continue from `<output>/checkpoints/latest.ckpt`.
    #[arg(long)]
    pub resume: bool,
    /// Print a loss line every this many steps (0 disables).
    #[arg(long, default_value_t = 100)]
    pub log_every: u64,
}

fn batches(files: &[LabeledFile<f32>], side: usize, field: &str) -> Result<Vec<Batch<f32>>> {
    files
        .iter()
        .map(|f| {
            if (f.image.height(), f.image.width()) != (side, side) {
                bail!(
                    "{field}: {} is {}x{} but train.image_size is {side}",
                    f.name,
                    f.image.height(),
                    f.image.width()
                );
            }
            Ok(Batch::from_pair(&LabeledPair::from_raw(&f.image, &f.labels)?)?)
        })
        .collect()
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    let notes = cfg.resolve()?;
    println!("# effective configuration\n{}", cfg.to_toml());
    for n in notes {
        println!("# note: {n}");
    }
    cfg.check_paths()?;
    let train = &cfg.train;
    let load = |dir: &PathBuf, field: &str| -> Result<Vec<Batch<f32>>> {
        let files = load_split::<f32>(dir, train.classes).with_context(|| format!("{field}: {}", dir.display()))?;
        if files.is_empty() {
            bail!("{field}: no images in {}", dir.join("images").display());
        }
        batches(&files, train.image_size, field)
    };
    let source = load(&cfg.source, "source")?;
    let target = load(&cfg.target, "target")?;

    fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    fs::write(cfg.output.join("config.toml"), cfg.to_toml())?;
    let latest = cfg.output.join("checkpoints/latest.ckpt");
    let mut state = if args.resume {
        let s = load_checkpoint::<f32>(&latest, Some(train.classes))
            .with_context(|| format!("resuming from {}", latest.display()))?;
        if s.config() != train {
            bail!("the checkpoint at {} was trained with a different configuration", latest.display());
        }
        println!("resuming after epoch {} (step {})", s.epoch(), s.step());
        s
    } else {
        TrainState::new(train)?
    };

    let started = Instant::now();
    let every = args.log_every;
    let summary = fit(&mut state, &source, &target, &cfg.output, &mut |s, r| {
        if every > 0 && s.step() % every == 0 {
            eprintln!(
                "step {} epoch {} lr {:.2e} total {:.4} adv_G {:.4} adv_D {:.4} idt {:.4} rec {:.4} cls {:.4} dom {:.4} ({:.0}s)",
                s.step(),
                s.epoch() + 1,
                s.current_lr(),
                r.total,
                r.adv_g,
                r.adv_d,
                r.idt,
                r.rec,
                r.cls,
                r.dom,
                started.elapsed().as_secs_f64()
            );
        }
    })?;
    println!(
        "trained {} epochs ({} steps); checkpoint {}; log {}",
        summary.epochs,
        summary.steps,
        summary.checkpoint.display(),
        summary.log.display()
    );
    Ok(())
}
