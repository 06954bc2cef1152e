use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{save_checkpoint, Batch, TrainState};
use crate::error::{Error, Result};
use crate::losses::LossReport;
use crate::scalar::Scalar;
use crate::seed::derive_seed;

/// Header row of the per-step loss log.
pub const LOG_HEADER: &str = "step,epoch,adv_G,adv_D,idt,rec,cls,dom,total";

/// Visiting order of one domain during one epoch; depends only on its arguments.
pub fn permutation(len: usize, seed: u64, epoch: usize, domain: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x5_4FF1E, epoch as u64, domain]));
    order.shuffle(&mut rng);
    order
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitSummary {
    pub epochs: usize,
    pub steps: u64,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

fn log_row(step: u64, epoch: usize, r: &LossReport) -> String {
    format!(
        "{step},{epoch},{},{},{},{},{},{},{}\n",
        r.adv_g, r.adv_d, r.idt, r.rec, r.cls, r.dom, r.total
    )
}

fn check_domain<T: Scalar>(data: &[Batch<T>], what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Config(format!("{what} dataset is empty")));
    }
    if let Some(b) = data.iter().find(|b| b.len() != 1) {
        return Err(Error::shape(format!("{what} samples must hold one pair each, found {}", b.len())));
    }
    Ok(())
}

/// Runs the remaining epochs of `state` over unpaired samples of both domains.
///
/// Each epoch visits both domains in independent seeded orders for
/// `ceil(max(|S|, |T|) / batch)` steps, cycling the smaller domain. Every step appends a row to
/// `out_dir/losses.csv`; checkpoints land in `out_dir/checkpoints/`, with `latest.ckpt`
/// always holding the most recent one.
pub fn fit<T: Scalar>(
    state: &mut TrainState<T>,
    data_s: &[Batch<T>],
    data_t: &[Batch<T>],
    out_dir: &Path,
    on_step: &mut dyn FnMut(&TrainState<T>, &LossReport),
) -> Result<FitSummary> {
    check_domain(data_s, "source")?;
    check_domain(data_t, "target")?;
    let ckpt_dir = out_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    let log_path = out_dir.join("losses.csv");
    let fresh = state.step == 0 || !log_path.exists();
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    if fresh {
        writeln!(log, "{LOG_HEADER}").map_err(|e| Error::io(&log_path, e))?;
    }

    let cfg = state.config().clone();
    let batch = cfg.batch_size;
    let steps = data_s.len().max(data_t.len()).div_ceil(batch);
    let latest = ckpt_dir.join("latest.ckpt");
    while state.epoch < cfg.epochs {
        let order_s = permutation(data_s.len(), cfg.seed, state.epoch, 0);
        let order_t = permutation(data_t.len(), cfg.seed, state.epoch, 1);
        for i in 0..steps {
            let pick = |data: &[Batch<T>], order: &[usize]| -> Result<Batch<T>> {
                let parts: Vec<&Batch<T>> = (0..batch).map(|j| &data[order[(i * batch + j) % order.len()]]).collect();
                Batch::concat(&parts)
            };
            let report = state.train_step(&pick(data_s, &order_s)?, &pick(data_t, &order_t)?)?;
            log.write_all(log_row(state.step, state.epoch + 1, &report).as_bytes())
                .map_err(|e| Error::io(&log_path, e))?;
            on_step(state, &report);
        }
        state.epoch += 1;
        if state.epoch.is_multiple_of(cfg.checkpoint_every) || state.epoch == cfg.epochs {
            save_checkpoint(state, &ckpt_dir.join(format!("epoch_{:04}.ckpt", state.epoch)))?;
            save_checkpoint(state, &latest)?;
        }
        log.flush().map_err(|e| Error::io(&log_path, e))?;
    }
    if !latest.exists() {
        save_checkpoint(state, &latest)?;
    }
    Ok(FitSummary {
        epochs: state.epoch,
        steps: state.step,
        checkpoint: latest,
        log: log_path,
    })
}
