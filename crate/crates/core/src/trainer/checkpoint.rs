//! Checkpoint archive: magic bytes, format version, a JSON manifest, then raw blobs.
//!
//! Layout: `MAGIC (8) | version u32 LE | manifest length u64 LE | manifest | blobs...`.
//! Each blob is a run of little-endian `f32` values with its own CRC32 in the manifest.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, HistoryBuffer, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PAIRGAN\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RngState {
    /// Hex-encoded 32-byte key.
    seed: String,
    stream: u64,
    /// Decimal, since the position is a 68-bit value.
    word_pos: String,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = || Error::Checkpoint("malformed RNG state".into());
        if self.seed.len() != 64 {
            return Err(bad());
        }
        let mut key = [0u8; 32];
        for (i, b) in key.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad())?);
        Ok(rng)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryMeta {
    items: usize,
    rng: RngState,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlobEntry {
    name: String,
    /// Number of `f32` values.
    len: usize,
    crc32: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    config: TrainConfig,
    epoch: usize,
    step: u64,
    /// Adam step counts of g_s2t, g_t2s, d_s, d_t.
    adam_steps: [u64; 4],
    history_s: HistoryMeta,
    history_t: HistoryMeta,
    blobs: Vec<BlobEntry>,
}

const NETS: [&str; 4] = ["g_s2t", "g_t2s", "d_s", "d_t"];

struct Writer {
    entries: Vec<BlobEntry>,
    data: Vec<u8>,
}

impl Writer {
    fn push<T: Scalar>(&mut self, name: String, values: &[T]) {
        let start = self.data.len();
        for v in values {
            self.data.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        self.entries.push(BlobEntry {
            name,
            len: values.len(),
            crc32: crc32fast::hash(&self.data[start..]),
        });
    }

    fn model<T: Scalar, P: Parameters<T>>(&mut self, net: &str, model: &P, opt: &Adam<T>) {
        let params = model.params();
        for (name, p) in &params {
            self.push(format!("{net}/{name}"), &p.value);
        }
        let (m, v) = opt.moments();
        for ((name, _), m) in params.iter().zip(m) {
            self.push(format!("{net}.adam_m/{name}"), m);
        }
        for ((name, _), v) in params.iter().zip(v) {
            self.push(format!("{net}.adam_v/{name}"), v);
        }
    }
}

/// Serializes the full training state.
pub fn checkpoint_bytes<T: Scalar>(state: &TrainState<T>) -> Result<Vec<u8>> {
    let mut w = Writer {
        entries: Vec::new(),
        data: Vec::new(),
    };
    w.model(NETS[0], &state.g_s2t, &state.opt_g_s2t);
    w.model(NETS[1], &state.g_t2s, &state.opt_g_t2s);
    w.model(NETS[2], &state.d_s, &state.opt_d_s);
    w.model(NETS[3], &state.d_t, &state.opt_d_t);
    for (tag, buf) in [("history_s", &state.history_s), ("history_t", &state.history_t)] {
        for (i, item) in buf.items().iter().enumerate() {
            w.push(format!("{tag}/{i}"), item.data());
        }
    }
    let meta = |b: &HistoryBuffer<Tensor<T>>| HistoryMeta {
        items: b.len(),
        rng: RngState::capture(b.rng()),
    };
    let manifest = Manifest {
        config: state.config.clone(),
        epoch: state.epoch,
        step: state.step,
        adam_steps: [
            state.opt_g_s2t.steps(),
            state.opt_g_t2s.steps(),
            state.opt_d_s.steps(),
            state.opt_d_t.steps(),
        ],
        history_s: meta(&state.history_s),
        history_t: meta(&state.history_t),
        blobs: w.entries,
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    let mut out = Vec::with_capacity(20 + json.len() + w.data.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&w.data);
    Ok(out)
}

/// Writes the archive atomically (temporary file, then rename).
pub fn save_checkpoint<T: Scalar>(state: &TrainState<T>, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(state)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Blobs {
    map: HashMap<String, Vec<f32>>,
}

impl Blobs {
    fn take<T: Scalar>(&mut self, name: &str, len: usize) -> Result<Vec<T>> {
        let v = self
            .map
            .remove(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing blob `{name}`")))?;
        if v.len() != len {
            return Err(Error::Checkpoint(format!(
                "blob `{name}` has {} values, expected {len}",
                v.len()
            )));
        }
        Ok(v.into_iter().map(|x| T::lit(x as f64)).collect())
    }

    fn model<T: Scalar, P: Parameters<T>>(&mut self, net: &str, model: &mut P, opt: &mut Adam<T>, steps: u64) -> Result<()> {
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (name, p) in model.params_mut() {
            p.value = self.take(&format!("{net}/{name}"), p.len())?;
            m.push(self.take(&format!("{net}.adam_m/{name}"), p.len())?);
            v.push(self.take(&format!("{net}.adam_v/{name}"), p.len())?);
        }
        if !opt.restore(steps, m, v) {
            return Err(Error::Checkpoint(format!("optimizer state of {net} does not match")));
        }
        Ok(())
    }
}

/// Parses an archive produced by [`checkpoint_bytes`].
pub fn checkpoint_from_bytes<T: Scalar>(bytes: &[u8], expected_classes: Option<usize>) -> Result<TrainState<T>> {
    let truncated = || Error::Checkpoint("archive is truncated".into());
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint archive".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..).ok_or_else(truncated)?;
    let manifest: Manifest = serde_json::from_slice(body.get(..mlen).ok_or_else(truncated)?)?;
    if let Some(m) = expected_classes {
        if manifest.config.classes != m {
            return Err(Error::ClassCount {
                expected: m,
                found: manifest.config.classes,
            });
        }
    }
    let mut offset = mlen;
    let mut map = HashMap::with_capacity(manifest.blobs.len());
    for e in &manifest.blobs {
        let raw = body.get(offset..offset + 4 * e.len).ok_or_else(truncated)?;
        if crc32fast::hash(raw) != e.crc32 {
            return Err(Error::Checksum { blob: e.name.clone() });
        }
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if map.insert(e.name.clone(), values).is_some() {
            return Err(Error::Checkpoint(format!("duplicate blob `{}`", e.name)));
        }
        offset += 4 * e.len;
    }
    if offset != body.len() {
        return Err(Error::Checkpoint("trailing bytes after the last blob".into()));
    }

    let mut state = TrainState::<T>::new(&manifest.config)?;
    if state.config != manifest.config {
        return Err(Error::Checkpoint("stored configuration is not in resolved form".into()));
    }
    let mut blobs = Blobs { map };
    let [a, b, c, d] = manifest.adam_steps;
    blobs.model(NETS[0], &mut state.g_s2t, &mut state.opt_g_s2t, a)?;
    blobs.model(NETS[1], &mut state.g_t2s, &mut state.opt_g_t2s, b)?;
    blobs.model(NETS[2], &mut state.d_s, &mut state.opt_d_s, c)?;
    blobs.model(NETS[3], &mut state.d_t, &mut state.opt_d_t, d)?;
    let side = state.config.image_size;
    let item_shape = [1, 3 + state.config.classes, side, side];
    let item_len = item_shape.iter().product();
    let capacity = state.config.history_capacity;
    for (tag, meta, slot) in [
        ("history_s", &manifest.history_s, &mut state.history_s),
        ("history_t", &manifest.history_t, &mut state.history_t),
    ] {
        if meta.items > capacity {
            return Err(Error::Checkpoint(format!("{tag} holds more than {capacity} items")));
        }
        let items = (0..meta.items)
            .map(|i| Tensor::from_vec(item_shape, blobs.take(&format!("{tag}/{i}"), item_len)?))
            .collect::<Result<Vec<_>>>()?;
        *slot = HistoryBuffer::restore(capacity, items, meta.rng.restore()?);
    }
    if let Some(name) = blobs.map.keys().min() {
        return Err(Error::Checkpoint(format!("unexpected blob `{name}`")));
    }
    state.epoch = manifest.epoch;
    state.step = manifest.step;
    Ok(state)
}

/// Reads a checkpoint, optionally insisting on a class count.
pub fn load_checkpoint<T: Scalar>(path: &Path, expected_classes: Option<usize>) -> Result<TrainState<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, expected_classes)
}
