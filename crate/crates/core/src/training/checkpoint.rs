//! Checkpoint files.
//!
//! ```text
//! "PRBC" | version u16 | block_len u32 | block: UTF-8 `key=value\n` lines
//! then until EOF, one record per parameter:
//!   name_len u16 | name | rank u8 | extents u64 × rank | values f64 × Π extents
//! ```
//!
//! All integers little-endian. The block holds the network configuration,
//! the scalar statistics, the labelling boundary and training metadata.

use std::collections::HashMap;
use std::path::Path;

use crate::dataset::{ErrorMode, LabeledDataset};
use crate::error::{ProbeError, Result};
use crate::model::{Mode, ProbeConfig, ProbeModel};
use crate::nn::Tensor;
use crate::training::schedule::TrainState;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PRBC";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub boundary: f64,
    pub percentile: f64,
    pub error_mode: ErrorMode,
    pub class_weights: [f64; 2],
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
}

impl Default for CheckpointMeta {
    fn default() -> Self {
        Self {
            boundary: 0.0,
            percentile: 50.0,
            error_mode: ErrorMode::Raw,
            class_weights: [1.0, 1.0],
            epochs_run: 0,
            best_epoch: None,
            best_val_loss: None,
            final_train_loss: None,
            final_val_loss: None,
        }
    }
}

impl CheckpointMeta {
    pub fn from_training(train: &LabeledDataset, state: &TrainState) -> Self {
        let last = state.history.last();
        Self {
            boundary: train.boundary,
            percentile: train.percentile,
            error_mode: train.error_mode,
            class_weights: train.class_weights,
            epochs_run: state.history.len(),
            best_epoch: state.best_epoch,
            best_val_loss: state.best_val_loss.is_finite().then_some(state.best_val_loss),
            final_train_loss: last.map(|r| r.train_loss),
            final_val_loss: last.map(|r| r.val_loss),
        }
    }

    fn to_kv(&self) -> Vec<(String, String)> {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_else(|| "none".into())
        }
        vec![
            ("boundary".into(), self.boundary.to_string()),
            ("percentile".into(), self.percentile.to_string()),
            ("error_mode".into(), self.error_mode.as_str().into()),
            ("class_weight_reliable".into(), self.class_weights[0].to_string()),
            ("class_weight_unreliable".into(), self.class_weights[1].to_string()),
            ("epochs_run".into(), self.epochs_run.to_string()),
            ("best_epoch".into(), opt(self.best_epoch)),
            ("best_val_loss".into(), opt(self.best_val_loss)),
            ("final_train_loss".into(), opt(self.final_train_loss)),
            ("final_val_loss".into(), opt(self.final_val_loss)),
        ]
    }

    fn from_kv(map: &HashMap<String, String>) -> Result<Self> {
        let get = |k: &str| {
            map.get(k)
                .map(String::as_str)
                .ok_or_else(|| ProbeError::Config(format!("checkpoint is missing `{k}`")))
        };
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| ProbeError::Config(format!("bad value `{v}` for `{k}`")))
        }
        fn opt<T: std::str::FromStr>(k: &str, v: &str) -> Result<Option<T>> {
            if v == "none" {
                Ok(None)
            } else {
                parse(k, v).map(Some)
            }
        }
        Ok(Self {
            boundary: parse("boundary", get("boundary")?)?,
            percentile: parse("percentile", get("percentile")?)?,
            error_mode: ErrorMode::parse(get("error_mode")?)?,
            class_weights: [
                parse("class_weight_reliable", get("class_weight_reliable")?)?,
                parse("class_weight_unreliable", get("class_weight_unreliable")?)?,
            ],
            epochs_run: parse("epochs_run", get("epochs_run")?)?,
            best_epoch: opt("best_epoch", get("best_epoch")?)?,
            best_val_loss: opt("best_val_loss", get("best_val_loss")?)?,
            final_train_loss: opt("final_train_loss", get("final_train_loss")?)?,
            final_val_loss: opt("final_val_loss", get("final_val_loss")?)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ProbeModel,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut block = String::new();
        for (k, v) in self.model.config.to_kv().into_iter().chain(self.meta.to_kv()) {
            block.push_str(&k);
            block.push('=');
            block.push_str(&v);
            block.push('\n');
        }
        let mut out = Vec::with_capacity(10 + block.len() + self.model.num_parameters() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(block.len() as u32).to_le_bytes());
        out.extend_from_slice(block.as_bytes());
        for p in self.model.store.iter() {
            out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.push(p.value.shape().len() as u8);
            for &e in p.value.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// The model comes back in eval mode with zeroed gradients.
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(ProbeError::format(0, "not a checkpoint file (bad magic)"));
        }
        let version = r.u16("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(ProbeError::format(
                4,
                format!("unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"),
            ));
        }
        let block_len = r.u32("config block length")? as usize;
        let block_at = r.pos as u64;
        let block = std::str::from_utf8(r.take(block_len, "config block")?)
            .map_err(|_| ProbeError::format(block_at, "config block is not UTF-8"))?;
        let mut map = HashMap::new();
        for line in block.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ProbeError::format(block_at, format!("malformed config line `{line}`")))?;
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ProbeError::format(block_at, format!("duplicate config key `{k}`")));
            }
        }
        let config = ProbeConfig::from_kv(&|k| map.get(k).cloned())?;
        let meta = CheckpointMeta::from_kv(&map)?;
        let mut model = ProbeModel::new(config, 0)?;
        let mut seen = vec![false; model.store.len()];

        while r.pos < buf.len() {
            let at = r.pos as u64;
            let name_len = r.u16("parameter name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "parameter name")?)
                .map_err(|_| ProbeError::format(at, "parameter name is not UTF-8"))?
                .to_string();
            let rank = r.take(1, "rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64("extent")? as usize);
            }
            let id = model
                .store
                .find(&name)
                .ok_or_else(|| ProbeError::format(at, format!("unknown parameter `{name}`")))?;
            let expect = model.store.value(id).shape().to_vec();
            if shape != expect {
                return Err(ProbeError::format(
                    at,
                    format!("parameter `{name}` has shape {shape:?}, config implies {expect:?}"),
                ));
            }
            if std::mem::replace(&mut seen[id.index()], true) {
                return Err(ProbeError::format(at, format!("parameter `{name}` appears twice")));
            }
            let count: usize = shape.iter().product();
            let raw = r.take(count * 8, "parameter values")?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            model.store.get_mut(id).value = Tensor::from_vec(&shape, data)?;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            let name = model.store.iter().nth(i).map(|p| p.name.clone()).unwrap_or_default();
            return Err(ProbeError::format(buf.len() as u64, format!("missing parameter `{name}`")));
        }
        model.set_mode(Mode::Eval);
        Ok(Self { model, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| ProbeError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| ProbeError::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(ProbeError::format(
                self.pos as u64,
                format!("truncated checkpoint: {what} needs {n} bytes, {} remain", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_generate, Batch, SynthSpec};
    use crate::model::ScalarStats;

    fn sample() -> Checkpoint {
        let mut cfg = ProbeConfig::tiny(8);
        cfg.scalar_stats = ScalarStats {
            energy_mean: -2500.125,
            energy_std: 731.3,
            atoms_mean: 11.4,
            atoms_std: 5.1,
        };
        Checkpoint {
            model: ProbeModel::new(cfg, 9).unwrap(),
            meta: CheckpointMeta {
                boundary: 1.2345678901234567,
                best_epoch: Some(3),
                best_val_loss: Some(0.1),
                final_train_loss: Some(0.2),
                final_val_loss: Some(0.3),
                epochs_run: 4,
                ..Default::default()
            },
        }
    }

    #[test]
    fn round_trip_is_byte_identical_and_reproduces_forward() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.meta, ck.meta);
        let recs = synth_generate(&SynthSpec::two_cluster(6, 8), 1).unwrap();
        let batch = Batch::from_records(&recs.iter().collect::<Vec<_>>(), None, None).unwrap();
        let a = ck.model.forward(&batch, false).unwrap();
        let b = back.model.forward(&batch, false).unwrap();
        assert_eq!(a.probs.data(), b.probs.data());
        assert_eq!(a.embedding.data(), b.embedding.data());
    }

    #[test]
    fn tiny_checkpoint_is_small() {
        let bytes = sample().to_bytes();
        assert!(bytes.len() < 100 * 1024, "{} bytes", bytes.len());
        assert!(bytes.len() > sample().model.num_parameters() * 8);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = sample().to_bytes();
        for cut in [3, 9, 40, bytes.len() - 5] {
            match Checkpoint::from_bytes(&bytes[..cut]) {
                Err(ProbeError::Format { offset, .. }) => assert!(offset <= cut as u64),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn version_and_shape_mismatch() {
        let mut bytes = sample().to_bytes();
        bytes[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(ProbeError::Format { offset: 4, .. })));

        let ck = sample();
        let bytes = ck.to_bytes();
        let key = b"embedding_dim=8";
        let at = bytes.windows(key.len()).position(|w| w == key).unwrap();
        let mut bad = bytes.clone();
        bad[at + "embedding_dim=".len()] = b'9';
        let r = Checkpoint::from_bytes(&bad);
        assert!(matches!(r, Err(ProbeError::Format { .. })), "{r:?}");
    }
}
