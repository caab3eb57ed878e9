//! The reliability classifier.
//!
//! ```text
//! h_i ──MLP_enc──► z_i (+ W_q q_i) ──► z'_i = z_i + LayerNorm(MHSA(z, mask))
//!     ──► g = [mean_i z'_i ‖ max_i z'_i ‖ Ê ‖ N] ──W_proj──► e ──MLP_cls──► logits
//! ```
//!
//! Pooling and attention only see real atoms. Class 0 is reliable, class 1
//! unreliable.

use crate::dataset::{Batch, MoleculeRecord};
use crate::error::{ProbeError, Result};
use crate::model::config::{ProbeConfig, ScalarStats, NUM_CLASSES};
use crate::nn::attention::AttentionCache;
use crate::nn::layers::{LayerNorm, Linear, MlpBlock, MlpBlockCache, SelfAttention};
use crate::nn::ops::LayerNormCache;
use crate::nn::{ParamId, ParamStore, SeededRng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[B × 2]`: `[P(reliable), P(unreliable)]`.
    pub probs: Tensor,
    pub logits: Tensor,
    /// Molecular embedding `e`, `[B × embedding_dim]`.
    pub embedding: Tensor,
    /// `[B × H × N × N]` when captured.
    pub attention: Option<Tensor>,
}

impl ForwardOutput {
    pub fn p_unreliable(&self) -> Vec<f64> {
        self.probs.data().chunks(NUM_CLASSES).map(|r| r[1]).collect()
    }
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardCache {
    encoder: Vec<MlpBlockCache>,
    charges: Vec<f64>,
    attention: AttentionCache,
    attn_norm: LayerNormCache,
    mask: Vec<bool>,
    n_atoms: Vec<usize>,
    n_max: usize,
    /// Index of the atom providing each max-pool entry, `[B × width]`.
    argmax: Vec<usize>,
    descriptor: Tensor,
    classifier: Vec<MlpBlockCache>,
    head_input: Tensor,
}

#[derive(Debug, Clone)]
pub struct ProbeModel {
    pub config: ProbeConfig,
    pub store: ParamStore,
    mode: Mode,
    encoder: Vec<MlpBlock>,
    charge_proj: ParamId,
    attention: SelfAttention,
    attn_norm: LayerNorm,
    projection: Linear,
    classifier: Vec<MlpBlock>,
    head: Linear,
}

impl ProbeModel {
    /// Kaiming-uniform weights, zero biases, unit LayerNorm gains.
    pub fn new(config: ProbeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed);
        let mut store = ParamStore::new();
        let width = config.width();

        let mut encoder = Vec::new();
        let mut prev = config.input_dim;
        let enc_dims: Vec<usize> = config.encoder_hidden.iter().copied().chain([width]).collect();
        for (i, &w) in enc_dims.iter().enumerate() {
            encoder.push(MlpBlock::new(&mut store, &format!("encoder.{i}"), prev, w, config.dropout, &mut rng)?);
            prev = w;
        }
        let bound = 6.0f64.sqrt();
        let wq: Vec<f64> = (0..width).map(|_| rng.uniform_range(-bound, bound)).collect();
        let charge_proj = store.register("charge.weight", Tensor::from_vec(&[width], wq)?)?;
        let attention = SelfAttention::new(&mut store, "attention", config.heads, config.head_dim, &mut rng)?;
        let attn_norm = LayerNorm::new(&mut store, "attention_norm", width)?;
        let projection = Linear::new(
            &mut store,
            "projection",
            config.descriptor_dim(),
            config.embedding_dim,
            true,
            &mut rng,
        )?;
        let mut classifier = Vec::new();
        let mut prev = config.embedding_dim;
        for (i, &w) in config.classifier_hidden.iter().enumerate() {
            classifier.push(MlpBlock::new(&mut store, &format!("classifier.{i}"), prev, w, config.dropout, &mut rng)?);
            prev = w;
        }
        let head = Linear::new(&mut store, "classifier.out", prev, NUM_CLASSES, true, &mut rng)?;
        Ok(Self {
            config,
            store,
            mode: Mode::Eval,
            encoder,
            charge_proj,
            attention,
            attn_norm,
            projection,
            classifier,
            head,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn set_scalar_stats(&mut self, stats: ScalarStats) {
        self.config.scalar_stats = stats;
    }

    /// Inference pass without dropout.
    pub fn forward(&self, batch: &Batch, capture_attention: bool) -> Result<ForwardOutput> {
        let (mut out, cache) = self.run(batch, None)?;
        if capture_attention {
            out.attention = Some(cache.attention.attention());
        }
        Ok(out)
    }

    /// `P(unreliable)` for each record, in order, without dropout.
    pub fn predict(&self, records: &[MoleculeRecord], batch_size: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(records.len());
        for chunk in records.chunks(batch_size.max(1)) {
            let batch = Batch::from_records(&chunk.iter().collect::<Vec<_>>(), None, None)?;
            out.extend(self.forward(&batch, false)?.p_unreliable());
        }
        Ok(out)
    }

    /// Forward pass keeping activations for [`ProbeModel::backward`].
    /// Dropout is active only in [`Mode::Train`] and draws from `rng`.
    pub fn forward_train(
        &self,
        batch: &Batch,
        rng: &mut SeededRng,
    ) -> Result<(ForwardOutput, ForwardCache)> {
        match self.mode {
            Mode::Train => self.run(batch, Some(rng)),
            Mode::Eval => self.run(batch, None),
        }
    }

    fn run(&self, batch: &Batch, mut rng: Option<&mut SeededRng>) -> Result<(ForwardOutput, ForwardCache)> {
        let cfg = &self.config;
        if batch.embed_dim() != cfg.input_dim {
            return Err(ProbeError::dim(
                "model input width",
                &[cfg.input_dim],
                &[batch.embed_dim()],
            ));
        }
        let (b, n) = (batch.size(), batch.n_max());
        if let Some(i) = batch.n_atoms.iter().position(|&k| k == 0) {
            return Err(ProbeError::InvalidRecord(format!(
                "molecule {} has no atoms",
                batch.mol_ids[i]
            )));
        }
        let w = cfg.width();
        let store = &self.store;

        let mut h = batch.embeddings.clone();
        let mut enc_caches = Vec::with_capacity(self.encoder.len());
        for block in &self.encoder {
            let (y, c) = block.forward(store, &h, rng.as_deref_mut())?;
            enc_caches.push(c);
            h = y;
        }
        let mut z = h;
        let charges: Vec<f64> = if cfg.use_charges {
            batch.charges.clone()
        } else {
            vec![0.0; b * n]
        };
        if cfg.use_charges {
            let wq = store.value(self.charge_proj).data();
            for (row, &q) in charges.iter().enumerate() {
                if q != 0.0 {
                    for (v, wv) in z.row_mut(row).iter_mut().zip(wq) {
                        *v += q * wv;
                    }
                }
            }
        }

        let (att, att_cache) = self.attention.forward(store, &z, &batch.mask)?;
        let (att_n, ln_cache) = self.attn_norm.forward(store, &att)?;
        let mut zp = z;
        zp.add_assign(&att_n)?;

        let d_desc = cfg.descriptor_dim();
        let mut desc = Tensor::zeros(&[b, d_desc]);
        let mut argmax = vec![0usize; b * w];
        let s = cfg.scalar_stats;
        for bi in 0..b {
            let real = batch.n_atoms[bi];
            let g = desc.row_mut(bi);
            for j in 0..real {
                let row = &zp.data()[(bi * n + j) * w..(bi * n + j + 1) * w];
                for k in 0..w {
                    g[k] += row[k];
                    if j == 0 || row[k] > g[w + k] {
                        g[w + k] = row[k];
                        argmax[bi * w + k] = j;
                    }
                }
            }
            for v in &mut g[..w] {
                *v /= real as f64;
            }
            let (e, na) = (batch.e_pred[bi], real as f64);
            let (e, na) = if cfg.normalize_scalars {
                ((e - s.energy_mean) / s.energy_std, (na - s.atoms_mean) / s.atoms_std)
            } else {
                (e, na)
            };
            g[2 * w] = e;
            g[2 * w + 1] = na;
        }

        let embedding = self.projection.forward(store, &desc)?;
        let mut c = embedding.clone();
        let mut cls_caches = Vec::with_capacity(self.classifier.len());
        for block in &self.classifier {
            let (y, cc) = block.forward(store, &c, rng.as_deref_mut())?;
            cls_caches.push(cc);
            c = y;
        }
        let logits = self.head.forward(store, &c)?;
        let probs = softmax_rows(&logits);

        let out = ForwardOutput {
            probs,
            logits,
            embedding,
            attention: None,
        };
        let cache = ForwardCache {
            encoder: enc_caches,
            charges,
            attention: att_cache,
            attn_norm: ln_cache,
            mask: batch.mask.clone(),
            n_atoms: batch.n_atoms.clone(),
            n_max: n,
            argmax,
            descriptor: desc,
            classifier: cls_caches,
            head_input: c,
        };
        Ok((out, cache))
    }

    /// Accumulate `∂L/∂θ` into the store given `∂L/∂logits`.
    pub fn backward(&mut self, cache: &ForwardCache, dlogits: &Tensor) -> Result<()> {
        let w = self.config.width();
        let n = cache.n_max;
        let b = cache.n_atoms.len();
        let store = &mut self.store;

        let mut g = self.head.backward(store, &cache.head_input, dlogits)?;
        for (block, c) in self.classifier.iter().zip(&cache.classifier).rev() {
            g = block.backward(store, c, &g)?;
        }
        let dg = self.projection.backward(store, &cache.descriptor, &g)?;

        let mut dzp = Tensor::zeros(&[b, n, w]);
        for bi in 0..b {
            let real = cache.n_atoms[bi];
            let dgr = dg.row(bi);
            let inv = 1.0 / real as f64;
            let d = dzp.data_mut();
            for j in 0..real {
                let row = &mut d[(bi * n + j) * w..(bi * n + j + 1) * w];
                for (k, v) in row.iter_mut().enumerate() {
                    *v = dgr[k] * inv;
                }
            }
            for k in 0..w {
                let j = cache.argmax[bi * w + k];
                d[(bi * n + j) * w + k] += dgr[w + k];
            }
        }
        debug_assert!(cache.mask.len() == b * n);

        let datt = self.attn_norm.backward(store, &cache.attn_norm, &dzp)?;
        let mut dz = self.attention.backward(store, &cache.attention, &datt)?;
        dz.add_assign(&dzp)?;

        if self.config.use_charges {
            let mut dwq = vec![0.0; w];
            for (row, &q) in cache.charges.iter().enumerate() {
                if q != 0.0 {
                    for (acc, d) in dwq.iter_mut().zip(dz.row(row)) {
                        *acc += q * d;
                    }
                }
            }
            let gq = store.grad_mut(self.charge_proj);
            for (acc, d) in gq.data_mut().iter_mut().zip(dwq) {
                *acc += d;
            }
        }

        let mut g = dz;
        for (block, c) in self.encoder.iter().zip(&cache.encoder).rev() {
            g = block.backward(store, c, &g)?;
        }
        Ok(())
    }
}

/// Numerically stable row softmax over the last axis.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut p = logits.clone();
    let (rows, _) = p.as_matrix();
    for r in 0..rows {
        let row = p.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    p
}
