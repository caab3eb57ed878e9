//! Per-atom regressor standing in for a backbone:
//! `x → GELU(W1 x + b1) → w2·h + b2`, molecular energy = sum over atoms.
//! The hidden activations `h` are the per-atom embeddings.

use serde::{Deserialize, Serialize};

use crate::active_learning::task::AlMolecule;
use crate::dataset::MoleculeRecord;
use crate::error::{ProbeError, Result};
use crate::nn::layers::Linear;
use crate::nn::ops::{gelu, gelu_backward};
use crate::nn::{clip_grad_norm, AdamW, AdamWConfig, ParamStore, SeededRng, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs_initial: usize,
    pub epochs_per_cycle: usize,
    pub batch_size: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            lr: 3e-3,
            epochs_initial: 60,
            epochs_per_cycle: 30,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Surrogate {
    pub config: SurrogateConfig,
    store: ParamStore,
    hidden: Linear,
    out: Linear,
    optimizer: AdamW,
    rng: SeededRng,
    feature_dim: usize,
}

fn features_of(mols: &[&AlMolecule], f: usize) -> Tensor {
    let data: Vec<f64> = mols.iter().flat_map(|m| m.features.iter().copied()).collect();
    let rows = data.len() / f;
    Tensor::from_vec(&[rows, f], data).expect("feature rows are F wide")
}

impl Surrogate {
    pub fn new(config: SurrogateConfig, feature_dim: usize, seed: u64) -> Result<Self> {
        if config.hidden == 0 || config.batch_size == 0 || feature_dim == 0 {
            return Err(ProbeError::Config("surrogate widths and batch size must be positive".into()));
        }
        let mut rng = SeededRng::new(seed);
        let mut store = ParamStore::new();
        let hidden = Linear::new(&mut store, "hidden", feature_dim, config.hidden, true, &mut rng)?;
        let out = Linear::new(&mut store, "out", config.hidden, 1, true, &mut rng)?;
        let optimizer = AdamW::new(
            &store,
            AdamWConfig {
                weight_decay: 0.0,
                ..AdamWConfig::default()
            },
        );
        Ok(Self {
            config,
            store,
            hidden,
            out,
            optimizer,
            rng,
            feature_dim,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.config.hidden
    }

    fn atoms_forward(&self, x: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let pre = self.hidden.forward(&self.store, x)?;
        let h = gelu(&pre);
        let e = self.out.forward(&self.store, &h)?;
        Ok((pre, h, e))
    }

    fn sum_per_molecule(mols: &[&AlMolecule], e: &Tensor) -> Vec<f64> {
        let mut at = 0;
        mols.iter()
            .map(|m| {
                let s = e.data()[at..at + m.n_atoms].iter().sum();
                at += m.n_atoms;
                s
            })
            .collect()
    }

    pub fn predict(&self, mols: &[AlMolecule]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(mols.len());
        for chunk in mols.chunks(256) {
            let refs: Vec<&AlMolecule> = chunk.iter().collect();
            let (_, _, e) = self.atoms_forward(&features_of(&refs, self.feature_dim))?;
            out.extend(Self::sum_per_molecule(&refs, &e));
        }
        Ok(out)
    }

    /// Per-atom hidden activations packaged as classifier input records.
    pub fn records(&self, mols: &[AlMolecule]) -> Result<Vec<MoleculeRecord>> {
        let pred = self.predict(mols)?;
        let mut out = Vec::with_capacity(mols.len());
        for (m, p) in mols.iter().zip(pred) {
            let (_, h, _) = self.atoms_forward(&features_of(&[m], self.feature_dim))?;
            out.push(MoleculeRecord {
                mol_id: m.mol_id,
                n_atoms: m.n_atoms,
                atomic_numbers: None,
                embeddings: h.data().iter().map(|&v| v as f32).collect(),
                charges: None,
                e_pred: p,
                e_ref: Some(m.energy),
            });
        }
        Ok(out)
    }

    /// Minibatch Adam on the per-molecule squared error, continuing from the
    /// current weights. Returns the last epoch's mean loss.
    pub fn train(&mut self, mols: &[AlMolecule], epochs: usize) -> Result<f64> {
        if mols.is_empty() {
            return Err(ProbeError::EmptyInput("surrogate training set is empty".into()));
        }
        let mut last = f64::NAN;
        let mut order: Vec<usize> = (0..mols.len()).collect();
        for epoch in 0..epochs {
            self.rng.shuffle(&mut order);
            let mut total = 0.0;
            for chunk in order.chunks(self.config.batch_size) {
                let refs: Vec<&AlMolecule> = chunk.iter().map(|&i| &mols[i]).collect();
                let x = features_of(&refs, self.feature_dim);
                let (pre, h, e) = self.atoms_forward(&x)?;
                let pred = Self::sum_per_molecule(&refs, &e);
                let b = refs.len() as f64;
                let mut de = Vec::with_capacity(e.len());
                for (m, p) in refs.iter().zip(&pred) {
                    let r = p - m.energy;
                    total += r * r;
                    de.extend(std::iter::repeat_n(2.0 * r / b, m.n_atoms));
                }
                let de = Tensor::from_vec(&[de.len(), 1], de)?;
                self.store.zero_grad();
                let dh = self.out.backward(&mut self.store, &h, &de)?;
                let dpre = gelu_backward(&pre, &dh)?;
                self.hidden.backward(&mut self.store, &x, &dpre)?;
                clip_grad_norm(&mut self.store, 10.0);
                self.optimizer
                    .step(&mut self.store, self.config.lr)
                    .map_err(|e| ProbeError::Divergence(format!("surrogate epoch {epoch}: {e}")))?;
            }
            last = total / mols.len() as f64;
            if !last.is_finite() {
                return Err(ProbeError::Divergence(format!("surrogate loss non-finite at epoch {epoch}")));
            }
        }
        Ok(last)
    }
}

pub fn rmse(pred: &[f64], mols: &[AlMolecule]) -> f64 {
    let ss: f64 = pred.iter().zip(mols).map(|(p, m)| (p - m.energy).powi(2)).sum();
    (ss / mols.len().max(1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::active_learning::task::{planted_task, TaskSpec};

    #[test]
    fn training_reduces_error_and_sum_is_order_free() {
        let task = planted_task(&TaskSpec::default(), 300, 50, 1).unwrap();
        let mut s = Surrogate::new(SurrogateConfig::default(), 8, 2).unwrap();
        let before = rmse(&s.predict(&task.pool).unwrap(), &task.pool);
        s.train(&task.pool, 20).unwrap();
        let after = rmse(&s.predict(&task.pool).unwrap(), &task.pool);
        assert!(after < before * 0.5, "{after} vs {before}");

        let m = &task.pool[0];
        let mut rev = m.clone();
        rev.features = m.features.chunks(8).rev().flatten().copied().collect();
        let a = s.predict(std::slice::from_ref(m)).unwrap()[0];
        let b = s.predict(&[rev]).unwrap()[0];
        assert!((a - b).abs() < 1e-9);
        let r = s.records(std::slice::from_ref(m)).unwrap();
        assert_eq!(r[0].embed_dim(), 64);
    }
}
