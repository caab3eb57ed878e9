use crate::dataset::record::MoleculeRecord;
use crate::error::{ProbeError, Result};
use crate::nn::rng::SeededRng;
use crate::nn::tensor::Tensor;

/// Padded bundle of molecules. Atom slots `j ≥ n_atoms[b]` are zero and
/// masked out.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[B × N_max × d]`.
    pub embeddings: Tensor,
    /// `B × N_max`, zero where absent or padded.
    pub charges: Vec<f64>,
    pub mask: Vec<bool>,
    pub e_pred: Vec<f64>,
    pub n_atoms: Vec<usize>,
    pub labels: Option<Vec<u8>>,
    pub mol_ids: Vec<u64>,
}

impl Batch {
    /// Pack records; `pad_to` forces a larger `N_max` than the batch needs.
    pub fn from_records(
        records: &[&MoleculeRecord],
        labels: Option<&[u8]>,
        pad_to: Option<usize>,
    ) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| ProbeError::EmptyInput("batch with no molecules".into()))?;
        let d = first.embed_dim();
        let needed = records.iter().map(|r| r.n_atoms).max().unwrap_or(0);
        let n_max = pad_to.unwrap_or(needed);
        if n_max < needed {
            return Err(ProbeError::Config(format!(
                "pad_to {n_max} smaller than largest molecule ({needed} atoms)"
            )));
        }
        if let Some(l) = labels {
            if l.len() != records.len() {
                return Err(ProbeError::dim("batch labels", &[records.len()], &[l.len()]));
            }
        }
        let b = records.len();
        let mut emb = vec![0.0; b * n_max * d];
        let mut charges = vec![0.0; b * n_max];
        let mut mask = vec![false; b * n_max];
        for (bi, r) in records.iter().enumerate() {
            r.validate()?;
            if r.embed_dim() != d {
                return Err(ProbeError::dim("batch embedding width", &[d], &[r.embed_dim()]));
            }
            let base = bi * n_max * d;
            for (dst, &v) in emb[base..base + r.n_atoms * d].iter_mut().zip(&r.embeddings) {
                *dst = f64::from(v);
            }
            if let Some(c) = &r.charges {
                for (j, &q) in c.iter().enumerate() {
                    charges[bi * n_max + j] = f64::from(q);
                }
            }
            mask[bi * n_max..bi * n_max + r.n_atoms].fill(true);
        }
        Ok(Self {
            embeddings: Tensor::from_vec(&[b, n_max, d], emb)?,
            charges,
            mask,
            e_pred: records.iter().map(|r| r.e_pred).collect(),
            n_atoms: records.iter().map(|r| r.n_atoms).collect(),
            labels: labels.map(<[u8]>::to_vec),
            mol_ids: records.iter().map(|r| r.mol_id).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.n_atoms.len()
    }

    pub fn n_max(&self) -> usize {
        self.embeddings.shape()[1]
    }

    pub fn embed_dim(&self) -> usize {
        self.embeddings.shape()[2]
    }

    /// Real-atom embeddings of molecule `b`, row-major.
    pub fn unbatch_embeddings(&self, b: usize) -> Vec<f64> {
        let (n, d) = (self.n_max(), self.embed_dim());
        let real = self.mask[b * n..(b + 1) * n].iter().filter(|&&m| m).count();
        self.embeddings.data()[b * n * d..(b * n + real) * d].to_vec()
    }
}

/// Split into batches; every record lands in exactly one batch per call.
pub fn make_batches(
    records: &[MoleculeRecord],
    labels: Option<&[u8]>,
    batch_size: usize,
    shuffle: bool,
    rng: &mut SeededRng,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(ProbeError::Config("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    if shuffle {
        rng.shuffle(&mut order);
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let recs: Vec<&MoleculeRecord> = chunk.iter().map(|&i| &records[i]).collect();
            let labs: Option<Vec<u8>> = labels.map(|l| chunk.iter().map(|&i| l[i]).collect());
            Batch::from_records(&recs, labs.as_deref(), None)
        })
        .collect()
}
