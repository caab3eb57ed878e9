use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};

/// One molecule as exported by a backbone: per-atom embeddings, optional
/// charges and element numbers, and energies in kcal/mol.
///
/// Embeddings and charges stay in binary32 (the storage precision) and are
/// widened to binary64 when batched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordJson", into = "RecordJson")]
pub struct MoleculeRecord {
    pub mol_id: u64,
    pub n_atoms: usize,
    pub atomic_numbers: Option<Vec<u8>>,
    /// Row-major `n_atoms × d`.
    pub embeddings: Vec<f32>,
    pub charges: Option<Vec<f32>>,
    pub e_pred: f64,
    pub e_ref: Option<f64>,
}

impl MoleculeRecord {
    pub fn embed_dim(&self) -> usize {
        if self.n_atoms == 0 {
            0
        } else {
            self.embeddings.len() / self.n_atoms
        }
    }

    pub fn atom_embedding(&self, i: usize) -> &[f32] {
        let d = self.embed_dim();
        &self.embeddings[i * d..(i + 1) * d]
    }

    /// Structural checks: at least one atom, rectangular embeddings, and
    /// per-atom optional fields of length `n_atoms`.
    pub fn validate(&self) -> Result<()> {
        let id = self.mol_id;
        if self.n_atoms == 0 {
            return Err(ProbeError::InvalidRecord(format!("molecule {id} has no atoms")));
        }
        if self.embeddings.is_empty() || !self.embeddings.len().is_multiple_of(self.n_atoms) {
            return Err(ProbeError::InvalidRecord(format!(
                "molecule {id}: {} embedding values do not form {} rows",
                self.embeddings.len(),
                self.n_atoms
            )));
        }
        if let Some(c) = &self.charges {
            if c.len() != self.n_atoms {
                return Err(ProbeError::InvalidRecord(format!(
                    "molecule {id}: {} charges for {} atoms",
                    c.len(),
                    self.n_atoms
                )));
            }
        }
        if let Some(z) = &self.atomic_numbers {
            if z.len() != self.n_atoms {
                return Err(ProbeError::InvalidRecord(format!(
                    "molecule {id}: {} atomic numbers for {} atoms",
                    z.len(),
                    self.n_atoms
                )));
            }
            if let Some(bad) = z.iter().find(|&&v| v == 0 || v > 118) {
                return Err(ProbeError::InvalidRecord(format!(
                    "molecule {id}: atomic number {bad} outside 1..=118"
                )));
            }
        }
        Ok(())
    }

    /// Absolute backbone error `|Ê − E_ref|`.
    pub fn abs_error(&self) -> Result<f64> {
        let e_ref = self.e_ref.ok_or_else(|| {
            ProbeError::Data(format!("molecule {} has no reference energy", self.mol_id))
        })?;
        Ok((self.e_pred - e_ref).abs())
    }
}

/// Line-oriented debug representation with nested embedding rows.
#[derive(Serialize, Deserialize)]
struct RecordJson {
    mol_id: u64,
    n_atoms: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    atomic_numbers: Option<Vec<u8>>,
    embeddings: Vec<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    charges: Option<Vec<f32>>,
    e_pred: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e_ref: Option<f64>,
}

impl TryFrom<RecordJson> for MoleculeRecord {
    type Error = ProbeError;

    fn try_from(j: RecordJson) -> Result<Self> {
        let d = j.embeddings.first().map_or(0, Vec::len);
        if j.embeddings.len() != j.n_atoms || j.embeddings.iter().any(|r| r.len() != d) {
            return Err(ProbeError::InvalidRecord(format!(
                "molecule {}: embeddings must be {} rows of equal width",
                j.mol_id, j.n_atoms
            )));
        }
        let rec = MoleculeRecord {
            mol_id: j.mol_id,
            n_atoms: j.n_atoms,
            atomic_numbers: j.atomic_numbers,
            embeddings: j.embeddings.into_iter().flatten().collect(),
            charges: j.charges,
            e_pred: j.e_pred,
            e_ref: j.e_ref,
        };
        rec.validate()?;
        Ok(rec)
    }
}

impl From<MoleculeRecord> for RecordJson {
    fn from(r: MoleculeRecord) -> Self {
        let d = r.embed_dim().max(1);
        RecordJson {
            mol_id: r.mol_id,
            n_atoms: r.n_atoms,
            atomic_numbers: r.atomic_numbers,
            embeddings: r.embeddings.chunks(d).map(<[f32]>::to_vec).collect(),
            charges: r.charges,
            e_pred: r.e_pred,
            e_ref: r.e_ref,
        }
    }
}
