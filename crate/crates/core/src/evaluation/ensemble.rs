use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataset::quantile_boundary;
use crate::error::{ProbeError, Result};
use crate::evaluation::metrics::{confusion_metrics, spearman, ConfusionMetrics};

/// Energies from `K ≥ 2` models on the same molecules; `members[k][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleInput {
    pub mol_ids: Vec<u64>,
    pub n_atoms: Vec<usize>,
    pub e_ref: Vec<f64>,
    pub members: Vec<Vec<f64>>,
}

impl EnsembleInput {
    /// Align per-member `mol_id → energy` maps; every member must cover
    /// exactly the molecules in `mol_ids`.
    pub fn from_member_maps(
        mol_ids: Vec<u64>,
        n_atoms: Vec<usize>,
        e_ref: Vec<f64>,
        maps: &[BTreeMap<u64, f64>],
    ) -> Result<Self> {
        let ids: HashSet<u64> = mol_ids.iter().copied().collect();
        let mut members = Vec::with_capacity(maps.len());
        for (k, m) in maps.iter().enumerate() {
            if m.len() != ids.len() || m.keys().any(|id| !ids.contains(id)) {
                return Err(ProbeError::Data(format!(
                    "ensemble member {k} covers a different molecule set"
                )));
            }
            members.push(mol_ids.iter().map(|id| m[id]).collect());
        }
        let input = Self {
            mol_ids,
            n_atoms,
            e_ref,
            members,
        };
        input.validate()?;
        Ok(input)
    }

    pub fn len(&self) -> usize {
        self.mol_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mol_ids.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.mol_ids.len();
        if self.members.len() < 2 {
            return Err(ProbeError::Data(format!(
                "an ensemble needs at least 2 members, got {}",
                self.members.len()
            )));
        }
        if m == 0 {
            return Err(ProbeError::EmptyInput("ensemble without molecules".into()));
        }
        if self.n_atoms.len() != m || self.e_ref.len() != m {
            return Err(ProbeError::dim("ensemble columns", &[m], &[self.n_atoms.len(), self.e_ref.len()]));
        }
        if let Some(k) = self.members.iter().position(|p| p.len() != m) {
            return Err(ProbeError::Data(format!("ensemble member {k} has {} predictions for {m} molecules", self.members[k].len())));
        }
        if self.n_atoms.contains(&0) {
            return Err(ProbeError::InvalidRecord("molecule with zero atoms".into()));
        }
        let unique: HashSet<u64> = self.mol_ids.iter().copied().collect();
        if unique.len() != m {
            return Err(ProbeError::Data("duplicate molecule ids in ensemble input".into()));
        }
        Ok(())
    }

    /// Sample standard deviation across members (`K − 1` denominator).
    pub fn sigma(&self) -> Vec<f64> {
        let k = self.members.len() as f64;
        (0..self.len())
            .map(|i| {
                let mean = self.members.iter().map(|p| p[i]).sum::<f64>() / k;
                let ss: f64 = self.members.iter().map(|p| (p[i] - mean) * (p[i] - mean)).sum();
                (ss / (k - 1.0)).sqrt()
            })
            .collect()
    }

    /// `σ / √N`.
    pub fn scaled_sigma(&self) -> Vec<f64> {
        self.sigma()
            .iter()
            .zip(&self.n_atoms)
            .map(|(s, &n)| s / (n as f64).sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleBaseline {
    pub scaled_sigma: Vec<f64>,
    pub spearman_rho: Option<f64>,
    pub spearman_null_reason: Option<String>,
    /// Median of scaled σ; molecules at or above it are called unreliable.
    pub sigma_threshold: f64,
    pub classifier: ConfusionMetrics,
}

/// Scaled-σ baseline: rank correlation with `errors` and a median-threshold
/// classifier scored against `labels`.
pub fn ensemble_baseline(ens: &EnsembleInput, errors: &[f64], labels: &[u8]) -> Result<EnsembleBaseline> {
    ens.validate()?;
    if errors.len() != ens.len() || labels.len() != ens.len() {
        return Err(ProbeError::dim("ensemble baseline", &[ens.len()], &[errors.len(), labels.len()]));
    }
    let scaled = ens.scaled_sigma();
    let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    let (spearman_rho, spearman_null_reason) = match spearman(&scaled, &abs)? {
        Ok(r) => (Some(r), None),
        Err(why) => (None, Some(why)),
    };
    let threshold = if scaled.len() >= 2 {
        quantile_boundary(&scaled, 50.0)?
    } else {
        scaled[0]
    };
    let predicted: Vec<u8> = scaled.iter().map(|&s| u8::from(s >= threshold)).collect();
    Ok(EnsembleBaseline {
        classifier: confusion_metrics(labels, &predicted)?,
        scaled_sigma: scaled,
        spearman_rho,
        spearman_null_reason,
        sigma_threshold: threshold,
    })
}
