//! Reliability labels from the backbone's error distribution.

use serde::{Deserialize, Serialize};

use crate::dataset::record::MoleculeRecord;
use crate::error::{ProbeError, Result};
use crate::nn::rng::SeededRng;

pub const RELIABLE: u8 = 0;
pub const UNRELIABLE: u8 = 1;

/// How a molecule's error is measured before thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMode {
    /// `|Ê − E_ref|` in kcal/mol.
    #[default]
    Raw,
    /// `|Ê − E_ref| / N`.
    PerAtom,
}

impl ErrorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorMode::Raw => "raw",
            ErrorMode::PerAtom => "per-atom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(ErrorMode::Raw),
            "per-atom" => Ok(ErrorMode::PerAtom),
            other => Err(ProbeError::Config(format!("unknown error mode `{other}`"))),
        }
    }

    pub fn error_of(self, rec: &MoleculeRecord) -> Result<f64> {
        let e = rec.abs_error()?;
        Ok(match self {
            ErrorMode::Raw => e,
            ErrorMode::PerAtom => e / rec.n_atoms as f64,
        })
    }
}

/// Linear-interpolation percentile (type 7): position `(n−1)·p/100` between
/// order statistics.
pub fn quantile_boundary(errors: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 100.0) {
        return Err(ProbeError::Config(format!("percentile must lie in (0, 100), got {p}")));
    }
    if errors.len() < 2 {
        return Err(ProbeError::Data(format!(
            "percentile needs at least 2 errors, got {}",
            errors.len()
        )));
    }
    if let Some(bad) = errors.iter().find(|e| !e.is_finite()) {
        return Err(ProbeError::Data(format!("non-finite error value {bad}")));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// `w_c = |D| / (2 |D_c|)`; both classes must be populated.
pub fn class_weights(labels: &[u8]) -> Result<[f64; 2]> {
    let ones = labels.iter().filter(|&&y| y == UNRELIABLE).count();
    let zeros = labels.len() - ones;
    if ones == 0 || zeros == 0 {
        return Err(ProbeError::Data(format!(
            "one class is empty ({zeros} reliable, {ones} unreliable); choose a different percentile"
        )));
    }
    let n = labels.len() as f64;
    Ok([n / (2.0 * zeros as f64), n / (2.0 * ones as f64)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<MoleculeRecord>,
    pub errors: Vec<f64>,
    pub boundary: f64,
    pub percentile: f64,
    pub labels: Vec<u8>,
    /// Weights of the set the boundary was fitted on.
    pub class_weights: [f64; 2],
    pub error_mode: ErrorMode,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fractions `(reliable, unreliable)` of this set.
    pub fn class_fractions(&self) -> (f64, f64) {
        let n = self.labels.len().max(1) as f64;
        let ones = self.labels.iter().filter(|&&y| y == UNRELIABLE).count() as f64;
        ((n - ones) / n, ones / n)
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            errors: indices.iter().map(|&i| self.errors[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ..self.metadata_only()
        }
    }

    fn metadata_only(&self) -> LabeledDataset {
        LabeledDataset {
            records: Vec::new(),
            errors: Vec::new(),
            labels: Vec::new(),
            boundary: self.boundary,
            percentile: self.percentile,
            class_weights: self.class_weights,
            error_mode: self.error_mode,
        }
    }
}

fn errors_of(records: &[MoleculeRecord], mode: ErrorMode) -> Result<Vec<f64>> {
    records.iter().map(|r| mode.error_of(r)).collect()
}

/// Fit the boundary `b_p` on `records` and label them: `y = 1` iff `ε ≥ b_p`.
pub fn assign_labels(records: Vec<MoleculeRecord>, p: f64, mode: ErrorMode) -> Result<LabeledDataset> {
    let errors = errors_of(&records, mode)?;
    let boundary = quantile_boundary(&errors, p)?;
    let labels: Vec<u8> = errors.iter().map(|&e| u8::from(e >= boundary)).collect();
    let class_weights = class_weights(&labels)?;
    Ok(LabeledDataset {
        records,
        errors,
        boundary,
        percentile: p,
        labels,
        class_weights,
        error_mode: mode,
    })
}

/// Label a held-out set with a boundary fitted elsewhere. Either class may be
/// empty here.
pub fn apply_boundary(
    records: Vec<MoleculeRecord>,
    boundary: f64,
    percentile: f64,
    class_weights: [f64; 2],
    mode: ErrorMode,
) -> Result<LabeledDataset> {
    let errors = errors_of(&records, mode)?;
    let labels = errors.iter().map(|&e| u8::from(e >= boundary)).collect();
    Ok(LabeledDataset {
        records,
        errors,
        boundary,
        percentile,
        labels,
        class_weights,
        error_mode: mode,
    })
}

/// Seeded shuffle, then the first `round(n·fraction)` records train.
pub fn split_train_val(
    data: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ProbeError::Config(format!(
            "train fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = data.len();
    if n < 10 {
        return Err(ProbeError::Data(format!("need at least 10 records to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut idx);
    let n_train = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    Ok((data.subset(&idx[..n_train]), data.subset(&idx[n_train..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs_with_errors(errors: &[f64]) -> Vec<MoleculeRecord> {
        errors
            .iter()
            .enumerate()
            .map(|(i, &e)| MoleculeRecord {
                mol_id: i as u64,
                n_atoms: 1,
                atomic_numbers: None,
                embeddings: vec![0.0],
                charges: None,
                e_pred: 10.0 + e,
                e_ref: Some(10.0),
            })
            .collect()
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile_boundary(&[1.0, 2.0, 3.0, 4.0], 50.0).unwrap(), 2.5);
        assert!(quantile_boundary(&[5.0], 50.0).is_err());
        assert_eq!(quantile_boundary(&[5.0, 5.0], 50.0).unwrap(), 5.0);
        assert!(quantile_boundary(&[], 50.0).is_err());
        assert!(quantile_boundary(&[1.0, f64::NAN], 50.0).is_err());
        assert!(quantile_boundary(&[1.0, 2.0], 100.0).is_err());
    }

    #[test]
    fn quantile_median_matches_sort_oracle() {
        let mut rng = SeededRng::new(8);
        let v: Vec<f64> = (0..1001).map(|_| rng.gaussian(2.0, 3.0).abs()).collect();
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        assert_eq!(quantile_boundary(&v, 50.0).unwrap(), s[500]);
    }

    #[test]
    fn balanced_labels() {
        let d = assign_labels(recs_with_errors(&[1.0, 2.0, 3.0, 4.0]), 50.0, ErrorMode::Raw).unwrap();
        assert_eq!(d.boundary, 2.5);
        assert_eq!(d.labels, vec![0, 0, 1, 1]);
        assert_eq!(d.class_weights, [1.0, 1.0]);
    }

    #[test]
    fn sixty_forty_weights() {
        let labels = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
        let w = class_weights(&labels).unwrap();
        assert_eq!(w[0], 10.0 / 12.0);
        assert_eq!(w[1], 1.25);
    }

    #[test]
    fn ties_at_boundary_are_unreliable() {
        let d = assign_labels(recs_with_errors(&[1.0, 2.0, 2.0, 2.0, 3.0]), 50.0, ErrorMode::Raw).unwrap();
        assert_eq!(d.boundary, 2.0);
        assert_eq!(d.labels, vec![0, 1, 1, 1, 1]);
    }

    #[test]
    fn identical_errors_fail_with_advice() {
        let err = assign_labels(recs_with_errors(&[0.5; 6]), 50.0, ErrorMode::Raw).unwrap_err();
        assert!(err.to_string().contains("different percentile"));
    }

    #[test]
    fn per_atom_mode_divides_by_size() {
        let mut r = recs_with_errors(&[4.0]);
        r[0].n_atoms = 4;
        r[0].embeddings = vec![0.0; 4];
        assert_eq!(ErrorMode::PerAtom.error_of(&r[0]).unwrap(), 1.0);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let errors: Vec<f64> = (0..10).map(f64::from).collect();
        let d = assign_labels(recs_with_errors(&errors), 50.0, ErrorMode::Raw).unwrap();
        let (tr, va) = split_train_val(&d, 0.9, 3).unwrap();
        assert_eq!((tr.len(), va.len()), (9, 1));
        let (tr2, _) = split_train_val(&d, 0.9, 3).unwrap();
        assert_eq!(tr, tr2);
        assert!(split_train_val(&d, 1.0, 3).is_err());
        let mut ids: Vec<u64> = tr.records.iter().chain(&va.records).map(|r| r.mol_id).collect();
        ids.sort();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_preserves_class_balance() {
        let mut rng = SeededRng::new(21);
        let errors: Vec<f64> = (0..1000).map(|_| rng.uniform()).collect();
        let d = assign_labels(recs_with_errors(&errors), 30.0, ErrorMode::Raw).unwrap();
        let (_, global) = d.class_fractions();
        let (tr, _) = split_train_val(&d, 0.9, 77).unwrap();
        let (_, train) = tr.class_fractions();
        assert!((train - global).abs() < 0.05);
    }
}
