use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};
use crate::evaluation::metrics::{argmax_class, confusion_metrics};

pub const DEFAULT_CUTOFFS: [f64; 7] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];

/// One row of the coverage table. Metrics are `None` when their subset is
/// empty; `notes` says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectivePoint {
    pub cutoff: f64,
    pub coverage: f64,
    pub n_covered: usize,
    pub accuracy: Option<f64>,
    pub mcc: Option<f64>,
    pub f1: Option<f64>,
    /// Mean |error| over covered molecules labelled reliable.
    pub mean_err_reliable: Option<f64>,
    pub mean_err_unreliable: Option<f64>,
    pub notes: Vec<String>,
}

fn check_inputs(probs: &[[f64; 2]], labels: &[u8], errors: &[f64]) -> Result<()> {
    if probs.len() != labels.len() || probs.len() != errors.len() {
        return Err(ProbeError::dim(
            "evaluation inputs",
            &[probs.len(), labels.len()],
            &[errors.len()],
        ));
    }
    if probs.is_empty() {
        return Err(ProbeError::EmptyInput("no molecules to evaluate".into()));
    }
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// A molecule is covered at `c` iff `max(probs) ≥ c`; its label is the argmax.
pub fn selective_curve(
    probs: &[[f64; 2]],
    labels: &[u8],
    errors: &[f64],
    cutoffs: &[f64],
) -> Result<Vec<SelectivePoint>> {
    check_inputs(probs, labels, errors)?;
    let n = probs.len();
    let pred: Vec<u8> = probs.iter().map(|&p| argmax_class(p)).collect();
    let conf: Vec<f64> = probs.iter().map(|p| p[0].max(p[1])).collect();
    let mut out = Vec::with_capacity(cutoffs.len());
    for &c in cutoffs {
        let idx: Vec<usize> = (0..n).filter(|&i| conf[i] >= c).collect();
        let mut notes = Vec::new();
        let (accuracy, mcc, f1) = if idx.is_empty() {
            notes.push("no molecules reach this cutoff".to_string());
            (None, None, None)
        } else {
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let p: Vec<u8> = idx.iter().map(|&i| pred[i]).collect();
            let m = confusion_metrics(&y, &p)?;
            (Some(m.accuracy), Some(m.mcc), Some(m.f1))
        };
        let err_of = |class: u8| mean(idx.iter().filter(|&&i| pred[i] == class).map(|&i| errors[i].abs()));
        let (mean_err_reliable, mean_err_unreliable) = (err_of(0), err_of(1));
        if !idx.is_empty() {
            if mean_err_reliable.is_none() {
                notes.push("no covered molecule is predicted reliable".to_string());
            }
            if mean_err_unreliable.is_none() {
                notes.push("no covered molecule is predicted unreliable".to_string());
            }
        }
        out.push(SelectivePoint {
            cutoff: c,
            coverage: idx.len() as f64 / n as f64,
            n_covered: idx.len(),
            accuracy,
            mcc,
            f1,
            mean_err_reliable,
            mean_err_unreliable,
            notes,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBin {
    pub err_lo: f64,
    pub err_hi: f64,
    pub count: usize,
    pub accuracy: f64,
    /// Per HC cutoff, accuracy over the bin's covered molecules.
    pub hc_accuracy: Vec<Option<f64>>,
    pub hc_count: Vec<usize>,
    pub buffer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBinning {
    pub hc_cutoffs: Vec<f64>,
    pub accurate_threshold: f64,
    pub bins: Vec<ErrorBin>,
    pub warning: Option<String>,
}

/// Equal-count bins over |error|; a bin is a buffer region when its overall
/// accuracy is below `accurate_threshold`.
pub fn error_binned_accuracy(
    probs: &[[f64; 2]],
    labels: &[u8],
    errors: &[f64],
    n_bins: usize,
    accurate_threshold: f64,
    hc_cutoffs: &[f64],
) -> Result<ErrorBinning> {
    check_inputs(probs, labels, errors)?;
    if n_bins == 0 {
        return Err(ProbeError::Config("n_bins must be at least 1".into()));
    }
    let n = probs.len();
    let mut warning = None;
    let bins_used = if n < n_bins {
        let msg = format!("{n} molecules for {n_bins} bins; using {n} bins");
        log::warn!("{msg}");
        warning = Some(msg);
        n
    } else {
        n_bins
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| errors[a].abs().total_cmp(&errors[b].abs()).then(a.cmp(&b)));
    let mut bins = Vec::with_capacity(bins_used);
    for k in 0..bins_used {
        let members = &order[k * n / bins_used..(k + 1) * n / bins_used];
        let correct = |i: usize| argmax_class(probs[i]) == labels[i];
        let accuracy = members.iter().filter(|&&i| correct(i)).count() as f64 / members.len() as f64;
        let mut hc_accuracy = Vec::with_capacity(hc_cutoffs.len());
        let mut hc_count = Vec::with_capacity(hc_cutoffs.len());
        for &c in hc_cutoffs {
            let hc: Vec<usize> = members.iter().copied().filter(|&i| probs[i][0].max(probs[i][1]) >= c).collect();
            hc_count.push(hc.len());
            hc_accuracy.push(
                (!hc.is_empty()).then(|| hc.iter().filter(|&&i| correct(i)).count() as f64 / hc.len() as f64),
            );
        }
        bins.push(ErrorBin {
            err_lo: errors[members[0]].abs(),
            err_hi: errors[*members.last().unwrap()].abs(),
            count: members.len(),
            accuracy,
            hc_accuracy,
            hc_count,
            buffer: accuracy < accurate_threshold,
        });
    }
    Ok(ErrorBinning {
        hc_cutoffs: hc_cutoffs.to_vec(),
        accurate_threshold,
        bins,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confident_all_reliable() {
        let probs = vec![[1.0, 0.0]; 6];
        let pts = selective_curve(&probs, &[0; 6], &[0.3; 6], &DEFAULT_CUTOFFS).unwrap();
        for p in pts {
            assert_eq!(p.coverage, 1.0);
            assert_eq!(p.accuracy, Some(1.0));
            assert_eq!(p.mean_err_unreliable, None);
            assert!(!p.notes.is_empty());
        }
    }

    #[test]
    fn coverage_at_half_is_one() {
        let probs = [[0.5, 0.5], [0.49, 0.51], [0.9, 0.1]];
        let pts = selective_curve(&probs, &[0, 1, 0], &[1.0, 2.0, 3.0], &[0.5, 0.95]).unwrap();
        assert_eq!(pts[0].coverage, 1.0);
        assert_eq!(pts[1].n_covered, 0);
        assert_eq!(pts[1].accuracy, None);
    }

    #[test]
    fn empty_cutoff_list() {
        assert!(selective_curve(&[[0.2, 0.8]], &[1], &[1.0], &[]).unwrap().is_empty());
    }

    #[test]
    fn single_bin_matches_overall_accuracy() {
        let probs = [[0.2, 0.8], [0.7, 0.3], [0.6, 0.4], [0.1, 0.9]];
        let labels = [1, 1, 0, 0];
        let b = error_binned_accuracy(&probs, &labels, &[1.0, 2.0, 3.0, 4.0], 1, 0.7, &[0.8]).unwrap();
        assert_eq!(b.bins.len(), 1);
        assert_eq!(b.bins[0].accuracy, 0.5);
        assert!(b.bins[0].buffer);
        assert_eq!(b.bins[0].hc_count, vec![2]);
    }

    #[test]
    fn equal_count_bins_and_reduction() {
        let n = 103;
        let probs = vec![[0.3, 0.7]; n];
        let errors: Vec<f64> = (0..n).map(|i| ((i * 37) % n) as f64).collect();
        let b = error_binned_accuracy(&probs, &vec![1; n], &errors, 10, 0.7, &[]).unwrap();
        let counts: Vec<usize> = b.bins.iter().map(|b| b.count).collect();
        assert_eq!(counts.iter().sum::<usize>(), n);
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        assert!(b.bins.windows(2).all(|w| w[0].err_hi <= w[1].err_lo));
        let b = error_binned_accuracy(&probs[..5], &[1; 5], &errors[..5], 50, 0.7, &[]).unwrap();
        assert_eq!(b.bins.len(), 5);
        assert!(b.warning.is_some());
    }
}
