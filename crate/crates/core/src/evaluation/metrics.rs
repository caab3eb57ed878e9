use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};

/// Positive class is unreliable (`1`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// Zero when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, fp, tn, fn_) = (self.tp as f64, self.fp as f64, self.tn as f64, self.fn_ as f64);
        let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
        if factors.contains(&0.0) {
            return 0.0;
        }
        (tp * tn - fp * fn_) / factors.iter().product::<f64>().sqrt()
    }

    /// Zero when there are no positives among labels or predictions.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return 0.0;
        }
        2.0 * self.tp as f64 / denom as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: f64,
    pub mcc: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

pub fn confusion_counts(labels: &[u8], predicted: &[u8]) -> Result<ConfusionCounts> {
    if labels.len() != predicted.len() {
        return Err(ProbeError::dim("confusion", &[labels.len()], &[predicted.len()]));
    }
    let mut c = ConfusionCounts::default();
    for (&y, &p) in labels.iter().zip(predicted) {
        match (y != 0, p != 0) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn confusion_metrics(labels: &[u8], predicted: &[u8]) -> Result<ConfusionMetrics> {
    if labels.is_empty() {
        return Err(ProbeError::EmptyInput("confusion metrics on an empty set".into()));
    }
    let counts = confusion_counts(labels, predicted)?;
    Ok(ConfusionMetrics {
        accuracy: counts.accuracy(),
        mcc: counts.mcc(),
        f1: counts.f1(),
        counts,
    })
}

/// Accuracy of always predicting the more frequent class.
pub fn majority_baseline(labels: &[u8]) -> Result<f64> {
    if labels.is_empty() {
        return Err(ProbeError::EmptyInput("majority baseline on an empty set".into()));
    }
    let ones = labels.iter().filter(|&&y| y != 0).count();
    Ok(ones.max(labels.len() - ones) as f64 / labels.len() as f64)
}

/// Predicted class from `[P(reliable), P(unreliable)]`; ties go to reliable.
pub fn argmax_class(p: [f64; 2]) -> u8 {
    u8::from(p[1] > p[0])
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's ρ as the Pearson correlation of average ranks. `Err` carries the
/// reason when ρ is undefined.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<std::result::Result<f64, String>> {
    if x.len() != y.len() {
        return Err(ProbeError::dim("spearman", &[x.len()], &[y.len()]));
    }
    if x.len() < 2 {
        return Ok(Err("fewer than two observations".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Err("zero rank variance".into()));
    }
    Ok(Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}
