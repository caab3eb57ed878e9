use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_prob: Option<f64>,
    pub frac_unreliable: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
    pub brier: f64,
}

/// Bin index for `p` among `n` equal-width bins; `p = 1` joins the last bin.
pub fn calibration_bin(p: f64, n: usize) -> usize {
    ((p * n as f64).floor() as usize).min(n - 1)
}

/// Equal-width reliability bins over `P(unreliable)`, ECE and Brier score.
pub fn calibration(p_unreliable: &[f64], labels: &[u8], n_bins: usize) -> Result<Calibration> {
    if p_unreliable.len() != labels.len() {
        return Err(ProbeError::dim("calibration", &[p_unreliable.len()], &[labels.len()]));
    }
    if p_unreliable.is_empty() {
        return Err(ProbeError::EmptyInput("calibration on an empty set".into()));
    }
    if n_bins == 0 {
        return Err(ProbeError::Config("n_bins must be at least 1".into()));
    }
    if let Some(p) = p_unreliable.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(ProbeError::Data(format!("probability {p} outside [0, 1]")));
    }
    let mut count = vec![0usize; n_bins];
    let mut psum = vec![0.0; n_bins];
    let mut ysum = vec![0.0; n_bins];
    let mut brier = 0.0;
    for (&p, &y) in p_unreliable.iter().zip(labels) {
        let k = calibration_bin(p, n_bins);
        let y = f64::from(u8::from(y != 0));
        count[k] += 1;
        psum[k] += p;
        ysum[k] += y;
        brier += (p - y) * (p - y);
    }
    let n = p_unreliable.len() as f64;
    let mut ece = 0.0;
    let bins = (0..n_bins)
        .map(|k| {
            let c = count[k];
            let (mp, fr) = if c > 0 {
                let (mp, fr) = (psum[k] / c as f64, ysum[k] / c as f64);
                ece += c as f64 / n * (mp - fr).abs();
                (Some(mp), Some(fr))
            } else {
                (None, None)
            };
            CalibrationBin {
                lo: k as f64 / n_bins as f64,
                hi: (k + 1) as f64 / n_bins as f64,
                count: c,
                mean_prob: mp,
                frac_unreliable: fr,
            }
        })
        .collect();
    Ok(Calibration {
        bins,
        ece,
        brier: brier / n,
    })
}
