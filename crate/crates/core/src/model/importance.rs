//! Per-atom importance from captured attention.
//!
//! `s_ib ∝ Σ_heads Σ_queries A_ab`: the total attention atom `b` receives,
//! over real query atoms only, normalized to sum to one over real atoms.

use crate::dataset::Batch;
use crate::error::{ProbeError, Result};
use crate::model::network::{Mode, ProbeModel};
use crate::nn::Tensor;

pub fn importance_from_attention(attention: Option<&Tensor>, batch: &Batch) -> Result<Vec<Vec<f64>>> {
    let a = attention.ok_or_else(|| {
        ProbeError::State("attention weights were not captured for this forward pass".into())
    })?;
    let s = a.shape();
    let (b, n) = (batch.size(), batch.n_max());
    if s.len() != 4 || s[0] != b || s[2] != n || s[3] != n {
        return Err(ProbeError::dim("importance", s, &[b, 0, n, n]));
    }
    let heads = s[1];
    let data = a.data();
    let mut out = Vec::with_capacity(b);
    for bi in 0..b {
        let real = batch.n_atoms[bi];
        let mut scores = vec![0.0; real];
        for h in 0..heads {
            let base = (bi * heads + h) * n * n;
            for q in 0..real {
                for (k, sc) in scores.iter_mut().enumerate() {
                    *sc += data[base + q * n + k];
                }
            }
        }
        let z: f64 = scores.iter().sum();
        if z > 0.0 {
            scores.iter_mut().for_each(|v| *v /= z);
        } else {
            scores.fill(1.0 / real as f64);
        }
        out.push(scores);
    }
    Ok(out)
}

/// Eval-mode forward pass with attention capture, then importance scores.
pub fn atom_importance(model: &ProbeModel, batch: &Batch) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if model.mode() != Mode::Eval {
        return Err(ProbeError::State("atom importance requires eval mode".into()));
    }
    let out = model.forward(batch, true)?;
    let scores = importance_from_attention(out.attention.as_ref(), batch)?;
    Ok((scores, out.p_unreliable()))
}
