use crate::error::{ProbeError, Result};
use crate::nn::Tensor;

/// Class-weighted, size-normalized cross-entropy
/// `L = (1/|B|) Σ_m w_{y_m} · CE_m / √N_m`, with `∂L/∂logits`.
///
/// `CE_m = logsumexp(l_m) − l_{m,y_m}`, finite for any finite logits.
pub fn probe_loss(
    logits: &Tensor,
    labels: &[u8],
    n_atoms: &[usize],
    class_weights: [f64; 2],
) -> Result<(f64, Tensor)> {
    let s = logits.shape();
    if s.len() != 2 || s[1] != 2 {
        return Err(ProbeError::dim("probe_loss logits", s, &[labels.len(), 2]));
    }
    let b = s[0];
    if labels.len() != b || n_atoms.len() != b {
        return Err(ProbeError::dim("probe_loss labels", &[labels.len(), n_atoms.len()], &[b, b]));
    }
    if b == 0 {
        return Err(ProbeError::EmptyInput("probe_loss on an empty batch".into()));
    }
    let mut grad = Tensor::zeros(&[b, 2]);
    let mut total = 0.0;
    for m in 0..b {
        let y = labels[m] as usize;
        if y > 1 {
            return Err(ProbeError::InvalidRecord(format!("label {y} is not 0 or 1")));
        }
        if n_atoms[m] == 0 {
            return Err(ProbeError::InvalidRecord("molecule with zero atoms".into()));
        }
        let l = logits.row(m);
        let max = l[0].max(l[1]);
        let lse = max + ((l[0] - max).exp() + (l[1] - max).exp()).ln();
        let scale = class_weights[y] / (n_atoms[m] as f64).sqrt() / b as f64;
        total += scale * (lse - l[y]);
        let g = grad.row_mut(m);
        for k in 0..2 {
            let p = (l[k] - lse).exp();
            g[k] = scale * (p - if k == y { 1.0 } else { 0.0 });
        }
    }
    Ok((total, grad))
}
