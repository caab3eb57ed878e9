//! Masked multi-head self-attention over padded atom sets.
//!
//! Per head `h`, `α⁽ʰ⁾ = softmax_mask(Q⁽ʰ⁾K⁽ʰ⁾ᵀ / √d_k)`; head outputs
//! `α⁽ʰ⁾V⁽ʰ⁾` are concatenated and passed through the output projection.
//! The caller owns the residual connection and any normalization.

use crate::error::{ProbeError, Result};
use crate::nn::ops::{linear_backward, linear_forward, masked_softmax, softmax_backward_rows};
use crate::nn::tensor::Tensor;

/// Borrowed projection weights, each `[D × D]` with a `[D]` bias.
#[derive(Clone, Copy)]
pub struct AttentionWeights<'a> {
    pub wq: &'a Tensor,
    pub bq: &'a Tensor,
    pub wk: &'a Tensor,
    pub bk: &'a Tensor,
    pub wv: &'a Tensor,
    pub bv: &'a Tensor,
    pub wo: &'a Tensor,
    pub bo: &'a Tensor,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    z: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    concat: Tensor,
    /// `[B·H × N × N]`, head-major within each molecule.
    alpha: Tensor,
    mask: Vec<bool>,
    batch: usize,
    atoms: usize,
    heads: usize,
    head_dim: usize,
}

impl AttentionCache {
    /// Attention weights reshaped to `[B × H × N × N]`.
    pub fn attention(&self) -> Tensor {
        self.alpha
            .clone()
            .reshape(&[self.batch, self.heads, self.atoms, self.atoms])
            .expect("element count preserved")
    }
}

pub struct AttentionGrads {
    pub dz: Tensor,
    pub dwq: Tensor,
    pub dbq: Tensor,
    pub dwk: Tensor,
    pub dbk: Tensor,
    pub dwv: Tensor,
    pub dbv: Tensor,
    pub dwo: Tensor,
    pub dbo: Tensor,
}

pub fn attention_forward(
    z: &Tensor,
    mask: &[bool],
    w: AttentionWeights<'_>,
    heads: usize,
    head_dim: usize,
) -> Result<(Tensor, AttentionCache)> {
    let s = z.shape();
    if s.len() != 3 {
        return Err(ProbeError::dim("attention input", s, &[0, 0, 0]));
    }
    let (b, n, d) = (s[0], s[1], s[2]);
    if n == 0 {
        return Err(ProbeError::EmptyInput("attention over zero atoms".into()));
    }
    if heads * head_dim != d {
        return Err(ProbeError::Config(format!(
            "heads ({heads}) × head_dim ({head_dim}) must equal width {d}"
        )));
    }
    if mask.len() != b * n {
        return Err(ProbeError::dim("attention mask", &[b, n], &[mask.len()]));
    }
    let q = linear_forward(z, w.wq, Some(w.bq))?;
    let k = linear_forward(z, w.wk, Some(w.bk))?;
    let v = linear_forward(z, w.wv, Some(w.bv))?;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let mut scores = Tensor::zeros(&[b * heads, n, n]);
    let mut head_mask = Vec::with_capacity(b * heads * n);
    {
        let (qd, kd) = (q.data(), k.data());
        let sd = scores.data_mut();
        for bi in 0..b {
            for h in 0..heads {
                let base = (bi * heads + h) * n * n;
                for a in 0..n {
                    let qa = &qd[(bi * n + a) * d + h * head_dim..][..head_dim];
                    for j in 0..n {
                        let kj = &kd[(bi * n + j) * d + h * head_dim..][..head_dim];
                        let dot: f64 = qa.iter().zip(kj).map(|(x, y)| x * y).sum();
                        sd[base + a * n + j] = dot * scale;
                    }
                }
                head_mask.extend_from_slice(&mask[bi * n..(bi + 1) * n]);
            }
        }
    }
    let alpha = masked_softmax(&scores, &head_mask)?;

    let mut concat = Tensor::zeros(&[b, n, d]);
    {
        let (ad, vd) = (alpha.data(), v.data());
        let cd = concat.data_mut();
        for bi in 0..b {
            for h in 0..heads {
                let base = (bi * heads + h) * n * n;
                for a in 0..n {
                    let out = &mut cd[(bi * n + a) * d + h * head_dim..][..head_dim];
                    for j in 0..n {
                        let wgt = ad[base + a * n + j];
                        if wgt == 0.0 {
                            continue;
                        }
                        let vj = &vd[(bi * n + j) * d + h * head_dim..][..head_dim];
                        for (o, x) in out.iter_mut().zip(vj) {
                            *o += wgt * x;
                        }
                    }
                }
            }
        }
    }
    let out = linear_forward(&concat, w.wo, Some(w.bo))?;
    let cache = AttentionCache {
        z: z.clone(),
        q,
        k,
        v,
        concat,
        alpha,
        mask: mask.to_vec(),
        batch: b,
        atoms: n,
        heads,
        head_dim,
    };
    Ok((out, cache))
}

pub fn attention_backward(
    cache: &AttentionCache,
    w: AttentionWeights<'_>,
    grad_out: &Tensor,
) -> Result<AttentionGrads> {
    let (b, n, heads, hd) = (cache.batch, cache.atoms, cache.heads, cache.head_dim);
    let d = heads * hd;
    let o = linear_backward(&cache.concat, w.wo, grad_out)?;
    let dconcat = o.dx;

    let mut dalpha = Tensor::zeros(cache.alpha.shape());
    let mut dv = Tensor::zeros(cache.v.shape());
    {
        let (ad, vd, gd) = (cache.alpha.data(), cache.v.data(), dconcat.data());
        let dad = dalpha.data_mut();
        let dvd = dv.data_mut();
        for bi in 0..b {
            for h in 0..heads {
                let base = (bi * heads + h) * n * n;
                for a in 0..n {
                    let ga = &gd[(bi * n + a) * d + h * hd..][..hd];
                    for j in 0..n {
                        let off = (bi * n + j) * d + h * hd;
                        let vj = &vd[off..off + hd];
                        dad[base + a * n + j] = ga.iter().zip(vj).map(|(x, y)| x * y).sum();
                        let wgt = ad[base + a * n + j];
                        if wgt != 0.0 {
                            for (dst, g) in dvd[off..off + hd].iter_mut().zip(ga) {
                                *dst += wgt * g;
                            }
                        }
                    }
                }
            }
        }
    }
    let mut dscores = softmax_backward_rows(&cache.alpha, &dalpha)?;
    // Padded query rows are constants, not functions of the scores.
    for bi in 0..b {
        for a in (0..n).filter(|&a| !cache.mask[bi * n + a]) {
            for h in 0..heads {
                let off = ((bi * heads + h) * n + a) * n;
                dscores.data_mut()[off..off + n].fill(0.0);
            }
        }
    }

    let scale = 1.0 / (hd as f64).sqrt();
    let mut dq = Tensor::zeros(cache.q.shape());
    let mut dk = Tensor::zeros(cache.k.shape());
    {
        let (qd, kd, sd) = (cache.q.data(), cache.k.data(), dscores.data());
        let (dqd, dkd) = (dq.data_mut(), dk.data_mut());
        for bi in 0..b {
            for h in 0..heads {
                let base = (bi * heads + h) * n * n;
                for a in 0..n {
                    let qa_off = (bi * n + a) * d + h * hd;
                    for j in 0..n {
                        let g = sd[base + a * n + j] * scale;
                        if g == 0.0 {
                            continue;
                        }
                        let kj_off = (bi * n + j) * d + h * hd;
                        for t in 0..hd {
                            dqd[qa_off + t] += g * kd[kj_off + t];
                            dkd[kj_off + t] += g * qd[qa_off + t];
                        }
                    }
                }
            }
        }
    }
    let gq = linear_backward(&cache.z, w.wq, &dq)?;
    let gk = linear_backward(&cache.z, w.wk, &dk)?;
    let gv = linear_backward(&cache.z, w.wv, &dv)?;
    let mut dz = gq.dx;
    dz.add_assign(&gk.dx)?;
    dz.add_assign(&gv.dx)?;
    Ok(AttentionGrads {
        dz,
        dwq: gq.dw,
        dbq: gq.db,
        dwk: gk.dw,
        dbk: gk.db,
        dwv: gv.dw,
        dbv: gv.db,
        dwo: o.dw,
        dbo: o.db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::rng::SeededRng;

    struct Owned {
        t: Vec<Tensor>,
    }

    impl Owned {
        fn random(d: usize, rng: &mut SeededRng) -> Self {
            let mut t = Vec::new();
            for _ in 0..4 {
                t.push(
                    Tensor::from_vec(&[d, d], (0..d * d).map(|_| rng.gaussian(0.0, 0.7)).collect())
                        .unwrap(),
                );
                t.push(Tensor::from_vec(&[d], (0..d).map(|_| rng.gaussian(0.0, 0.3)).collect()).unwrap());
            }
            Self { t }
        }

        fn weights(&self) -> AttentionWeights<'_> {
            let t = &self.t;
            AttentionWeights {
                wq: &t[0],
                bq: &t[1],
                wk: &t[2],
                bk: &t[3],
                wv: &t[4],
                bv: &t[5],
                wo: &t[6],
                bo: &t[7],
            }
        }
    }

    #[test]
    fn single_atom_attends_to_itself() {
        let mut rng = SeededRng::new(1);
        let w = Owned::random(4, &mut rng);
        let z = Tensor::from_vec(&[1, 1, 4], vec![0.3, -2.0, 1.0, 0.5]).unwrap();
        let (_, cache) = attention_forward(&z, &[true], w.weights(), 2, 2).unwrap();
        assert_eq!(cache.attention().data(), &[1.0, 1.0]);
    }

    #[test]
    fn identical_atoms_attend_uniformly() {
        let mut rng = SeededRng::new(2);
        let w = Owned::random(4, &mut rng);
        let z = Tensor::from_vec(&[1, 2, 4], vec![0.1, 0.2, 0.3, 0.4, 0.1, 0.2, 0.3, 0.4]).unwrap();
        let (_, cache) = attention_forward(&z, &[true, true], w.weights(), 2, 2).unwrap();
        for v in cache.attention().data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn head_mismatch_is_config_error() {
        let mut rng = SeededRng::new(3);
        let w = Owned::random(4, &mut rng);
        let z = Tensor::zeros(&[1, 2, 4]);
        assert!(matches!(
            attention_forward(&z, &[true, true], w.weights(), 3, 2),
            Err(ProbeError::Config(_))
        ));
        assert!(matches!(
            attention_forward(&z, &[true], w.weights(), 2, 2),
            Err(ProbeError::Dimension { .. })
        ));
        let empty = Tensor::zeros(&[1, 0, 4]);
        assert!(attention_forward(&empty, &[], w.weights(), 2, 2).is_err());
    }

    /// Scalar loss `Σ c ⊙ out` so that `dL/dout = c`.
    fn probe_loss(z: &Tensor, mask: &[bool], w: &Owned, c: &Tensor) -> f64 {
        let (out, _) = attention_forward(z, mask, w.weights(), 2, 2).unwrap();
        out.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
    }

    fn rel_err(a: f64, n: f64) -> f64 {
        (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = SeededRng::new(17);
        let (b, n, d) = (2, 3, 4);
        let mut w = Owned::random(d, &mut rng);
        let mut z = Tensor::from_vec(&[b, n, d], (0..b * n * d).map(|_| rng.normal()).collect()).unwrap();
        let mask = vec![true, true, true, true, true, false];
        let c = Tensor::from_vec(&[b, n, d], (0..b * n * d).map(|_| rng.normal()).collect()).unwrap();
        // Padded rows carry no loss, matching how the model consumes them.
        let mut c = c;
        for v in &mut c.data_mut()[(b * n - 1) * d..] {
            *v = 0.0;
        }
        let (_, cache) = attention_forward(&z, &mask, w.weights(), 2, 2).unwrap();
        let g = attention_backward(&cache, w.weights(), &c).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..z.len() {
            let orig = z.data()[i];
            z.data_mut()[i] = orig + h;
            let lp = probe_loss(&z, &mask, &w, &c);
            z.data_mut()[i] = orig - h;
            let lm = probe_loss(&z, &mask, &w, &c);
            z.data_mut()[i] = orig;
            worst = worst.max(rel_err(g.dz.data()[i], (lp - lm) / (2.0 * h)));
        }
        let analytic = [&g.dwq, &g.dbq, &g.dwk, &g.dbk, &g.dwv, &g.dbv, &g.dwo, &g.dbo];
        for (ti, grad) in analytic.iter().enumerate() {
            for i in 0..w.t[ti].len() {
                let orig = w.t[ti].data()[i];
                w.t[ti].data_mut()[i] = orig + h;
                let lp = probe_loss(&z, &mask, &w, &c);
                w.t[ti].data_mut()[i] = orig - h;
                let lm = probe_loss(&z, &mask, &w, &c);
                w.t[ti].data_mut()[i] = orig;
                worst = worst.max(rel_err(grad.data()[i], (lp - lm) / (2.0 * h)));
            }
        }
        assert!(worst < 1e-5, "max relative error {worst}");
    }
}
