//! Forward and hand-derived backward kernels.
//!
//! Every kernel works on the matrix view of its input (leading axes collapse
//! into rows). Parallel paths split work by output row only, so each output
//! element is reduced in the same order regardless of thread count and
//! results stay bit-identical.

use rayon::prelude::*;

use crate::error::{ProbeError, Result};
use crate::nn::rng::SeededRng;
use crate::nn::tensor::{debug_assert_finite, Tensor};

/// Multiply-adds below which kernels stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

pub const LAYER_NORM_EPS: f64 = 1e-5;

fn out_shape(input: &[usize], last: usize) -> Vec<usize> {
    let mut s = input.to_vec();
    match s.last_mut() {
        Some(l) => *l = last,
        None => s.push(last),
    }
    s
}

/// `y = x Wᵀ + b` with `W: [out × in]`.
pub fn linear_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let (rows, in_dim) = x.as_matrix();
    if w.shape().len() != 2 || w.shape()[1] != in_dim {
        return Err(ProbeError::dim("linear", x.shape(), w.shape()));
    }
    let out_dim = w.shape()[0];
    if let Some(b) = b {
        if b.shape() != [out_dim] {
            return Err(ProbeError::dim("linear bias", w.shape(), b.shape()));
        }
    }
    let mut y = Tensor::zeros(&out_shape(x.shape(), out_dim));
    let wd = w.data();
    let xd = x.data();
    let kernel = |(r, yr): (usize, &mut [f64])| {
        let xr = &xd[r * in_dim..(r + 1) * in_dim];
        for (o, yo) in yr.iter_mut().enumerate() {
            let wr = &wd[o * in_dim..(o + 1) * in_dim];
            let mut acc = b.map_or(0.0, |b| b.data()[o]);
            for (xi, wi) in xr.iter().zip(wr) {
                acc += xi * wi;
            }
            *yo = acc;
        }
    };
    if out_dim > 0 {
        if rows * in_dim * out_dim >= PAR_THRESHOLD {
            y.data_mut().par_chunks_mut(out_dim).enumerate().for_each(kernel);
        } else {
            y.data_mut().chunks_mut(out_dim).enumerate().for_each(kernel);
        }
    }
    debug_assert_finite(&y, "linear");
    Ok(y)
}

pub struct LinearGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

pub fn linear_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> Result<LinearGrads> {
    let (rows, in_dim) = x.as_matrix();
    let out_dim = w.shape()[0];
    let (g_rows, g_cols) = grad_out.as_matrix();
    if g_rows != rows || g_cols != out_dim {
        return Err(ProbeError::dim("linear backward", x.shape(), grad_out.shape()));
    }
    let wd = w.data();
    let xd = x.data();
    let gd = grad_out.data();
    let heavy = rows * in_dim * out_dim >= PAR_THRESHOLD;

    let mut dx = Tensor::zeros(x.shape());
    let dx_kernel = |(r, dxr): (usize, &mut [f64])| {
        let gr = &gd[r * out_dim..(r + 1) * out_dim];
        for (o, g) in gr.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let wr = &wd[o * in_dim..(o + 1) * in_dim];
            for (d, wi) in dxr.iter_mut().zip(wr) {
                *d += g * wi;
            }
        }
    };
    let mut dw = Tensor::zeros(w.shape());
    let dw_kernel = |(o, dwr): (usize, &mut [f64])| {
        for r in 0..rows {
            let g = gd[r * out_dim + o];
            if g == 0.0 {
                continue;
            }
            let xr = &xd[r * in_dim..(r + 1) * in_dim];
            for (d, xi) in dwr.iter_mut().zip(xr) {
                *d += g * xi;
            }
        }
    };
    if in_dim > 0 {
        if heavy {
            dx.data_mut().par_chunks_mut(in_dim).enumerate().for_each(dx_kernel);
            dw.data_mut().par_chunks_mut(in_dim).enumerate().for_each(dw_kernel);
        } else {
            dx.data_mut().chunks_mut(in_dim).enumerate().for_each(dx_kernel);
            dw.data_mut().chunks_mut(in_dim).enumerate().for_each(dw_kernel);
        }
    }
    let mut db = Tensor::zeros(&[out_dim]);
    for r in 0..rows {
        for (d, g) in db.data_mut().iter_mut().zip(&gd[r * out_dim..(r + 1) * out_dim]) {
            *d += g;
        }
    }
    Ok(LinearGrads { dx, dw, db })
}

/// Saved activations for the layer-norm backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
}

/// Per-row normalization with population variance, then `γ·x̂ + β`.
pub fn layer_norm_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, LayerNormCache)> {
    let (rows, d) = x.as_matrix();
    if d == 0 {
        return Err(ProbeError::EmptyInput("layer_norm over zero features".into()));
    }
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(ProbeError::dim("layer_norm", x.shape(), gamma.shape()));
    }
    let mut y = Tensor::zeros(x.shape());
    let mut xhat = Tensor::zeros(x.shape());
    let mut inv_std = vec![0.0; rows];
    let (g, b) = (gamma.data(), beta.data());
    for r in 0..rows {
        let xr = x.row(r);
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[r] = is;
        let hr = xhat.row_mut(r);
        for (h, v) in hr.iter_mut().zip(xr) {
            *h = (v - mean) * is;
        }
        let hr = xhat.row(r).to_vec();
        for (k, yv) in y.row_mut(r).iter_mut().enumerate() {
            *yv = g[k] * hr[k] + b[k];
        }
    }
    debug_assert_finite(&y, "layer_norm");
    Ok((y, LayerNormCache { xhat, inv_std }))
}

pub struct LayerNormGrads {
    pub dx: Tensor,
    pub dgamma: Tensor,
    pub dbeta: Tensor,
}

pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &Tensor,
    grad_out: &Tensor,
) -> Result<LayerNormGrads> {
    let (rows, d) = cache.xhat.as_matrix();
    if grad_out.shape() != cache.xhat.shape() {
        return Err(ProbeError::dim(
            "layer_norm backward",
            cache.xhat.shape(),
            grad_out.shape(),
        ));
    }
    let g = gamma.data();
    let mut dx = Tensor::zeros(grad_out.shape());
    let mut dgamma = Tensor::zeros(&[d]);
    let mut dbeta = Tensor::zeros(&[d]);
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let gy = grad_out.row(r);
        let xh = cache.xhat.row(r);
        for k in 0..d {
            dgamma.data_mut()[k] += gy[k] * xh[k];
            dbeta.data_mut()[k] += gy[k];
            dxhat[k] = gy[k] * g[k];
        }
        let sum_dxhat: f64 = dxhat.iter().sum();
        let sum_dxhat_xhat: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
        let scale = cache.inv_std[r] / d as f64;
        for (k, out) in dx.row_mut(r).iter_mut().enumerate() {
            *out = scale * (d as f64 * dxhat[k] - sum_dxhat - xh[k] * sum_dxhat_xhat);
        }
    }
    Ok(LayerNormGrads { dx, dgamma, dbeta })
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF via erf.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v * std_normal_cdf(v)).collect();
    let y = Tensor::from_vec(x.shape(), data).expect("same shape");
    debug_assert_finite(&y, "gelu");
    y
}

/// `dL/dx = dL/dy · (Φ(x) + x·φ(x))`.
pub fn gelu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if x.shape() != grad_out.shape() {
        return Err(ProbeError::dim("gelu backward", x.shape(), grad_out.shape()));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| {
            let pdf = FRAC_1_SQRT_2PI * (-0.5 * v * v).exp();
            g * (std_normal_cdf(v) + v * pdf)
        })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Softmax over the last axis of `scores: [B × N × N]`, restricted to keys
/// whose mask entry is true.
///
/// Masked keys get exactly zero. Rows belonging to padded queries are set to
/// the uniform distribution over real keys; they never reach the output.
pub fn masked_softmax(scores: &Tensor, mask: &[bool]) -> Result<Tensor> {
    let s = scores.shape();
    if s.len() != 3 || s[1] != s[2] {
        return Err(ProbeError::dim("masked_softmax", s, &[0, 0, 0]));
    }
    let (b, n) = (s[0], s[1]);
    if mask.len() != b * n {
        return Err(ProbeError::dim("masked_softmax mask", s, &[mask.len()]));
    }
    let mut out = Tensor::zeros(s);
    for bi in 0..b {
        let m = &mask[bi * n..(bi + 1) * n];
        let real = m.iter().filter(|&&v| v).count();
        if real == 0 {
            return Err(ProbeError::InvalidRecord(format!(
                "molecule {bi} in batch has zero real atoms"
            )));
        }
        for q in 0..n {
            let off = (bi * n + q) * n;
            let row_out = &mut out.data_mut()[off..off + n];
            if !m[q] {
                let u = 1.0 / real as f64;
                for (o, &keep) in row_out.iter_mut().zip(m) {
                    *o = if keep { u } else { 0.0 };
                }
                continue;
            }
            let row_in = &scores.data()[off..off + n];
            let mut max = f64::NEG_INFINITY;
            for (&v, &keep) in row_in.iter().zip(m) {
                let v = if keep { v } else { f64::NEG_INFINITY };
                if v > max {
                    max = v;
                }
            }
            let mut sum = 0.0;
            for ((o, &v), &keep) in row_out.iter_mut().zip(row_in).zip(m) {
                let e = if keep { (v - max).exp() } else { 0.0 };
                *o = e;
                sum += e;
            }
            for o in row_out.iter_mut() {
                *o /= sum;
            }
        }
    }
    debug_assert_finite(&out, "masked_softmax");
    Ok(out)
}

/// Row-wise softmax backward given the forward output `p` (`[.. × N]`).
/// Entries with `p == 0` (masked keys) receive zero gradient.
pub fn softmax_backward_rows(p: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if p.shape() != grad_out.shape() {
        return Err(ProbeError::dim("softmax backward", p.shape(), grad_out.shape()));
    }
    let (rows, n) = p.as_matrix();
    let mut dx = Tensor::zeros(p.shape());
    for r in 0..rows {
        let pr = p.row(r);
        let gr = grad_out.row(r);
        let dot: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for k in 0..n {
            dx.data_mut()[r * n + k] = pr[k] * (gr[k] - dot);
        }
    }
    Ok(dx)
}

/// Inverted dropout. Returns the output and the keep-scale mask (0 or
/// `1/(1-p)`) needed for the backward pass; `None` means identity.
pub fn inverted_dropout(
    x: &Tensor,
    p: f64,
    training: bool,
    rng: Option<&mut SeededRng>,
) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(ProbeError::Config(format!(
            "dropout probability must lie in [0, 1), got {p}"
        )));
    }
    if !training || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let rng = rng.ok_or_else(|| ProbeError::State("dropout in training mode needs an rng".into()))?;
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((Tensor::from_vec(x.shape(), data)?, Some(mask)))
}

pub fn dropout_backward(grad_out: &Tensor, mask: Option<&[f64]>) -> Tensor {
    match mask {
        None => grad_out.clone(),
        Some(m) => {
            let data = grad_out.data().iter().zip(m).map(|(g, k)| g * k).collect();
            Tensor::from_vec(grad_out.shape(), data).expect("same shape")
        }
    }
}
