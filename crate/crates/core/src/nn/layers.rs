//! Layers that own their parameters through [`ParamStore`] handles.

use crate::error::Result;
use crate::nn::attention::{attention_backward, attention_forward, AttentionCache, AttentionWeights};
use crate::nn::ops::{
    dropout_backward, gelu, gelu_backward, inverted_dropout, layer_norm_backward,
    layer_norm_forward, linear_backward, linear_forward, LayerNormCache, LAYER_NORM_EPS,
};
use crate::nn::param::{ParamId, ParamStore};
use crate::nn::rng::SeededRng;
use crate::nn::tensor::Tensor;

/// Kaiming-uniform weights, bound `√(6 / fan_in)`.
fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut SeededRng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_range(-bound, bound)).collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let weight = store.register(
            format!("{name}.weight"),
            kaiming_uniform(&[out_dim, in_dim], in_dim, rng),
        )?;
        let bias = if bias {
            Some(store.register(format!("{name}.bias"), Tensor::zeros(&[out_dim]))?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        linear_forward(x, store.value(self.weight), self.bias.map(|b| store.value(b)))
    }

    /// Accumulates parameter gradients and returns `∂L/∂x`.
    pub fn backward(&self, store: &mut ParamStore, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let g = linear_backward(x, store.value(self.weight), grad_out)?;
        store.grad_mut(self.weight).add_assign(&g.dw)?;
        if let Some(b) = self.bias {
            store.grad_mut(b).add_assign(&g.db)?;
        }
        Ok(g.dx)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.register(format!("{name}.gamma"), Tensor::filled(&[dim], 1.0))?,
            beta: store.register(format!("{name}.beta"), Tensor::zeros(&[dim]))?,
        })
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, LayerNormCache)> {
        layer_norm_forward(x, store.value(self.gamma), store.value(self.beta), LAYER_NORM_EPS)
    }

    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &LayerNormCache,
        grad_out: &Tensor,
    ) -> Result<Tensor> {
        let g = layer_norm_backward(cache, store.value(self.gamma), grad_out)?;
        store.grad_mut(self.gamma).add_assign(&g.dgamma)?;
        store.grad_mut(self.beta).add_assign(&g.dbeta)?;
        Ok(g.dx)
    }
}

/// Linear → LayerNorm → GELU → Dropout.
#[derive(Debug, Clone)]
pub struct MlpBlock {
    pub linear: Linear,
    pub norm: LayerNorm,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct MlpBlockCache {
    input: Tensor,
    norm: LayerNormCache,
    pre_act: Tensor,
    drop_mask: Option<Vec<f64>>,
}

impl MlpBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        dropout: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(Self {
            linear: Linear::new(store, &format!("{name}.linear"), in_dim, out_dim, true, rng)?,
            norm: LayerNorm::new(store, &format!("{name}.norm"), out_dim)?,
            dropout,
        })
    }

    /// `rng = None` disables dropout.
    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        rng: Option<&mut SeededRng>,
    ) -> Result<(Tensor, MlpBlockCache)> {
        let h = self.linear.forward(store, x)?;
        let (n, norm) = self.norm.forward(store, &h)?;
        let a = gelu(&n);
        let training = rng.is_some();
        let (y, drop_mask) = inverted_dropout(&a, self.dropout, training, rng)?;
        Ok((
            y,
            MlpBlockCache {
                input: x.clone(),
                norm,
                pre_act: n,
                drop_mask,
            },
        ))
    }

    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &MlpBlockCache,
        grad_out: &Tensor,
    ) -> Result<Tensor> {
        let g = dropout_backward(grad_out, cache.drop_mask.as_deref());
        let g = gelu_backward(&cache.pre_act, &g)?;
        let g = self.norm.backward(store, &cache.norm, &g)?;
        self.linear.backward(store, &cache.input, &g)
    }
}

/// Multi-head self-attention with Q/K/V/O projections (all biased).
#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub head_dim: usize,
}

impl SelfAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        heads: usize,
        head_dim: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let d = heads * head_dim;
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), d, d, true, rng)?,
            k: Linear::new(store, &format!("{name}.k"), d, d, true, rng)?,
            v: Linear::new(store, &format!("{name}.v"), d, d, true, rng)?,
            o: Linear::new(store, &format!("{name}.o"), d, d, true, rng)?,
            heads,
            head_dim,
        })
    }

    fn weights<'a>(&self, store: &'a ParamStore) -> AttentionWeights<'a> {
        let bias = |l: &Linear| store.value(l.bias.expect("attention projections carry bias"));
        AttentionWeights {
            wq: store.value(self.q.weight),
            bq: bias(&self.q),
            wk: store.value(self.k.weight),
            bk: bias(&self.k),
            wv: store.value(self.v.weight),
            bv: bias(&self.v),
            wo: store.value(self.o.weight),
            bo: bias(&self.o),
        }
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        z: &Tensor,
        mask: &[bool],
    ) -> Result<(Tensor, AttentionCache)> {
        attention_forward(z, mask, self.weights(store), self.heads, self.head_dim)
    }

    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &AttentionCache,
        grad_out: &Tensor,
    ) -> Result<Tensor> {
        let g = attention_backward(cache, self.weights(store), grad_out)?;
        let pairs = [
            (&self.q, g.dwq, g.dbq),
            (&self.k, g.dwk, g.dbk),
            (&self.v, g.dwv, g.dbv),
            (&self.o, g.dwo, g.dbo),
        ];
        for (l, dw, db) in pairs {
            store.grad_mut(l.weight).add_assign(&dw)?;
            store.grad_mut(l.bias.unwrap()).add_assign(&db)?;
        }
        Ok(g.dz)
    }
}
