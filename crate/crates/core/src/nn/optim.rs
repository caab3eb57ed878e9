use crate::error::{ProbeError, Result};
use crate::nn::param::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// AdamW with decoupled weight decay and bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(store: &ParamStore, config: AdamWConfig) -> Self {
        let m = store.iter().map(|p| vec![0.0; p.value.len()]).collect::<Vec<_>>();
        Self {
            config,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update at learning rate `lr`. Fails before touching any value if
    /// a gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(ProbeError::State("optimizer built for a different store".into()));
        }
        if let Some(p) = store.iter().find(|p| !p.grad.all_finite()) {
            return Err(ProbeError::Divergence(format!(
                "non-finite gradient in parameter `{}`",
                p.name
            )));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.data();
            let theta = p.value.data_mut();
            for i in 0..theta.len() {
                theta[i] -= lr * c.weight_decay * theta[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

/// Global L2 norm over every gradient in the store.
pub fn grad_norm(store: &ParamStore) -> f64 {
    store.iter().map(|p| p.grad.sum_squares()).sum::<f64>().sqrt()
}

/// Rescale all gradients so their global norm is at most `max_norm`.
/// Returns the norm measured before clipping.
///
/// Norms within a relative 1e-12 of `max_norm` count as already clipped, so a
/// second call never rescales by a rounding-level factor.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = grad_norm(store);
    if norm > max_norm * (1.0 + 1e-12) {
        let s = max_norm / norm;
        for p in store.iter_mut() {
            p.grad.scale(s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::rng::SeededRng;
    use crate::nn::tensor::Tensor;

    fn store_with(value: Vec<f64>, grad: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        let n = value.len();
        let id = s.register("theta", Tensor::from_vec(&[n], value).unwrap()).unwrap();
        s.get_mut(id).grad = Tensor::from_vec(&[n], grad).unwrap();
        s
    }

    #[test]
    fn zero_grad_no_decay_is_noop() {
        let mut s = store_with(vec![1.5, -2.0], vec![0.0, 0.0]);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(&s, cfg);
        opt.step(&mut s, 0.1).unwrap();
        assert_eq!(s.iter().next().unwrap().value.data(), &[1.5, -2.0]);
    }

    #[test]
    fn pure_decay() {
        let mut s = store_with(vec![1.0], vec![0.0]);
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut opt = AdamW::new(&s, cfg);
        opt.step(&mut s, 1.0).unwrap();
        assert!((s.iter().next().unwrap().value.data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut s = store_with(vec![1.0], vec![0.0]);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(&s, cfg);
        for _ in 0..200 {
            let theta = s.iter().next().unwrap().value.data()[0];
            s.iter_mut().next().unwrap().grad.data_mut()[0] = 2.0 * theta;
            opt.step(&mut s, 0.1).unwrap();
        }
        let theta = s.iter().next().unwrap().value.data()[0];
        assert!(theta.abs() < 0.05, "{theta}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = store_with(vec![1.0], vec![f64::NAN]);
        let mut opt = AdamW::new(&s, AdamWConfig::default());
        let err = opt.step(&mut s, 0.1).unwrap_err();
        assert!(matches!(err, ProbeError::Divergence(ref m) if m.contains("theta")));
        assert_eq!(s.iter().next().unwrap().value.data(), &[1.0]);
    }

    #[test]
    fn clip_below_threshold_leaves_grads() {
        let mut s = store_with(vec![0.0, 0.0], vec![0.3, 0.4]);
        let n = clip_grad_norm(&mut s, 1.0);
        assert!((n - 0.5).abs() < 1e-15);
        assert_eq!(s.iter().next().unwrap().grad.data(), &[0.3, 0.4]);
    }

    #[test]
    fn clip_three_four_five() {
        let mut s = store_with(vec![0.0, 0.0], vec![3.0, 4.0]);
        assert_eq!(clip_grad_norm(&mut s, 1.0), 5.0);
        let g = s.iter().next().unwrap().grad.data().to_vec();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_random_bounds_and_idempotence() {
        let mut rng = SeededRng::new(5);
        for _ in 0..100 {
            let n = rng.int_inclusive(1, 20);
            let g: Vec<f64> = (0..n).map(|_| rng.gaussian(0.0, 3.0)).collect();
            let mut s = store_with(vec![0.0; n], g);
            clip_grad_norm(&mut s, 1.0);
            assert!(grad_norm(&s) <= 1.0 + 1e-12);
            let once = s.clone();
            clip_grad_norm(&mut s, 1.0);
            assert_eq!(s, once);
        }
    }
}
