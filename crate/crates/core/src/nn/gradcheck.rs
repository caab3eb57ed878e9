//! Central finite-difference verification of analytic gradients.

use crate::nn::param::ParamStore;

/// Denominator floor for relative error, so gradients that are zero up to
/// rounding do not register as failures.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub elements: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compare analytic gradients against central differences for every scalar of
/// every parameter.
///
/// `loss` must be deterministic. When called with `true` it has to leave
/// `∂L/∂θ` in the store's grad slots (the harness zeroes them first); with
/// `false` it only evaluates the loss.
pub fn finite_difference_check<F>(store: &mut ParamStore, h: f64, mut loss: F) -> GradCheckReport
where
    F: FnMut(&mut ParamStore, bool) -> f64,
{
    store.zero_grad();
    loss(store, true);
    let analytic: Vec<Vec<f64>> = store.iter().map(|p| p.grad.data().to_vec()).collect();

    let mut params = Vec::with_capacity(store.len());
    for pi in 0..analytic.len() {
        let (name, n) = {
            let p = store.iter().nth(pi).unwrap();
            (p.name.clone(), p.value.len())
        };
        let mut max_rel = 0.0f64;
        let mut max_abs = 0.0f64;
        for i in 0..n {
            let orig = value_at(store, pi, i);
            set_value(store, pi, i, orig + h);
            let lp = loss(store, false);
            set_value(store, pi, i, orig - h);
            let lm = loss(store, false);
            set_value(store, pi, i, orig);
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic[pi][i];
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        params.push(ParamCheck {
            name,
            max_rel_err: max_rel,
            max_abs_err: max_abs,
            elements: n,
        });
    }
    GradCheckReport { params }
}

fn value_at(store: &ParamStore, pi: usize, i: usize) -> f64 {
    store.iter().nth(pi).unwrap().value.data()[i]
}

fn set_value(store: &mut ParamStore, pi: usize, i: usize, v: f64) {
    store.iter_mut().nth(pi).unwrap().value.data_mut()[i] = v;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ops::{linear_backward, linear_forward};
    use crate::nn::rng::SeededRng;
    use crate::nn::tensor::Tensor;

    struct Fixture {
        store: ParamStore,
        x: Tensor,
        target: Tensor,
    }

    fn fixture() -> Fixture {
        let mut rng = SeededRng::new(9);
        let mut store = ParamStore::new();
        let w: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..2).map(|_| rng.normal()).collect();
        store.register("w", Tensor::from_vec(&[2, 4], w).unwrap()).unwrap();
        store.register("b", Tensor::from_vec(&[2], b).unwrap()).unwrap();
        let x = Tensor::from_vec(&[3, 4], (0..12).map(|_| rng.normal()).collect()).unwrap();
        let target = Tensor::from_vec(&[3, 2], (0..6).map(|_| rng.normal()).collect()).unwrap();
        Fixture { store, x, target }
    }

    /// `L = ½‖xWᵀ + b − t‖²`, with an optional bogus factor on dW.
    fn run(f: &mut Fixture, corrupt: f64) -> GradCheckReport {
        let (x, target) = (f.x.clone(), f.target.clone());
        finite_difference_check(&mut f.store, 1e-5, |s, grad| {
            let w = s.iter().next().unwrap().value.clone();
            let b = s.iter().nth(1).unwrap().value.clone();
            let y = linear_forward(&x, &w, Some(&b)).unwrap();
            let mut r = y.clone();
            for (v, t) in r.data_mut().iter_mut().zip(target.data()) {
                *v -= t;
            }
            if grad {
                let g = linear_backward(&x, &w, &r).unwrap();
                let mut dw = g.dw;
                dw.scale(corrupt);
                s.iter_mut().next().unwrap().grad = dw;
                s.iter_mut().nth(1).unwrap().grad = g.db;
            }
            0.5 * r.sum_squares()
        })
    }

    #[test]
    fn linear_layer_passes() {
        let rep = run(&mut fixture(), 1.0);
        assert!(rep.max_rel_err() < 1e-7, "{:?}", rep);
        assert_eq!(rep.params.len(), 2);
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let rep = run(&mut fixture(), 1.5);
        assert!(rep.max_rel_err() > 1e-2);
        assert_eq!(rep.worst().unwrap().name, "w");
    }
}
