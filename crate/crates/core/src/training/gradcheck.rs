use crate::dataset::Batch;
use crate::error::{ProbeError, Result};
use crate::model::{Mode, ProbeModel};
use crate::nn::{finite_difference_check, GradCheckReport, SeededRng};
use crate::training::loss::probe_loss;

/// Finite-difference check of the whole network under `probe_loss`, with
/// dropout disabled.
pub fn check_model_gradients(
    model: &mut ProbeModel,
    batch: &Batch,
    class_weights: [f64; 2],
    h: f64,
) -> Result<GradCheckReport> {
    let labels = batch
        .labels
        .clone()
        .ok_or_else(|| ProbeError::Data("gradient check needs a labelled batch".into()))?;
    let mode = model.mode();
    model.set_mode(Mode::Eval);
    let mut store = std::mem::take(&mut model.store);
    let mut rng = SeededRng::new(0);
    let mut failure = None;
    let report = finite_difference_check(&mut store, h, |s, with_grad| {
        std::mem::swap(&mut model.store, s);
        let r = (|| -> Result<f64> {
            let (out, cache) = model.forward_train(batch, &mut rng)?;
            let (loss, dlogits) = probe_loss(&out.logits, &labels, &batch.n_atoms, class_weights)?;
            if with_grad {
                model.backward(&cache, &dlogits)?;
            }
            Ok(loss)
        })();
        std::mem::swap(&mut model.store, s);
        r.unwrap_or_else(|e| {
            failure.get_or_insert(e);
            f64::NAN
        })
    });
    model.store = store;
    model.set_mode(mode);
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
