use crate::dataset::{make_batches, LabeledDataset};
use crate::error::{ProbeError, Result};
use crate::model::{Mode, ProbeModel, ScalarStats};
use crate::nn::clip_grad_norm;
use crate::training::checkpoint::{Checkpoint, CheckpointMeta};
use crate::training::loss::probe_loss;
use crate::training::schedule::{scheduler_step, EpochRecord, TrainConfig, TrainState};

pub struct FitOutcome {
    /// Parameters of the best-validation epoch, in eval mode.
    pub model: ProbeModel,
    pub state: TrainState,
    pub checkpoint: Checkpoint,
}

/// Molecule-weighted mean of `probe_loss` over `data`, without dropout.
pub fn dataset_loss(
    model: &ProbeModel,
    data: &LabeledDataset,
    class_weights: [f64; 2],
    batch_size: usize,
) -> Result<f64> {
    if data.is_empty() {
        return Err(ProbeError::EmptyInput("no molecules".into()));
    }
    let mut total = 0.0;
    for (records, labels) in data.records.chunks(batch_size).zip(data.labels.chunks(batch_size)) {
        let batch = crate::dataset::Batch::from_records(&records.iter().collect::<Vec<_>>(), Some(labels), None)?;
        let out = model.forward(&batch, false)?;
        let (loss, _) = probe_loss(&out.logits, labels, &batch.n_atoms, class_weights)?;
        total += loss * batch.size() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Shuffled mini-batch AdamW with clipping, plateau decay and early stopping.
/// Scalar normalization statistics are taken from `train`.
pub fn fit(
    mut model: ProbeModel,
    train: &LabeledDataset,
    val: &LabeledDataset,
    config: &TrainConfig,
) -> Result<FitOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(ProbeError::EmptyInput("no molecules".into()));
    }
    let d = model.config.input_dim;
    if let Some(r) = train.records.iter().chain(&val.records).find(|r| r.embed_dim() != d) {
        return Err(ProbeError::dim("training record width", &[d], &[r.embed_dim()]));
    }
    model.set_scalar_stats(ScalarStats::from_records(&train.records));
    let weights = train.class_weights;
    let mut state = TrainState::new(&model.store, config);
    let mut best = model.store.snapshot();

    for epoch in 1..=config.max_epochs {
        state.epoch = epoch;
        model.set_mode(Mode::Train);
        let batches = make_batches(
            &train.records,
            Some(&train.labels),
            config.batch_size,
            true,
            &mut state.shuffle_rng,
        )?;
        let mut total = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let diverged = |what: &str| {
                ProbeError::Divergence(format!("{what} at epoch {epoch}, batch {bi}"))
            };
            model.store.zero_grad();
            let (out, cache) = model.forward_train(batch, &mut state.dropout_rng)?;
            let labels = batch.labels.as_deref().expect("training batches carry labels");
            let (loss, dlogits) = probe_loss(&out.logits, labels, &batch.n_atoms, weights)?;
            if !loss.is_finite() {
                return Err(diverged("non-finite training loss"));
            }
            model.backward(&cache, &dlogits)?;
            clip_grad_norm(&mut model.store, config.clip_norm);
            state
                .optimizer
                .step(&mut model.store, state.lr)
                .map_err(|e| diverged(&e.to_string()))?;
            total += loss * batch.size() as f64;
        }
        let train_loss = total / train.len() as f64;

        model.set_mode(Mode::Eval);
        let val_loss = dataset_loss(&model, val, weights, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(ProbeError::Divergence(format!("non-finite validation loss at epoch {epoch}")));
        }
        let lr = state.lr;
        if scheduler_step(&mut state, val_loss, config) {
            best = model.store.snapshot();
            state.best_epoch = Some(epoch);
        }
        state.history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6} lr {lr:e}");
        if state.should_stop(config) {
            break;
        }
    }

    model.store.restore(&best)?;
    model.set_mode(Mode::Eval);
    model.store.zero_grad();
    let meta = CheckpointMeta::from_training(train, &state);
    let checkpoint = Checkpoint {
        model: model.clone(),
        meta,
    };
    Ok(FitOutcome {
        model,
        state,
        checkpoint,
    })
}
