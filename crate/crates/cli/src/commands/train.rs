use std::fmt::Write as _;

use probe_core::dataset::{apply_boundary, assign_labels, split_train_val, ErrorMode};
use probe_core::model::ProbeModel;
use probe_core::training::{fit, EpochRecord};

use crate::args::{Cli, TrainArgs};
use crate::manifest::{default_path, ManifestBuilder};
use crate::settings::{load_or_default, ModelSection, TrainSettings};
use crate::CliResult;

pub fn train(cli: &Cli, a: &TrainArgs) -> CliResult<()> {
    let mut m = ManifestBuilder::new("train", cli.threads);
    let mut s: TrainSettings = load_or_default(cli.config.as_deref())?;
    apply_flags(&mut s, a)?;
    let t = &s.training;
    t.validate()?;

    let records = super::read_records(&a.data, &mut m)?;
    let d = records[0].embed_dim();
    let config = s.model.resolve(s.preset, d)?;
    s.model = ModelSection::materialized(&config);
    let model = ProbeModel::new(config, t.seed)?;
    super::check_width(&model, &records)?;

    let data = assign_labels(records, t.percentile, s.error_mode)?;
    let (train, val) = match &a.val {
        Some(path) => {
            let val_recs = super::read_records(path, &mut m)?;
            let val = apply_boundary(val_recs, data.boundary, data.percentile, data.class_weights, s.error_mode)?;
            (data, val)
        }
        None => split_train_val(&data, t.train_fraction, t.seed)?,
    };
    log::info!(
        "boundary {:.6} kcal/mol at p={}, {} train / {} val molecules",
        train.boundary,
        t.percentile,
        train.len(),
        val.len()
    );

    let out = fit(model, &train, &val, t)?;
    out.checkpoint.save(&a.out)?;
    m.output(&a.out);
    let history = a.out.with_extension("history.csv");
    super::write_file(&history, &history_csv(&out.state.history))?;
    m.output(&history);
    m.finish(&s, Some(t.seed), &super::manifest_path(cli, default_path(&a.out, false)))?;

    let meta = &out.checkpoint.meta;
    eprintln!(
        "trained {} epochs, best epoch {:?}, best val loss {:?}; checkpoint {}",
        meta.epochs_run,
        meta.best_epoch,
        meta.best_val_loss,
        a.out.display()
    );
    Ok(())
}

fn apply_flags(s: &mut TrainSettings, a: &TrainArgs) -> CliResult<()> {
    let t = &mut s.training;
    if let Some(v) = a.percentile {
        t.percentile = v;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.min_lr {
        t.min_lr = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.max_epochs {
        t.max_epochs = v;
    }
    if let Some(v) = a.early_stop_patience {
        t.early_stop_patience = v;
    }
    if let Some(v) = a.train_fraction {
        t.train_fraction = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(p) = a.preset {
        s.preset = p;
    }
    if let Some(mode) = &a.error_mode {
        s.error_mode = ErrorMode::parse(mode)?;
    }
    Ok(())
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut o = String::from("epoch,train_loss,val_loss,lr\n");
    for h in history {
        let _ = writeln!(o, "{},{},{},{}", h.epoch, h.train_loss, h.val_loss, h.lr);
    }
    o
}
