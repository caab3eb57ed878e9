//! Commands that run a trained checkpoint over a container.

use std::fmt::Write as _;
use std::path::PathBuf;

use probe_core::dataset::{apply_boundary, Batch, MoleculeRecord};
use probe_core::evaluation::{argmax_class, emit_report, ensemble_baseline, evaluate, report_table, EnsembleInput};
use probe_core::model::{atom_importance, export_molecular_embeddings, ExportFormat};
use probe_core::training::Checkpoint;
use probe_core::ProbeError;
use serde::Serialize;

use crate::args::{Cli, EmbeddingFormat, EvalArgs, ExportArgs, ImportanceArgs, InferArgs};
use crate::manifest::{default_path, ManifestBuilder};
use crate::settings::{load_or_default, EvalSettings};
use crate::{usage, CliResult};

fn load_model(path: &std::path::Path, m: &mut ManifestBuilder) -> CliResult<Checkpoint> {
    m.input(path)?;
    Ok(Checkpoint::load(path)?)
}

pub fn infer(cli: &Cli, a: &InferArgs) -> CliResult<()> {
    let mut m = ManifestBuilder::new("infer", cli.threads);
    let ck = load_model(&a.model, &mut m)?;
    let records = super::read_records(&a.data, &mut m)?;
    super::check_width(&ck.model, &records)?;
    let probs = super::probabilities(&ck.model, &records, a.batch_size)?;
    let mut o = String::from("mol_id,p_reliable,p_unreliable,label\n");
    for (r, p) in records.iter().zip(&probs) {
        let _ = writeln!(o, "{},{},{},{}", r.mol_id, p[0], p[1], argmax_class(*p));
    }
    super::write_file(&a.out, &o)?;
    m.output(&a.out);
    let cfg = serde_json::json!({ "batch_size": a.batch_size });
    m.finish(&cfg, None, &super::manifest_path(cli, default_path(&a.out, false)))?;
    Ok(())
}

pub fn eval(cli: &Cli, a: &EvalArgs) -> CliResult<()> {
    let mut m = ManifestBuilder::new("eval", cli.threads);
    let mut s: EvalSettings = load_or_default(cli.config.as_deref())?;
    let o = &mut s.options;
    if let Some(v) = &a.cutoffs {
        o.cutoffs = v.clone();
    }
    if let Some(v) = a.error_bins {
        o.error_bins = v;
    }
    if let Some(v) = a.accurate_threshold {
        o.accurate_threshold = v;
    }
    if let Some(v) = &a.hc_cutoffs {
        o.hc_cutoffs = v.clone();
    }
    if let Some(v) = a.calibration_bins {
        o.calibration_bins = v;
    }

    let ck = load_model(&a.model, &mut m)?;
    let records = super::read_records(&a.data, &mut m)?;
    super::check_width(&ck.model, &records)?;
    let meta = &ck.meta;
    let probs = super::probabilities(&ck.model, &records, a.batch_size)?;
    let data = apply_boundary(records, meta.boundary, meta.percentile, meta.class_weights, meta.error_mode)?;
    let mut report = evaluate(&probs, &data.labels, &data.errors, Some(meta.boundary), &s.options)?;

    if let Some(path) = &a.ensemble {
        m.input(path)?;
        let ens = super::read_ensemble_csv(path)?;
        let (errors, labels) = align_to_ensemble(&ens, &data.records, &data.errors, &data.labels)?;
        report.ensemble = Some(ensemble_baseline(&ens, &errors, &labels)?);
    }

    print!("{}", report_table(&report));
    let manifest = match &a.out_dir {
        Some(dir) => {
            for p in emit_report(&report, dir)? {
                m.output(&p);
            }
            default_path(dir, true)
        }
        None => PathBuf::from("probe-eval.manifest.json"),
    };
    m.finish(&s, None, &super::manifest_path(cli, manifest))?;
    Ok(())
}

/// Errors and labels of the evaluated set, reordered to the ensemble's rows.
fn align_to_ensemble(
    ens: &EnsembleInput,
    records: &[MoleculeRecord],
    errors: &[f64],
    labels: &[u8],
) -> CliResult<(Vec<f64>, Vec<u8>)> {
    let index: std::collections::HashMap<u64, usize> =
        records.iter().enumerate().map(|(i, r)| (r.mol_id, i)).collect();
    if ens.len() != records.len() {
        return Err(ProbeError::Data(format!(
            "ensemble covers {} molecules, the data has {}",
            ens.len(),
            records.len()
        ))
        .into());
    }
    let mut e = Vec::with_capacity(ens.len());
    let mut y = Vec::with_capacity(ens.len());
    for id in &ens.mol_ids {
        let &i = index
            .get(id)
            .ok_or_else(|| ProbeError::Data(format!("ensemble molecule {id} is not in the data")))?;
        e.push(errors[i]);
        y.push(labels[i]);
    }
    Ok((e, y))
}

#[derive(Debug, Serialize)]
struct ImportanceRow {
    mol_id: u64,
    p_unreliable: f64,
    scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    atomic_numbers: Option<Vec<u8>>,
    top_k: Vec<usize>,
}

/// Indices of the `k` largest scores, ties broken by index; `k` is clamped
/// to the atom count.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn importance(cli: &Cli, a: &ImportanceArgs) -> CliResult<()> {
    let mut m = ManifestBuilder::new("importance", cli.threads);
    let ck = load_model(&a.model, &mut m)?;
    let records = super::read_records(&a.data, &mut m)?;
    super::check_width(&ck.model, &records)?;
    let mut rows = Vec::with_capacity(records.len());
    for chunk in records.chunks(256) {
        let refs: Vec<&MoleculeRecord> = chunk.iter().collect();
        let batch = Batch::from_records(&refs, None, None)?;
        let (scores, p) = atom_importance(&ck.model, &batch)?;
        for ((r, s), p) in chunk.iter().zip(scores).zip(p) {
            rows.push(ImportanceRow {
                mol_id: r.mol_id,
                p_unreliable: p,
                top_k: top_k(&s, a.top_k),
                scores: s,
                atomic_numbers: r.atomic_numbers.clone(),
            });
        }
    }
    let body = serde_json::to_string_pretty(&rows).map_err(|e| usage(e.to_string()))?;
    super::write_file(&a.out, &(body + "\n"))?;
    m.output(&a.out);
    let cfg = serde_json::json!({ "top_k": a.top_k });
    m.finish(&cfg, None, &super::manifest_path(cli, default_path(&a.out, false)))?;
    Ok(())
}

pub fn export(cli: &Cli, a: &ExportArgs) -> CliResult<()> {
    let mut m = ManifestBuilder::new("export-embeddings", cli.threads);
    let ck = load_model(&a.model, &mut m)?;
    let records = super::read_records(&a.data, &mut m)?;
    super::check_width(&ck.model, &records)?;
    let (format, name) = match a.format {
        EmbeddingFormat::Csv => (ExportFormat::Csv, "csv"),
        EmbeddingFormat::Binary => (ExportFormat::Binary, "binary"),
    };
    export_molecular_embeddings(&ck.model, &records, &a.out, format)?;
    m.output(&a.out);
    let cfg = serde_json::json!({ "format": name, "embedding_dim": ck.model.config.embedding_dim });
    m.finish(&cfg, None, &super::manifest_path(cli, default_path(&a.out, false)))?;
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::top_k;

    #[test]
    fn top_k_orders_and_clamps() {
        assert_eq!(top_k(&[0.2, 0.5, 0.3], 2), vec![1, 2]);
        assert_eq!(top_k(&[0.25, 0.25, 0.5], 10), vec![2, 0, 1]);
        assert_eq!(top_k(&[1.0], 3), vec![0]);
    }
}
