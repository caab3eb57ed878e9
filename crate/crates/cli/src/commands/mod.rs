//! One function per subcommand.

mod al;
mod dataset;
mod ensemble;
mod predict;
mod train;

use std::path::{Path, PathBuf};

use probe_core::dataset::{read_container, Batch, MoleculeRecord};
use probe_core::model::ProbeModel;
use probe_core::ProbeError;

use crate::args::{Cli, Command, DatasetCommand};
use crate::manifest::ManifestBuilder;
use crate::CliResult;

pub use ensemble::read_ensemble_csv;

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Dataset(DatasetCommand::GenSynthetic(a)) => dataset::gen_synthetic(cli, a),
        Command::Dataset(DatasetCommand::Inspect(a)) => dataset::inspect(cli, a),
        Command::Train(a) => train::train(cli, a),
        Command::Infer(a) => predict::infer(cli, a),
        Command::Eval(a) => predict::eval(cli, a),
        Command::Importance(a) => predict::importance(cli, a),
        Command::ExportEmbeddings(a) => predict::export(cli, a),
        Command::BaselineEnsemble(a) => ensemble::baseline(cli, a),
        Command::AlSim(a) => al::al_sim(cli, a),
    }
}

/// Explicit `--manifest`, else the command's default location.
fn manifest_path(cli: &Cli, default: PathBuf) -> PathBuf {
    cli.manifest.clone().unwrap_or(default)
}

fn read_records(path: &Path, m: &mut ManifestBuilder) -> CliResult<Vec<MoleculeRecord>> {
    m.input(path)?;
    let recs = read_container(path)?;
    if recs.is_empty() {
        return Err(ProbeError::EmptyInput(format!("{} holds no molecules", path.display())).into());
    }
    Ok(recs)
}

fn check_width(model: &ProbeModel, records: &[MoleculeRecord]) -> CliResult<()> {
    let d = model.config.input_dim;
    if let Some(r) = records.iter().find(|r| r.embed_dim() != d) {
        return Err(ProbeError::Data(format!(
            "model expects embeddings of width {d}, molecule {} has width {}",
            r.mol_id,
            r.embed_dim()
        ))
        .into());
    }
    Ok(())
}

/// `[P(reliable), P(unreliable)]` per record, in input order.
fn probabilities(model: &ProbeModel, records: &[MoleculeRecord], batch_size: usize) -> CliResult<Vec<[f64; 2]>> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(batch_size.max(1)) {
        let refs: Vec<&MoleculeRecord> = chunk.iter().collect();
        let batch = Batch::from_records(&refs, None, None)?;
        let fwd = model.forward(&batch, false)?;
        out.extend(fwd.probs.data().chunks(2).map(|r| [r[0], r[1]]));
    }
    Ok(out)
}

fn write_file(path: &Path, body: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| io(path, e).into())
}

fn io(path: &Path, e: std::io::Error) -> ProbeError {
    ProbeError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}
