use std::path::Path;

use probe_core::dataset::{quantile_boundary, ErrorMode};
use probe_core::evaluation::{canonical_json, ensemble_baseline, majority_baseline, EnsembleBaseline, EnsembleInput};
use probe_core::ProbeError;
use serde::Serialize;

use crate::args::{Cli, EnsembleArgs};
use crate::manifest::{default_path, ManifestBuilder};
use crate::CliResult;

/// Columns `mol_id,n_atoms,e_ref,pred_0,…,pred_{K-1}`.
pub fn read_ensemble_csv(path: &Path) -> CliResult<EnsembleInput> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let fixed = ["mol_id", "n_atoms", "e_ref"];
    let k = headers.len().saturating_sub(3);
    let pred_ok = headers.iter().skip(3).enumerate().all(|(i, h)| h == format!("pred_{i}"));
    if headers.iter().take(3).ne(fixed.iter().copied()) || !pred_ok || k < 2 {
        return Err(ProbeError::Format {
            offset: 0,
            message: format!(
                "{}: expected header mol_id,n_atoms,e_ref,pred_0,…,pred_K-1 with K ≥ 2",
                path.display()
            ),
        }
        .into());
    }
    let mut input = EnsembleInput {
        mol_ids: Vec::new(),
        n_atoms: Vec::new(),
        e_ref: Vec::new(),
        members: vec![Vec::new(); k],
    };
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let offset = row.position().map_or(0, |p| p.byte());
        let bad = |col: &str| ProbeError::Format {
            offset,
            message: format!("{}: unparsable `{col}`", path.display()),
        };
        input.mol_ids.push(row[0].parse().map_err(|_| bad("mol_id"))?);
        input.n_atoms.push(row[1].parse().map_err(|_| bad("n_atoms"))?);
        input.e_ref.push(row[2].parse().map_err(|_| bad("e_ref"))?);
        for (j, member) in input.members.iter_mut().enumerate() {
            member.push(row[3 + j].parse().map_err(|_| bad(&format!("pred_{j}")))?);
        }
    }
    input.validate()?;
    Ok(input)
}

fn csv_error(path: &Path, e: csv::Error) -> crate::CliError {
    let offset = e.position().map_or(0, |p| p.byte());
    ProbeError::Format {
        offset,
        message: format!("{}: {e}", path.display()),
    }
    .into()
}

/// Member-0 (single-model) errors under `mode`.
pub fn single_model_errors(ens: &EnsembleInput, mode: ErrorMode) -> Vec<f64> {
    ens.members[0]
        .iter()
        .zip(&ens.e_ref)
        .zip(&ens.n_atoms)
        .map(|((p, r), &n)| {
            let e = (p - r).abs();
            match mode {
                ErrorMode::Raw => e,
                ErrorMode::PerAtom => e / n as f64,
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct BaselineReport {
    tool_version: String,
    n_molecules: usize,
    members: usize,
    boundary: f64,
    percentile: Option<f64>,
    error_mode: ErrorMode,
    majority_baseline: f64,
    baseline: EnsembleBaseline,
}

pub fn baseline(cli: &Cli, a: &EnsembleArgs) -> CliResult<()> {
    let mut m = ManifestBuilder::new("baseline-ensemble", cli.threads);
    m.input(&a.predictions)?;
    let mode = ErrorMode::parse(&a.error_mode)?;
    let ens = read_ensemble_csv(&a.predictions)?;
    let errors = single_model_errors(&ens, mode);
    let (boundary, percentile) = match a.boundary {
        Some(b) => (b, None),
        None => (quantile_boundary(&errors, a.percentile)?, Some(a.percentile)),
    };
    let labels: Vec<u8> = errors.iter().map(|&e| u8::from(e >= boundary)).collect();
    let report = BaselineReport {
        tool_version: probe_core::TOOL_VERSION.to_string(),
        n_molecules: ens.len(),
        members: ens.members.len(),
        boundary,
        percentile,
        error_mode: mode,
        majority_baseline: majority_baseline(&labels)?,
        baseline: ensemble_baseline(&ens, &errors, &labels)?,
    };
    super::write_file(&a.out, &(canonical_json(&report)? + "\n"))?;
    m.output(&a.out);
    let b = &report.baseline;
    match b.spearman_rho {
        Some(r) => println!("spearman rho {r:.6}"),
        None => println!("spearman rho undefined: {}", b.spearman_null_reason.as_deref().unwrap_or("")),
    }
    println!(
        "median-sigma classifier: accuracy {:.4}, mcc {:.4}, f1 {:.4}; majority baseline {:.4}",
        b.classifier.accuracy, b.classifier.mcc, b.classifier.f1, report.majority_baseline
    );
    let cfg = serde_json::json!({
        "boundary": a.boundary,
        "percentile": a.percentile,
        "error_mode": mode,
    });
    m.finish(&cfg, None, &super::manifest_path(cli, default_path(&a.out, false)))?;
    Ok(())
}
