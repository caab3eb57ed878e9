//! Molecular-embedding export for external projection tools.
//!
//! CSV: header `mol_id,e0,…,e{E-1},p_unreliable`, one row per molecule.
//! Binary: per molecule `mol_id u64 LE` followed by `E + 1` binary32 LE
//! values (the embedding then `P(unreliable)`), no header. Both carry
//! binary32-rounded values so they decode identically.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dataset::{Batch, MoleculeRecord};
use crate::error::{ProbeError, Result};
use crate::model::network::ProbeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportedEmbedding {
    pub mol_id: u64,
    pub embedding: Vec<f32>,
    pub p_unreliable: f32,
}

pub const EXPORT_BATCH: usize = 256;

pub fn embed_records(model: &ProbeModel, records: &[MoleculeRecord]) -> Result<Vec<ExportedEmbedding>> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(EXPORT_BATCH) {
        let refs: Vec<&MoleculeRecord> = chunk.iter().collect();
        let batch = Batch::from_records(&refs, None, None)?;
        let fwd = model.forward(&batch, false)?;
        let p = fwd.p_unreliable();
        for (i, r) in chunk.iter().enumerate() {
            out.push(ExportedEmbedding {
                mol_id: r.mol_id,
                embedding: fwd.embedding.row(i).iter().map(|&v| v as f32).collect(),
                p_unreliable: p[i] as f32,
            });
        }
    }
    Ok(out)
}

pub fn export_molecular_embeddings(
    model: &ProbeModel,
    records: &[MoleculeRecord],
    path: &Path,
    format: ExportFormat,
) -> Result<()> {
    let rows = embed_records(model, records)?;
    let io = |e| ProbeError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    match format {
        ExportFormat::Csv => {
            let dim = model.config.embedding_dim;
            let mut header = String::from("mol_id");
            for k in 0..dim {
                header.push_str(&format!(",e{k}"));
            }
            header.push_str(",p_unreliable");
            writeln!(w, "{header}").map_err(io)?;
            for r in &rows {
                let mut line = r.mol_id.to_string();
                for v in &r.embedding {
                    line.push(',');
                    line.push_str(&v.to_string());
                }
                line.push(',');
                line.push_str(&r.p_unreliable.to_string());
                writeln!(w, "{line}").map_err(io)?;
            }
        }
        ExportFormat::Binary => {
            for r in &rows {
                w.write_all(&r.mol_id.to_le_bytes()).map_err(io)?;
                for v in r.embedding.iter().chain(std::iter::once(&r.p_unreliable)) {
                    w.write_all(&v.to_le_bytes()).map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(io)
}

pub fn read_embeddings_csv(path: &Path) -> Result<Vec<ExportedEmbedding>> {
    let f = File::open(path).map_err(|e| ProbeError::io(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| ProbeError::io(path, e))?;
        let len = line.len() as u64 + 1;
        if i > 0 && !line.is_empty() {
            let bad = || ProbeError::format(offset, "malformed embedding row");
            let mut fields = line.split(',');
            let mol_id = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let mut vals: Vec<f32> = fields.map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?;
            let p = vals.pop().ok_or_else(bad)?;
            out.push(ExportedEmbedding {
                mol_id,
                embedding: vals,
                p_unreliable: p,
            });
        }
        offset += len;
    }
    Ok(out)
}

pub fn read_embeddings_binary(path: &Path, embedding_dim: usize) -> Result<Vec<ExportedEmbedding>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| ProbeError::io(path, e))?;
    let rec = 8 + 4 * (embedding_dim + 1);
    if buf.len() % rec != 0 {
        return Err(ProbeError::format(
            (buf.len() / rec * rec) as u64,
            format!("file length {} is not a multiple of the {rec}-byte record", buf.len()),
        ));
    }
    Ok(buf
        .chunks_exact(rec)
        .map(|c| {
            let mol_id = u64::from_le_bytes(c[..8].try_into().unwrap());
            let mut vals: Vec<f32> = c[8..]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let p = vals.pop().unwrap();
            ExportedEmbedding {
                mol_id,
                embedding: vals,
                p_unreliable: p,
            }
        })
        .collect())
}
