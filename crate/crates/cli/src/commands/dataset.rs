use std::fmt::Write as _;

use probe_core::dataset::{read_container_with_header, synth_generate, write_container};
use serde::Serialize;

use crate::args::{Cli, GenArgs, InspectArgs};
use crate::manifest::{default_path, ManifestBuilder};
use crate::settings::{load_or_default, GenSettings};
use crate::{usage, CliResult};

pub fn gen_synthetic(cli: &Cli, a: &GenArgs) -> CliResult<()> {
    let mut m = ManifestBuilder::new("dataset gen-synthetic", cli.threads);
    if let Some(c) = &cli.config {
        m.input(c)?;
    }
    let mut s: GenSettings = load_or_default(cli.config.as_deref())?;
    if let Some(n) = a.count {
        s.spec.count = n;
    }
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    if let Some(d) = a.embed_dim {
        resize_means(&mut s, d);
    }
    let recs = synth_generate(&s.spec, s.seed)?;
    write_container(&recs, &a.out)?;
    m.output(&a.out);
    m.finish(&s, Some(s.seed), &super::manifest_path(cli, default_path(&a.out, false)))?;
    eprintln!("wrote {} molecules of width {} to {}", recs.len(), s.spec.embed_dim, a.out.display());
    Ok(())
}

/// Changing the width truncates each cluster mean or pads it with its last
/// value, so the default constant-mean clusters stay constant.
fn resize_means(s: &mut GenSettings, d: usize) {
    s.spec.embed_dim = d;
    for c in &mut s.spec.clusters {
        let fill = c.embed_mean.last().copied().unwrap_or(0.0);
        c.embed_mean.resize(d, fill);
    }
}

#[derive(Debug, Serialize)]
struct Summary {
    path: String,
    version: u16,
    flags: u16,
    has_charges: bool,
    has_ref_energy: bool,
    has_atomic_numbers: bool,
    embed_dim: u32,
    record_count: u64,
    atoms_total: usize,
    atoms_min: usize,
    atoms_max: usize,
    atoms_mean: f64,
    e_pred_min: f64,
    e_pred_max: f64,
    abs_error_mean: Option<f64>,
    abs_error_max: Option<f64>,
}

pub fn inspect(cli: &Cli, a: &InspectArgs) -> CliResult<()> {
    let (h, recs) = read_container_with_header(&a.path)?;
    let atoms: Vec<usize> = recs.iter().map(|r| r.n_atoms).collect();
    let total: usize = atoms.iter().sum();
    let errors: Vec<f64> = recs.iter().filter_map(|r| r.abs_error().ok()).collect();
    let have_errors = !errors.is_empty() && errors.len() == recs.len();
    let s = Summary {
        path: a.path.display().to_string(),
        version: h.version,
        flags: h.flags,
        has_charges: h.has_charges(),
        has_ref_energy: h.has_ref_energy(),
        has_atomic_numbers: h.has_atomic_numbers(),
        embed_dim: h.embed_dim,
        record_count: h.record_count,
        atoms_total: total,
        atoms_min: atoms.iter().copied().min().unwrap_or(0),
        atoms_max: atoms.iter().copied().max().unwrap_or(0),
        atoms_mean: if recs.is_empty() { 0.0 } else { total as f64 / recs.len() as f64 },
        e_pred_min: recs.iter().map(|r| r.e_pred).fold(f64::INFINITY, f64::min),
        e_pred_max: recs.iter().map(|r| r.e_pred).fold(f64::NEG_INFINITY, f64::max),
        abs_error_mean: have_errors.then(|| errors.iter().sum::<f64>() / errors.len() as f64),
        abs_error_max: have_errors.then(|| errors.iter().copied().fold(0.0, f64::max)),
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&s).map_err(|e| usage(e.to_string()))?);
    } else {
        print!("{}", render(&s));
    }
    if let Some(p) = &cli.manifest {
        let mut m = ManifestBuilder::new("dataset inspect", cli.threads);
        m.input(&a.path)?;
        m.finish(&serde_json::json!({ "json": a.json }), None, p)?;
    }
    Ok(())
}

fn render(s: &Summary) -> String {
    let mut o = String::new();
    let yn = |b: bool| if b { "yes" } else { "no" };
    let _ = writeln!(o, "file            {}", s.path);
    let _ = writeln!(o, "version         {}", s.version);
    let _ = writeln!(o, "flags           0x{:04x}", s.flags);
    let _ = writeln!(o, "  charges       {}", yn(s.has_charges));
    let _ = writeln!(o, "  ref energy    {}", yn(s.has_ref_energy));
    let _ = writeln!(o, "  atomic nums   {}", yn(s.has_atomic_numbers));
    let _ = writeln!(o, "embed dim       {}", s.embed_dim);
    let _ = writeln!(o, "molecules       {}", s.record_count);
    let _ = writeln!(
        o,
        "atoms           {} total, {}..={} per molecule, mean {:.2}",
        s.atoms_total, s.atoms_min, s.atoms_max, s.atoms_mean
    );
    if s.record_count > 0 {
        let _ = writeln!(o, "e_pred range    {:.4} .. {:.4}", s.e_pred_min, s.e_pred_max);
    }
    if let (Some(mean), Some(max)) = (s.abs_error_mean, s.abs_error_max) {
        let _ = writeln!(o, "|error|         mean {mean:.4}, max {max:.4}");
    }
    o
}
