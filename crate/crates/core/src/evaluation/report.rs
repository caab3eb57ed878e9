use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};
use crate::evaluation::calibration::{calibration, Calibration};
use crate::evaluation::ensemble::EnsembleBaseline;
use crate::evaluation::metrics::{argmax_class, confusion_metrics, majority_baseline, ConfusionMetrics};
use crate::evaluation::selective::{error_binned_accuracy, selective_curve, ErrorBinning, SelectivePoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub cutoffs: Vec<f64>,
    pub error_bins: usize,
    pub accurate_threshold: f64,
    pub hc_cutoffs: Vec<f64>,
    pub calibration_bins: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            cutoffs: crate::evaluation::selective::DEFAULT_CUTOFFS.to_vec(),
            error_bins: 50,
            accurate_threshold: 0.7,
            hc_cutoffs: vec![0.8, 0.9],
            calibration_bins: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub tool_version: String,
    pub n_molecules: usize,
    pub boundary: Option<f64>,
    pub confusion: ConfusionMetrics,
    pub majority_baseline: f64,
    pub selective: Vec<SelectivePoint>,
    pub error_binned: ErrorBinning,
    pub calibration: Calibration,
    pub ensemble: Option<EnsembleBaseline>,
}

/// All metrics for one labelled prediction set.
pub fn evaluate(
    probs: &[[f64; 2]],
    labels: &[u8],
    errors: &[f64],
    boundary: Option<f64>,
    opts: &EvalOptions,
) -> Result<EvaluationReport> {
    let predicted: Vec<u8> = probs.iter().map(|&p| argmax_class(p)).collect();
    let p_unrel: Vec<f64> = probs.iter().map(|p| p[1].clamp(0.0, 1.0)).collect();
    Ok(EvaluationReport {
        tool_version: crate::TOOL_VERSION.to_string(),
        n_molecules: probs.len(),
        boundary,
        confusion: confusion_metrics(labels, &predicted)?,
        majority_baseline: majority_baseline(labels)?,
        selective: selective_curve(probs, labels, errors, &opts.cutoffs)?,
        error_binned: error_binned_accuracy(
            probs,
            labels,
            errors,
            opts.error_bins,
            opts.accurate_threshold,
            &opts.hc_cutoffs,
        )?,
        calibration: calibration(&p_unrel, labels, opts.calibration_bins)?,
        ensemble: None,
    })
}

/// JSON with object keys in sorted order.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| ProbeError::Data(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| ProbeError::Data(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn pct(v: Option<f64>) -> String {
    v.map_or("N/A".into(), |x| format!("{:.1}%", 100.0 * x))
}

fn fixed(v: Option<f64>, digits: usize) -> String {
    v.map_or("N/A".into(), |x| format!("{x:.digits$}"))
}

pub fn cutoff_label(c: f64) -> String {
    if c == 0.5 {
        "All (P ≥ 0.5)".into()
    } else {
        format!("P ≥ {c}")
    }
}

pub fn selective_row(p: &SelectivePoint) -> String {
    [
        cutoff_label(p.cutoff),
        pct(Some(p.coverage)),
        pct(p.accuracy),
        fixed(p.mcc, 3),
        fixed(p.f1, 3),
        fixed(p.mean_err_reliable, 2),
        fixed(p.mean_err_unreliable, 2),
    ]
    .join(" | ")
}

pub const TABLE_HEADER: &str = "Cutoff | Coverage | Acc. | MCC | F1 | ē_rel | ē_unrel";

pub fn report_table(r: &EvaluationReport) -> String {
    let mut s = String::new();
    writeln!(s, "{TABLE_HEADER}").unwrap();
    for p in &r.selective {
        writeln!(s, "{}", selective_row(p)).unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "molecules: {}", r.n_molecules).unwrap();
    if let Some(b) = r.boundary {
        writeln!(s, "boundary: {b:.4}").unwrap();
    }
    writeln!(s, "majority-class accuracy: {}", pct(Some(r.majority_baseline))).unwrap();
    writeln!(s, "ECE: {:.3}  Brier: {:.3}", r.calibration.ece, r.calibration.brier).unwrap();
    let buffers = r.error_binned.bins.iter().filter(|b| b.buffer).count();
    writeln!(s, "buffer bins: {buffers} of {}", r.error_binned.bins.len()).unwrap();
    if let Some(e) = &r.ensemble {
        writeln!(s, "ensemble scaled-σ Spearman: {}", fixed(e.spearman_rho, 3)).unwrap();
        writeln!(
            s,
            "ensemble median classifier: acc {} MCC {:.3} F1 {:.3}",
            pct(Some(e.classifier.accuracy)),
            e.classifier.mcc,
            e.classifier.f1
        )
        .unwrap();
    }
    s
}

fn opt_csv(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_files(r: &EvaluationReport) -> Vec<(&'static str, String)> {
    let mut sel = String::from("cutoff,coverage,n_covered,accuracy,mcc,f1,mean_err_reliable,mean_err_unreliable\n");
    for p in &r.selective {
        writeln!(
            sel,
            "{},{},{},{},{},{},{},{}",
            p.cutoff,
            p.coverage,
            p.n_covered,
            opt_csv(p.accuracy),
            opt_csv(p.mcc),
            opt_csv(p.f1),
            opt_csv(p.mean_err_reliable),
            opt_csv(p.mean_err_unreliable)
        )
        .unwrap();
    }
    let mut bins = String::from("err_lo,err_hi,count,accuracy,buffer");
    for c in &r.error_binned.hc_cutoffs {
        write!(bins, ",hc_accuracy_{c},hc_count_{c}").unwrap();
    }
    bins.push('\n');
    for b in &r.error_binned.bins {
        write!(bins, "{},{},{},{},{}", b.err_lo, b.err_hi, b.count, b.accuracy, b.buffer).unwrap();
        for (a, n) in b.hc_accuracy.iter().zip(&b.hc_count) {
            write!(bins, ",{},{n}", opt_csv(*a)).unwrap();
        }
        bins.push('\n');
    }
    let mut cal = String::from("lo,hi,count,mean_prob,frac_unreliable\n");
    for b in &r.calibration.bins {
        writeln!(cal, "{},{},{},{},{}", b.lo, b.hi, b.count, opt_csv(b.mean_prob), opt_csv(b.frac_unreliable)).unwrap();
    }
    vec![("selective.csv", sel), ("error_bins.csv", bins), ("calibration.csv", cal)]
}

/// Write `report.json`, `report.txt` and plot-data CSVs into `dir`.
pub fn emit_report(r: &EvaluationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| ProbeError::io(dir, e))?;
    let mut files = vec![
        ("report.json", canonical_json(r)?),
        ("report.txt", report_table(r)),
    ];
    files.extend(csv_files(r));
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| ProbeError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(cutoffs: Vec<f64>) -> EvaluationReport {
        let probs = [[0.95, 0.05], [0.2, 0.8], [0.4, 0.6], [0.7, 0.3], [0.01, 0.99]];
        let labels = [0, 1, 0, 0, 1];
        let errors = [0.3, 4.0, 1.2, 0.8, 9.5];
        let opts = EvalOptions {
            cutoffs,
            ..EvalOptions::default()
        };
        evaluate(&probs, &labels, &errors, Some(1.0), &opts).unwrap()
    }

    #[test]
    fn json_round_trips_identically() {
        let r = sample(crate::evaluation::selective::DEFAULT_CUTOFFS.to_vec());
        let s = canonical_json(&r).unwrap();
        let back: EvaluationReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert_eq!(canonical_json(&back).unwrap(), s);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn empty_cutoffs_still_valid() {
        let r = sample(vec![]);
        let s = canonical_json(&r).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["selective"], serde_json::json!([]));
    }

    #[test]
    fn table_row_layout() {
        let p = SelectivePoint {
            cutoff: 0.9,
            coverage: 0.239,
            n_covered: 239,
            accuracy: Some(0.932),
            mcc: Some(0.849),
            f1: Some(0.898),
            mean_err_reliable: Some(0.71),
            mean_err_unreliable: Some(10.22),
            notes: vec![],
        };
        assert_eq!(selective_row(&p), "P ≥ 0.9 | 23.9% | 93.2% | 0.849 | 0.898 | 0.71 | 10.22");
        let table = report_table(&sample(vec![0.5, 0.99]));
        let mut lines = table.lines();
        assert_eq!(lines.next().unwrap(), TABLE_HEADER);
        assert!(lines.next().unwrap().starts_with("All (P ≥ 0.5) | 100.0% |"));
        assert!(lines.next().unwrap().contains("N/A"));
    }

    #[test]
    fn writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&sample(vec![0.5, 0.9]), dir.path()).unwrap();
        assert_eq!(files.len(), 5);
        let sel = std::fs::read_to_string(dir.path().join("selective.csv")).unwrap();
        assert_eq!(sel.lines().count(), 3);
    }
}
