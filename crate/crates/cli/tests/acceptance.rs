//! Acceptance suite: one check per criterion, one PASS/FAIL line each.
//! Runs on a single-threaded pool; exits non-zero if any check fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use probe_core::active_learning::{run_cycles, AlConfig, Strategy, HARD_CLUSTER};
use probe_core::dataset::{
    apply_boundary, assign_labels, class_weights, decode_container, encode_container, quantile_boundary,
    read_container, split_train_val, synth_generate, write_container, Batch, ErrorMode, LabeledDataset,
    MoleculeRecord, SynthSpec,
};
use probe_core::evaluation::{
    calibration, confusion_metrics, ensemble_baseline, selective_curve, spearman, EnsembleInput,
    SelectivePoint, DEFAULT_CUTOFFS,
};
use probe_core::model::{atom_importance, ProbeConfig, ProbeModel, ScalarStats};
use probe_core::nn::{SeededRng, Tensor};
use probe_core::training::{check_model_gradients, fit, Checkpoint, CheckpointMeta, TrainConfig};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn molecule(id: u64, n: usize, d: usize, rng: &mut SeededRng) -> MoleculeRecord {
    MoleculeRecord {
        mol_id: id,
        n_atoms: n,
        atomic_numbers: Some((0..n).map(|_| rng.int_inclusive(1, 18) as u8).collect()),
        embeddings: (0..n * d).map(|_| rng.normal() as f32).collect(),
        charges: Some((0..n).map(|_| rng.gaussian(0.0, 0.3) as f32).collect()),
        e_pred: -100.0 * n as f64 + rng.normal(),
        e_ref: Some(-100.0 * n as f64 + rng.normal()),
    }
}

fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gradient_correctness() -> Check {
    let t0 = Instant::now();
    let mut rng = SeededRng::new(21);
    let recs: Vec<MoleculeRecord> = [2usize, 5, 3]
        .iter()
        .enumerate()
        .map(|(i, &n)| molecule(i as u64, n, 8, &mut rng))
        .collect();
    let batch = ok(Batch::from_records(&recs.iter().collect::<Vec<_>>(), Some(&[0, 1, 1]), None))?;
    let mut cfg = ProbeConfig::tiny(8);
    ensure(cfg.heads == 2 && cfg.head_dim == 4, || format!("tiny config is H={} d_k={}", cfg.heads, cfg.head_dim))?;
    cfg.scalar_stats = ScalarStats {
        energy_mean: -330.0,
        energy_std: 120.0,
        atoms_mean: 3.3,
        atoms_std: 1.2,
    };
    let mut model = ok(ProbeModel::new(cfg, 4))?;
    let report = ok(check_model_gradients(&mut model, &batch, [0.8, 1.4], 1e-5))?;
    let secs = t0.elapsed().as_secs_f64();
    let worst = report.worst().ok_or("no parameters checked")?;
    let covered: usize = report.params.iter().map(|p| p.elements).sum();
    ensure(covered == model.num_parameters(), || {
        format!("checked {covered} of {} parameters", model.num_parameters())
    })?;
    ensure(worst.max_rel_err < 1e-4, || format!("{} has relative error {:.3e}", worst.name, worst.max_rel_err))?;
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{} tensors, worst {} at {:.2e}, {secs:.2}s",
        report.params.len(),
        worst.name,
        worst.max_rel_err
    ))
}

fn parameter_count() -> Check {
    let cfg = ProbeConfig::standard(256);
    ensure(cfg.use_charges, || "standard config must use charges".into())?;
    let n = ok(ProbeModel::new(cfg, 0))?.num_parameters();
    let rel = (n as f64 - 567_000.0).abs() / 567_000.0;
    ensure(n == 566_178, || format!("{n} parameters"))?;
    ensure(rel < 0.002, || format!("{:.3}% from 567K", rel * 100.0))?;
    Ok(format!("{n} parameters ({:.3}% from 567K)", rel * 100.0))
}

struct Synthetic {
    test: LabeledDataset,
    probs: Vec<[f64; 2]>,
    epochs: usize,
    secs: f64,
}

fn synthetic() -> &'static Result<Synthetic, String> {
    static CELL: OnceLock<Result<Synthetic, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let recs = ok(synth_generate(&SynthSpec::two_cluster(5000, 8), 11))?;
        let data = ok(assign_labels(recs, 50.0, ErrorMode::Raw))?;
        let (train, val) = ok(split_train_val(&data, 0.9, 3))?;
        let test_recs = ok(synth_generate(&SynthSpec::two_cluster(1000, 8), 12))?;
        let test = ok(apply_boundary(test_recs, data.boundary, 50.0, data.class_weights, ErrorMode::Raw))?;
        let cfg = TrainConfig {
            lr: 1e-3,
            min_lr: 1e-5,
            batch_size: 32,
            max_epochs: 50,
            seed: 5,
            ..TrainConfig::default()
        };
        let out = ok(fit(ok(ProbeModel::new(ProbeConfig::tiny(8), 1))?, &train, &val, &cfg))?;
        let p = ok(out.model.predict(&test.records, 256))?;
        Ok(Synthetic {
            probs: p.iter().map(|&u| [1.0 - u, u]).collect(),
            test,
            epochs: out.state.history.len(),
            secs: t0.elapsed().as_secs_f64(),
        })
    })
}

fn synthetic_end_to_end() -> Check {
    let s = synthetic().as_ref().map_err(Clone::clone)?;
    let spec = SynthSpec::two_cluster(5000, 8);
    let c = &spec.clusters;
    ensure(
        spec.atoms_min == 3 && spec.atoms_max == 20 && (c[0].error_mean, c[0].error_std, c[1].error_mean, c[1].error_std) == (0.5, 0.1, 5.0, 0.5),
        || "synthetic task differs from the stated distributions".into(),
    )?;
    let correct = s
        .probs
        .iter()
        .zip(&s.test.labels)
        .filter(|(p, &y)| u8::from(p[1] > p[0]) == y)
        .count();
    let acc = correct as f64 / s.test.len() as f64;
    ensure(s.epochs <= 50, || format!("{} epochs", s.epochs))?;
    ensure(acc >= 0.95, || format!("held-out accuracy {acc:.4}"))?;
    ensure(s.secs < 300.0, || format!("took {:.1}s", s.secs))?;
    Ok(format!("held-out accuracy {acc:.4} after {} epochs, {:.1}s", s.epochs, s.secs))
}

/// Violations of monotonicity in `dir` (+1 non-decreasing, −1 non-increasing)
/// over consecutive defined values. Each is `(cutoff, relative size)`.
fn inversions(points: &[SelectivePoint], get: fn(&SelectivePoint) -> Option<f64>, dir: f64) -> Vec<(f64, f64)> {
    let defined: Vec<(f64, f64)> = points.iter().filter_map(|p| get(p).map(|v| (p.cutoff, v))).collect();
    defined
        .windows(2)
        .filter_map(|w| {
            let (a, b) = (w[0].1, w[1].1);
            let step = (b - a) * dir;
            (step < 0.0).then(|| (w[1].0, -step / a.abs().max(f64::MIN_POSITIVE)))
        })
        .collect()
}

fn selective_shape() -> Check {
    let s = synthetic().as_ref().map_err(Clone::clone)?;
    let pts = ok(selective_curve(&s.probs, &s.test.labels, &s.test.errors, &DEFAULT_CUTOFFS))?;
    ensure(pts[0].coverage == 1.0, || format!("coverage(0.5) = {}", pts[0].coverage))?;
    ensure(pts.windows(2).all(|w| w[1].coverage <= w[0].coverage), || {
        format!("coverage not monotone: {:?}", pts.iter().map(|p| p.coverage).collect::<Vec<_>>())
    })?;
    let tolerable = |v: &[(f64, f64)]| v.is_empty() || (v.len() == 1 && v[0].1 <= 0.05);
    let rel = inversions(&pts, |p| p.mean_err_reliable, -1.0);
    let unrel = inversions(&pts, |p| p.mean_err_unreliable, 1.0);
    let defined = |get: fn(&SelectivePoint) -> Option<f64>| pts.iter().filter(|p| get(p).is_some()).count();
    let (n_rel, n_unrel) = (defined(|p| p.mean_err_reliable), defined(|p| p.mean_err_unreliable));
    ensure(n_rel >= 2 && n_unrel >= 2, || format!("too few defined points ({n_rel}, {n_unrel})"))?;
    ensure(tolerable(&rel), || format!("ē_rel inversions {rel:?}"))?;
    ensure(tolerable(&unrel), || format!("ē_unrel inversions {unrel:?}"))?;
    let last = pts.last().unwrap();
    Ok(format!(
        "coverage 1.000 → {:.3}; ē_rel {:.3} → {:.3}; ē_unrel {:.3} → {:.3}; inversions {} / {}",
        last.coverage,
        pts[0].mean_err_reliable.unwrap_or(f64::NAN),
        last.mean_err_reliable.unwrap_or(f64::NAN),
        pts[0].mean_err_unreliable.unwrap_or(f64::NAN),
        last.mean_err_unreliable.unwrap_or(f64::NAN),
        rel.len(),
        unrel.len()
    ))
}

mod oracle {
    pub fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
        let (ma, mb) = (mean(a), mean(b));
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in a.iter().zip(b) {
            cov += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
    }

    pub fn ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let below = v.iter().filter(|&&y| y < x).count() as f64;
                let tied = v.iter().filter(|&&y| y == x).count() as f64;
                below + (tied + 1.0) / 2.0
            })
            .collect()
    }

    /// Accuracy, MCC (φ coefficient, 0 when undefined) and F1 (0 without
    /// true positives) by direct counting.
    pub fn confusion(y: &[u8], p: &[u8]) -> (f64, f64, f64) {
        let n = y.len() as f64;
        let acc = y.iter().zip(p).filter(|(a, b)| a == b).count() as f64 / n;
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let pf: Vec<f64> = p.iter().map(|&v| f64::from(v)).collect();
        let mcc = pearson(&yf, &pf).unwrap_or(0.0);
        let tp = y.iter().zip(p).filter(|&(&a, &b)| a == 1 && b == 1).count() as f64;
        let pp = p.iter().filter(|&&v| v == 1).count() as f64;
        let ap = y.iter().filter(|&&v| v == 1).count() as f64;
        let f1 = if tp == 0.0 {
            0.0
        } else {
            let (pr, rc) = (tp / pp, tp / ap);
            2.0 * pr * rc / (pr + rc)
        };
        (acc, mcc, f1)
    }
}

fn metric_oracles() -> Check {
    const TOL: f64 = 1e-12;
    let close = |a: f64, b: f64| (a - b).abs() <= TOL;
    let same = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => close(a, b),
        (None, None) => true,
        _ => false,
    };
    let mut rng = SeededRng::new(2024);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let n = rng.int_inclusive(1, 50);
        let bias = rng.uniform();
        let coarse = rng.uniform() < 0.3;
        let mut y = Vec::new();
        let mut pred = Vec::new();
        let mut pu = Vec::new();
        let mut err = Vec::new();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            y.push(u8::from(rng.uniform() < bias));
            pred.push(u8::from(rng.uniform() < 0.5));
            pu.push(if rng.uniform() < 0.1 { 0.5 } else { rng.uniform() });
            err.push(rng.uniform_range(0.0, 10.0));
            let (a, b) = (rng.normal(), rng.normal());
            xs.push(if coarse { a.round() } else { a });
            ys.push(if coarse { b.round() } else { b });
        }
        let fail = |what: &str| format!("fixture {case}: {what} disagrees with oracle");

        let m = ok(confusion_metrics(&y, &pred))?;
        let (acc, mcc, f1) = oracle::confusion(&y, &pred);
        worst = worst.max((m.accuracy - acc).abs()).max((m.mcc - mcc).abs()).max((m.f1 - f1).abs());
        ensure(close(m.accuracy, acc), || fail("accuracy"))?;
        ensure(close(m.mcc, mcc), || fail("MCC"))?;
        ensure(close(m.f1, f1), || fail("F1"))?;

        let c = ok(calibration(&pu, &y, 10))?;
        let mut ece = 0.0;
        for k in 0..10 {
            let (lo, hi) = (k as f64 / 10.0, (k + 1) as f64 / 10.0);
            let idx: Vec<usize> = (0..n).filter(|&i| pu[i] >= lo && (pu[i] < hi || k == 9)).collect();
            if !idx.is_empty() {
                let conf = oracle::mean(&idx.iter().map(|&i| pu[i]).collect::<Vec<_>>());
                let freq = oracle::mean(&idx.iter().map(|&i| f64::from(y[i])).collect::<Vec<_>>());
                ece += idx.len() as f64 / n as f64 * (conf - freq).abs();
            }
        }
        let brier = oracle::mean(&pu.iter().zip(&y).map(|(p, &t)| (p - f64::from(t)).powi(2)).collect::<Vec<_>>());
        worst = worst.max((c.ece - ece).abs()).max((c.brier - brier).abs());
        ensure(close(c.ece, ece), || fail("ECE"))?;
        ensure(close(c.brier, brier), || fail("Brier"))?;

        let rho = ok(spearman(&xs, &ys))?.ok();
        let expect = if n < 2 { None } else { oracle::pearson(&oracle::ranks(&xs), &oracle::ranks(&ys)) };
        if let (Some(a), Some(b)) = (rho, expect) {
            worst = worst.max((a - b).abs());
        }
        ensure(same(rho, expect), || fail("Spearman"))?;

        let probs: Vec<[f64; 2]> = pu.iter().map(|&p| [1.0 - p, p]).collect();
        let pts = ok(selective_curve(&probs, &y, &err, &DEFAULT_CUTOFFS))?;
        for (pt, &cut) in pts.iter().zip(&DEFAULT_CUTOFFS) {
            let covered: Vec<usize> = (0..n).filter(|&i| probs[i][0].max(probs[i][1]) >= cut).collect();
            let yl: Vec<u8> = covered.iter().map(|&i| y[i]).collect();
            let pl: Vec<u8> = covered.iter().map(|&i| u8::from(probs[i][1] > probs[i][0])).collect();
            let errs_of = |cls: u8| -> Vec<f64> {
                covered.iter().zip(&pl).filter(|(_, &p)| p == cls).map(|(&i, _)| err[i]).collect()
            };
            let avg = |v: Vec<f64>| (!v.is_empty()).then(|| oracle::mean(&v));
            ensure(pt.n_covered == covered.len(), || fail("covered count"))?;
            ensure(close(pt.coverage, covered.len() as f64 / n as f64), || fail("coverage"))?;
            ensure(same(pt.mean_err_reliable, avg(errs_of(0))), || fail("ē_rel"))?;
            ensure(same(pt.mean_err_unreliable, avg(errs_of(1))), || fail("ē_unrel"))?;
            if covered.is_empty() {
                ensure(pt.accuracy.is_none() && pt.mcc.is_none() && pt.f1.is_none(), || fail("empty cutoff"))?;
            } else {
                let (a, m, f) = oracle::confusion(&yl, &pl);
                ensure(same(pt.accuracy, Some(a)) && same(pt.mcc, Some(m)) && same(pt.f1, Some(f)), || {
                    fail("selective metrics")
                })?;
            }
        }
    }
    Ok(format!("1000 fixtures, largest deviation {worst:.1e}"))
}

fn invariances() -> Check {
    const D: usize = 8;
    let mut cfg = ProbeConfig::tiny(D);
    cfg.scalar_stats = ScalarStats {
        energy_mean: -600.0,
        energy_std: 400.0,
        atoms_mean: 6.0,
        atoms_std: 3.0,
    };
    let model = ok(ProbeModel::new(cfg, 17))?;
    let mut rng = SeededRng::new(606);
    let (mut worst_pad, mut worst_perm, mut worst_sum) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..100 {
        let n = rng.int_inclusive(1, 14);
        let r = molecule(i, n, D, &mut rng);
        let tight = ok(Batch::from_records(&[&r], None, None))?;
        let loose = ok(Batch::from_records(&[&r], None, Some(n + rng.int_inclusive(1, 8))))?;
        let a = ok(model.forward(&tight, false))?;
        let b = ok(model.forward(&loose, false))?;
        worst_pad = worst_pad.max(max_diff(&a.probs, &b.probs)).max(max_diff(&a.embedding, &b.embedding));

        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let mut p = r.clone();
        for (dst, &src) in perm.iter().enumerate() {
            p.embeddings[dst * D..(dst + 1) * D].copy_from_slice(r.atom_embedding(src));
            p.charges.as_mut().unwrap()[dst] = r.charges.as_ref().unwrap()[src];
            p.atomic_numbers.as_mut().unwrap()[dst] = r.atomic_numbers.as_ref().unwrap()[src];
        }
        let c = ok(model.forward(&ok(Batch::from_records(&[&p], None, None))?, false))?;
        worst_perm = worst_perm.max(max_diff(&a.probs, &c.probs)).max(max_diff(&a.embedding, &c.embedding));

        let other = molecule(1000 + i, rng.int_inclusive(1, 14), D, &mut rng);
        let batch = ok(Batch::from_records(&[&other, &r], None, None))?;
        let (scores, _) = ok(atom_importance(&model, &batch))?;
        for s in &scores {
            ensure(s.iter().all(|&v| v >= 0.0), || format!("molecule {i}: negative importance"))?;
            worst_sum = worst_sum.max((s.iter().sum::<f64>() - 1.0).abs());
        }
    }
    ensure(worst_pad < 1e-9, || format!("padding changes outputs by {worst_pad:.2e}"))?;
    ensure(worst_perm < 1e-9, || format!("atom order changes outputs by {worst_perm:.2e}"))?;
    ensure(worst_sum < 1e-9, || format!("importance sums off by {worst_sum:.2e}"))?;
    Ok(format!(
        "100 molecules: padding {worst_pad:.1e}, permutation {worst_perm:.1e}, importance sum {worst_sum:.1e}"
    ))
}

fn label_machinery() -> Check {
    let mut rng = SeededRng::new(77);
    for n in [2usize, 3, 10, 11, 101, 1000, 1001] {
        let mut errs: Vec<f64> = (0..n).map(|i| i as f64 * 0.37 + 0.01).collect();
        rng.shuffle(&mut errs);
        let b = ok(quantile_boundary(&errs, 50.0))?;
        let labels: Vec<u8> = errs.iter().map(|&e| u8::from(e >= b)).collect();
        let ones = labels.iter().filter(|&&y| y == 1).count();
        let zeros = n - ones;
        ensure(ones.abs_diff(zeros) <= 1, || format!("n={n}: {zeros} vs {ones}"))?;
        let w = ok(class_weights(&labels))?;
        ensure((w[0] - 1.0).abs() <= 1e-12 || n % 2 == 1, || format!("n={n}: w0 = {}", w[0]))?;
        ensure((w[1] - 1.0).abs() <= 1e-12 || n % 2 == 1, || format!("n={n}: w1 = {}", w[1]))?;
        if n % 2 == 1 {
            let expect = [n as f64 / (2.0 * zeros as f64), n as f64 / (2.0 * ones as f64)];
            ensure(w == expect, || format!("n={n}: weights {w:?}"))?;
        }
    }
    let mut labels = vec![0u8; 60];
    labels.extend([1u8; 40]);
    let w = ok(class_weights(&labels))?;
    let expect = [100.0 / (2.0 * 60.0), 100.0 / (2.0 * 40.0)];
    ensure(w == expect && w[1] == 1.25 && (w[0] - 5.0 / 6.0).abs() < 1e-15, || format!("60/40 weights {w:?}"))?;
    Ok(format!("median split balanced on 7 sizes; 60/40 weights ({:.6}, {})", w[0], w[1]))
}

fn format_round_trips() -> Check {
    let dir = ok(tempfile::tempdir())?;
    let recs = ok(synth_generate(&SynthSpec::two_cluster(300, 16), 9))?;
    let bytes = ok(encode_container(&recs))?;
    let (_, back) = ok(decode_container(&bytes))?;
    ensure(back == recs, || "decoded records differ".into())?;
    ensure(ok(encode_container(&back))? == bytes, || "re-encoded container differs".into())?;
    let pec = dir.path().join("r.pec");
    ok(write_container(&recs, &pec))?;
    ensure(ok(std::fs::read(&pec))? == bytes, || "written container differs".into())?;
    ensure(ok(read_container(&pec))? == recs, || "read container differs".into())?;

    let mut model = ok(ProbeModel::new(ProbeConfig::tiny(16), 3))?;
    model.set_scalar_stats(ScalarStats::from_records(&recs));
    let ck = Checkpoint {
        model,
        meta: CheckpointMeta {
            boundary: 1.25,
            epochs_run: 7,
            best_epoch: Some(4),
            best_val_loss: Some(0.123),
            ..CheckpointMeta::default()
        },
    };
    let cbytes = ck.to_bytes();
    let path = dir.path().join("m.prbc");
    ok(ck.save(&path))?;
    let loaded = ok(Checkpoint::load(&path))?;
    ensure(loaded.to_bytes() == cbytes, || "checkpoint re-serialization differs".into())?;
    ensure(ok(std::fs::read(&path))? == cbytes, || "saved checkpoint differs".into())?;
    ensure(loaded.meta == ck.meta, || "metadata differs".into())?;
    let batch = ok(Batch::from_records(&recs.iter().take(64).collect::<Vec<_>>(), None, None))?;
    let a = ok(ck.model.forward(&batch, true))?;
    let b = ok(loaded.model.forward(&batch, true))?;
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(bits(&a.probs) == bits(&b.probs) && bits(&a.embedding) == bits(&b.embedding), || {
        "loaded model outputs differ".into()
    })?;
    Ok(format!("PEC {} B and checkpoint {} B byte-identical; forward bit-equal", bytes.len(), cbytes.len()))
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = ok(Command::new(env!("CARGO_BIN_EXE_probe")).args(args).current_dir(cwd).output())?;
    ensure(out.status.success(), || {
        format!("`probe {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn determinism() -> Check {
    let dir = ok(tempfile::tempdir())?;
    let cwd = dir.path();
    run_cli(&["dataset", "gen-synthetic", "--count", "800", "--embed-dim", "8", "--seed", "4", "--out", "d.pec"], cwd)?;
    let train = ["--threads", "1", "train", "--data", "d.pec", "--preset", "tiny", "--lr", "1e-3", "--batch-size", "32", "--max-epochs", "8", "--seed", "9"];
    run_cli(&[&train[..], &["--out", "a.prbc"]].concat(), cwd)?;
    run_cli(&[&train[..], &["--out", "b.prbc"]].concat(), cwd)?;
    run_cli(&["--threads", "1", "--config", "a.manifest.json", "train", "--data", "d.pec", "--out", "c.prbc"], cwd)?;
    let read = |p: &str| ok(std::fs::read(cwd.join(p)));
    let (ha, ca) = (read("a.history.csv")?, read("a.prbc")?);
    for run in ["b", "c"] {
        ensure(read(&format!("{run}.history.csv"))? == ha, || format!("loss history of run {run} differs"))?;
        ensure(read(&format!("{run}.prbc"))? == ca, || format!("checkpoint of run {run} differs"))?;
    }
    let epochs = String::from_utf8_lossy(&ha).lines().count() - 1;
    ensure(epochs == 8, || format!("history has {epochs} epochs"))?;
    Ok(format!("3 runs (2 by flags, 1 replayed from manifest): identical {epochs}-epoch histories and {} B checkpoints", ca.len()))
}

fn active_learning() -> Check {
    let t0 = Instant::now();
    let cfg = AlConfig::default();
    ensure(cfg.seeds.len() == 3 && cfg.cycles == 2, || "default plan is not 3 seeds × 2 cycles".into())?;
    let (mut probe_delta, mut random_delta) = (0.0, 0.0);
    let mut fracs = Vec::new();
    let mut base = 0.0;
    for &seed in &cfg.seeds {
        let probe = ok(run_cycles(&cfg, Strategy::Probe, seed))?;
        let random = ok(run_cycles(&cfg, Strategy::Random, seed))?;
        let first = &probe[0];
        let hard = first.cluster_counts.get(&HARD_CLUSTER).copied().unwrap_or(0);
        let frac = hard as f64 / first.acquired.len() as f64;
        ensure(frac >= 2.0 * first.pool_hard_fraction, || {
            format!("seed {seed}: hard share {frac:.3} vs base {:.3}", first.pool_hard_fraction)
        })?;
        fracs.push(format!("{frac:.2}"));
        base = first.pool_hard_fraction;
        probe_delta += probe.last().unwrap().delta;
        random_delta += random.last().unwrap().delta;
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(probe_delta <= random_delta, || format!("ΔRMSE probe {probe_delta:.4} > random {random_delta:.4}"))?;
    ensure(secs < 600.0, || format!("took {secs:.0}s"))?;
    Ok(format!(
        "hard share [{}] vs base {base:.3}; ΔRMSE probe {probe_delta:.3} ≤ random {random_delta:.3}; {secs:.1}s",
        fracs.join(", ")
    ))
}

/// Two members at `±s·√N/√2` around the reference: scaled σ equals `s`.
fn ensemble_fixture(sigmas: &[f64], rng: &mut SeededRng) -> EnsembleInput {
    let n_atoms: Vec<usize> = sigmas.iter().map(|_| rng.int_inclusive(1, 30)).collect();
    let e_ref: Vec<f64> = sigmas.iter().map(|_| rng.gaussian(-1000.0, 50.0)).collect();
    let half: Vec<f64> = sigmas.iter().zip(&n_atoms).map(|(s, &n)| s * (n as f64 / 2.0).sqrt()).collect();
    EnsembleInput {
        mol_ids: (0..sigmas.len() as u64).collect(),
        members: vec![
            e_ref.iter().zip(&half).map(|(e, h)| e + h).collect(),
            e_ref.iter().zip(&half).map(|(e, h)| e - h).collect(),
        ],
        n_atoms,
        e_ref,
    }
}

fn ensemble_baseline_check() -> Check {
    let mut rng = SeededRng::new(808);
    let median_labels = |err: &[f64]| -> Result<Vec<u8>, String> {
        let b = ok(quantile_boundary(err, 50.0))?;
        Ok(err.iter().map(|&e| u8::from(e >= b)).collect())
    };

    let err: Vec<f64> = (0..1000).map(|_| rng.uniform_range(0.0, 5.0)).collect();
    let sig: Vec<f64> = err.iter().map(|e| 0.05 + e.powi(3)).collect();
    let ens = ensemble_fixture(&sig, &mut rng);
    let mono = ok(ensemble_baseline(&ens, &err, &median_labels(&err)?))?;
    let rho_mono = mono.spearman_rho.ok_or("ρ undefined on monotone fixture")?;
    ensure((rho_mono - 1.0).abs() <= 1e-12, || format!("monotone ρ = {rho_mono}"))?;

    let err: Vec<f64> = (0..10_000).map(|_| rng.normal().abs()).collect();
    let sig: Vec<f64> = (0..10_000).map(|_| rng.uniform_range(0.01, 1.0)).collect();
    let ens = ensemble_fixture(&sig, &mut rng);
    let indep = ok(ensemble_baseline(&ens, &err, &median_labels(&err)?))?;
    let rho_ind = indep.spearman_rho.ok_or("ρ undefined on independent fixture")?;
    ensure(rho_ind.abs() < 0.1, || format!("independent ρ = {rho_ind}"))?;

    let err: Vec<f64> = (0..257).map(|_| rng.uniform_range(0.0, 2.0)).collect();
    let sig: Vec<f64> = err.iter().map(|e| (e + rng.gaussian(0.0, 0.5)).abs()).collect();
    let ens = ensemble_fixture(&sig, &mut rng);
    let labels = median_labels(&err)?;
    let b = ok(ensemble_baseline(&ens, &err, &labels))?;
    let mut sorted = b.scaled_sigma.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    ensure(b.sigma_threshold == median, || format!("threshold {} vs median {median}", b.sigma_threshold))?;
    let pred: Vec<u8> = b.scaled_sigma.iter().map(|&s| u8::from(s >= median)).collect();
    let (acc, mcc, f1) = oracle::confusion(&labels, &pred);
    let c = &b.classifier;
    ensure(
        (c.accuracy - acc).abs() <= 1e-12 && (c.mcc - mcc).abs() <= 1e-12 && (c.f1 - f1).abs() <= 1e-12,
        || format!("classifier {c:?} vs oracle ({acc}, {mcc}, {f1})"),
    )?;
    Ok(format!(
        "monotone ρ = {rho_mono:.12}; independent |ρ| = {:.4} over 10000; median classifier acc {:.3} mcc {:.3} matches",
        rho_ind.abs(),
        c.accuracy,
        c.mcc
    ))
}

fn main() {
    let checks: [(u8, &str, fn() -> Check); 11] = [
        (1, "gradient correctness", gradient_correctness),
        (2, "parameter count", parameter_count),
        (3, "synthetic end-to-end", synthetic_end_to_end),
        (4, "selective-prediction shape", selective_shape),
        (5, "metric oracles", metric_oracles),
        (6, "invariances", invariances),
        (7, "label machinery", label_machinery),
        (8, "format round-trips", format_round_trips),
        (9, "determinism", determinism),
        (10, "active-learning harness", active_learning),
        (11, "ensemble baseline", ensemble_baseline_check),
    ];
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool");
    let t0 = Instant::now();
    let mut failed = 0;
    pool.install(|| {
        for (id, name, check) in checks {
            let start = Instant::now();
            let result = panic::catch_unwind(AssertUnwindSafe(check))
                .unwrap_or_else(|e| Err(format!("panicked: {:?}", e.downcast_ref::<String>().map(String::as_str).or(e.downcast_ref::<&str>().copied()))));
            let dt = fmt_secs(start.elapsed());
            match result {
                Ok(detail) => println!("PASS  {id:>2}. {name}: {detail} [{dt}]"),
                Err(why) => {
                    failed += 1;
                    println!("FAIL  {id:>2}. {name}: {why} [{dt}]");
                }
            }
        }
    });
    println!(
        "acceptance: {} passed, {failed} failed in {}",
        checks.len() - failed,
        fmt_secs(t0.elapsed())
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn fmt_secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}
