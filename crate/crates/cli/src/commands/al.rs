use std::collections::BTreeMap;
use std::fmt::Write as _;

use probe_core::active_learning::{run_experiment, write_logs, CycleResult, Strategy, HARD_CLUSTER};

use crate::args::{AlArgs, Cli};
use crate::manifest::{default_path, ManifestBuilder};
use crate::settings::{load_or_default, AlSettings};
use crate::CliResult;

pub fn al_sim(cli: &Cli, a: &AlArgs) -> CliResult<()> {
    let mut m = ManifestBuilder::new("al-sim", cli.threads);
    if let Some(c) = &cli.config {
        m.input(c)?;
    }
    let mut s: AlSettings = load_or_default(cli.config.as_deref())?;
    if let Some(v) = &a.seeds {
        s.seeds = v.clone();
    }
    if let Some(v) = &a.strategies {
        s.strategies = v.iter().map(|x| x.parse()).collect::<Result<Vec<Strategy>, _>>()?;
    }
    if let Some(v) = a.cycles {
        s.cycles = v;
    }
    if let Some(v) = a.pool_size {
        s.pool_size = v;
    }
    if let Some(v) = a.initial_size {
        s.initial_size = v;
    }
    if let Some(v) = a.acquisition_size {
        s.acquisition_size = v;
    }
    if let Some(v) = a.test_size {
        s.test_size = v;
    }
    s.validate()?;

    let results = run_experiment(&s)?;
    let (csv, jsonl) = (a.out_dir.join("cycles.csv"), a.out_dir.join("cycles.jsonl"));
    std::fs::create_dir_all(&a.out_dir).map_err(|e| super::io(&a.out_dir, e))?;
    write_logs(&results, &csv, &jsonl)?;
    m.output(&csv);
    m.output(&jsonl);
    let summary = summary_table(&results);
    let txt = a.out_dir.join("summary.txt");
    super::write_file(&txt, &summary)?;
    m.output(&txt);
    print!("{summary}");
    m.finish(&s, None, &super::manifest_path(cli, default_path(&a.out_dir, true)))?;
    Ok(())
}

/// Seed means per strategy and cycle.
pub fn summary_table(results: &[CycleResult]) -> String {
    let mut groups: BTreeMap<(String, usize), Vec<&CycleResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.strategy.to_string(), r.cycle)).or_default().push(r);
    }
    let mut o = String::from("strategy | cycle | seeds | RMSE | dRMSE | ensemble RMSE | hard share of acquired\n");
    for ((strategy, cycle), rs) in &groups {
        let n = rs.len() as f64;
        let mean = |f: &dyn Fn(&CycleResult) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
        let rmse = mean(&|r| r.rmse);
        let delta = mean(&|r| r.delta);
        let ens = rs
            .iter()
            .map(|r| r.ensemble_mean_rmse)
            .collect::<Option<Vec<f64>>>()
            .map(|v| format!("{:.4}", v.iter().sum::<f64>() / n))
            .unwrap_or_else(|| "-".into());
        let got: usize = rs.iter().map(|r| r.acquired.len()).sum();
        let hard = if got == 0 {
            "-".to_string()
        } else {
            let h: usize = rs.iter().filter_map(|r| r.cluster_counts.get(&HARD_CLUSTER)).sum();
            format!("{:.3}", h as f64 / got as f64)
        };
        let _ = writeln!(o, "{strategy} | {cycle} | {} | {rmse:.4} | {delta:.4} | {ens} | {hard}", rs.len());
    }
    o
}
