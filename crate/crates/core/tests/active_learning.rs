use std::time::Instant;

use probe_core::active_learning::{run_cycles, AlConfig, Strategy, HARD_CLUSTER};

#[test]
fn probe_acquisition_targets_the_hard_cluster() {
    let t0 = Instant::now();
    let cfg = AlConfig::default();
    let (mut probe_delta, mut random_delta) = (0.0, 0.0);
    for &seed in &cfg.seeds {
        let probe = run_cycles(&cfg, Strategy::Probe, seed).unwrap();
        let random = run_cycles(&cfg, Strategy::Random, seed).unwrap();
        let first = &probe[0];
        let hard = first.cluster_counts.get(&HARD_CLUSTER).copied().unwrap_or(0);
        let frac = hard as f64 / first.acquired.len() as f64;
        eprintln!(
            "seed {seed}: hard frac {frac:.3} (base {:.3}); probe {:?} random {:?}",
            first.pool_hard_fraction,
            probe.iter().map(|r| r.rmse).collect::<Vec<_>>(),
            random.iter().map(|r| r.rmse).collect::<Vec<_>>()
        );
        assert!(frac >= 2.0 * first.pool_hard_fraction);
        probe_delta += probe.last().unwrap().delta;
        random_delta += random.last().unwrap().delta;
    }
    eprintln!("Δ probe {probe_delta:.4} random {random_delta:.4} in {:.1}s", t0.elapsed().as_secs_f64());
    assert!(probe_delta <= random_delta);
}
