use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::active_learning::strategy::{rank_pool, Strategy};
use crate::active_learning::surrogate::{rmse, Surrogate, SurrogateConfig};
use crate::active_learning::task::{planted_task, AlMolecule, TaskSpec};
use crate::dataset::synth::cluster_of;
use crate::dataset::{assign_labels, split_train_val, ErrorMode};
use crate::error::{ProbeError, Result};
use crate::evaluation::EnsembleInput;
use crate::model::{ProbeConfig, ProbeModel};
use crate::nn::SeededRng;
use crate::training::{fit, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlConfig {
    pub pool_size: usize,
    pub initial_size: usize,
    pub acquisition_size: usize,
    pub cycles: usize,
    pub test_size: usize,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub task: TaskSpec,
    pub surrogate: SurrogateConfig,
    pub probe: ProbeConfig,
    pub probe_training: TrainConfig,
}

impl Default for AlConfig {
    fn default() -> Self {
        let surrogate = SurrogateConfig::default();
        let probe = ProbeConfig {
            encoder_hidden: vec![32, 16],
            heads: 2,
            head_dim: 8,
            embedding_dim: 16,
            classifier_hidden: vec![16, 8],
            ..ProbeConfig::tiny(surrogate.hidden)
        };
        Self {
            pool_size: 3000,
            initial_size: 600,
            acquisition_size: 300,
            cycles: 2,
            test_size: 600,
            strategies: vec![Strategy::Probe, Strategy::Random],
            seeds: vec![0, 1, 2],
            task: TaskSpec::default(),
            surrogate,
            probe,
            probe_training: TrainConfig {
                lr: 1e-3,
                min_lr: 1e-5,
                batch_size: 32,
                max_epochs: 60,
                early_stop_patience: 10,
                ..TrainConfig::default()
            },
        }
    }
}

impl AlConfig {
    pub fn validate(&self) -> Result<()> {
        let easy = self.pool_size - (self.pool_size as f64 * self.task.hard_fraction).round() as usize;
        if self.initial_size + self.acquisition_size * self.cycles > self.pool_size {
            return Err(ProbeError::Config(format!(
                "pool of {} cannot supply {} initial + {} × {} acquired molecules",
                self.pool_size, self.initial_size, self.cycles, self.acquisition_size
            )));
        }
        if self.initial_size > easy {
            return Err(ProbeError::Config("initial set larger than the easy part of the pool".into()));
        }
        if self.initial_size < 10 || self.test_size == 0 {
            return Err(ProbeError::Config("need at least 10 initial and 1 test molecule".into()));
        }
        if self.probe.input_dim != self.surrogate.hidden {
            return Err(ProbeError::Config(format!(
                "classifier input width {} differs from surrogate width {}",
                self.probe.input_dim, self.surrogate.hidden
            )));
        }
        self.probe.validate()?;
        self.probe_training.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleResult {
    pub seed: u64,
    pub strategy: String,
    pub cycle: usize,
    /// Molecules acquired at the end of this cycle's ranking (empty for the
    /// last cycle).
    pub acquired: Vec<u64>,
    /// Test RMSE of the first surrogate.
    pub rmse: f64,
    /// `rmse − rmse(cycle 0)`.
    pub delta: f64,
    pub ensemble_mean_rmse: Option<f64>,
    pub labeled_size: usize,
    /// Acquired molecules per planted cluster.
    pub cluster_counts: BTreeMap<u32, usize>,
    /// Fraction of the pool (before acquisition) in the hard cluster.
    pub pool_hard_fraction: f64,
}

fn select(mols: &[AlMolecule], ids: &HashSet<u64>) -> Vec<AlMolecule> {
    mols.iter().filter(|m| ids.contains(&m.mol_id)).cloned().collect()
}

/// PROBE classifier trained on the labeled set's surrogate errors (p = 50),
/// reading the surrogate's hidden activations as embeddings.
pub fn train_probe_ranker(
    config: &AlConfig,
    surrogate: &Surrogate,
    labeled: &[AlMolecule],
    seed: u64,
) -> Result<ProbeModel> {
    let records = surrogate.records(labeled)?;
    let data = assign_labels(records, 50.0, ErrorMode::Raw)?;
    let (train, val) = split_train_val(&data, config.probe_training.train_fraction, seed)?;
    let model = ProbeModel::new(config.probe.clone(), seed)?;
    let cfg = TrainConfig {
        seed,
        ..config.probe_training.clone()
    };
    Ok(fit(model, &train, &val, &cfg)?.model)
}

fn probe_scores(
    config: &AlConfig,
    surrogate: &Surrogate,
    labeled: &[AlMolecule],
    pool: &[AlMolecule],
    seed: u64,
) -> Result<Vec<f64>> {
    let model = train_probe_ranker(config, surrogate, labeled, seed)?;
    model.predict(&surrogate.records(pool)?, 256)
}

/// Run one strategy on one seed: cycle 0 trains on the initial set, each
/// later cycle acquires `acquisition_size` molecules and retrains with warm
/// start.
pub fn run_cycles(config: &AlConfig, strategy: Strategy, seed: u64) -> Result<Vec<CycleResult>> {
    config.validate()?;
    let task = planted_task(&config.task, config.pool_size, config.test_size, seed)?;
    let mut rng = SeededRng::new(seed ^ 0x5eed_a110);

    let mut easy: Vec<u64> = task.pool.iter().filter(|m| cluster_of(m.mol_id) == 0).map(|m| m.mol_id).collect();
    easy.sort_unstable();
    rng.shuffle(&mut easy);
    let mut labeled_ids: HashSet<u64> = easy[..config.initial_size].iter().copied().collect();

    let k = match strategy {
        Strategy::Ensemble(k) => k,
        _ => 1,
    };
    let mut models: Vec<Surrogate> = (0..k)
        .map(|i| Surrogate::new(config.surrogate.clone(), config.task.feature_dim, seed * 1000 + i as u64))
        .collect::<Result<_>>()?;

    let mut results = Vec::with_capacity(config.cycles + 1);
    let mut rmse0 = None;
    for cycle in 0..=config.cycles {
        let labeled = select(&task.pool, &labeled_ids);
        let epochs = if cycle == 0 {
            config.surrogate.epochs_initial
        } else {
            config.surrogate.epochs_per_cycle
        };
        for m in &mut models {
            m.train(&labeled, epochs)?;
        }
        let preds: Vec<Vec<f64>> = models.iter().map(|m| m.predict(&task.test)).collect::<Result<_>>()?;
        let single = rmse(&preds[0], &task.test);
        let ensemble_mean_rmse = (k > 1).then(|| {
            let mean: Vec<f64> = (0..task.test.len())
                .map(|i| preds.iter().map(|p| p[i]).sum::<f64>() / k as f64)
                .collect();
            rmse(&mean, &task.test)
        });
        let base = *rmse0.get_or_insert(single);

        let pool: Vec<AlMolecule> = task.pool.iter().filter(|m| !labeled_ids.contains(&m.mol_id)).cloned().collect();
        let hard_in_pool = pool.iter().filter(|m| cluster_of(m.mol_id) != 0).count();
        let mut acquired = Vec::new();
        if cycle < config.cycles {
            if pool.len() < config.acquisition_size {
                return Err(ProbeError::Data("pool exhausted".into()));
            }
            let ids: Vec<u64> = pool.iter().map(|m| m.mol_id).collect();
            let scores = match strategy {
                Strategy::Probe => probe_scores(config, &models[0], &labeled, &pool, seed + cycle as u64)?,
                Strategy::Ensemble(_) => {
                    let members = models.iter().map(|m| m.predict(&pool)).collect::<Result<Vec<_>>>()?;
                    EnsembleInput {
                        mol_ids: ids.clone(),
                        n_atoms: pool.iter().map(|m| m.n_atoms).collect(),
                        e_ref: pool.iter().map(|m| m.energy).collect(),
                        members,
                    }
                    .scaled_sigma()
                }
                Strategy::Random => (0..pool.len()).map(|_| rng.uniform()).collect(),
            };
            acquired = rank_pool(&ids, &scores)?
                .into_iter()
                .take(config.acquisition_size)
                .map(|(id, _)| id)
                .collect();
        }
        let mut cluster_counts = BTreeMap::new();
        for &id in &acquired {
            *cluster_counts.entry(cluster_of(id)).or_insert(0) += 1;
        }
        log::info!("{strategy} seed {seed} cycle {cycle}: rmse {single:.4}");
        results.push(CycleResult {
            seed,
            strategy: strategy.to_string(),
            cycle,
            acquired: acquired.clone(),
            rmse: single,
            delta: single - base,
            ensemble_mean_rmse,
            labeled_size: labeled_ids.len(),
            cluster_counts,
            pool_hard_fraction: hard_in_pool as f64 / pool.len().max(1) as f64,
        });
        labeled_ids.extend(acquired);
    }
    Ok(results)
}

/// Every configured strategy on every seed.
pub fn run_experiment(config: &AlConfig) -> Result<Vec<CycleResult>> {
    let mut all = Vec::new();
    for &seed in &config.seeds {
        for &s in &config.strategies {
            all.extend(run_cycles(config, s, seed)?);
        }
    }
    Ok(all)
}

pub fn cycles_csv(results: &[CycleResult]) -> String {
    let mut s = String::from("seed,strategy,cycle,rmse,delta,ensemble_mean_rmse,labeled_size,acquired,acquired_hard\n");
    for r in results {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.strategy,
            r.cycle,
            r.rmse,
            r.delta,
            r.ensemble_mean_rmse.map(|v| v.to_string()).unwrap_or_default(),
            r.labeled_size,
            r.acquired.len(),
            r.cluster_counts.get(&1).copied().unwrap_or(0)
        )
        .unwrap();
    }
    s
}

pub fn write_logs(results: &[CycleResult], csv: &Path, jsonl: &Path) -> Result<()> {
    std::fs::write(csv, cycles_csv(results)).map_err(|e| ProbeError::io(csv, e))?;
    let mut lines = String::new();
    for r in results {
        lines.push_str(&serde_json::to_string(r).map_err(|e| ProbeError::Data(e.to_string()))?);
        lines.push('\n');
    }
    std::fs::write(jsonl, lines).map_err(|e| ProbeError::io(jsonl, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> AlConfig {
        AlConfig {
            pool_size: 200,
            initial_size: 60,
            acquisition_size: 20,
            cycles: 2,
            test_size: 50,
            surrogate: SurrogateConfig {
                epochs_initial: 3,
                epochs_per_cycle: 2,
                ..SurrogateConfig::default()
            },
            probe_training: TrainConfig {
                max_epochs: 2,
                batch_size: 16,
                lr: 1e-3,
                min_lr: 1e-5,
                ..TrainConfig::default()
            },
            ..AlConfig::default()
        }
    }

    #[test]
    fn zero_cycles_gives_baseline_only() {
        let cfg = AlConfig { cycles: 0, ..small() };
        let r = run_cycles(&cfg, Strategy::Random, 0).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].delta, 0.0);
        assert!(r[0].acquired.is_empty());
    }

    #[test]
    fn acquisitions_are_disjoint_and_deterministic() {
        let cfg = small();
        for s in [Strategy::Probe, Strategy::Ensemble(2), Strategy::Random] {
            let a = run_cycles(&cfg, s, 4).unwrap();
            let b = run_cycles(&cfg, s, 4).unwrap();
            assert_eq!(a, b);
            let mut seen = HashSet::new();
            for (i, r) in a.iter().enumerate() {
                assert_eq!(r.labeled_size, 60 + 20 * i);
                for id in &r.acquired {
                    assert!(seen.insert(*id));
                }
            }
            assert_eq!(seen.len(), 40);
            assert_eq!(a[0].ensemble_mean_rmse.is_some(), matches!(s, Strategy::Ensemble(_)));
        }
    }

    #[test]
    fn oversized_plan_is_rejected() {
        let cfg = AlConfig { acquisition_size: 100, ..small() };
        assert!(matches!(run_cycles(&cfg, Strategy::Random, 0), Err(ProbeError::Config(_))));
    }

    #[test]
    fn probe_ranking_matches_recomputed_probabilities() {
        let cfg = small();
        let task = planted_task(&cfg.task, cfg.pool_size, cfg.test_size, 8).unwrap();
        let (labeled, pool) = task.pool.split_at(cfg.initial_size);
        let mut surrogate = Surrogate::new(cfg.surrogate.clone(), cfg.task.feature_dim, 8).unwrap();
        surrogate.train(labeled, 3).unwrap();
        let model = train_probe_ranker(&cfg, &surrogate, labeled, 8).unwrap();
        let ids: Vec<u64> = pool.iter().map(|m| m.mol_id).collect();
        let scores = probe_scores(&cfg, &surrogate, labeled, pool, 8).unwrap();
        let ranked: Vec<u64> = rank_pool(&ids, &scores).unwrap().into_iter().map(|(id, _)| id).collect();

        // one molecule per forward pass, sorted independently
        let mut redo: Vec<(f64, u64)> = surrogate
            .records(pool)
            .unwrap()
            .iter()
            .map(|r| {
                let b = crate::dataset::Batch::from_records(&[r], None, None).unwrap();
                (model.forward(&b, false).unwrap().p_unreliable()[0], r.mol_id)
            })
            .collect();
        redo.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for (x, y) in scores.iter().zip(surrogate.records(pool).unwrap().iter()) {
            let b = crate::dataset::Batch::from_records(&[y], None, None).unwrap();
            assert!((x - model.forward(&b, false).unwrap().p_unreliable()[0]).abs() < 1e-12);
        }
        assert_eq!(ranked, redo.into_iter().map(|(_, id)| id).collect::<Vec<_>>());
    }
}
