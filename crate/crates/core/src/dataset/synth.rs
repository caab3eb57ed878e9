//! Synthetic molecules with planted error clusters.
//!
//! Each cluster has its own per-atom embedding distribution and its own
//! backbone error distribution. The cluster index is stored in the top 16
//! bits of `mol_id` so tests can recover ground truth.
//!
//! Within a cluster, a molecule's error z-score `u` also shifts its atom
//! embeddings by `difficulty_coupling · u` along a fixed axis, so harder
//! molecules of one cluster drift toward the other. With zero coupling the
//! error is independent of the embeddings inside a cluster.

use serde::{Deserialize, Serialize};

use crate::dataset::record::MoleculeRecord;
use crate::error::{ProbeError, Result};
use crate::nn::rng::SeededRng;

pub const CLUSTER_SHIFT: u32 = 48;

pub fn cluster_of(mol_id: u64) -> u32 {
    (mol_id >> CLUSTER_SHIFT) as u32
}

pub fn make_mol_id(cluster: u32, index: u64) -> u64 {
    (u64::from(cluster) << CLUSTER_SHIFT) | (index & ((1 << CLUSTER_SHIFT) - 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    /// Relative share of molecules; counts are apportioned exactly.
    pub weight: f64,
    pub embed_mean: Vec<f64>,
    pub embed_std: f64,
    /// Error magnitude distribution `|N(mean, std)|` in kcal/mol.
    pub error_mean: f64,
    pub error_std: f64,
    pub charge_mean: f64,
    pub charge_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub embed_dim: usize,
    pub count: usize,
    pub atoms_min: usize,
    pub atoms_max: usize,
    pub clusters: Vec<ClusterSpec>,
    pub with_charges: bool,
    pub with_atomic_numbers: bool,
    /// Mean reference energy per atom (kcal/mol).
    pub energy_per_atom: f64,
    pub energy_noise: f64,
    pub difficulty_coupling: f64,
}

impl SynthSpec {
    /// Two equally weighted clusters with errors `N(0.5, 0.1)` and
    /// `N(5, 0.5)` kcal/mol, molecules of 3–20 atoms.
    pub fn two_cluster(count: usize, embed_dim: usize) -> Self {
        let cluster = |sign: f64, error_mean, error_std, charge_mean| ClusterSpec {
            weight: 1.0,
            embed_mean: vec![0.5 * sign; embed_dim],
            embed_std: 1.0,
            error_mean,
            error_std,
            charge_mean,
            charge_std: 0.2,
        };
        Self {
            embed_dim,
            count,
            atoms_min: 3,
            atoms_max: 20,
            clusters: vec![cluster(-1.0, 0.5, 0.1, 0.0), cluster(1.0, 5.0, 0.5, 0.1)],
            with_charges: true,
            with_atomic_numbers: true,
            energy_per_atom: -250.0,
            energy_noise: 50.0,
            difficulty_coupling: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ProbeError::Config(m));
        if self.embed_dim == 0 {
            return bad("embed_dim must be positive".into());
        }
        if self.clusters.is_empty() {
            return bad("at least one cluster required".into());
        }
        if self.atoms_min == 0 || self.atoms_min > self.atoms_max {
            return bad(format!(
                "invalid molecule size range {}..={}",
                self.atoms_min, self.atoms_max
            ));
        }
        if self.clusters.len() > u16::MAX as usize {
            return bad("too many clusters".into());
        }
        for (k, c) in self.clusters.iter().enumerate() {
            if c.embed_mean.len() != self.embed_dim {
                return bad(format!("cluster {k}: mean has width {}", c.embed_mean.len()));
            }
            let finite = [c.weight, c.embed_std, c.error_mean, c.error_std, c.charge_mean, c.charge_std]
                .iter()
                .all(|v| v.is_finite());
            if !finite || c.weight <= 0.0 || c.embed_std < 0.0 || c.error_std < 0.0 || c.charge_std < 0.0 {
                return bad(format!("cluster {k}: weights must be positive and spreads non-negative"));
            }
        }
        if !self.difficulty_coupling.is_finite() || self.energy_noise < 0.0 {
            return bad("coupling must be finite and energy noise non-negative".into());
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `count` over cluster weights.
    pub fn cluster_counts(&self) -> Vec<usize> {
        let total: f64 = self.clusters.iter().map(|c| c.weight).sum();
        let exact: Vec<f64> = self
            .clusters
            .iter()
            .map(|c| c.weight / total * self.count as f64)
            .collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut rest = self.count - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&a, &b| {
            let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &k in order.iter().cycle() {
            if rest == 0 {
                break;
            }
            counts[k] += 1;
            rest -= 1;
        }
        counts
    }

    fn difficulty_axis(&self) -> Vec<f64> {
        let first = &self.clusters[0].embed_mean;
        let last = &self.clusters[self.clusters.len() - 1].embed_mean;
        let diff: Vec<f64> = last.iter().zip(first).map(|(a, b)| a - b).collect();
        let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            let mut e = vec![0.0; self.embed_dim];
            e[0] = 1.0;
            e
        } else {
            diff.into_iter().map(|v| v / norm).collect()
        }
    }
}

const ELEMENTS: [u8; 7] = [1, 6, 7, 8, 9, 16, 17];

pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<Vec<MoleculeRecord>> {
    spec.validate()?;
    let mut rng = SeededRng::new(seed);
    let mut assignment: Vec<u32> = spec
        .cluster_counts()
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| std::iter::repeat_n(k as u32, n))
        .collect();
    rng.shuffle(&mut assignment);
    let axis = spec.difficulty_axis();
    let d = spec.embed_dim;

    let mut out = Vec::with_capacity(spec.count);
    for (i, &k) in assignment.iter().enumerate() {
        let c = &spec.clusters[k as usize];
        let n = rng.int_inclusive(spec.atoms_min, spec.atoms_max);
        let u = rng.normal();
        let shift: Vec<f64> = axis.iter().map(|a| a * spec.difficulty_coupling * u).collect();
        let mut embeddings = Vec::with_capacity(n * d);
        for _ in 0..n {
            for j in 0..d {
                let noise = if c.embed_std > 0.0 { c.embed_std * rng.normal() } else { 0.0 };
                embeddings.push((c.embed_mean[j] + shift[j] + noise) as f32);
            }
        }
        let charges = spec.with_charges.then(|| {
            (0..n)
                .map(|_| rng.gaussian(c.charge_mean, c.charge_std) as f32)
                .collect()
        });
        let atomic_numbers = spec
            .with_atomic_numbers
            .then(|| (0..n).map(|_| ELEMENTS[rng.int_inclusive(0, ELEMENTS.len() - 1)]).collect());
        let e_ref = spec.energy_per_atom * n as f64 + spec.energy_noise * rng.normal();
        let magnitude = (c.error_mean + c.error_std * u).abs();
        let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
        out.push(MoleculeRecord {
            mol_id: make_mol_id(k, i as u64),
            n_atoms: n,
            atomic_numbers,
            embeddings,
            charges,
            e_pred: e_ref + sign * magnitude,
            e_ref: Some(e_ref),
        });
    }
    Ok(out)
}
