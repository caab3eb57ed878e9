//! Planted-cluster regression task for acquisition experiments.
//!
//! Per-atom features `x ∈ R^F`. The true per-atom energy is
//!
//! ```text
//! e(x) = a·x + c·x0² + κ·max(x0 − t, 0)³ + A(x0)·sin(ω·(u·x)),   A(x0) = α·exp(β·x0)
//! ```
//!
//! so fitting gets harder as `x0` grows. Molecular energy is the sum over
//! atoms. A hard-cluster molecule has `1..=hard_atoms` atoms (all of them when
//! `hard_atoms` is 0) with `x0 ~ N(hard_shift, 0.5)`; everything else draws
//! `N(0, 1)`.

use serde::{Deserialize, Serialize};

use crate::dataset::synth::make_mol_id;
use crate::error::{ProbeError, Result};
use crate::nn::SeededRng;

pub const EASY_CLUSTER: u32 = 0;
pub const HARD_CLUSTER: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlMolecule {
    pub mol_id: u64,
    pub n_atoms: usize,
    /// Row-major `N × F`.
    pub features: Vec<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSpec {
    pub feature_dim: usize,
    pub atoms_min: usize,
    pub atoms_max: usize,
    pub hard_fraction: f64,
    pub hard_shift: f64,
    pub hard_atoms: usize,
    pub curvature: f64,
    pub wiggle_amplitude: f64,
    pub wiggle_frequency: f64,
    pub wiggle_growth: f64,
    pub tail_strength: f64,
    pub tail_start: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            feature_dim: 8,
            atoms_min: 3,
            atoms_max: 12,
            hard_fraction: 0.1,
            hard_shift: 3.0,
            hard_atoms: 3,
            curvature: 0.5,
            wiggle_amplitude: 0.3,
            wiggle_frequency: 3.0,
            wiggle_growth: 1.0,
            tail_strength: 0.5,
            tail_start: 1.0,
        }
    }
}

/// The energy function shared by every seed: `a_j = 0.5·(−1)^j / √F` and a
/// wiggle direction `u` uniform over `x1..x{F−1}`, so the wiggle phase does
/// not depend on `x0`.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    linear: Vec<f64>,
    direction: Vec<f64>,
    spec: TaskSpec,
}

impl EnergyModel {
    pub fn new(spec: &TaskSpec) -> Self {
        let f = spec.feature_dim;
        let scale = 0.5 / (f as f64).sqrt();
        let linear = (0..f).map(|j| if j % 2 == 0 { scale } else { -scale }).collect();
        let rest = (f.max(2) - 1) as f64;
        let direction = (0..f).map(|j| if j == 0 { 0.0 } else { 1.0 / rest.sqrt() }).collect();
        Self {
            linear,
            direction,
            spec: spec.clone(),
        }
    }

    pub fn atom_energy(&self, x: &[f64]) -> f64 {
        let s = &self.spec;
        let lin: f64 = self.linear.iter().zip(x).map(|(a, b)| a * b).sum();
        let proj: f64 = self.direction.iter().zip(x).map(|(a, b)| a * b).sum();
        let amp = s.wiggle_amplitude * (s.wiggle_growth * x[0]).exp();
        let tail = (x[0] - s.tail_start).max(0.0);
        lin + s.curvature * x[0] * x[0] + s.tail_strength * tail.powi(3) + amp * (s.wiggle_frequency * proj).sin()
    }
}

pub struct PlantedTask {
    pub pool: Vec<AlMolecule>,
    pub test: Vec<AlMolecule>,
}

fn draw(
    spec: &TaskSpec,
    energy: &EnergyModel,
    count: usize,
    id_offset: u64,
    rng: &mut SeededRng,
) -> Vec<AlMolecule> {
    let n_hard = (count as f64 * spec.hard_fraction).round() as usize;
    let mut clusters: Vec<u32> = (0..count).map(|i| if i < n_hard { HARD_CLUSTER } else { EASY_CLUSTER }).collect();
    rng.shuffle(&mut clusters);
    let f = spec.feature_dim;
    clusters
        .into_iter()
        .enumerate()
        .map(|(i, cluster)| {
            let n = rng.int_inclusive(spec.atoms_min, spec.atoms_max);
            let mut features = Vec::with_capacity(n * f);
            let mut e = 0.0;
            let n_hard = match (cluster, spec.hard_atoms) {
                (EASY_CLUSTER, _) => 0,
                (_, 0) => n,
                (_, k) => rng.int_inclusive(1, k.min(n)),
            };
            for a in 0..n {
                let start = features.len();
                for j in 0..f {
                    let v = if j == 0 && a < n_hard {
                        rng.gaussian(spec.hard_shift, 0.5)
                    } else {
                        rng.normal()
                    };
                    features.push(v);
                }
                e += energy.atom_energy(&features[start..]);
            }
            AlMolecule {
                mol_id: make_mol_id(cluster, id_offset + i as u64),
                n_atoms: n,
                features,
                energy: e,
            }
        })
        .collect()
}

/// A pool and a disjoint test split sharing one energy function, both with
/// `hard_fraction` hard molecules.
pub fn planted_task(spec: &TaskSpec, pool_size: usize, test_size: usize, seed: u64) -> Result<PlantedTask> {
    if spec.feature_dim == 0 || spec.atoms_min == 0 || spec.atoms_min > spec.atoms_max {
        return Err(ProbeError::Config("invalid planted-task shape".into()));
    }
    if !(0.0..1.0).contains(&spec.hard_fraction) {
        return Err(ProbeError::Config("hard_fraction must lie in [0, 1)".into()));
    }
    let mut rng = SeededRng::new(seed);
    let energy = EnergyModel::new(spec);
    let pool = draw(spec, &energy, pool_size, 0, &mut rng);
    let test = draw(spec, &energy, test_size, pool_size as u64, &mut rng);
    Ok(PlantedTask { pool, test })
}
