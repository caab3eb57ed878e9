use serde::{Deserialize, Serialize};

use crate::dataset::MoleculeRecord;
use crate::error::{ProbeError, Result};

/// z-score statistics for the predicted energy and atom count, fitted on the
/// training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarStats {
    pub energy_mean: f64,
    pub energy_std: f64,
    pub atoms_mean: f64,
    pub atoms_std: f64,
}

impl Default for ScalarStats {
    fn default() -> Self {
        Self {
            energy_mean: 0.0,
            energy_std: 1.0,
            atoms_mean: 0.0,
            atoms_std: 1.0,
        }
    }
}

impl ScalarStats {
    /// Population mean and standard deviation; a zero spread becomes 1.
    pub fn from_records(records: &[MoleculeRecord]) -> Self {
        if records.is_empty() {
            return Self::default();
        }
        let n = records.len() as f64;
        let stats = |vals: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = vals.collect();
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            (mean, if std > 0.0 && std.is_finite() { std } else { 1.0 })
        };
        let (energy_mean, energy_std) = stats(&mut records.iter().map(|r| r.e_pred));
        let (atoms_mean, atoms_std) = stats(&mut records.iter().map(|r| r.n_atoms as f64));
        Self {
            energy_mean,
            energy_std,
            atoms_mean,
            atoms_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Backbone embedding width `d`.
    pub input_dim: usize,
    /// Hidden widths of the atom encoder; its output width is
    /// `heads · head_dim`.
    pub encoder_hidden: Vec<usize>,
    pub heads: usize,
    pub head_dim: usize,
    pub embedding_dim: usize,
    pub classifier_hidden: Vec<usize>,
    pub dropout: f64,
    pub use_charges: bool,
    /// When false, `Ê` and `N` enter the descriptor unscaled.
    pub normalize_scalars: bool,
    pub scalar_stats: ScalarStats,
}

pub const NUM_CLASSES: usize = 2;

impl ProbeConfig {
    /// The full-size network for a `d`-wide backbone:
    /// encoder `(d, 256, 128, 256)`, 32 heads of width 8, a 256-wide
    /// molecular embedding and a `[128, 32]` classifier.
    pub fn standard(input_dim: usize) -> Self {
        Self {
            input_dim,
            encoder_hidden: vec![256, 128],
            heads: 32,
            head_dim: 8,
            embedding_dim: 256,
            classifier_hidden: vec![128, 32],
            dropout: 0.1,
            use_charges: true,
            normalize_scalars: true,
            scalar_stats: ScalarStats::default(),
        }
    }

    /// Small network for tests and desk-scale experiments: 2 heads of width
    /// 4, every hidden layer 8 or 16 wide.
    pub fn tiny(input_dim: usize) -> Self {
        Self {
            input_dim,
            encoder_hidden: vec![16, 8],
            heads: 2,
            head_dim: 4,
            embedding_dim: 8,
            classifier_hidden: vec![8, 4],
            dropout: 0.1,
            use_charges: true,
            normalize_scalars: true,
            scalar_stats: ScalarStats::default(),
        }
    }

    /// Attention width, equal to the encoder output width.
    pub fn width(&self) -> usize {
        self.heads * self.head_dim
    }

    /// `[mean-pool ‖ max-pool ‖ Ê ‖ N]`.
    pub fn descriptor_dim(&self) -> usize {
        2 * self.width() + 2
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(ProbeError::Config(m));
        if self.input_dim == 0 {
            return err("input_dim must be positive".into());
        }
        if self.heads == 0 || self.head_dim == 0 {
            return err("heads and head_dim must be positive".into());
        }
        if self.embedding_dim == 0 {
            return err("embedding_dim must be positive".into());
        }
        if self.encoder_hidden.iter().chain(&self.classifier_hidden).any(|&w| w == 0) {
            return err("hidden widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        let s = self.scalar_stats;
        if !(s.energy_std > 0.0 && s.atoms_std > 0.0 && s.energy_mean.is_finite() && s.atoms_mean.is_finite()) {
            return err("scalar statistics must be finite with positive spread".into());
        }
        Ok(())
    }

    /// Ordered `key=value` lines, the checkpoint's config block.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let s = self.scalar_stats;
        vec![
            ("input_dim".into(), self.input_dim.to_string()),
            ("encoder_hidden".into(), list(&self.encoder_hidden)),
            ("heads".into(), self.heads.to_string()),
            ("head_dim".into(), self.head_dim.to_string()),
            ("embedding_dim".into(), self.embedding_dim.to_string()),
            ("classifier_hidden".into(), list(&self.classifier_hidden)),
            ("dropout".into(), self.dropout.to_string()),
            ("use_charges".into(), self.use_charges.to_string()),
            ("normalize_scalars".into(), self.normalize_scalars.to_string()),
            ("energy_mean".into(), s.energy_mean.to_string()),
            ("energy_std".into(), s.energy_std.to_string()),
            ("atoms_mean".into(), s.atoms_mean.to_string()),
            ("atoms_std".into(), s.atoms_std.to_string()),
        ]
    }

    pub fn from_kv(lookup: &dyn Fn(&str) -> Option<String>) -> Result<Self> {
        let get = |k: &str| lookup(k).ok_or_else(|| ProbeError::Config(format!("missing config key `{k}`")));
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| ProbeError::Config(format!("bad value `{v}` for `{k}`")))
        }
        let list = |k: &str| -> Result<Vec<usize>> {
            let v = get(k)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|x| parse(k, x)).collect()
        };
        let num = |k: &str| -> Result<f64> { parse(k, &get(k)?) };
        let cfg = Self {
            input_dim: parse("input_dim", &get("input_dim")?)?,
            encoder_hidden: list("encoder_hidden")?,
            heads: parse("heads", &get("heads")?)?,
            head_dim: parse("head_dim", &get("head_dim")?)?,
            embedding_dim: parse("embedding_dim", &get("embedding_dim")?)?,
            classifier_hidden: list("classifier_hidden")?,
            dropout: num("dropout")?,
            use_charges: parse("use_charges", &get("use_charges")?)?,
            normalize_scalars: parse("normalize_scalars", &get("normalize_scalars")?)?,
            scalar_stats: ScalarStats {
                energy_mean: num("energy_mean")?,
                energy_std: num("energy_std")?,
                atoms_mean: num("atoms_mean")?,
                atoms_std: num("atoms_std")?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn standard_dimensions() {
        let c = ProbeConfig::standard(256);
        assert_eq!(c.width(), 256);
        assert_eq!(c.descriptor_dim(), 514);
        c.validate().unwrap();
    }

    #[test]
    fn kv_round_trip_is_exact() {
        let mut c = ProbeConfig::tiny(8);
        c.scalar_stats = ScalarStats {
            energy_mean: -1234.567_890_123_4,
            energy_std: 0.1 + 0.2,
            atoms_mean: 11.5,
            atoms_std: 5.188_127_472,
        };
        let map: HashMap<String, String> = c.to_kv().into_iter().collect();
        let back = ProbeConfig::from_kv(&|k| map.get(k).cloned()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_configs() {
        let mut c = ProbeConfig::tiny(8);
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        let mut c = ProbeConfig::tiny(8);
        c.heads = 0;
        assert!(c.validate().is_err());
        let mut c = ProbeConfig::tiny(0);
        c.input_dim = 0;
        assert!(c.validate().is_err());
    }
}
