//! Config-file loading and the resolved per-command settings recorded in
//! manifests.

use std::path::Path;

use probe_core::active_learning::AlConfig;
use probe_core::dataset::{ErrorMode, SynthSpec};
use probe_core::evaluation::EvalOptions;
use probe_core::model::ProbeConfig;
use probe_core::training::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::Preset;
use crate::{usage, CliResult};

/// Read a TOML config, or the `config` object of a JSON run manifest.
pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let mut v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let cfg = v
            .get_mut("config")
            .map(serde_json::Value::take)
            .ok_or_else(|| usage(format!("{}: manifest has no `config` object", path.display())))?;
        serde_json::from_value(cfg).map_err(|e| usage(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

pub fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    path.map_or_else(|| Ok(T::default()), load)
}

/// Architecture overrides on top of a preset; unset fields keep the preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub input_dim: Option<usize>,
    pub encoder_hidden: Option<Vec<usize>>,
    pub heads: Option<usize>,
    pub head_dim: Option<usize>,
    pub embedding_dim: Option<usize>,
    pub classifier_hidden: Option<Vec<usize>>,
    pub dropout: Option<f64>,
    pub use_charges: Option<bool>,
    pub normalize_scalars: Option<bool>,
}

impl ModelSection {
    pub fn resolve(&self, preset: Preset, input_dim: usize) -> CliResult<ProbeConfig> {
        if let Some(d) = self.input_dim {
            if d != input_dim {
                return Err(usage(format!("config input_dim {d} but the data has width {input_dim}")));
            }
        }
        let mut c = match preset {
            Preset::Standard => ProbeConfig::standard(input_dim),
            Preset::Tiny => ProbeConfig::tiny(input_dim),
        };
        let s = self.clone();
        c.encoder_hidden = s.encoder_hidden.unwrap_or(c.encoder_hidden);
        c.heads = s.heads.unwrap_or(c.heads);
        c.head_dim = s.head_dim.unwrap_or(c.head_dim);
        c.embedding_dim = s.embedding_dim.unwrap_or(c.embedding_dim);
        c.classifier_hidden = s.classifier_hidden.unwrap_or(c.classifier_hidden);
        c.dropout = s.dropout.unwrap_or(c.dropout);
        c.use_charges = s.use_charges.unwrap_or(c.use_charges);
        c.normalize_scalars = s.normalize_scalars.unwrap_or(c.normalize_scalars);
        Ok(c)
    }

    pub fn materialized(c: &ProbeConfig) -> Self {
        Self {
            input_dim: Some(c.input_dim),
            encoder_hidden: Some(c.encoder_hidden.clone()),
            heads: Some(c.heads),
            head_dim: Some(c.head_dim),
            embedding_dim: Some(c.embedding_dim),
            classifier_hidden: Some(c.classifier_hidden.clone()),
            dropout: Some(c.dropout),
            use_charges: Some(c.use_charges),
            normalize_scalars: Some(c.normalize_scalars),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub preset: Preset,
    pub error_mode: ErrorMode,
    pub model: ModelSection,
    pub training: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSettings {
    pub seed: u64,
    pub spec: SynthSpec,
}

impl Default for GenSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            spec: SynthSpec::two_cluster(1000, 256),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub options: EvalOptions,
}

pub type AlSettings = AlConfig;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_on_top_of_preset() {
        let s = ModelSection {
            heads: Some(4),
            dropout: Some(0.0),
            ..ModelSection::default()
        };
        let c = s.resolve(Preset::Tiny, 8).unwrap();
        let tiny = ProbeConfig::tiny(8);
        assert_eq!((c.heads, c.dropout, c.head_dim), (4, 0.0, tiny.head_dim));
        let full = ModelSection::materialized(&c);
        assert_eq!(full.resolve(Preset::Standard, 8).unwrap(), c);
        assert!(full.resolve(Preset::Tiny, 9).is_err());
    }

    #[test]
    fn manifest_config_replays() {
        let dir = tempfile::tempdir().unwrap();
        let s = TrainSettings {
            preset: Preset::Tiny,
            ..TrainSettings::default()
        };
        let p = dir.path().join("m.json");
        let body = serde_json::json!({ "tool_version": "x", "config": s });
        std::fs::write(&p, body.to_string()).unwrap();
        assert_eq!(load::<TrainSettings>(&p).unwrap(), s);

        let t = dir.path().join("c.toml");
        std::fs::write(&t, "error_mode = \"per-atom\"\n[training]\nseed = 7\n").unwrap();
        let got: TrainSettings = load(&t).unwrap();
        assert_eq!(got.error_mode, ErrorMode::PerAtom);
        assert_eq!(got.training.seed, 7);
        assert_eq!(got.training.lr, TrainConfig::default().lr);
        std::fs::write(&t, "unknown_key = 1\n").unwrap();
        assert!(load::<TrainSettings>(&t).is_err());
    }
}
