//! Top-level JSON configuration: model, training, synthetic data and
//! evolution sections, each individually defaultable and overridable
//! from the command line with dotted `--set key=value` paths.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::SynthSpec;
use crate::error::{err, Result};
use crate::nas::EvolutionConfig;
use crate::net::ModelConfig;
use crate::train::TrainConfig;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct AppConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub evolution: EvolutionConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            model: ModelConfig::desk(),
            train: TrainConfig::desk(),
            synth: SynthSpec::desk(),
            evolution: EvolutionConfig::default(),
        }
    }
}

impl AppConfig {
    /// Loads the optional config file and applies `--set` overrides, then
    /// the global seed/deterministic flags.
    pub fn load(
        path: Option<&Path>,
        sets: &[String],
        seed: Option<u64>,
        deterministic: bool,
    ) -> Result<AppConfig> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str::<serde_json::Value>(&text)
                    .map_err(|e| err!(Config, "{}: {e}", p.display()))?
            }
            None => serde_json::to_value(AppConfig::default()).expect("default serializes"),
        };
        for set in sets {
            let (key, raw) = set
                .split_once('=')
                .ok_or_else(|| err!(Config, "--set needs KEY=VALUE, got `{set}`"))?;
            apply_set(&mut value, key, raw)?;
        }
        let mut config: AppConfig = serde_json::from_value(value)
            .map_err(|e| err!(Config, "configuration: {e}"))?;
        if let Some(seed) = seed {
            config.train.seed = seed;
            config.synth.seed = seed;
            config.evolution.seed = seed;
        }
        if deterministic {
            config.train.deterministic = true;
        }
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Sets a dotted path inside a JSON document. The value text is parsed
/// as JSON when possible and falls back to a plain string, so
/// `--set train.epochs=50`, `--set model.genotype=2x2,4x4` and
/// `--set model.encoder_depths=[1,1,2,1]` all work.
pub fn apply_set(root: &mut serde_json::Value, key: &str, raw: &str) -> Result<()> {
    let parsed = serde_json::from_str::<serde_json::Value>(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let object = cursor
            .as_object_mut()
            .ok_or_else(|| err!(Config, "--set {key}: `{part}` is not an object"))?;
        if i + 1 == parts.len() {
            object.insert(part.to_string(), parsed);
            return Ok(());
        }
        cursor = object
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Err(err!(Config, "--set key must not be empty"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_roundtrips() {
        let cfg = AppConfig::default();
        let text = cfg.to_json_pretty();
        let back: AppConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn set_overrides_scalars_arrays_and_strings() {
        let mut v = serde_json::to_value(AppConfig::default()).unwrap();
        apply_set(&mut v, "train.epochs", "42").unwrap();
        apply_set(&mut v, "model.encoder_depths", "[1,0]").unwrap();
        apply_set(&mut v, "model.decoder_depths", "[0,1]").unwrap();
        apply_set(&mut v, "model.genotype", "2x2,4x4").unwrap();
        apply_set(&mut v, "model.input_resolution", "[32,32]").unwrap();
        let cfg: AppConfig = serde_json::from_value(v).unwrap();
        assert_eq!(cfg.train.epochs, 42);
        assert_eq!(cfg.model.encoder_depths, vec![1, 0]);
        assert_eq!(cfg.model.genotype.to_string(), "2x2,4x4");
    }

    #[test]
    fn global_seed_flag_overrides_all_sections() {
        let cfg = AppConfig::load(None, &[], Some(99), false).unwrap();
        assert_eq!(cfg.train.seed, 99);
        assert_eq!(cfg.synth.seed, 99);
        assert_eq!(cfg.evolution.seed, 99);
    }

    #[test]
    fn partial_config_file_uses_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"train": {"epochs": 7, "batch_size": 1, "initial_lr": 0.001, "min_lr": 0.00001, "t_max": 7, "weight_decay": 0.01, "seed": 3, "loss": "bce_dice"}}"#).unwrap();
        let cfg = AppConfig::load(Some(&p), &[], None, false).unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.model, ModelConfig::desk());
    }

    #[test]
    fn bad_set_reports_config_error() {
        let e = AppConfig::load(None, &["nonsense".to_string()], None, false).unwrap_err();
        assert_eq!(e.category(), "config");
    }
}
