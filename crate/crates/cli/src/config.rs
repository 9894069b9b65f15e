use std::fs;
use std::path::{Path, PathBuf};

use rapt_core::backend::BackendConfig;
use rapt_core::novelty::{NoveltyClass, NoveltyThresholds};
use rapt_core::promptkit::SlotSpec;
use rapt_core::retrieval::{RetrievalStrategy, DEFAULT_K};
use rapt_core::textcore::NormalizationConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Name used to check split sizes (`qqp-50k`, `qqp-140k`, `msrpc`,
    /// `parasci-acl`, or `custom`).
    pub dataset: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: None,
            validation: None,
            test: None,
            dataset: "custom".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
    pub strategy: RetrievalStrategy,
    pub seed: u64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            strategy: RetrievalStrategy::Knn,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlotConfig {
    pub global_prefix_len: u32,
    pub class_prefix_len: u32,
    pub infix_len: u32,
}

impl Default for SlotConfig {
    fn default() -> Self {
        let s = SlotSpec::default();
        Self {
            global_prefix_len: s.global_prefix_len,
            class_prefix_len: s.class_prefix_len,
            infix_len: s.infix_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    pub normalization: NormalizationConfig,
    pub thresholds: NoveltyThresholds,
    pub retrieval: RetrievalConfig,
    pub slots: SlotConfig,
    /// Novelty class requested for every query in NC-RAPT mode.
    pub query_class: NoveltyClass,
    /// Cap on prompt size `n`; least-similar examples are dropped to fit.
    pub max_prompt_tokens: Option<usize>,
    /// Key=value text template file for discrete prompts.
    pub template: Option<PathBuf>,
    /// Embed sources and predictions during eval.
    pub semantic: bool,
    pub backend: BackendConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            normalization: NormalizationConfig::default(),
            thresholds: NoveltyThresholds::default(),
            retrieval: RetrievalConfig::default(),
            slots: SlotConfig::default(),
            query_class: NoveltyClass::High,
            max_prompt_tokens: None,
            template: None,
            semantic: true,
            backend: BackendConfig::default(),
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        // relative data paths resolve against the config file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.train, &mut cfg.data.validation, &mut cfg.data.test, &mut cfg.template]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn slot_spec(&self, conditioned: bool) -> SlotSpec {
        SlotSpec {
            global_prefix_len: self.slots.global_prefix_len,
            class_prefix_len: self.slots.class_prefix_len,
            infix_len: self.slots.infix_len,
            classes: if conditioned {
                NoveltyClass::ALL.to_vec()
            } else {
                Vec::new()
            },
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.thresholds.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.slot_spec(true).validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.backend.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.retrieval.k == 0 {
            return Err(CliError::Usage("retrieval.k must be at least 1".into()));
        }
        Ok(())
    }

    /// TOML snapshot of the effective configuration (secrets omitted).
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is TOML-serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.retrieval.k, 2);
        assert_eq!(cfg.slots.global_prefix_len, 248);
        assert_eq!(cfg.thresholds.high_min, 0.4);
        assert_eq!(cfg.backend.embedding_model, "paraphrase-mpnet-base-v2");
        let back: PipelineConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn load_resolves_paths_and_rejects_typos() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "query_class = \"low\"\n[data]\ntrain = \"t.jsonl\"\n[retrieval]\nk = 3\n").unwrap();
        let cfg = PipelineConfig::load(&p).unwrap();
        assert_eq!(cfg.data.train, Some(dir.path().join("t.jsonl")));
        assert_eq!(cfg.retrieval.k, 3);
        assert_eq!(cfg.query_class, NoveltyClass::Low);
        fs::write(&p, "[retrieval]\nkk = 3\n").unwrap();
        assert!(matches!(PipelineConfig::load(&p), Err(CliError::Usage(_))));
    }
}
