//! The single run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::QualityPolicy;
use crate::encoder::TrainConfig;
use crate::error::{Error, Result};
use crate::simgrad::LossConfig;
use crate::teacher::TeacherConfig;

/// Shipped defaults, also embedded so `validate` works without the file.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

/// File locations. Relative paths resolve against the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// SQuAD v1.1 JSON the generator draws anchors from.
    #[serde(default)]
    pub source: Option<PathBuf>,
    #[serde(default = "Paths::default_dataset")]
    pub dataset: PathBuf,
    #[serde(default = "Paths::default_checkpoint")]
    pub checkpoint: PathBuf,
    #[serde(default = "Paths::default_reports")]
    pub reports: PathBuf,
}

impl Paths {
    fn default_dataset() -> PathBuf {
        "out/dataset.jsonl".into()
    }
    fn default_checkpoint() -> PathBuf {
        "out/encoder.json".into()
    }
    fn default_reports() -> PathBuf {
        "out/reports".into()
    }
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            source: None,
            dataset: Self::default_dataset(),
            checkpoint: Self::default_checkpoint(),
            reports: Self::default_reports(),
        }
    }
}

/// Optimizer settings; the loss and seed come from the top level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub max_sequence_tokens: usize,
    pub dim: usize,
    pub max_grad_norm: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            max_sequence_tokens: t.max_sequence_tokens,
            dim: t.dim,
            max_grad_norm: t.max_grad_norm,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every random stream is a named substream of it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub teacher: TeacherConfig,
    #[serde(default)]
    pub policy: QualityPolicy,
}

/// One invalid field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub reason: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

impl RunConfig {
    pub fn from_toml(raw: &str) -> Result<Self> {
        toml::from_str(raw).map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Parses without validating, so `validate` can report every problem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&raw).map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn shipped() -> Self {
        Self::from_toml(DEFAULT_CONFIG).expect("shipped config parses")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            loss: self.loss,
            seed: self.seed,
            max_sequence_tokens: self.train.max_sequence_tokens,
            dim: self.train.dim,
            max_grad_norm: self.train.max_grad_norm,
        }
    }

    /// Every problem found, empty when the config is usable.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut push = |field: &str, r: Result<()>| {
            if let Err(e) = r {
                out.push(Diagnostic {
                    field: field.into(),
                    reason: e.to_string(),
                });
            }
        };
        push("loss", self.loss.validate());
        let train_only = TrainConfig {
            loss: LossConfig::default(),
            ..self.train_config()
        };
        push("train", train_only.validate());
        push("teacher", self.teacher.validate());
        push("policy", self.policy.validate());
        if let Some(src) = &self.paths.source {
            if !src.is_file() {
                push(
                    "paths.source",
                    Err(Error::Config(format!("{} does not exist", src.display()))),
                );
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics();
        if d.is_empty() {
            return Ok(());
        }
        let lines: Vec<String> = d.iter().map(|d| d.to_string()).collect();
        Err(Error::Config(lines.join("; ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_config_is_valid_and_matches_defaults() {
        let c = RunConfig::shipped();
        assert!(c.diagnostics().is_empty(), "{:?}", c.diagnostics());
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn zero_temperature_names_the_field() {
        let c = RunConfig::from_toml("[loss]\ntemperature = 0.0\n").unwrap();
        let d = c.diagnostics();
        assert!(d.iter().any(|d| d.reason.contains("LossConfig.temperature")), "{d:?}");
    }

    #[test]
    fn missing_template_pack_names_template_id() {
        let c = RunConfig::from_toml("[teacher]\ntemplate_pack = \"/nonexistent/pack.toml\"\n").unwrap();
        let d = c.diagnostics();
        assert_eq!(d.len(), 1);
        assert!(d[0].reason.contains("template_id"), "{d:?}");
    }

    #[test]
    fn unknown_template_id_is_reported() {
        let c = RunConfig::from_toml("[teacher.templates]\npositive = \"positive.v9\"\ntype1 = \"type1.v1\"\ntype2 = \"type2.v1\"\ntype3 = \"type3.v1\"\n").unwrap();
        let d = c.diagnostics();
        assert!(d[0].reason.contains("template_id `positive.v9`"), "{d:?}");
    }

    #[test]
    fn several_problems_are_all_reported() {
        let c = RunConfig::from_toml("[loss]\ntemperature = -1.0\n[policy]\nmax_regen_attempts = 11\n").unwrap();
        assert_eq!(c.diagnostics().len(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("sede = 3\n").is_err());
    }
}
