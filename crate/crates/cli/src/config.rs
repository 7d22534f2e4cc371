//! Run configuration shared by all subcommands, its TOML form, and the
//! provenance stamp embedded in every output file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use txhist_core::learn::{cv::FeatureMask, LearnConfig, ModelKind};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Address,
    Entity,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Address => f.write_str("address"),
            Scheme::Entity => f.write_str("entity"),
        }
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "address" => Ok(Scheme::Address),
            "entity" => Ok(Scheme::Entity),
            other => Err(format!("unknown scheme {other:?} (address|entity)")),
        }
    }
}

/// Policy when the members of one entity carry different labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelConflict {
    Error,
    Majority,
}

impl fmt::Display for LabelConflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelConflict::Error => f.write_str("error"),
            LabelConflict::Majority => f.write_str("majority"),
        }
    }
}

impl FromStr for LabelConflict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error" => Ok(LabelConflict::Error),
            "majority" => Ok(LabelConflict::Majority),
            other => Err(format!("unknown policy {other:?} (error|majority)")),
        }
    }
}

/// Everything a run needs. Input/output paths and the thread count are
/// operational and deliberately excluded from the provenance hash so
/// identical semantic configs reproduce identical output bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub transactions: Option<PathBuf>,
    pub rates: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub features_csv: Option<PathBuf>,
    pub scheme: Scheme,
    pub feature_mask: FeatureMask,
    pub model: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub skip_invalid: bool,
    pub max_tx: Option<u64>,
    pub threads: usize,
    pub label_conflict: LabelConflict,
    pub unweighted: bool,
    pub learn: LearnConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            transactions: None,
            rates: None,
            labels: None,
            features_csv: None,
            scheme: Scheme::Address,
            feature_mask: FeatureMask::ALL,
            model: ModelKind::Gbt,
            k: 10,
            seed: 42,
            out: None,
            out_dir: None,
            skip_invalid: false,
            max_tx: None,
            threads: 0,
            label_conflict: LabelConflict::Error,
            unweighted: false,
            learn: LearnConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
}

/// The semantic subset of the configuration that determines output content.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProvenanceConfig {
    pub command: String,
    pub scheme: Scheme,
    pub feature_mask: FeatureMask,
    pub model: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub skip_invalid: bool,
    pub max_tx: Option<u64>,
    pub label_conflict: LabelConflict,
    pub weighted: bool,
    pub learn: LearnConfig,
}

impl ProvenanceConfig {
    pub fn new(command: &str, cfg: &RunConfig) -> ProvenanceConfig {
        ProvenanceConfig {
            command: command.to_string(),
            scheme: cfg.scheme,
            feature_mask: cfg.feature_mask,
            model: cfg.model,
            k: cfg.k,
            seed: cfg.seed,
            skip_invalid: cfg.skip_invalid,
            max_tx: cfg.max_tx,
            label_conflict: cfg.label_conflict,
            weighted: !cfg.unweighted,
            learn: cfg.learn.clone(),
        }
    }

    /// Truncated SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("provenance serialization cannot fail");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(12);
        for byte in digest.iter().take(6) {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// Comment line placed at the top of CSV outputs.
    pub fn comment_line(&self) -> String {
        format!(
            "# txhist {} scheme={} mask={} model={} k={} seed={} config={}",
            self.command,
            self.scheme,
            self.feature_mask,
            self.model,
            self.k,
            self.seed,
            self.hash()
        )
    }
}
