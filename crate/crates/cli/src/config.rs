//! Run configuration: one TOML file mirrors the model, training and
//! embedding-trainer settings plus all file paths. Every field has the
//! standard default, unknown keys are rejected, and flags override
//! individual values so each run is reconstructible from the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use decnn_core::model::ModelConfig;
use decnn_core::skipgram::TrainerConfig;
use decnn_core::train::TrainConfig;
use decnn_core::{Error, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub general_emb: Option<PathBuf>,
    pub domain_emb: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    /// Raw corpus for `train-embeddings`.
    pub embed_corpus: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub embed: TrainerConfig,
    /// Prune embedding tables to the task vocabulary at load time.
    pub prune_vocab: bool,
    /// Optional cap on loaded embedding rows.
    pub emb_max_words: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            embed: TrainerConfig::default(),
            prune_vocab: true,
            emb_max_words: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::data(format!("bad config {}: {e}", path.display())))
    }

    /// One master seed fans out to the model, the trainer, and the embedding
    /// trainer.
    pub fn set_seed(&mut self, seed: u64) {
        self.model.seed = seed;
        self.train.seed = seed;
        self.embed.seed = seed;
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Resolves a required path up front so commands fail before any work
    /// starts.
    pub fn require(&self, field: &str) -> Result<PathBuf> {
        let value = match field {
            "general_emb" => &self.paths.general_emb,
            "domain_emb" => &self.paths.domain_emb,
            "train_data" => &self.paths.train_data,
            "test_data" => &self.paths.test_data,
            "embed_corpus" => &self.paths.embed_corpus,
            other => panic!("unknown path field {other}"),
        };
        let path = value.clone().ok_or_else(|| {
            Error::parameter(field, "required path missing from config (section [paths])")
        })?;
        if !path.exists() {
            return Err(Error::parameter(
                field,
                format!("path {} does not exist", path.display()),
            ));
        }
        Ok(path)
    }
}
