use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Domain, Task};
use crate::encoder::{Backend, TinyEncoder, TokenizerHandle};
use crate::error::{Error, Result};
use crate::evaluator::Predictor;
use crate::model::AspectModel;
use crate::transform::{TransformConfig, TransformKind};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// A trained model with everything needed to rebuild its inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub run_id: String,
    pub seed: u64,
    pub task: Task,
    pub transform: TransformKind,
    pub transform_config: TransformConfig,
    pub dataset: String,
    pub domain: Domain,
    pub backend: Backend,
    /// Epoch the weights come from; 0 means untrained.
    pub epoch: usize,
    pub dev_metric: Option<f64>,
    pub tokenizer: TokenizerHandle,
    pub model: AspectModel<TinyEncoder>,
}

impl Checkpoint {
    pub fn predictor(&self) -> Predictor<'_, TinyEncoder> {
        Predictor {
            model: &self.model,
            tokenizer: &self.tokenizer,
            transform: self.transform,
            transform_config: &self.transform_config,
        }
    }

    /// `<root>/<run-id>/<seed>/best`
    pub fn dir(root: &Path, run_id: &str, seed: u64) -> PathBuf {
        root.join(run_id).join(seed.to_string()).join("best")
    }

    /// Writes `checkpoint.json` into `dir`, creating it.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(CHECKPOINT_FILE);
        let text = serde_json::to_string(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Accepts the checkpoint file or the directory holding it.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(CHECKPOINT_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(file.display().to_string(), e.to_string()))
    }
}
