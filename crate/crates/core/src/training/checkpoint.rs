use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use crate::config::ExperimentConfig;
use crate::data::CassetteCatalog;
use crate::error::{Error, Result};
use crate::model::{Model, ParamStore};

pub const FORMAT: &str = "hds-checkpoint/1";

/// Everything needed to resume training or evaluate. The per-epoch random
/// stream is derived from `(seed, epoch)`, so `epoch` is the RNG state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub seed: u64,
    pub catalog: CassetteCatalog,
    pub times: Vec<f64>,
    pub scale: [f64; 4],
    pub train_ids: Vec<String>,
    pub params: ParamStore,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?;
        let c: Self = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if c.format != FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format `{}`", c.format)));
        }
        Ok(c)
    }

    /// Rebuild the model this checkpoint was trained with.
    pub fn model(&self) -> Result<Model> {
        let m = Model::new(&self.config, self.catalog.clone(), self.times.clone(), self.scale)?;
        self.params.check_shapes(&m.param_shapes()?)?;
        Ok(m)
    }

    /// Refuse to resume under a different configuration.
    pub fn check_config(&self, cfg: &ExperimentConfig) -> Result<()> {
        if self.config_hash != cfg.hash() {
            return Err(Error::Checkpoint("checkpoint was written under a different configuration".into()));
        }
        Ok(())
    }
}
