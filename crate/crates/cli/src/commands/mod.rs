pub mod evaluate;
pub mod explain;
pub mod gen_data;
pub mod report;
pub mod train_explainer;
pub mod train_gnn;

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{usage, CliResult};
use crate::fsutil::{with_suffix, Root};

pub struct Ctx {
    pub root: Root,
    pub config: RunConfig,
}

impl Ctx {
    /// `explicit` if given, else `default_name` inside the configured output directory.
    pub fn out_path(&self, explicit: Option<&Path>, default_name: &str) -> PathBuf {
        match explicit {
            Some(p) => self.root.path(p),
            None => {
                let dir = self.config.output_dir.clone().unwrap_or_default();
                self.root.path(&dir.join(default_name))
            }
        }
    }

    pub fn data_path(&self, arg: Option<&Path>) -> CliResult<PathBuf> {
        arg.or(self.config.dataset.path.as_deref())
            .map(|p| self.root.path(p))
            .ok_or_else(|| usage("no dataset file given (use --data or dataset.path in the config)"))
    }

    pub fn seed(&self, arg: Option<u64>) -> CliResult<u64> {
        arg.or(self.config.seed)
            .ok_or_else(|| usage("no seed given (use --seed or seed in the config)"))
    }

    /// Records the resolved configuration beside `output`.
    pub fn snapshot(&self, output: &Path) -> CliResult<()> {
        self.config.snapshot(&with_suffix(output, ".config.toml"))
    }
}
