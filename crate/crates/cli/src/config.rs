//! Declarative run configuration with command-line overrides.
//!
//! ```toml
//! seed = 0
//! output_dir = "runs/ba2"
//!
//! [dataset]
//! generator = "ba2motifs"
//! count = 1000
//! split = "standard"
//!
//! [gnn]
//! layer_kind = "gin"
//! num_layers = 3
//!
//! [[explainers]]
//! family = "maskgen"
//! epochs = 30
//! constraint = { constraint = "variational", prior = 0.3, weight = 0.4 }
//!
//! [eval]
//! k = 6
//! max_edges = 20
//! workers = 1
//! ```

use std::path::{Path, PathBuf};

use genexp::explainers::{ExplainerConfig, Family};
use genexp::graphdata::SplitPlan;
use genexp::GnnConfig;
use serde::{Deserialize, Serialize};

use crate::error::{usage, CliResult};
use crate::fsutil::{atomic_write, read_text};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for training runs when no `--seed` is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Directory for outputs whose path is not given explicitly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSpec,
    pub gnn: GnnConfig,
    pub explainers: Vec<ExplainerConfig>,
    pub eval: EvalSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub split: SplitKind,
    /// Existing dataset file, used instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    /// 80/10/10 train/val/test.
    #[default]
    Standard,
    /// 10% unseen held out, the rest split 80/10/10.
    SeenUnseen,
}

impl SplitKind {
    pub fn plan(self) -> SplitPlan {
        match self {
            SplitKind::Standard => SplitPlan::STANDARD,
            SplitKind::SeenUnseen => SplitPlan::SEEN_UNSEEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    pub k: usize,
    pub max_edges: usize,
    pub workers: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            k: 6,
            max_edges: genexp::eval::DEFAULT_MAX_EDGES,
            workers: 1,
        }
    }
}

/// Supported synthetic generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Ba2Motifs,
    BaMultiShapes,
}

impl Generator {
    pub fn parse(name: &str) -> CliResult<Self> {
        match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "ba2motifs" | "ba-2motifs" => Ok(Generator::Ba2Motifs),
            "ba-multishapes" | "bamultishapes" => Ok(Generator::BaMultiShapes),
            other => Err(usage(format!("unknown dataset generator {other:?} (expected ba2motifs or ba-multishapes)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Generator::Ba2Motifs => "ba2motifs",
            Generator::BaMultiShapes => "ba-multishapes",
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_text(path)?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if let Some(g) = &self.dataset.generator {
            Generator::parse(g)?;
        }
        if self.dataset.count == Some(0) {
            return Err(usage("dataset count must be positive"));
        }
        self.gnn.validate()?;
        for e in &self.explainers {
            e.validate()?;
        }
        if self.eval.k < 1 || self.eval.workers < 1 {
            return Err(usage("eval.k and eval.workers must be >= 1"));
        }
        Ok(())
    }

    /// The configured explainer of `family`, or that family's defaults.
    pub fn explainer(&self, family: Family) -> ExplainerConfig {
        self.explainers
            .iter()
            .find(|e| e.family == family)
            .cloned()
            .unwrap_or_else(|| ExplainerConfig::for_family(family))
    }

    /// Writes the resolved configuration next to a run's outputs.
    pub fn snapshot(&self, path: &Path) -> CliResult<()> {
        let text = toml::to_string(self).map_err(|e| usage(format!("cannot serialize config: {e}")))?;
        atomic_write(path, text.as_bytes())
    }
}
