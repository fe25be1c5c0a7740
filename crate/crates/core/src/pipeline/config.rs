use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::com::{ComConfig, BATCH_GRID, LR_GRID};
use crate::corpus::{SplitRatios, SynthSpec};
use crate::error::{Error, Result};
use crate::explain::ExplainConfig;
use crate::fusion::EarlyStrategy;
use crate::sim::ForestConfig;
use crate::util::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Chronological,
    Kfold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub mode: SplitMode,
    /// Chronological mode only.
    pub ratios: SplitRatios,
    /// Fold mode only; every fold is run.
    pub k: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            mode: SplitMode::Chronological,
            ratios: SplitRatios::default(),
            k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Early strategies to train; the `None` row of the sweep is always run.
    pub early: Vec<EarlyStrategy>,
    /// Search learning rate and batch size for the content model before
    /// training; the winner is reused for the early-fused models.
    pub grid_search: bool,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            early: EarlyStrategy::ALL[..4].to_vec(),
            grid_search: false,
            learning_rates: LR_GRID.to_vec(),
            batch_sizes: BATCH_GRID.to_vec(),
        }
    }
}

/// Everything a pipeline run depends on. An empty TOML document gives the
/// defaults: a synthetic corpus, chronological 75/5/20 split, full-size
/// models and every early strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// JSON-lines commit stream; when absent a corpus is generated from
    /// `synth`.
    pub corpus: Option<PathBuf>,
    pub synth: SynthSpec,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub split: SplitConfig,
    pub forest: ForestConfig,
    pub com: ComConfig,
    pub sweep: SweepConfig,
    /// Fractions of the largest commits to drop, one full run each. Empty
    /// runs once on the whole corpus.
    pub drop_rates: Vec<f64>,
    /// Groups for the sampled significance tests.
    pub significance_groups: usize,
    pub explain: ExplainConfig,
    /// Worker threads; results do not depend on it.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            synth: SynthSpec::default(),
            out_dir: PathBuf::from("simcom-out"),
            seed: 42,
            split: SplitConfig::default(),
            forest: ForestConfig::default(),
            com: ComConfig::default(),
            sweep: SweepConfig::default(),
            drop_rates: Vec::new(),
            significance_groups: 10,
            explain: ExplainConfig::default(),
            threads: None,
        }
    }
}

impl RunConfig {
    /// Desk-scale models, used by tests and quick experiments.
    pub fn micro() -> Self {
        RunConfig {
            com: ComConfig::micro(),
            forest: ForestConfig {
                n_trees: 100,
                ..ForestConfig::default()
            },
            ..RunConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text)
    }

    /// Hash of everything that can change results. The output directory and
    /// thread count are left out so relocated or differently threaded reruns
    /// share a hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.threads = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        sha256_hex(json.as_bytes())[..16].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if let Some(r) = self.drop_rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return bad(format!("drop rate {r} outside [0, 1)"));
        }
        if self.split.mode == SplitMode::Kfold && self.split.k < 2 {
            return bad(format!("k-fold needs k >= 2, got {}", self.split.k));
        }
        if self.significance_groups < 2 {
            return bad("significance_groups must be at least 2".into());
        }
        if self.sweep.early.contains(&EarlyStrategy::None) {
            return bad("sweep.early lists trained strategies; None is always included".into());
        }
        if self.forest.n_trees == 0 {
            return bad("forest needs at least one tree".into());
        }
        Ok(())
    }
}
