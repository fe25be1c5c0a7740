use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{late_fuse, EarlyStrategy, LateFusionRule, LateStrategy};
use crate::com::{ComConfig, DeepModel, Example};
use crate::corpus::CommitRecord;
use crate::error::{Error, Result};
use crate::eval::THRESHOLD;
use crate::features::{FeatureStats, HandCraftedVector};
use crate::nn::{load_checkpoint, save_checkpoint};
use crate::sim::ForestModel;
use crate::text::{encode_commit, TextShape, Vocab};
use crate::util::to_json;

/// Training-split artifacts every model input goes through: feature
/// statistics, vocabulary and text shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub stats: FeatureStats,
    pub vocab: Vocab,
    pub shape: TextShape,
}

/// A commit turned into model inputs by a [`Preprocessor`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    /// Training-split fingerprint of the preprocessor that produced this.
    pub fingerprint: String,
    pub raw: HandCraftedVector,
    pub example: Example,
}

impl Preprocessor {
    pub fn new(stats: FeatureStats, vocab: Vocab, shape: TextShape) -> Result<Self> {
        if stats.fingerprint != vocab.fingerprint {
            return Err(Error::Provenance(format!(
                "feature statistics ({}) and vocabulary ({}) come from different training splits",
                stats.fingerprint, vocab.fingerprint
            )));
        }
        Ok(Preprocessor { stats, vocab, shape })
    }

    pub fn fingerprint(&self) -> &str {
        &self.stats.fingerprint
    }

    /// Unlabeled commits get label 0; the label only matters for training.
    pub fn prepare(&self, commit: &CommitRecord, raw: HandCraftedVector) -> Result<Prepared> {
        let features = self.stats.split_and_normalize(&raw)?;
        let encoded = encode_commit(commit, &self.vocab, self.shape);
        Ok(Prepared {
            fingerprint: self.fingerprint().to_string(),
            raw,
            example: Example {
                encoded,
                features,
                label: commit.label.unwrap_or(0),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleScore {
    pub sim: f64,
    pub com: f64,
    pub early: Option<f64>,
    pub fused: f64,
    pub defective: bool,
}

/// Sim, Com and the chosen early-fused model combined by the chosen late
/// rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SimComBundle {
    pub sim: ForestModel,
    pub com: DeepModel,
    /// Present iff the chosen early strategy is not `None`.
    pub early_fused: Option<DeepModel>,
    pub rule: LateFusionRule,
    /// Training-split fingerprint every input must carry.
    pub fingerprint: String,
}

/// Scores fed to the late rule for a combination, in Sim, Com, early-fused
/// order. A `None` rule keeps the early-fused model alone, or Com when there
/// is none.
pub fn combination_members(rule: LateStrategy, sim: f64, com: f64, early: Option<f64>) -> Vec<f64> {
    match (rule, early) {
        (LateStrategy::None, Some(e)) => vec![e],
        (LateStrategy::None, None) => vec![com],
        (_, Some(e)) => vec![sim, com, e],
        (_, None) => vec![sim, com],
    }
}

impl SimComBundle {
    pub fn early_strategy(&self) -> EarlyStrategy {
        self.early_fused.as_ref().map_or(EarlyStrategy::None, DeepModel::strategy)
    }

    pub fn predict(&self, input: &Prepared) -> Result<BundleScore> {
        if input.fingerprint != self.fingerprint {
            return Err(Error::Provenance(format!(
                "input preprocessed with training split {}, bundle trained on {}",
                input.fingerprint, self.fingerprint
            )));
        }
        let sim = self.sim.predict(&input.raw.to_array())?;
        let com = self.com.predict(&input.example)?;
        let early = self.early_fused.as_ref().map(|m| m.predict(&input.example)).transpose()?;
        let fused = late_fuse(&self.rule, &combination_members(self.rule.strategy, sim, com, early))?;
        Ok(BundleScore {
            sim,
            com,
            early,
            fused,
            defective: fused > THRESHOLD,
        })
    }

    /// Writes every component next to a `bundle.json` manifest and returns the
    /// manifest path.
    pub fn save(&self, dir: impl AsRef<Path>, pre: &Preprocessor, info: &BundleInfo) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if pre.fingerprint() != self.fingerprint {
            return Err(Error::Provenance("preprocessor does not belong to this bundle".into()));
        }
        let write = |name: &str, body: String| -> Result<()> {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(p, e))
        };
        let early = self.early_strategy();
        let files = BundleFiles {
            sim: "sim_forest.txt".into(),
            com: "com.ckpt".into(),
            early: self.early_fused.as_ref().map(|_| format!("early_{}.ckpt", early.as_str().to_lowercase())),
            vocab: "vocab.txt".into(),
            stats: "feature_stats.json".into(),
        };
        write(&files.sim, self.sim.to_text())?;
        save_checkpoint(&self.com, dir.join(&files.com))?;
        if let (Some(m), Some(f)) = (&self.early_fused, &files.early) {
            save_checkpoint(m, dir.join(f))?;
        }
        pre.vocab.save(dir.join(&files.vocab))?;
        write(&files.stats, to_json(&pre.stats)?)?;
        let manifest = BundleManifest {
            format: BUNDLE_FORMAT.into(),
            fingerprint: self.fingerprint.clone(),
            early_strategy: early,
            late_rule: self.rule.clone(),
            com_config: info.com_config.clone(),
            vocab_size: pre.vocab.len(),
            shape: pre.shape,
            config_hash: info.config_hash.clone(),
            seed: info.seed,
            files,
        };
        let path = dir.join("bundle.json");
        write("bundle.json", to_json(&manifest)?)?;
        Ok(path)
    }

    /// Loads a bundle and its preprocessor from a `bundle.json` manifest.
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<(SimComBundle, Preprocessor, BundleManifest)> {
        let path = manifest_path.as_ref();
        let dir = path.parent().unwrap_or(Path::new("."));
        let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let m: BundleManifest = serde_json::from_str(&read(path)?).map_err(|e| Error::format("bundle manifest", e.to_string()))?;
        if m.format != BUNDLE_FORMAT {
            return Err(Error::format("bundle manifest", format!("unsupported format \"{}\"", m.format)));
        }
        let sim = ForestModel::from_text(&read(&dir.join(&m.files.sim))?)?;
        let mut com = DeepModel::new(&m.com_config, m.vocab_size, EarlyStrategy::None, 0);
        load_checkpoint(&mut com, dir.join(&m.files.com))?;
        let early_fused = match (&m.files.early, m.early_strategy) {
            (Some(f), s) if s != EarlyStrategy::None => {
                let mut e = DeepModel::new(&m.com_config, m.vocab_size, s, 0);
                load_checkpoint(&mut e, dir.join(f))?;
                Some(e)
            }
            (None, EarlyStrategy::None) => None,
            _ => return Err(Error::format("bundle manifest", "early strategy and early checkpoint disagree")),
        };
        let vocab = Vocab::load(dir.join(&m.files.vocab), m.fingerprint.clone())?;
        let stats: FeatureStats = serde_json::from_str(&read(&dir.join(&m.files.stats))?)
            .map_err(|e| Error::format("feature statistics", e.to_string()))?;
        if vocab.len() != m.vocab_size {
            return Err(Error::dim(m.vocab_size, vocab.len(), "bundle vocabulary"));
        }
        let pre = Preprocessor::new(stats, vocab, m.shape)?;
        if pre.fingerprint() != m.fingerprint {
            return Err(Error::Provenance("feature statistics do not match the bundle".into()));
        }
        let bundle = SimComBundle {
            sim,
            com,
            early_fused,
            rule: m.late_rule.clone(),
            fingerprint: m.fingerprint.clone(),
        };
        Ok((bundle, pre, m))
    }
}

pub const BUNDLE_FORMAT: &str = "simcom-bundle v1";

/// Run metadata stamped into a saved bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleInfo {
    pub com_config: ComConfig,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFiles {
    pub sim: String,
    pub com: String,
    pub early: Option<String>,
    pub vocab: String,
    pub stats: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub fingerprint: String,
    pub early_strategy: EarlyStrategy,
    pub late_rule: LateFusionRule,
    pub com_config: ComConfig,
    pub vocab_size: usize,
    pub shape: TextShape,
    pub config_hash: String,
    pub seed: u64,
    pub files: BundleFiles,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn members_follow_the_rule() {
        assert_eq!(combination_members(LateStrategy::None, 0.1, 0.2, Some(0.3)), vec![0.3]);
        assert_eq!(combination_members(LateStrategy::None, 0.1, 0.2, None), vec![0.2]);
        assert_eq!(combination_members(LateStrategy::SimpleAverage, 0.1, 0.2, None), vec![0.1, 0.2]);
        let r = LateFusionRule::new(LateStrategy::SimpleAverage);
        let s = late_fuse(&r, &combination_members(r.strategy, 0.9, 0.9, Some(0.9))).unwrap();
        assert!((s - 0.9).abs() < 1e-15);
        let s = late_fuse(&r, &combination_members(r.strategy, 0.4, 0.4, Some(0.4))).unwrap();
        assert!(s <= THRESHOLD);
    }
}
