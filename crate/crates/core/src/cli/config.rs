use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{ingest_directory, ArtworkSet, AugmentationConfig, Role, DEFAULT_SIDE};
use crate::discriminator::TrainConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::extractor::{plan_taps, Backbone, TapPlan, DEFAULT_CHANNELS};
use crate::harness::ExperimentConfig;
use crate::simulator::BenchmarkConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub benchmark_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            benchmark_dir: PathBuf::from("benchmark"),
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    /// Weights file; when absent the reference network is generated from
    /// `channels`, `input_side` and `seed`.
    pub weights: Option<PathBuf>,
    pub channels: Vec<usize>,
    pub input_side: u32,
    pub seed: u64,
    /// Explicit tap stages; defaults to four evenly spaced stages.
    pub taps: Option<Vec<usize>>,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            weights: None,
            channels: DEFAULT_CHANNELS.to_vec(),
            input_side: DEFAULT_SIDE,
            seed: 0,
            taps: None,
        }
    }
}

impl BackboneConfig {
    pub fn reference(&self) -> Result<Backbone> {
        Backbone::reference(&self.channels, self.input_side, self.seed)
    }

    pub fn load(&self) -> Result<Backbone> {
        match &self.weights {
            Some(p) => Backbone::load(p),
            None => self.reference(),
        }
    }

    pub fn plan(&self, backbone: &Backbone) -> Result<TapPlan> {
        match &self.taps {
            Some(t) => TapPlan::custom(backbone.adapter(), t),
            None => plan_taps(backbone.adapter()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Worker threads for parallel audits; 0 uses every core.
    pub jobs: usize,
    pub execution: Execution,
}

/// A user corpus audited instead of the simulator benchmark.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Artist id to a directory of that artist's artworks.
    pub targets: BTreeMap<String, PathBuf>,
    /// Directories of public artworks, one per public artist.
    pub public_dirs: Vec<PathBuf>,
    /// JSON list of `{prompt, image}` responses from the suspicious model.
    pub responses: Option<PathBuf>,
    /// Known labels, needed only for experiments.
    pub ground_truth: BTreeMap<String, bool>,
}

impl CorpusConfig {
    pub fn load_targets(&self, side: u32) -> Result<BTreeMap<String, ArtworkSet>> {
        self.targets
            .iter()
            .map(|(a, dir)| Ok((a.clone(), ingest_directory(dir, a, Role::Target, side)?)))
            .collect()
    }

    pub fn load_public(&self, side: u32) -> Result<ArtworkSet> {
        let mut records = Vec::new();
        for dir in &self.public_dirs {
            let artist = dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| Error::InvalidConfig(format!("bad public dir {}", dir.display())))?;
            records.extend(ingest_directory(dir, &artist, Role::Public, side)?.records);
        }
        Ok(ArtworkSet::new(crate::dataset::PUBLIC_ARTIST, records))
    }
}

/// Every module's settings, one TOML section each.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub run: RunSection,
    pub backbone: BackboneConfig,
    pub simulator: BenchmarkConfig,
    pub augmentation: AugmentationConfig,
    pub train: TrainConfig,
    pub experiment: ExperimentConfig,
    pub corpus: Option<CorpusConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.augmentation.validate()?;
        self.train.validate()?;
        self.experiment.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
