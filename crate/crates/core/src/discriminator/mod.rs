//! Per-artist regression discriminator.
//!
//! A small MLP maps a style representation to a confidence score in
//! (-1, 1). Training minimizes a regression term on labeled examples plus a
//! distortion-calibration term that pulls the scores of a public artwork
//! and the suspicious model's mimic of it together.

mod network;
mod train;

pub use network::{Dense, Gradients, Mlp};
pub use train::{train, train_from_reps, Adam, EarlyStopping, StopAction, TrainConfig, TrainReport};

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractor::StyleRepresentation;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub representation: StyleRepresentation,
    /// +1.0 for the discriminator's artist, -1.0 otherwise.
    pub target: f64,
}

impl LabeledExample {
    pub fn positive(representation: StyleRepresentation) -> Self {
        LabeledExample {
            representation,
            target: 1.0,
        }
    }

    pub fn negative(representation: StyleRepresentation) -> Self {
        LabeledExample {
            representation,
            target: -1.0,
        }
    }
}

/// A public artwork and the suspicious model's output for its caption.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionPair {
    pub public_rep: StyleRepresentation,
    pub generated_rep: StyleRepresentation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub artist_id: String,
    pub tap_plan_hash: String,
    /// Per-feature standardization fitted on the training inputs.
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub network: Mlp,
    pub train_config: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
struct DiscriminatorFile {
    format_version: u32,
    #[serde(flatten)]
    discriminator: Discriminator,
}

impl Discriminator {
    /// Identity standardization around a given network.
    pub fn from_network(artist_id: &str, tap_plan_hash: &str, network: Mlp) -> Self {
        let d = network.input_dim();
        Discriminator {
            artist_id: artist_id.to_string(),
            tap_plan_hash: tap_plan_hash.to_string(),
            input_mean: vec![0.0; d],
            input_scale: vec![1.0; d],
            network,
            train_config: None,
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.network.layer_sizes()
    }

    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    fn check(&self, rep: &StyleRepresentation) -> Result<()> {
        if rep.tap_plan_hash != self.tap_plan_hash {
            return Err(Error::PlanMismatch {
                expected: self.tap_plan_hash.clone(),
                got: rep.tap_plan_hash.clone(),
            });
        }
        if rep.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                got: rep.len(),
            });
        }
        Ok(())
    }

    /// Standardized input rows.
    pub(crate) fn matrix<'a>(&self, reps: impl ExactSizeIterator<Item = &'a StyleRepresentation>) -> Result<Array2<f64>> {
        let n = reps.len();
        let d = self.input_dim();
        let mut x = Array2::<f64>::zeros((n, d));
        for (i, rep) in reps.enumerate() {
            self.check(rep)?;
            let mut row = x.row_mut(i);
            for (j, v) in rep.vector.iter().enumerate() {
                row[j] = (*v as f64 - self.input_mean[j]) / self.input_scale[j];
            }
        }
        Ok(x)
    }

    pub fn score(&self, rep: &StyleRepresentation) -> Result<f64> {
        Ok(self.score_batch(std::slice::from_ref(rep))?[0])
    }

    pub fn score_batch(&self, reps: &[StyleRepresentation]) -> Result<Vec<f64>> {
        if reps.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.matrix(reps.iter())?;
        Ok(self.network.forward(&x).to_vec())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = DiscriminatorFile {
            format_version: FORMAT_VERSION,
            discriminator: self.clone(),
        };
        fs::write(path, serde_json::to_vec_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: DiscriminatorFile = serde_json::from_slice(&fs::read(path)?)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "discriminator format {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        file.discriminator.network.validate()?;
        Ok(file.discriminator)
    }
}

/// Regression term over `batch` plus distortion term over `pairs`, each
/// averaged on its own.
pub fn loss(d: &Discriminator, batch: &[LabeledExample], pairs: &[DistortionPair]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::TooFewRecords { needed: 1, got: 0 });
    }
    let x = d.matrix(batch.iter().map(|e| &e.representation))?;
    let y = Array1::from_iter(batch.iter().map(|e| e.target));
    let (g, p) = if pairs.is_empty() {
        (None, None)
    } else {
        (
            Some(d.matrix(pairs.iter().map(|p| &p.generated_rep))?),
            Some(d.matrix(pairs.iter().map(|p| &p.public_rep))?),
        )
    };
    Ok(d.network.loss(&x, &y, g.as_ref(), p.as_ref()))
}
