use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no decodable images in {0}")]
    EmptyDirectory(PathBuf),

    #[error("failed to decode {path}: {reason}")]
    DecodeFailure { path: PathBuf, reason: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("too few records: need at least {needed}, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("negative pool too small: need {needed} records, {available} eligible")]
    InsufficientPool { needed: usize, available: usize },

    #[error("backbone has {0} stages, at least 4 are required")]
    TooFewStages(usize),

    #[error("backbone weights unavailable: {0}")]
    WeightsUnavailable(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("tap plan mismatch: discriminator built for {expected}, representation from {got}")]
    PlanMismatch { expected: String, got: String },

    #[error("degenerate training data: {0}")]
    Degenerate(String),

    #[error("too few scores for a t-test: n = {0}")]
    TooFewScores(usize),

    #[error("invalid benchmark counts: {0}")]
    InvalidCounts(String),

    #[error("degenerate ground truth: {0}")]
    DegenerateGroundTruth(String),

    #[error("unknown artist {0}")]
    UnknownArtist(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("artwork {id}: {source}")]
    Artwork {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, unwrapping stage and artwork labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Artwork { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
