use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::dataset::ArtworkRecord;
use crate::error::{Error, Result};
use crate::rng;

/// Black-box access to a text-to-image model.
pub trait SuspiciousModel: Sync {
    fn generate(&self, prompt: &str) -> Result<RgbImage>;
}

/// Produces a text prompt describing an artwork.
pub trait CaptionProvider: Sync {
    fn id(&self) -> &str;
    /// Must be deterministic per record.
    fn caption(&self, record: &ArtworkRecord) -> String;
}

/// `artwork by <artist>, composition <8 hex of the record id>`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateCaptions;

pub const TEMPLATE_PROVIDER: &str = "template";

impl CaptionProvider for TemplateCaptions {
    fn id(&self) -> &str {
        TEMPLATE_PROVIDER
    }

    fn caption(&self, record: &ArtworkRecord) -> String {
        let digest = rng::hex_digest(record.id.as_bytes());
        format!("artwork by {}, composition {}", record.artist_id, &digest[..8])
    }
}

pub fn caption_provider(id: &str) -> Result<Box<dyn CaptionProvider>> {
    match id {
        TEMPLATE_PROVIDER => Ok(Box::new(TemplateCaptions)),
        other => Err(Error::InvalidConfig(format!("unknown caption provider {other:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedResponse {
    pub prompt: String,
    /// Relative paths resolve against the log file's directory.
    pub image: PathBuf,
}

/// Replays responses collected offline from a real model.
#[derive(Debug, Clone)]
pub struct ResponseLog {
    responses: HashMap<String, PathBuf>,
}

impl ResponseLog {
    pub fn new(entries: impl IntoIterator<Item = LoggedResponse>) -> Self {
        ResponseLog {
            responses: entries.into_iter().map(|e| (e.prompt, e.image)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let entries: Vec<LoggedResponse> = serde_json::from_slice(&fs::read(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(ResponseLog::new(entries.into_iter().map(|mut e| {
            if e.image.is_relative() {
                e.image = base.join(&e.image);
            }
            e
        })))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl SuspiciousModel for ResponseLog {
    fn generate(&self, prompt: &str) -> Result<RgbImage> {
        let path = self
            .responses
            .get(prompt)
            .ok_or_else(|| Error::InvalidConfig(format!("no logged response for prompt {prompt:?}")))?;
        let img = image::open(path).map_err(|e| Error::DecodeFailure {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        Ok(img.to_rgb8())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_util::solid;
    use crate::dataset::Role;

    #[test]
    fn template_is_deterministic_and_names_artist() {
        let r = ArtworkRecord::new("a/0001", "a", Role::Target, solid(8, [1, 2, 3]));
        let c = TemplateCaptions.caption(&r);
        assert!(c.starts_with("artwork by a, composition "));
        assert_eq!(c, TemplateCaptions.caption(&r.clone()));
        let other = ArtworkRecord::new("a/0002", "a", Role::Target, solid(8, [1, 2, 3]));
        assert_ne!(c, TemplateCaptions.caption(&other));
        assert!(caption_provider("blip").is_err());
    }

    #[test]
    fn response_log_replays_images() {
        let dir = tempfile::tempdir().unwrap();
        solid(16, [9, 8, 7]).save(dir.path().join("x.png")).unwrap();
        let log = vec![LoggedResponse {
            prompt: "artwork by a, composition 1".into(),
            image: "x.png".into(),
        }];
        let p = dir.path().join("log.json");
        fs::write(&p, serde_json::to_vec(&log).unwrap()).unwrap();
        let model = ResponseLog::load(&p).unwrap();
        assert_eq!(model.len(), 1);
        assert_eq!(model.generate("artwork by a, composition 1").unwrap().get_pixel(0, 0).0, [9, 8, 7]);
        assert!(model.generate("something else").is_err());
    }
}
