use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub artwork_id: String,
    /// Digest of the pixels; guards against two corpora reusing an id.
    pub content_digest: String,
    pub tap_plan_hash: String,
    pub weights_digest: String,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    #[serde(flatten)]
    key: CacheKey,
    vector: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    entries: Vec<Entry>,
}

/// Thread-safe representation cache. Reads are shared, inserts take the
/// write lock.
#[derive(Debug, Default)]
pub struct RepresentationCache {
    entries: RwLock<HashMap<CacheKey, Arc<Vec<f32>>>>,
}

impl RepresentationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &CacheKey) -> Option<Arc<Vec<f32>>> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: CacheKey, vector: Arc<Vec<f32>>) {
        self.entries.write().expect("cache lock").entry(key).or_insert(vector);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes a JSON sidecar with entries sorted by key.
    pub fn save(&self, path: &Path) -> Result<()> {
        let map = self.entries.read().expect("cache lock");
        let mut entries: Vec<Entry> = map
            .iter()
            .map(|(k, v)| Entry {
                key: k.clone(),
                vector: v.as_ref().clone(),
            })
            .collect();
        entries.sort_by(|a, b| a.key.cmp(&b.key));
        fs::write(path, serde_json::to_vec(&Sidecar { version: 1, entries })?)?;
        Ok(())
    }

    /// Loads a sidecar; a missing file yields an empty cache.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::new());
        }
        let sidecar: Sidecar = serde_json::from_slice(&fs::read(path)?)?;
        let entries = sidecar
            .entries
            .into_iter()
            .map(|e| (e.key, Arc::new(e.vector)))
            .collect();
        Ok(RepresentationCache {
            entries: RwLock::new(entries),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(id: &str) -> CacheKey {
        CacheKey {
            artwork_id: id.into(),
            content_digest: "c".into(),
            tap_plan_hash: "p".into(),
            weights_digest: "w".into(),
        }
    }

    #[test]
    fn sidecar_roundtrip_is_exact() {
        let cache = RepresentationCache::new();
        cache.insert(key("a"), Arc::new(vec![0.1, 1e-30, -3.25]));
        cache.insert(key("b"), Arc::new(vec![f32::MAX]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        cache.save(&path).unwrap();
        let back = RepresentationCache::load(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(*back.get(&key("a")).unwrap(), vec![0.1, 1e-30, -3.25]);
    }

    #[test]
    fn missing_sidecar_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(RepresentationCache::load(&dir.path().join("x.json")).unwrap().is_empty());
    }
}
