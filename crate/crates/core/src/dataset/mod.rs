//! Artwork ingestion, role tagging, train/validation splits and negative
//! sampling.

mod augment;

pub use augment::{
    adjust_brightness, adjust_contrast, adjust_hue, adjust_saturation, augment, cutout,
    flip_horizontal, gaussian_noise, impulse_noise, random_crop, AugmentationConfig,
};

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::imageops::FilterType;
use image::RgbImage;
use log::warn;
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Side length images are resized to on ingestion.
pub const DEFAULT_SIDE: u32 = 224;
/// Smallest side accepted by the ingestion policy.
pub const MIN_SIDE: u32 = 64;
/// Reserved artist id for pools mixing several artists.
pub const PUBLIC_ARTIST: &str = "public";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Public,
    Target,
    Generated,
    Augmented,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resize {
    pub from: [u32; 2],
    pub to: [u32; 2],
}

#[derive(Debug, Clone)]
pub struct ArtworkRecord {
    pub id: String,
    pub artist_id: String,
    pub role: Role,
    pub pixels: Arc<RgbImage>,
    pub source_path: Option<PathBuf>,
    pub caption: Option<String>,
    /// Set for `Role::Augmented`: id of the target record it came from.
    pub parent_id: Option<String>,
    pub resize: Option<Resize>,
}

impl ArtworkRecord {
    pub fn new(id: impl Into<String>, artist_id: impl Into<String>, role: Role, pixels: RgbImage) -> Self {
        ArtworkRecord {
            id: id.into(),
            artist_id: artist_id.into(),
            role,
            pixels: Arc::new(pixels),
            source_path: None,
            caption: None,
            parent_id: None,
            resize: None,
        }
    }

    pub fn side(&self) -> (u32, u32) {
        self.pixels.dimensions()
    }
}

#[derive(Debug, Clone)]
pub struct ArtworkSet {
    pub artist_id: String,
    pub records: Vec<ArtworkRecord>,
    pub split_seed: u64,
}

/// One line of the JSON set manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub artist_id: String,
    pub role: Role,
    pub parent_id: Option<String>,
    pub source_path: Option<PathBuf>,
    pub resize: Option<Resize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetManifest {
    pub artist_id: String,
    pub split_seed: u64,
    pub records: Vec<ManifestEntry>,
}

impl ArtworkSet {
    pub fn new(artist_id: impl Into<String>, records: Vec<ArtworkRecord>) -> Self {
        ArtworkSet {
            artist_id: artist_id.into(),
            records,
            split_seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.id.as_str()).collect()
    }

    /// Checks the set invariants: shared artist id (unless a public pool),
    /// unique ids, and resolvable parents for augmented records.
    pub fn validate(&self, parents: Option<&ArtworkSet>) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate artwork id {}", r.id)));
            }
            if self.artist_id != PUBLIC_ARTIST && r.artist_id != self.artist_id {
                return Err(Error::InvalidConfig(format!(
                    "record {} belongs to {}, set is {}",
                    r.id, r.artist_id, self.artist_id
                )));
            }
            if r.role == Role::Augmented {
                let parent = r.parent_id.as_deref().ok_or_else(|| {
                    Error::InvalidConfig(format!("augmented record {} has no parent", r.id))
                })?;
                if let Some(p) = parents {
                    let ok = p
                        .records
                        .iter()
                        .any(|t| t.id == parent && t.role == Role::Target);
                    if !ok {
                        return Err(Error::InvalidConfig(format!(
                            "parent {parent} of {} is not a target record",
                            r.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> SetManifest {
        SetManifest {
            artist_id: self.artist_id.clone(),
            split_seed: self.split_seed,
            records: self
                .records
                .iter()
                .map(|r| ManifestEntry {
                    id: r.id.clone(),
                    artist_id: r.artist_id.clone(),
                    role: r.role,
                    parent_id: r.parent_id.clone(),
                    source_path: r.source_path.clone(),
                    resize: r.resize,
                })
                .collect(),
        }
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.manifest())?;
        fs::write(path, json)?;
        Ok(())
    }

    /// Concatenates sets into a pool under [`PUBLIC_ARTIST`].
    pub fn pool<'a>(sets: impl IntoIterator<Item = &'a ArtworkSet>) -> ArtworkSet {
        let records = sets.into_iter().flat_map(|s| s.records.iter().cloned()).collect();
        ArtworkSet::new(PUBLIC_ARTIST, records)
    }
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

/// Square bilinear resize; a no-op when the image already has the target side.
pub fn resize_square(img: &RgbImage, side: u32) -> RgbImage {
    if img.dimensions() == (side, side) {
        return img.clone();
    }
    image::imageops::resize(img, side, side, FilterType::Triangle)
}

/// Loads every PNG/JPEG in `path`, ordered by file name, resized to `side`.
///
/// Undecodable files are logged and skipped as long as one image loads.
pub fn ingest_directory(path: &Path, artist_id: &str, role: Role, side: u32) -> Result<ArtworkSet> {
    if side < MIN_SIDE {
        return Err(Error::InvalidConfig(format!("ingestion side {side} < {MIN_SIDE}")));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let mut records = Vec::with_capacity(files.len());
    let mut first_failure = None;
    for file in files {
        match image::open(&file) {
            Ok(img) => {
                let img = img.to_rgb8();
                let from = [img.width(), img.height()];
                let pixels = resize_square(&img, side);
                let stem = file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let mut rec = ArtworkRecord::new(format!("{artist_id}/{stem}"), artist_id, role, pixels);
                rec.source_path = Some(file.clone());
                rec.resize = Some(Resize {
                    from,
                    to: [side, side],
                });
                records.push(rec);
            }
            Err(e) => {
                warn!("skipping {}: {e}", file.display());
                first_failure.get_or_insert(Error::DecodeFailure {
                    path: file.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    if records.is_empty() {
        return Err(first_failure.unwrap_or_else(|| Error::EmptyDirectory(path.to_path_buf())));
    }
    Ok(ArtworkSet::new(artist_id, records))
}

/// Seeded disjoint partition; the first part holds `floor(ratio * n)` records.
pub fn split_train_valid(set: &ArtworkSet, ratio: f64, seed: u64) -> Result<(ArtworkSet, ArtworkSet)> {
    if set.len() < 5 {
        return Err(Error::TooFewRecords {
            needed: 5,
            got: set.len(),
        });
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n = set.len();
    // guards against 0.57 * 100 = 56.999...
    let n_first = ((ratio * n as f64) + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut first: Vec<usize> = order[..n_first].to_vec();
    let mut second: Vec<usize> = order[n_first..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    let pick = |idx: &[usize]| ArtworkSet {
        artist_id: set.artist_id.clone(),
        records: idx.iter().map(|&i| set.records[i].clone()).collect(),
        split_seed: seed,
    };
    Ok((pick(&first), pick(&second)))
}

/// Draws `|target|` records uniformly without replacement from the pool,
/// never selecting the target artist.
pub fn sample_negatives(target: &ArtworkSet, pool: &ArtworkSet, seed: u64) -> Result<ArtworkSet> {
    sample_negatives_n(&target.artist_id, target.len(), pool, seed)
}

pub(crate) fn sample_negatives_n(
    target_artist: &str,
    count: usize,
    pool: &ArtworkSet,
    seed: u64,
) -> Result<ArtworkSet> {
    let eligible: Vec<&ArtworkRecord> = pool
        .records
        .iter()
        .filter(|r| r.artist_id != target_artist)
        .collect();
    if eligible.len() < count {
        return Err(Error::InsufficientPool {
            needed: count,
            available: eligible.len(),
        });
    }
    let picked = index::sample(&mut rng::seeded(seed), eligible.len(), count);
    let records = picked.iter().map(|i| eligible[i].clone()).collect();
    Ok(ArtworkSet {
        artist_id: PUBLIC_ARTIST.to_string(),
        records,
        split_seed: seed,
    })
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    pub fn solid(side: u32, rgb: [u8; 3]) -> RgbImage {
        RgbImage::from_pixel(side, side, image::Rgb(rgb))
    }

    pub fn synthetic_set(artist: &str, n: usize, role: Role) -> ArtworkSet {
        let records = (0..n)
            .map(|i| {
                let v = (i * 7 % 256) as u8;
                ArtworkRecord::new(format!("{artist}/{i:03}"), artist, role, solid(64, [v, 255 - v, 128]))
            })
            .collect();
        ArtworkSet::new(artist, records)
    }
}

#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use std::collections::BTreeSet;

    fn write_pngs(dir: &Path, n: usize) {
        for i in 0..n {
            let img = solid(80, [i as u8 * 10, 40, 200]);
            img.save(dir.join(format!("img_{i:02}.png"))).unwrap();
        }
    }

    #[test]
    fn ingest_counts_and_orders() {
        let dir = tempfile::tempdir().unwrap();
        write_pngs(dir.path(), 20);
        fs::write(dir.path().join("notes.txt"), "not an image").unwrap();
        let set = ingest_directory(dir.path(), "artist_a", Role::Target, 64).unwrap();
        assert_eq!(set.len(), 20);
        assert!(set.records.iter().all(|r| r.role == Role::Target && r.side() == (64, 64)));
        let ids = set.ids();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert_eq!(set.records[0].resize.unwrap().from, [80, 80]);
    }

    #[test]
    fn ingest_empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let err = ingest_directory(dir.path(), "a", Role::Target, 64).unwrap_err();
        assert!(matches!(err, Error::EmptyDirectory(_)));
    }

    #[test]
    fn ingest_skips_one_corrupt_file() {
        let dir = tempfile::tempdir().unwrap();
        write_pngs(dir.path(), 20);
        // truncate one file to make it undecodable
        let victim = dir.path().join("img_07.png");
        let bytes = fs::read(&victim).unwrap();
        fs::write(&victim, &bytes[..bytes.len() / 3]).unwrap();
        let listed = fs::read_dir(dir.path()).unwrap().count();
        let set = ingest_directory(dir.path(), "a", Role::Target, 64).unwrap();
        assert_eq!(set.len(), listed - 1);
        assert!(!set.ids().contains(&"a/img_07"));
    }

    #[test]
    fn ingest_all_corrupt_fails_with_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.png"), b"garbage").unwrap();
        let err = ingest_directory(dir.path(), "a", Role::Target, 64).unwrap_err();
        assert!(matches!(err, Error::DecodeFailure { .. }));
    }

    #[test]
    fn split_eight_two() {
        let set = synthetic_set("a", 20, Role::Target);
        let (train, valid) = split_train_valid(&set, 0.8, 1).unwrap();
        assert_eq!((train.len(), valid.len()), (16, 4));
        let again = split_train_valid(&set, 0.8, 1).unwrap();
        assert_eq!(train.ids(), again.0.ids());
        let other = split_train_valid(&set, 0.8, 2).unwrap();
        assert_ne!(train.ids(), other.0.ids());
    }

    #[test]
    fn split_rejects_small_sets() {
        let set = synthetic_set("a", 4, Role::Target);
        assert!(matches!(
            split_train_valid(&set, 0.8, 1),
            Err(Error::TooFewRecords { .. })
        ));
    }

    #[test]
    fn negatives_exclude_target_artist() {
        let target = synthetic_set("t", 16, Role::Target);
        let mut pool = ArtworkSet::pool([&synthetic_set("t", 30, Role::Target)]);
        for k in 0..10 {
            pool.records
                .extend(synthetic_set(&format!("o{k}"), 10, Role::Public).records);
        }
        let neg = sample_negatives(&target, &pool, 3).unwrap();
        assert_eq!(neg.len(), 16);
        assert!(neg.records.iter().all(|r| r.artist_id != "t"));
        let again = sample_negatives(&target, &pool, 3).unwrap();
        assert_eq!(neg.ids(), again.ids());
        let unique: BTreeSet<_> = neg.ids().into_iter().collect();
        assert_eq!(unique.len(), 16);
    }

    #[test]
    fn negatives_pigeonhole() {
        let target = synthetic_set("t", 16, Role::Target);
        let pool = ArtworkSet::pool([&synthetic_set("o", 10, Role::Public)]);
        assert!(matches!(
            sample_negatives(&target, &pool, 1),
            Err(Error::InsufficientPool { needed: 16, available: 10 })
        ));
    }

    #[test]
    fn manifest_lists_records() {
        let set = synthetic_set("a", 3, Role::Target);
        let m = set.manifest();
        assert_eq!(m.records.len(), 3);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"role\":\"target\""));
    }

    #[test]
    fn validate_catches_duplicates() {
        let mut set = synthetic_set("a", 3, Role::Target);
        set.records[2].id = set.records[0].id.clone();
        assert!(set.validate(None).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn split_is_a_partition(n in 5usize..60, ratio in 0.05f64..0.95, seed in any::<u64>()) {
                let set = synthetic_set("a", n, Role::Target);
                let (a, b) = split_train_valid(&set, ratio, seed).unwrap();
                let sa: BTreeSet<_> = a.ids().into_iter().collect();
                let sb: BTreeSet<_> = b.ids().into_iter().collect();
                prop_assert!(sa.is_disjoint(&sb));
                let all: BTreeSet<_> = set.ids().into_iter().collect();
                let union: BTreeSet<_> = sa.union(&sb).cloned().collect();
                prop_assert_eq!(union, all);
                prop_assert_eq!(a.len(), (ratio * n as f64 + 1e-9).floor() as usize);
            }

            #[test]
            fn negatives_never_target(n in 1usize..20, seed in any::<u64>()) {
                let target = synthetic_set("t", n, Role::Target);
                let mut pool = synthetic_set("t", 20, Role::Target);
                pool.artist_id = PUBLIC_ARTIST.into();
                pool.records.extend(synthetic_set("o", 25, Role::Public).records);
                let neg = sample_negatives(&target, &pool, seed).unwrap();
                prop_assert_eq!(neg.len(), n);
                prop_assert!(neg.records.iter().all(|r| r.artist_id != "t"));
            }
        }
    }
}
