use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{render_original, PiracyConfig, SimulatedModel, StyleFamily};
use crate::dataset::{ingest_directory, resize_square, ArtworkRecord, ArtworkSet, Role, DEFAULT_SIDE, PUBLIC_ARTIST};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::harness::SuspiciousModel;
use crate::rng;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub n_artists: usize,
    pub n_pirated: usize,
    pub per_artist: usize,
    /// Public (pretraining) families and images per family.
    pub n_public: usize,
    pub public_per_family: usize,
    /// Example model outputs written per artist.
    pub mimics_per_artist: usize,
    pub fidelity: f64,
    pub distortion_sigma: f64,
    pub side: u32,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            n_artists: 10,
            n_pirated: 5,
            per_artist: 20,
            n_public: 5,
            public_per_family: 20,
            mimics_per_artist: 20,
            fidelity: 0.9,
            distortion_sigma: 0.1,
            side: DEFAULT_SIDE,
            seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pirated < 1 || self.n_pirated > self.n_artists {
            return Err(Error::InvalidCounts(format!(
                "n_pirated {} must be in 1..={}",
                self.n_pirated, self.n_artists
            )));
        }
        if self.per_artist < 10 {
            return Err(Error::InvalidCounts(format!("per_artist {} < 10", self.per_artist)));
        }
        if self.n_public < 1 || self.public_per_family < 1 {
            return Err(Error::InvalidCounts("public pool is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.fidelity) || !(self.distortion_sigma >= 0.0) {
            return Err(Error::InvalidConfig("fidelity/distortion_sigma out of range".into()));
        }
        if self.side < crate::dataset::MIN_SIDE {
            return Err(Error::InvalidConfig(format!("side {} too small", self.side)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtistEntry {
    pub artist_id: String,
    /// Ground truth: the suspicious model was fine-tuned on this artist.
    pub pirated: bool,
    pub originals: Vec<FileEntry>,
    pub mimics: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub id: String,
    pub path: PathBuf,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub format_version: u32,
    pub config: BenchmarkConfig,
    pub piracy: PiracyConfig,
    pub families: Vec<StyleFamily>,
    pub public_families: Vec<String>,
    pub artists: Vec<ArtistEntry>,
    pub public: Vec<FileEntry>,
}

impl BenchmarkManifest {
    pub fn pirated(&self) -> BTreeSet<String> {
        self.artists.iter().filter(|a| a.pirated).map(|a| a.artist_id.clone()).collect()
    }

    pub fn ground_truth(&self) -> BTreeMap<String, bool> {
        self.artists.iter().map(|a| (a.artist_id.clone(), a.pirated)).collect()
    }

    pub fn model(&self) -> Result<SimulatedModel> {
        SimulatedModel::new(self.families.iter().cloned(), self.piracy.clone(), self.config.side)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: BenchmarkManifest = serde_json::from_slice(&fs::read(path)?)?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::InvalidConfig(format!("manifest version {}", m.format_version)));
        }
        Ok(m)
    }
}

/// A benchmark held in memory: manifest plus decoded images.
#[derive(Debug, Clone)]
pub struct LoadedBenchmark {
    pub manifest: BenchmarkManifest,
    pub originals: BTreeMap<String, ArtworkSet>,
    /// All public families pooled under the public artist id.
    pub public: ArtworkSet,
    pub mimics: BTreeMap<String, ArtworkSet>,
}

impl LoadedBenchmark {
    pub fn model(&self) -> Result<SimulatedModel> {
        self.manifest.model()
    }

    pub fn artist_ids(&self) -> Vec<String> {
        self.manifest.artists.iter().map(|a| a.artist_id.clone()).collect()
    }

    /// Writes images under `dir` and returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let write_set = |set: &ArtworkSet| -> Result<()> {
            for r in &set.records {
                let p = dir.join(r.source_path.as_ref().expect("benchmark records carry paths"));
                if let Some(parent) = p.parent() {
                    fs::create_dir_all(parent)?;
                }
                r.pixels.save(&p)?;
            }
            Ok(())
        };
        for set in self.originals.values().chain(self.mimics.values()) {
            write_set(set)?;
        }
        write_set(&self.public)?;
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_vec_pretty(&self.manifest)?)?;
        Ok(path)
    }

    /// Reads a benchmark written by [`LoadedBenchmark::write`].
    pub fn read(manifest_path: &Path) -> Result<Self> {
        let manifest = BenchmarkManifest::load(manifest_path)?;
        let root = manifest_path.parent().unwrap_or(Path::new("."));
        let side = manifest.config.side;
        let mut originals = BTreeMap::new();
        let mut mimics = BTreeMap::new();
        for a in &manifest.artists {
            let dir = root.join("originals").join(&a.artist_id);
            originals.insert(a.artist_id.clone(), ingest_directory(&dir, &a.artist_id, Role::Target, side)?);
            let dir = root.join("mimics").join(&a.artist_id);
            if dir.is_dir() {
                let mut set = ingest_directory(&dir, &a.artist_id, Role::Generated, side)?;
                for (r, e) in set.records.iter_mut().zip(&a.mimics) {
                    r.caption = e.prompt.clone();
                }
                mimics.insert(a.artist_id.clone(), set);
            }
        }
        let mut public = Vec::new();
        for f in &manifest.public_families {
            public.extend(ingest_directory(&root.join("public").join(f), f, Role::Public, side)?.records);
        }
        Ok(LoadedBenchmark {
            manifest,
            originals,
            public: ArtworkSet::new(PUBLIC_ARTIST, public),
            mimics,
        })
    }
}

fn png_digest(img: &image::RgbImage) -> Result<String> {
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn entries(set: &mut ArtworkSet, dir: &str) -> Result<Vec<FileEntry>> {
    set.records
        .iter_mut()
        .map(|r| {
            let stem = r.id.rsplit('/').next().unwrap_or(&r.id).to_string();
            let path = PathBuf::from(dir).join(&r.artist_id).join(format!("{stem}.png"));
            r.source_path = Some(path.clone());
            Ok(FileEntry {
                id: r.id.clone(),
                path,
                sha256: png_digest(&r.pixels)?,
                prompt: r.caption.clone(),
            })
        })
        .collect()
}

/// Builds the synthetic benchmark in memory.
///
/// Artists are `artist_00..`, public families `public_00..`. The
/// suspicious model is fine-tuned on the pirated artists and on the public
/// families (its pretraining data).
pub fn build_benchmark(cfg: &BenchmarkConfig, exec: Execution) -> Result<LoadedBenchmark> {
    cfg.validate()?;
    let artist_ids: Vec<String> = (0..cfg.n_artists).map(|i| format!("artist_{i:02}")).collect();
    let public_ids: Vec<String> = (0..cfg.n_public).map(|i| format!("public_{i:02}")).collect();
    let families: Vec<StyleFamily> = artist_ids
        .iter()
        .chain(&public_ids)
        .map(|id| StyleFamily::random(id, cfg.seed))
        .collect();

    let mut order = artist_ids.clone();
    order.shuffle(&mut rng::seeded(rng::derive(cfg.seed, "pirated")));
    let pirated: BTreeSet<String> = order[..cfg.n_pirated].iter().cloned().collect();
    let piracy = PiracyConfig {
        fidelity: cfg.fidelity,
        distortion_sigma: cfg.distortion_sigma,
        content_seed: rng::derive(cfg.seed, "content"),
        fine_tuned_on: pirated.iter().chain(&public_ids).cloned().collect(),
    };
    let model = SimulatedModel::new(families.iter().cloned(), piracy.clone(), cfg.side)?;

    let mut originals = BTreeMap::new();
    let mut mimics = BTreeMap::new();
    let mut artists = Vec::new();
    for (i, id) in artist_ids.iter().enumerate() {
        let mut set = render_original(&families[i], cfg.per_artist, cfg.seed, cfg.side, exec);
        let idx: Vec<usize> = (0..cfg.mimics_per_artist).collect();
        let records = exec::try_map(exec, &idx, |_, &k| {
            let prompt = format!("artwork by {id}, example {k}");
            let img = resize_square(&model.generate(&prompt)?, cfg.side);
            let mut r = ArtworkRecord::new(format!("{id}/{k:04}"), id, Role::Generated, img);
            r.caption = Some(prompt);
            Ok::<_, Error>(r)
        })?;
        let mut mimic = ArtworkSet::new(id, records);
        artists.push(ArtistEntry {
            artist_id: id.clone(),
            pirated: pirated.contains(id),
            originals: entries(&mut set, "originals")?,
            mimics: entries(&mut mimic, "mimics")?,
        });
        originals.insert(id.clone(), set);
        mimics.insert(id.clone(), mimic);
    }
    let mut public_records = Vec::new();
    for j in 0..public_ids.len() {
        let mut set = render_original(&families[cfg.n_artists + j], cfg.public_per_family, cfg.seed, cfg.side, exec);
        for r in &mut set.records {
            r.role = Role::Public;
        }
        public_records.extend(set.records);
    }
    let mut public = ArtworkSet::new(PUBLIC_ARTIST, public_records);
    let public_entries = entries(&mut public, "public")?;

    Ok(LoadedBenchmark {
        manifest: BenchmarkManifest {
            format_version: MANIFEST_VERSION,
            config: cfg.clone(),
            piracy,
            families,
            public_families: public_ids,
            artists,
            public: public_entries,
        },
        originals,
        public,
        mimics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchmarkConfig {
        BenchmarkConfig {
            n_artists: 4,
            n_pirated: 2,
            per_artist: 10,
            n_public: 2,
            public_per_family: 3,
            mimics_per_artist: 2,
            side: 64,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn ground_truth_partitions_artists() {
        let cfg = BenchmarkConfig {
            n_artists: 10,
            n_pirated: 5,
            ..small()
        };
        let b = build_benchmark(&cfg, Execution::Parallel).unwrap();
        let gt = b.manifest.ground_truth();
        assert_eq!(gt.len(), 10);
        assert_eq!(gt.values().filter(|p| **p).count(), 5);
        let total: usize = b.originals.values().map(ArtworkSet::len).sum();
        assert_eq!(total, 100);
    }

    #[test]
    fn rejects_bad_counts() {
        for cfg in [
            BenchmarkConfig { n_pirated: 5, ..small() },
            BenchmarkConfig { n_pirated: 0, ..small() },
            BenchmarkConfig { per_artist: 9, ..small() },
        ] {
            assert!(matches!(build_benchmark(&cfg, Execution::Sequential), Err(Error::InvalidCounts(_))));
        }
    }

    #[test]
    fn deterministic_and_roundtrips_through_disk() {
        let a = build_benchmark(&small(), Execution::Parallel).unwrap();
        let b = build_benchmark(&small(), Execution::Sequential).unwrap();
        assert_eq!(a.manifest, b.manifest);

        let dir = tempfile::tempdir().unwrap();
        let path = a.write(dir.path()).unwrap();
        assert!(dir.path().join("originals/artist_00/0000.png").is_file());
        assert!(dir.path().join("mimics/artist_03/0001.png").is_file());
        assert!(dir.path().join("public/public_01/0002.png").is_file());
        let back = LoadedBenchmark::read(&path).unwrap();
        assert_eq!(back.manifest, a.manifest);
        for (id, set) in &a.originals {
            let other = &back.originals[id];
            assert_eq!(set.ids(), other.ids());
            for (x, y) in set.records.iter().zip(&other.records) {
                assert_eq!(x.pixels.as_raw(), y.pixels.as_raw());
            }
        }
        assert_eq!(back.public.len(), 6);
        assert_eq!(back.mimics["artist_01"].records[0].caption, a.mimics["artist_01"].records[0].caption);
    }

    #[test]
    fn model_rebuilt_from_manifest_matches() {
        let b = build_benchmark(&small(), Execution::Sequential).unwrap();
        let m = b.model().unwrap();
        let r = &b.mimics["artist_02"].records[1];
        let img = m.generate(r.caption.as_deref().unwrap()).unwrap();
        assert_eq!(img.as_raw(), r.pixels.as_raw());
    }
}
