//! Multi-granularity style representation.
//!
//! Four evenly spaced backbone stages are tapped. Each filter's map is
//! reduced to its maximum and mean, the pooled values are concatenated
//! within a stage (`[max_1..max_C, mean_1..mean_C]`) and the stages are
//! then concatenated shallow to deep.

mod backbone;
mod cache;

pub use backbone::{Backbone, BackboneAdapter, Normalization, StageDescriptor};
pub use cache::{CacheKey, RepresentationCache};

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{ArtworkRecord, ArtworkSet};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::rng;

/// Default reference stage widths (five VGG-style blocks).
pub const DEFAULT_CHANNELS: [usize; 5] = [8, 16, 32, 64, 64];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapPlan {
    pub tap_indices: Vec<usize>,
    /// Channel count of each tapped stage, same order as `tap_indices`.
    pub channels: Vec<usize>,
    pub expected_dim: usize,
    pub hash: String,
}

impl TapPlan {
    /// Plan over explicit stage indices; must be four strictly increasing
    /// valid stages.
    pub fn custom(adapter: &BackboneAdapter, tap_indices: &[usize]) -> Result<TapPlan> {
        adapter.validate()?;
        if tap_indices.len() != 4 {
            return Err(Error::InvalidConfig(format!(
                "tap plan needs exactly 4 stages, got {}",
                tap_indices.len()
            )));
        }
        if tap_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("tap indices must be strictly increasing".into()));
        }
        if let Some(&bad) = tap_indices.iter().find(|&&i| i >= adapter.stages.len()) {
            return Err(Error::InvalidConfig(format!("tap index {bad} out of range")));
        }
        let channels: Vec<usize> = tap_indices.iter().map(|&i| adapter.stages[i].channels).collect();
        let expected_dim = 2 * channels.iter().sum::<usize>();
        let hash = {
            let body = serde_json::json!({
                "adapter": adapter.name,
                "side": adapter.input_side,
                "taps": tap_indices,
                "channels": channels,
            });
            rng::hex_digest(body.to_string().as_bytes())[..16].to_string()
        };
        Ok(TapPlan {
            tap_indices: tap_indices.to_vec(),
            channels,
            expected_dim,
            hash,
        })
    }

    pub fn deepest(&self) -> usize {
        *self.tap_indices.last().expect("plan has 4 taps")
    }
}

/// Four taps at `round(k (S-1) / 3)`, nudged forward on collisions.
pub fn plan_taps(adapter: &BackboneAdapter) -> Result<TapPlan> {
    let s = adapter.stages.len();
    if s < 4 {
        return Err(Error::TooFewStages(s));
    }
    let mut taps: Vec<usize> = Vec::with_capacity(4);
    for k in 0..4 {
        let mut idx = (k as f64 * (s - 1) as f64 / 3.0).round() as usize;
        if let Some(&prev) = taps.last() {
            if idx <= prev {
                idx = prev + 1;
            }
        }
        taps.push(idx);
    }
    TapPlan::custom(adapter, &taps)
}

/// `[max_1..max_C, mean_1..mean_C]` over each filter's `h x w` map.
pub fn pool_stage(feature_map: ArrayView3<f32>) -> Vec<f32> {
    let c = feature_map.len_of(Axis(0));
    let mut out = vec![0.0f32; 2 * c];
    for (i, plane) in feature_map.axis_iter(Axis(0)).enumerate() {
        let mut max = f32::NEG_INFINITY;
        let mut sum = 0.0f64;
        for &v in plane.iter() {
            max = max.max(v);
            sum += v as f64;
        }
        out[i] = max;
        out[c + i] = (sum / plane.len() as f64) as f32;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleRepresentation {
    pub vector: Arc<Vec<f32>>,
    pub artwork_id: String,
    pub tap_plan_hash: String,
}

impl StyleRepresentation {
    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }
}

fn compute(backbone: &Backbone, plan: &TapPlan, record: &ArtworkRecord) -> Result<Vec<f32>> {
    let side = backbone.adapter().input_side;
    let (w, h) = record.side();
    if (w, h) != (side, side) {
        return Err(Error::DimMismatch {
            expected: side as usize,
            got: w.max(h) as usize,
        });
    }
    if plan.deepest() >= backbone.adapter().stages.len() {
        return Err(Error::InvalidConfig("tap plan does not fit this backbone".into()));
    }
    let outputs = backbone.forward(backbone.preprocess(&record.pixels), plan.deepest());
    let mut vector = Vec::with_capacity(plan.expected_dim);
    for &t in &plan.tap_indices {
        vector.extend(pool_stage(outputs[t].view()));
    }
    if vector.len() != plan.expected_dim {
        return Err(Error::DimMismatch {
            expected: plan.expected_dim,
            got: vector.len(),
        });
    }
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate(format!("non-finite feature for {}", record.id)));
    }
    Ok(vector)
}

pub fn extract(backbone: &Backbone, plan: &TapPlan, record: &ArtworkRecord) -> Result<StyleRepresentation> {
    Ok(StyleRepresentation {
        vector: Arc::new(compute(backbone, plan, record)?),
        artwork_id: record.id.clone(),
        tap_plan_hash: plan.hash.clone(),
    })
}

fn cache_key(backbone: &Backbone, plan: &TapPlan, record: &ArtworkRecord) -> CacheKey {
    CacheKey {
        artwork_id: record.id.clone(),
        content_digest: rng::hex_digest(record.pixels.as_raw()),
        tap_plan_hash: plan.hash.clone(),
        weights_digest: backbone.digest().to_string(),
    }
}

/// Extracts every record of every set, keyed by artwork id.
///
/// Records already in `cache` skip the forward pass; new results are
/// inserted. Duplicate ids across sets are extracted once.
pub fn extract_batch(
    backbone: &Backbone,
    plan: &TapPlan,
    sets: &[&ArtworkSet],
    cache: Option<&RepresentationCache>,
    exec: Execution,
) -> Result<BTreeMap<String, StyleRepresentation>> {
    let mut unique: BTreeMap<&str, &ArtworkRecord> = BTreeMap::new();
    for r in sets.iter().flat_map(|s| s.records.iter()) {
        unique.entry(r.id.as_str()).or_insert(r);
    }
    let records: Vec<&ArtworkRecord> = unique.into_values().collect();
    let reps = exec::try_map(exec, &records, |_, record| {
        let key = cache.map(|_| cache_key(backbone, plan, record));
        if let (Some(c), Some(k)) = (cache, key.as_ref()) {
            if let Some(v) = c.get(k) {
                return Ok::<_, Error>(v);
            }
        }
        let v = Arc::new(compute(backbone, plan, record).map_err(|e| Error::Artwork {
            id: record.id.clone(),
            source: Box::new(e),
        })?);
        if let (Some(c), Some(k)) = (cache, key) {
            c.insert(k, v.clone());
        }
        Ok(v)
    })?;
    Ok(records
        .iter()
        .zip(reps)
        .map(|(r, vector)| {
            (
                r.id.clone(),
                StyleRepresentation {
                    vector,
                    artwork_id: r.id.clone(),
                    tap_plan_hash: plan.hash.clone(),
                },
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ArtworkRecord, Role};
    use ndarray::Array3;
    use proptest::prelude::*;

    fn adapter(channels: &[usize]) -> BackboneAdapter {
        BackboneAdapter {
            name: "test".into(),
            input_side: 64,
            normalization: Normalization::default(),
            stages: channels
                .iter()
                .enumerate()
                .map(|(index, &channels)| StageDescriptor { index, channels })
                .collect(),
        }
    }

    #[test]
    fn five_stage_taps() {
        let plan = plan_taps(&adapter(&[8, 16, 32, 64, 64])).unwrap();
        assert_eq!(plan.tap_indices, vec![0, 1, 3, 4]);
    }

    #[test]
    fn four_stage_taps_are_identity() {
        let plan = plan_taps(&adapter(&[64, 128, 256, 512])).unwrap();
        assert_eq!(plan.tap_indices, vec![0, 1, 2, 3]);
        assert_eq!(plan.expected_dim, 1920);
    }

    #[test]
    fn taps_stay_strictly_increasing() {
        for s in 4..40 {
            let chans: Vec<usize> = (1..=s).collect();
            let plan = plan_taps(&adapter(&chans)).unwrap();
            assert!(plan.tap_indices.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(plan.tap_indices[0], 0);
            assert_eq!(plan.tap_indices[3], s - 1);
        }
    }

    #[test]
    fn too_few_stages() {
        assert!(matches!(plan_taps(&adapter(&[8, 8, 8])), Err(Error::TooFewStages(3))));
    }

    #[test]
    fn distinct_plans_hash_differently() {
        let a = adapter(&[8, 8, 8, 8, 8, 8]);
        let p1 = TapPlan::custom(&a, &[0, 1, 3, 5]).unwrap();
        let p2 = TapPlan::custom(&a, &[0, 2, 3, 5]).unwrap();
        assert_ne!(p1.hash, p2.hash);
        assert!(TapPlan::custom(&a, &[0, 3, 1, 5]).is_err());
        assert!(TapPlan::custom(&a, &[0, 1, 3]).is_err());
    }

    #[test]
    fn pool_small_map() {
        let map = Array3::from_shape_vec((1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(pool_stage(map.view()), vec![4.0, 2.5]);
    }

    #[test]
    fn pool_constant_map() {
        let map = Array3::from_elem((5, 3, 7), 1.75f32);
        let out = pool_stage(map.view());
        assert!(out.iter().all(|&v| v == 1.75));
    }

    fn brute_force_pool(map: &Array3<f32>) -> Vec<f64> {
        let (c, h, w) = map.dim();
        let mut maxes = vec![f64::NEG_INFINITY; c];
        let mut means = vec![0.0; c];
        for i in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = map[[i, y, x]] as f64;
                    if v > maxes[i] {
                        maxes[i] = v;
                    }
                    means[i] += v;
                }
            }
            means[i] /= (h * w) as f64;
        }
        maxes.into_iter().chain(means).collect()
    }

    proptest! {
        #[test]
        fn pool_matches_brute_force(c in 1usize..=8, h in 1usize..=16, w in 1usize..=16, seed in any::<u64>()) {
            use rand::Rng as _;
            let mut r = rng::seeded(seed);
            let map = Array3::from_shape_fn((c, h, w), |_| r.random_range(-5.0f32..5.0));
            let fast = pool_stage(map.view());
            let slow = brute_force_pool(&map);
            prop_assert_eq!(fast.len(), 2 * c);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((*a as f64 - b).abs() <= 1e-5 * b.abs().max(1.0));
            }
        }
    }

    fn record(id: &str, seed: u64) -> ArtworkRecord {
        use rand::Rng as _;
        let mut r = rng::seeded(seed);
        let img = image::RgbImage::from_fn(64, 64, |_, _| image::Rgb([r.random(), r.random(), r.random()]));
        ArtworkRecord::new(id, "a", Role::Target, img)
    }

    #[test]
    fn extract_shape_and_determinism() {
        let bb = Backbone::reference(&[4, 8, 12, 16, 16], 64, 1).unwrap();
        let plan = plan_taps(bb.adapter()).unwrap();
        let rec = record("a/1", 1);
        let r1 = extract(&bb, &plan, &rec).unwrap();
        let r2 = extract(&bb, &plan, &rec).unwrap();
        assert_eq!(r1.len(), plan.expected_dim);
        assert_eq!(r1.len(), 2 * (4 + 8 + 16 + 16));
        assert_eq!(r1.vector, r2.vector);
    }

    #[test]
    fn extract_rejects_wrong_side() {
        let bb = Backbone::reference(&[4, 4, 4, 4], 64, 1).unwrap();
        let plan = plan_taps(bb.adapter()).unwrap();
        let rec = ArtworkRecord::new("x", "a", Role::Target, image::RgbImage::new(32, 32));
        assert!(matches!(extract(&bb, &plan, &rec), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn batch_singleton_cache_and_permutation() {
        let bb = Backbone::reference(&[4, 8, 12, 16, 16], 64, 1).unwrap();
        let plan = plan_taps(bb.adapter()).unwrap();
        let recs: Vec<_> = (0..5).map(|i| record(&format!("a/{i}"), i)).collect();
        let single = ArtworkSet::new("a", vec![recs[0].clone()]);
        let m = extract_batch(&bb, &plan, &[&single], None, Execution::Sequential).unwrap();
        assert_eq!(m["a/0"], extract(&bb, &plan, &recs[0]).unwrap());

        let fwd = ArtworkSet::new("a", recs.clone());
        let mut rev_recs = recs.clone();
        rev_recs.reverse();
        let rev = ArtworkSet::new("a", rev_recs);
        let cache = RepresentationCache::new();
        let before = bb.invocations();
        let m1 = extract_batch(&bb, &plan, &[&fwd], Some(&cache), Execution::Parallel).unwrap();
        let mid = bb.invocations();
        assert_eq!(mid - before, 5);
        let m2 = extract_batch(&bb, &plan, &[&rev], Some(&cache), Execution::Sequential).unwrap();
        assert_eq!(bb.invocations(), mid, "second call must be served from cache");
        assert_eq!(m1, m2);
        let m3 = extract_batch(&bb, &plan, &[&rev], None, Execution::Parallel).unwrap();
        assert_eq!(m1, m3);
    }

    #[test]
    fn batch_error_names_artwork() {
        let bb = Backbone::reference(&[4, 4, 4, 4], 64, 1).unwrap();
        let plan = plan_taps(bb.adapter()).unwrap();
        let bad = ArtworkRecord::new("bad/1", "a", Role::Target, image::RgbImage::new(16, 16));
        let set = ArtworkSet::new("a", vec![record("a/0", 0), bad]);
        match extract_batch(&bb, &plan, &[&set], None, Execution::Sequential) {
            Err(Error::Artwork { id, .. }) => assert_eq!(id, "bad/1"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
