//! Desk-scale stand-in for a fine-tuned text-to-image model.
//!
//! Each synthetic "artist" is a procedural stroke style: a palette, a
//! stroke orientation/length/width distribution, a background tone and a
//! grain level. Originals and mimics share style parameters but never
//! stroke placements. A [`SimulatedModel`] answers prompts of the form
//! `artwork by <artist>, ...` in that artist's style if it was fine-tuned
//! on them, and in a fixed generic gray style otherwise.

mod benchmark;

pub use benchmark::{build_benchmark, ArtistEntry, BenchmarkConfig, BenchmarkManifest, FileEntry, LoadedBenchmark};

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use image::{Rgb, RgbImage};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{resize_square, ArtworkRecord, ArtworkSet, Role};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::harness::SuspiciousModel;
use crate::rng::{self, Rng};

/// Canvas side the stroke pixel sizes refer to.
pub const REFERENCE_SIDE: u32 = 224;
pub const GENERIC_FAMILY: &str = "generic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokeParams {
    /// Mean stroke direction in radians.
    pub orientation_mean: f64,
    /// Concentration of the direction distribution; 0 is uniform.
    pub concentration: f64,
    pub length_mean: f64,
    pub length_std: f64,
    pub width_mean: f64,
    pub width_std: f64,
    /// Strokes per image at the reference side.
    pub count: u32,
    pub opacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleFamily {
    pub family_id: String,
    /// RGB anchors on the [0, 1] scale.
    pub palette: Vec<[f64; 3]>,
    pub stroke: StrokeParams,
    pub texture_seed: u64,
    pub background_tone: [f64; 3],
    /// Stddev of per-pixel luminance grain.
    pub grain: f64,
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match h6.floor() as u32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

impl StyleFamily {
    pub fn validate(&self) -> Result<()> {
        let s = &self.stroke;
        if self.palette.len() < 3 {
            return Err(Error::InvalidConfig(format!("{}: palette needs >= 3 colors", self.family_id)));
        }
        if !(s.length_mean > 0.0 && s.width_mean > 0.0) {
            return Err(Error::InvalidConfig(format!("{}: stroke means must be positive", self.family_id)));
        }
        if !(s.concentration >= 0.0) || s.length_std < 0.0 || s.width_std < 0.0 {
            return Err(Error::InvalidConfig(format!("{}: negative spread", self.family_id)));
        }
        Ok(())
    }

    /// A random, reasonably distinctive style.
    pub fn random(family_id: &str, seed: u64) -> StyleFamily {
        let mut r = rng::seeded(rng::derive(seed, family_id));
        let base_hue: f64 = r.random();
        let k = r.random_range(3..=5);
        let palette = (0..k)
            .map(|_| {
                hsv(
                    base_hue + r.random_range(-0.12..0.12),
                    r.random_range(0.45..1.0),
                    r.random_range(0.35..1.0),
                )
            })
            .collect();
        let dark_bg = r.random_bool(0.35);
        let bg_hue = base_hue + r.random_range(0.3..0.7);
        let background_tone = if dark_bg {
            hsv(bg_hue, r.random_range(0.2..0.6), r.random_range(0.05..0.3))
        } else {
            hsv(bg_hue, r.random_range(0.05..0.35), r.random_range(0.75..0.98))
        };
        let length_mean = r.random_range(8.0..60.0);
        let width_mean = r.random_range(1.5..10.0);
        StyleFamily {
            family_id: family_id.to_string(),
            palette,
            stroke: StrokeParams {
                orientation_mean: r.random_range(0.0..PI),
                concentration: r.random_range(0.0..8.0),
                length_mean,
                length_std: 0.3 * length_mean,
                width_mean,
                width_std: 0.3 * width_mean,
                count: r.random_range(60..220),
                opacity: r.random_range(0.6..1.0),
            },
            texture_seed: r.random(),
            background_tone,
            grain: r.random_range(0.0..0.08),
        }
    }

    /// The fixed gray style of a model never tuned on the requested artist.
    pub fn generic() -> StyleFamily {
        StyleFamily {
            family_id: GENERIC_FAMILY.to_string(),
            palette: vec![[0.25; 3], [0.45; 3], [0.65; 3], [0.8; 3]],
            stroke: StrokeParams {
                orientation_mean: 0.0,
                concentration: 0.0,
                length_mean: 25.0,
                length_std: 8.0,
                width_mean: 4.0,
                width_std: 1.5,
                count: 120,
                opacity: 0.8,
            },
            texture_seed: 0,
            background_tone: [0.9; 3],
            grain: 0.02,
        }
    }

    /// Style parameters jittered by Gaussian noise of relative scale
    /// `scale`. The jitter is drawn from the family's texture seed, so it
    /// is a fixed drift per family and independent of any content seed.
    pub fn perturbed(&self, scale: f64) -> StyleFamily {
        if scale <= 0.0 {
            return self.clone();
        }
        let mut r = rng::seeded(rng::derive(self.texture_seed, "style-drift"));
        let n = Normal::new(0.0, scale).expect("finite scale");
        let mut out = self.clone();
        for c in out.palette.iter_mut().chain(std::iter::once(&mut out.background_tone)) {
            for v in c.iter_mut() {
                *v = (*v + n.sample(&mut r)).clamp(0.0, 1.0);
            }
        }
        let s = &mut out.stroke;
        s.orientation_mean += PI * n.sample(&mut r);
        s.concentration *= n.sample(&mut r).exp();
        s.length_mean *= n.sample(&mut r).exp();
        s.length_std *= n.sample(&mut r).exp();
        s.width_mean *= n.sample(&mut r).exp();
        s.width_std *= n.sample(&mut r).exp();
        s.opacity = (s.opacity + n.sample(&mut r)).clamp(0.05, 1.0);
        out.grain = (out.grain + 0.1 * n.sample(&mut r)).max(0.0);
        out
    }

    /// Renders one `side` x `side` image; `rng` drives stroke placement.
    pub fn render(&self, side: u32, rng: &mut Rng) -> RgbImage {
        let sidef = side as f64;
        let k = sidef / REFERENCE_SIDE as f64;
        let n = side as usize;
        let mut canvas: Vec<[f64; 3]> = vec![self.background_tone; n * n];
        let s = &self.stroke;
        let count = ((s.count as f64) * k * k).round().max(1.0) as usize;
        let angle_spread = if s.concentration > 0.0 {
            Some(Normal::new(0.0, 1.0 / s.concentration.sqrt()).expect("finite"))
        } else {
            None
        };
        let len_dist = Normal::new(s.length_mean * k, s.length_std * k).expect("finite");
        let width_dist = Normal::new(s.width_mean * k, s.width_std * k).expect("finite");
        let tint = Normal::new(0.0, 0.03).expect("finite");
        for _ in 0..count {
            let base = self.palette[rng.random_range(0..self.palette.len())];
            let color = base.map(|c| (c + tint.sample(rng)).clamp(0.0, 1.0));
            let cx = rng.random_range(0.0..sidef);
            let cy = rng.random_range(0.0..sidef);
            let theta = match &angle_spread {
                Some(d) => s.orientation_mean + d.sample(rng),
                None => rng.random_range(0.0..PI),
            };
            let len = len_dist.sample(rng).max(2.0 * k);
            let half_w = 0.5 * width_dist.sample(rng).max(k);
            let (dx, dy) = (theta.cos() * len * 0.5, theta.sin() * len * 0.5);
            let (x0, y0, x1, y1) = (cx - dx, cy - dy, cx + dx, cy + dy);
            let pad = half_w + 1.0;
            let bx0 = (x0.min(x1) - pad).floor().max(0.0) as usize;
            let by0 = (y0.min(y1) - pad).floor().max(0.0) as usize;
            let bx1 = ((x0.max(x1) + pad).ceil() as usize).min(n);
            let by1 = ((y0.max(y1) + pad).ceil() as usize).min(n);
            let (vx, vy) = (x1 - x0, y1 - y0);
            let vv = (vx * vx + vy * vy).max(1e-12);
            for py in by0..by1 {
                for px in bx0..bx1 {
                    let (qx, qy) = (px as f64 + 0.5 - x0, py as f64 + 0.5 - y0);
                    let t = ((qx * vx + qy * vy) / vv).clamp(0.0, 1.0);
                    let (ex, ey) = (qx - t * vx, qy - t * vy);
                    let d = (ex * ex + ey * ey).sqrt();
                    let cover = (half_w - d + 0.5).clamp(0.0, 1.0) * s.opacity;
                    if cover > 0.0 {
                        let p = &mut canvas[py * n + px];
                        for c in 0..3 {
                            p[c] += (color[c] - p[c]) * cover;
                        }
                    }
                }
            }
        }
        let grain = if self.grain > 0.0 {
            Some(Normal::new(0.0, self.grain).expect("finite"))
        } else {
            None
        };
        let mut img = RgbImage::new(side, side);
        for (i, p) in canvas.iter().enumerate() {
            let g = grain.as_ref().map(|d| d.sample(rng)).unwrap_or(0.0);
            let px = p.map(|c| ((c + g) * 255.0).round().clamp(0.0, 255.0) as u8);
            img.put_pixel((i % n) as u32, (i / n) as u32, Rgb(px));
        }
        img
    }
}

/// Knobs of the simulated piracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiracyConfig {
    /// 1 reproduces the style exactly (up to `distortion_sigma`).
    pub fidelity: f64,
    pub distortion_sigma: f64,
    pub content_seed: u64,
    /// Families the model can reproduce.
    pub fine_tuned_on: BTreeSet<String>,
}

impl PiracyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fidelity) {
            return Err(Error::InvalidConfig("fidelity outside [0, 1]".into()));
        }
        if !(self.distortion_sigma >= 0.0) {
            return Err(Error::InvalidConfig("distortion_sigma < 0".into()));
        }
        Ok(())
    }

    pub fn jitter_scale(&self) -> f64 {
        self.distortion_sigma * (1.0 - self.fidelity)
    }
}

/// `count` originals of a family, ids `<family>/<index>`.
pub fn render_original(family: &StyleFamily, count: usize, seed: u64, side: u32, exec: Execution) -> ArtworkSet {
    let base = rng::derive(seed, &format!("original:{}", family.family_id));
    let idx: Vec<usize> = (0..count).collect();
    let records = exec::map(exec, &idx, |_, &i| {
        let img = family.render(side, &mut rng::substream(base, i as u64));
        ArtworkRecord::new(format!("{}/{i:04}", family.family_id), &family.family_id, Role::Target, img)
    });
    ArtworkSet::new(&family.family_id, records)
}

/// The style a model configured by `cfg` would paint `family` in.
pub fn mimic_style(family: &StyleFamily, cfg: &PiracyConfig) -> StyleFamily {
    if cfg.fine_tuned_on.contains(&family.family_id) {
        family.perturbed(cfg.jitter_scale())
    } else {
        StyleFamily::generic()
    }
}

/// A prompt-driven simulated text-to-image model.
#[derive(Debug, Clone)]
pub struct SimulatedModel {
    families: BTreeMap<String, StyleFamily>,
    cfg: PiracyConfig,
    side: u32,
}

impl SimulatedModel {
    pub fn new(families: impl IntoIterator<Item = StyleFamily>, cfg: PiracyConfig, side: u32) -> Result<Self> {
        cfg.validate()?;
        let families: BTreeMap<_, _> = families.into_iter().map(|f| (f.family_id.clone(), f)).collect();
        for f in families.values() {
            f.validate()?;
        }
        Ok(SimulatedModel { families, cfg, side })
    }

    pub fn config(&self) -> &PiracyConfig {
        &self.cfg
    }

    /// Artist named in an `artwork by <artist>, ...` prompt.
    pub fn prompt_artist(prompt: &str) -> Option<&str> {
        let rest = &prompt[prompt.find("artwork by ")? + "artwork by ".len()..];
        let end = rest.find(',').unwrap_or(rest.len());
        Some(rest[..end].trim())
    }

    fn style_for(&self, prompt: &str) -> StyleFamily {
        match Self::prompt_artist(prompt).and_then(|a| self.families.get(a)) {
            Some(f) => mimic_style(f, &self.cfg),
            None => StyleFamily::generic(),
        }
    }
}

impl SuspiciousModel for SimulatedModel {
    fn generate(&self, prompt: &str) -> Result<RgbImage> {
        let style = self.style_for(prompt);
        let mut r = rng::seeded(rng::derive(self.cfg.content_seed, &format!("prompt:{prompt}")));
        Ok(style.render(self.side, &mut r))
    }
}

/// `count` outputs of the model for prompts naming `family`.
pub fn render_mimic(family: &StyleFamily, cfg: &PiracyConfig, count: usize, side: u32) -> Result<ArtworkSet> {
    let model = SimulatedModel::new([family.clone()], cfg.clone(), side)?;
    let records = (0..count)
        .map(|i| {
            let prompt = format!("artwork by {}, mimic {i}", family.family_id);
            let img = resize_square(&model.generate(&prompt)?, side);
            let mut rec = ArtworkRecord::new(format!("{}/mimic-{i:04}", family.family_id), &family.family_id, Role::Generated, img);
            rec.caption = Some(prompt);
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ArtworkSet::new(&family.family_id, records))
}

/// Normalized 64-bin (4 per channel) color histogram.
pub fn color_histogram(img: &RgbImage) -> [f64; 64] {
    let mut h = [0.0; 64];
    for p in img.pixels() {
        let b = |c: u8| (c as usize) / 64;
        h[b(p.0[0]) * 16 + b(p.0[1]) * 4 + b(p.0[2])] += 1.0;
    }
    let n = (img.width() * img.height()) as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn piracy(fidelity: f64, sigma: f64, tuned: &[&str]) -> PiracyConfig {
        PiracyConfig {
            fidelity,
            distortion_sigma: sigma,
            content_seed: 3,
            fine_tuned_on: tuned.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn originals_count_role_and_determinism() {
        let f = StyleFamily::random("artist_00", 1);
        let a = render_original(&f, 20, 5, 64, Execution::Parallel);
        assert_eq!(a.len(), 20);
        assert!(a.records.iter().all(|r| r.role == Role::Target));
        let b = render_original(&f, 20, 5, 64, Execution::Sequential);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.pixels.as_raw(), y.pixels.as_raw());
        }
        // content varies between images
        assert_ne!(a.records[0].pixels.as_raw(), a.records[1].pixels.as_raw());
    }

    #[test]
    fn disjoint_palettes_give_distinct_histograms() {
        let mut warm = StyleFamily::generic();
        warm.family_id = "warm".into();
        warm.palette = vec![[0.9, 0.2, 0.1], [0.8, 0.4, 0.1], [1.0, 0.6, 0.2]];
        warm.background_tone = [0.3, 0.05, 0.05];
        let mut cool = StyleFamily::generic();
        cool.family_id = "cool".into();
        cool.palette = vec![[0.1, 0.2, 0.9], [0.1, 0.6, 0.8], [0.3, 0.3, 1.0]];
        cool.background_tone = [0.85, 0.9, 1.0];
        let mean_hist = |f: &StyleFamily| {
            let set = render_original(f, 10, 1, 64, Execution::Sequential);
            let mut acc = [0.0; 64];
            for r in &set.records {
                for (a, h) in acc.iter_mut().zip(color_histogram(&r.pixels)) {
                    *a += h / set.len() as f64;
                }
            }
            acc
        };
        let (hw, hc) = (mean_hist(&warm), mean_hist(&cool));
        let l1: f64 = hw.iter().zip(&hc).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 > 0.2, "L1 {l1}");
    }

    #[test]
    fn faithful_mimic_keeps_style() {
        let f = StyleFamily::random("artist_01", 2);
        assert_eq!(mimic_style(&f, &piracy(1.0, 0.0, &["artist_01"])), f);
        assert_eq!(mimic_style(&f, &piracy(0.3, 0.0, &["artist_01"])), f);
        assert_eq!(mimic_style(&f, &piracy(1.0, 0.5, &["artist_01"])), f);
        assert_ne!(mimic_style(&f, &piracy(0.8, 0.1, &["artist_01"])), f);
    }

    #[test]
    fn untuned_family_gets_generic_style() {
        let f = StyleFamily::random("artist_02", 2);
        for fidelity in [0.0, 0.5, 1.0] {
            assert_eq!(mimic_style(&f, &piracy(fidelity, 0.1, &["other"])), StyleFamily::generic());
        }
        let set = render_mimic(&f, &piracy(1.0, 0.0, &[]), 3, 64).unwrap();
        assert!(set.records.iter().all(|r| r.role == Role::Generated));
    }

    #[test]
    fn style_does_not_depend_on_content_seed() {
        let f = StyleFamily::random("artist_03", 4);
        let mut a = piracy(0.5, 0.4, &["artist_03"]);
        let s1 = mimic_style(&f, &a);
        a.content_seed = 999;
        assert_eq!(mimic_style(&f, &a), s1);
    }

    #[test]
    fn mimics_differ_from_originals() {
        let f = StyleFamily::random("artist_04", 4);
        let orig = render_original(&f, 5, 1, 64, Execution::Sequential);
        let mim = render_mimic(&f, &piracy(1.0, 0.0, &["artist_04"]), 5, 64).unwrap();
        for o in &orig.records {
            for m in &mim.records {
                assert_ne!(o.pixels.as_raw(), m.pixels.as_raw());
            }
        }
    }

    #[test]
    fn prompt_parsing() {
        assert_eq!(SimulatedModel::prompt_artist("artwork by artist_03, a scene"), Some("artist_03"));
        assert_eq!(SimulatedModel::prompt_artist("artwork by x"), Some("x"));
        assert_eq!(SimulatedModel::prompt_artist("a cat"), None);
    }

    #[test]
    fn family_validation() {
        let mut f = StyleFamily::generic();
        f.palette.truncate(2);
        assert!(f.validate().is_err());
        let mut f = StyleFamily::generic();
        f.stroke.length_mean = 0.0;
        assert!(f.validate().is_err());
    }
}
