//! Target-artist expansion: random crop, horizontal flip, cutout, Gaussian
//! noise, impulse noise and color jitter.

use image::{Rgb, RgbImage};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{resize_square, ArtworkRecord, ArtworkSet, Role};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    /// Range of the crop area as a fraction of the image area.
    pub crop_scale: (f64, f64),
    pub flip_probability: f64,
    /// Upper bound on cutout squares per image.
    pub cutout_count: u32,
    /// Cutout side as a fraction of the shorter image side.
    pub cutout_size_fraction: f64,
    /// Noise stddev on the [0, 1] intensity scale.
    pub gaussian_sigma: f64,
    pub impulse_fraction: f64,
    /// Brightness, contrast, saturation, hue.
    pub jitter_ranges: [f64; 4],
    pub multiplicity: u32,
    /// Probability each of cutout / gaussian / impulse / jitter is applied.
    pub op_probability: f64,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            crop_scale: (0.6, 1.0),
            flip_probability: 0.5,
            cutout_count: 2,
            cutout_size_fraction: 0.2,
            gaussian_sigma: 0.05,
            impulse_fraction: 0.02,
            jitter_ranges: [0.2, 0.2, 0.2, 0.05],
            multiplicity: 10,
            op_probability: 0.5,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    /// Only the listed transforms active; everything else is the identity.
    pub fn identity() -> Self {
        AugmentationConfig {
            crop_scale: (1.0, 1.0),
            flip_probability: 0.0,
            cutout_count: 0,
            cutout_size_fraction: 0.2,
            gaussian_sigma: 0.0,
            impulse_fraction: 0.0,
            jitter_ranges: [0.0; 4],
            multiplicity: 1,
            op_probability: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("augmentation: {what}")));
        let (lo, hi) = self.crop_scale;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad("crop_scale must satisfy 0 < lo <= hi <= 1");
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return bad("flip_probability outside [0, 1]");
        }
        if !(self.cutout_size_fraction > 0.0 && self.cutout_size_fraction < 1.0) {
            return bad("cutout_size_fraction outside (0, 1)");
        }
        if !(self.gaussian_sigma >= 0.0) {
            return bad("gaussian_sigma < 0");
        }
        if !(0.0..=1.0).contains(&self.impulse_fraction) {
            return bad("impulse_fraction outside [0, 1]");
        }
        if self.jitter_ranges.iter().any(|r| !(*r >= 0.0)) {
            return bad("negative jitter range");
        }
        if self.multiplicity < 1 {
            return bad("multiplicity < 1");
        }
        if !(0.0..=1.0).contains(&self.op_probability) {
            return bad("op_probability outside [0, 1]");
        }
        Ok(())
    }

    /// Short digest baked into augmented ids so distinct configs never
    /// share an id.
    pub fn tag(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        rng::hex_digest(&json)[..8].to_string()
    }
}

pub fn flip_horizontal(img: &RgbImage) -> RgbImage {
    image::imageops::flip_horizontal(img)
}

/// Crops a region covering `area_fraction` of the image (aspect kept) at
/// a random offset.
pub fn random_crop(img: &RgbImage, area_fraction: f64, rng: &mut Rng) -> RgbImage {
    let (w, h) = img.dimensions();
    let s = area_fraction.sqrt();
    let cw = ((w as f64 * s).round() as u32).clamp(1, w);
    let ch = ((h as f64 * s).round() as u32).clamp(1, h);
    if (cw, ch) == (w, h) {
        return img.clone();
    }
    let x = rng.random_range(0..=w - cw);
    let y = rng.random_range(0..=h - ch);
    image::imageops::crop_imm(img, x, y, cw, ch).to_image()
}

/// Zeroes `count` random squares of side `size_fraction * min(w, h)`.
pub fn cutout(img: &mut RgbImage, count: u32, size_fraction: f64, rng: &mut Rng) {
    let (w, h) = img.dimensions();
    let side = ((w.min(h) as f64 * size_fraction).round() as u32).max(1);
    for _ in 0..count {
        let cx = rng.random_range(0..w) as i64;
        let cy = rng.random_range(0..h) as i64;
        let half = side as i64 / 2;
        let x0 = (cx - half).max(0) as u32;
        let y0 = (cy - half).max(0) as u32;
        let x1 = ((cx - half + side as i64) as u32).min(w);
        let y1 = ((cy - half + side as i64) as u32).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                img.put_pixel(x, y, Rgb([0, 0, 0]));
            }
        }
    }
}

fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Adds i.i.d. N(0, sigma) noise per channel on the [0, 1] scale.
pub fn gaussian_noise(img: &mut RgbImage, sigma: f64, rng: &mut Rng) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    for p in img.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = to_u8(*c as f64 / 255.0 + normal.sample(rng));
        }
    }
}

/// Salt-and-pepper noise on `fraction` of the pixels.
pub fn impulse_noise(img: &mut RgbImage, fraction: f64, rng: &mut Rng) {
    if fraction <= 0.0 {
        return;
    }
    for p in img.pixels_mut() {
        if rng.random_bool(fraction) {
            let v = if rng.random_bool(0.5) { 255 } else { 0 };
            p.0 = [v, v, v];
        }
    }
}

pub fn adjust_brightness(img: &mut RgbImage, factor: f64) {
    for p in img.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = to_u8(*c as f64 / 255.0 * factor);
        }
    }
}

fn luma(p: &Rgb<u8>) -> f64 {
    (0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64) / 255.0
}

/// Blends each pixel toward the mean luminance.
pub fn adjust_contrast(img: &mut RgbImage, factor: f64) {
    let n = (img.width() * img.height()).max(1) as f64;
    let mean = img.pixels().map(luma).sum::<f64>() / n;
    for p in img.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = to_u8(mean + (*c as f64 / 255.0 - mean) * factor);
        }
    }
}

/// Blends each pixel toward its own grayscale value.
pub fn adjust_saturation(img: &mut RgbImage, factor: f64) {
    for p in img.pixels_mut() {
        let g = luma(p);
        for c in p.0.iter_mut() {
            *c = to_u8(g + (*c as f64 / 255.0 - g) * factor);
        }
    }
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as u32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Rotates hue by `shift` turns.
pub fn adjust_hue(img: &mut RgbImage, shift: f64) {
    if shift == 0.0 {
        return;
    }
    for p in img.pixels_mut() {
        let [r, g, b] = p.0.map(|c| c as f64 / 255.0);
        let (h, s, v) = rgb_to_hsv(r, g, b);
        let (r, g, b) = hsv_to_rgb(h + shift, s, v);
        p.0 = [to_u8(r), to_u8(g), to_u8(b)];
    }
}

fn jitter(img: &mut RgbImage, ranges: &[f64; 4], rng: &mut Rng) {
    let mut factor = |r: f64| if r > 0.0 { rng.random_range(1.0 - r..=1.0 + r).max(0.0) } else { 1.0 };
    let (b, c, s) = (factor(ranges[0]), factor(ranges[1]), factor(ranges[2]));
    let h = if ranges[3] > 0.0 {
        rng.random_range(-ranges[3]..=ranges[3])
    } else {
        0.0
    };
    adjust_brightness(img, b);
    adjust_contrast(img, c);
    adjust_saturation(img, s);
    adjust_hue(img, h);
}

/// One augmented view: crop and flip always, then each of jitter, cutout,
/// Gaussian and impulse noise with probability `op_probability`.
fn augment_one(src: &RgbImage, cfg: &AugmentationConfig, rng: &mut Rng) -> RgbImage {
    let (lo, hi) = cfg.crop_scale;
    let area = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let mut img = random_crop(src, area, rng);
    if rng.random_bool(cfg.flip_probability) {
        img = flip_horizontal(&img);
    }
    if img.dimensions() != src.dimensions() {
        img = if src.width() == src.height() {
            resize_square(&img, src.width())
        } else {
            image::imageops::resize(&img, src.width(), src.height(), image::imageops::FilterType::Triangle)
        };
    }
    let p = cfg.op_probability;
    if rng.random_bool(p) {
        jitter(&mut img, &cfg.jitter_ranges, rng);
    }
    if rng.random_bool(p) && cfg.cutout_count > 0 {
        let n = rng.random_range(1..=cfg.cutout_count);
        cutout(&mut img, n, cfg.cutout_size_fraction, rng);
    }
    if rng.random_bool(p) {
        gaussian_noise(&mut img, cfg.gaussian_sigma, rng);
    }
    if rng.random_bool(p) {
        impulse_noise(&mut img, cfg.impulse_fraction, rng);
    }
    img
}

/// Expands `set` into `multiplicity` augmented views per record.
///
/// Each view draws from its own substream keyed on the parent id and view
/// index, so the output does not depend on thread scheduling.
pub fn augment(set: &ArtworkSet, cfg: &AugmentationConfig, exec: Execution) -> Result<ArtworkSet> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::TooFewRecords { needed: 1, got: 0 });
    }
    let tag = cfg.tag();
    let m = cfg.multiplicity as usize;
    let jobs: Vec<(usize, usize)> = (0..set.len()).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let records = exec::map(exec, &jobs, |_, &(i, j)| {
        let parent = &set.records[i];
        let stream = rng::hash_str(&parent.id).wrapping_add(j as u64);
        let mut rng = rng::substream(cfg.seed, stream);
        let pixels = augment_one(&parent.pixels, cfg, &mut rng);
        let mut rec = ArtworkRecord::new(
            format!("{}#aug{tag}-{j}", parent.id),
            parent.artist_id.clone(),
            Role::Augmented,
            pixels,
        );
        rec.parent_id = Some(parent.id.clone());
        rec.caption = parent.caption.clone();
        rec
    });
    Ok(ArtworkSet {
        artist_id: set.artist_id.clone(),
        records,
        split_seed: set.split_seed,
    })
}
