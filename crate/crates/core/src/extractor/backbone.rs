//! A frozen VGG-style convolutional network: stages of 3x3 conv + ReLU,
//! with 2x2 max pooling between stages. Stage outputs are the
//! post-activation maps before pooling.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use image::RgbImage;
use ndarray::{Array1, Array2, Array3, ArrayView3, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const MAGIC: &[u8; 8] = b"ARTAUDW1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    /// ImageNet statistics used by VGG-family classifiers.
    fn default() -> Self {
        Normalization {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDescriptor {
    pub index: usize,
    pub channels: usize,
}

/// Static description of a backbone: what goes in, which stages come out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneAdapter {
    pub name: String,
    pub input_side: u32,
    pub normalization: Normalization,
    pub stages: Vec<StageDescriptor>,
}

impl BackboneAdapter {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidConfig("backbone has no stages".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.index != i || s.channels == 0 {
                return Err(Error::InvalidConfig(format!("bad stage descriptor {s:?} at {i}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct ConvShape {
    in_channels: usize,
    out_channels: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    adapter: BackboneAdapter,
    /// Conv layers per stage, in order.
    convs: Vec<Vec<ConvShape>>,
}

#[derive(Debug, Clone)]
struct Conv3x3 {
    /// (out, in * 9), row layout matches `im2col`.
    kernel: Array2<f32>,
    bias: Array1<f32>,
}

impl Conv3x3 {
    fn shape(&self) -> ConvShape {
        ConvShape {
            in_channels: self.kernel.ncols() / 9,
            out_channels: self.kernel.nrows(),
        }
    }

    /// Same-padded convolution followed by ReLU.
    fn forward_relu(&self, input: &Array3<f32>) -> Array3<f32> {
        let (_, h, w) = input.dim();
        let cols = im2col(input.view());
        let mut out = self.kernel.dot(&cols);
        for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            row.mapv_inplace(|v| (v + b).max(0.0));
        }
        out.into_shape_with_order((self.bias.len(), h, w))
            .expect("conv output has c*h*w elements")
    }
}

/// Unfolds 3x3 same-padded neighbourhoods into columns: (c*9, h*w).
fn im2col(input: ArrayView3<f32>) -> Array2<f32> {
    let (c, h, w) = input.dim();
    let mut cols = Array2::<f32>::zeros((c * 9, h * w));
    for ch in 0..c {
        let plane = input.index_axis(Axis(0), ch);
        for ky in 0..3 {
            for kx in 0..3 {
                let mut row = cols.row_mut(ch * 9 + ky * 3 + kx);
                let row = row.as_slice_mut().expect("standard layout");
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = plane.row(sy as usize);
                    let dst = &mut row[y * w..(y + 1) * w];
                    match kx {
                        0 => {
                            for x in 1..w {
                                dst[x] = src[x - 1];
                            }
                        }
                        1 => {
                            for x in 0..w {
                                dst[x] = src[x];
                            }
                        }
                        _ => {
                            for x in 0..w.saturating_sub(1) {
                                dst[x] = src[x + 1];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn max_pool2(input: &Array3<f32>) -> Array3<f32> {
    let (c, h, w) = input.dim();
    let (oh, ow) = ((h / 2).max(1), (w / 2).max(1));
    let src = input.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let mut out = vec![f32::NEG_INFINITY; c * oh * ow];
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for y in 0..oh {
            for sy in 2 * y..(2 * y + 2).min(h) {
                let row = &plane[sy * w..(sy + 1) * w];
                for x in 0..ow {
                    let m = row[2 * x..(2 * x + 2).min(w)].iter().copied().fold(f32::NEG_INFINITY, f32::max);
                    let d = &mut dst[y * ow + x];
                    *d = d.max(m);
                }
            }
        }
    }
    Array3::from_shape_vec((c, oh, ow), out).expect("pooled shape")
}

/// Loaded, read-only network weights plus the adapter describing them.
#[derive(Debug)]
pub struct Backbone {
    adapter: BackboneAdapter,
    stages: Vec<Vec<Conv3x3>>,
    digest: String,
    invocations: AtomicUsize,
}

impl Backbone {
    pub fn adapter(&self) -> &BackboneAdapter {
        &self.adapter
    }

    /// sha256 of the serialized weight file.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Number of forward passes run so far.
    pub fn invocations(&self) -> usize {
        self.invocations.load(Ordering::Relaxed)
    }

    /// Deterministic reference weights for a VGG-style network with one
    /// conv per stage. The first stage mixes oriented luminance edge
    /// detectors with random colour projections; deeper stages are
    /// He-initialized.
    pub fn reference(channels: &[usize], input_side: u32, seed: u64) -> Result<Backbone> {
        if channels.is_empty() {
            return Err(Error::InvalidConfig("no stages".into()));
        }
        let mut rng = rng::seeded(seed);
        let mut stages = Vec::with_capacity(channels.len());
        let mut in_c = 3;
        for (si, &out_c) in channels.iter().enumerate() {
            let fan_in = (in_c * 9) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
            let mut kernel = Array2::<f32>::zeros((out_c, in_c * 9));
            for o in 0..out_c {
                if si == 0 && o % 2 == 0 {
                    let theta = std::f64::consts::PI * (o / 2) as f64 / (out_c as f64 / 2.0).ceil();
                    let (dx, dy) = (theta.cos(), theta.sin());
                    for c in 0..3 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let v = (kx as f64 - 1.0) * dx + (ky as f64 - 1.0) * dy;
                                kernel[[o, c * 9 + ky * 3 + kx]] = (v / 3.0) as f32;
                            }
                        }
                    }
                } else {
                    for v in kernel.row_mut(o).iter_mut() {
                        *v = normal.sample(&mut rng) as f32;
                    }
                }
            }
            let bias = Array1::<f32>::from_iter((0..out_c).map(|_| 0.05 * normal.sample(&mut rng) as f32));
            stages.push(vec![Conv3x3 { kernel, bias }]);
            in_c = out_c;
        }
        let adapter = BackboneAdapter {
            name: format!("vgg-ref-{}", channels.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("-")),
            input_side,
            normalization: Normalization::default(),
            stages: channels
                .iter()
                .enumerate()
                .map(|(index, &channels)| StageDescriptor { index, channels })
                .collect(),
        };
        let mut bb = Backbone {
            adapter,
            stages,
            digest: String::new(),
            invocations: AtomicUsize::new(0),
        };
        bb.digest = rng::hex_digest(&bb.to_bytes()?);
        Ok(bb)
    }

    fn header(&self) -> Header {
        Header {
            adapter: self.adapter.clone(),
            convs: self.stages.iter().map(|s| s.iter().map(Conv3x3::shape).collect()).collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header())?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for conv in self.stages.iter().flatten() {
            for v in conv.kernel.iter().chain(conv.bias.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Backbone> {
        let bytes = fs::read(path)
            .map_err(|e| Error::WeightsUnavailable(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::WeightsUnavailable(m) => Error::WeightsUnavailable(format!("{}: {m}", path.display())),
            other => Error::WeightsUnavailable(format!("{}: {other}", path.display())),
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Backbone> {
        let bad = |m: &str| Error::WeightsUnavailable(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("not a weight file"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        header.adapter.validate()?;
        if header.convs.len() != header.adapter.stages.len() {
            return Err(bad("stage count mismatch"));
        }
        let mut floats = bytes[12 + hlen..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
        let mut stages = Vec::new();
        let mut in_c = 3;
        for (convs, desc) in header.convs.iter().zip(&header.adapter.stages) {
            let mut layers = Vec::new();
            for shape in convs {
                if shape.in_channels != in_c {
                    return Err(bad("channel chain broken"));
                }
                let nk = shape.out_channels * shape.in_channels * 9;
                let k: Vec<f32> = floats.by_ref().take(nk).collect();
                let b: Vec<f32> = floats.by_ref().take(shape.out_channels).collect();
                if k.len() != nk || b.len() != shape.out_channels {
                    return Err(bad("truncated weights"));
                }
                layers.push(Conv3x3 {
                    kernel: Array2::from_shape_vec((shape.out_channels, shape.in_channels * 9), k)
                        .expect("length checked"),
                    bias: Array1::from_vec(b),
                });
                in_c = shape.out_channels;
            }
            if layers.is_empty() || in_c != desc.channels {
                return Err(bad("declared stage channels do not match weights"));
            }
            stages.push(layers);
        }
        if floats.next().is_some() {
            return Err(bad("trailing data"));
        }
        Ok(Backbone {
            adapter: header.adapter,
            stages,
            digest: rng::hex_digest(bytes),
            invocations: AtomicUsize::new(0),
        })
    }

    /// Normalized CHW tensor for an RGB image.
    pub fn preprocess(&self, img: &RgbImage) -> Array3<f32> {
        let (w, h) = img.dimensions();
        let n = self.adapter.normalization;
        let mut t = Array3::<f32>::zeros((3, h as usize, w as usize));
        for (x, y, p) in img.enumerate_pixels() {
            for c in 0..3 {
                t[[c, y as usize, x as usize]] = (p.0[c] as f32 / 255.0 - n.mean[c]) / n.std[c];
            }
        }
        t
    }

    /// Runs stages `0..=last` and returns each stage's output map.
    pub fn forward(&self, input: Array3<f32>, last: usize) -> Vec<Array3<f32>> {
        self.invocations.fetch_add(1, Ordering::Relaxed);
        let mut outputs = Vec::with_capacity(last + 1);
        let mut x = input;
        for (i, stage) in self.stages.iter().enumerate().take(last + 1) {
            if i > 0 {
                x = max_pool2(&x);
            }
            for conv in stage {
                x = conv.forward_relu(&x);
            }
            outputs.push(x.clone());
        }
        outputs
    }
}
