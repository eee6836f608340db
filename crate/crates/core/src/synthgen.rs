//! Procedural test sequences with exact ground truth.
//!
//! A sequence is a continuous scene seen through per-frame transforms: pixel
//! `p` of frame `k` shows `scene(T_k(p) + d_k(p))`, where `T_k` is the
//! frame's global transform and `d_k` an optional smooth local displacement.
//! Frames are rendered at high resolution; low-resolution versions are their
//! box downsample, so both share one scene. Hole pixels are zeroed in the
//! emitted frames and kept in the ground truth.

use alloc::string::String;
use alloc::vec::Vec;
use core::f32::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alignment::AffineTransform;
use crate::error::{Error, Result};
use crate::image::{Frame, Mask, Plane};
use crate::{math, par, pyramid};

/// Names of the standard suites.
pub const SUITES: [&str; 5] = ["static", "pan", "local-deform", "two-texture", "no-coverage"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scene {
    /// Axis-aligned checkerboard with the given square side (high-res px).
    Checker { square: f32 },
    /// Left half: a grid-aligned checker with pixel-scale detail. Right
    /// half: coloured diagonal stripes.
    TwoTexture { square: f32 },
    /// Multi-octave value noise.
    PinkNoise,
    /// Smooth colour gradient.
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    Static,
    /// Content moves by `(-vx, -vy)` px per frame: frame `k` shows the scene
    /// at `p + k·v`.
    Pan { vx: f32, vy: f32 },
    /// `T_k = drift^k`.
    AffineDrift(AffineTransform),
    /// Sinusoidal displacement of the given amplitude (px) and period (px),
    /// growing linearly with the frame index.
    LocalWarp { amplitude: f32, period: f32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskShape {
    Rect,
    Ellipse,
    Blob,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskMotion {
    Static,
    /// Mask centre moves by `(vx, vy)` px per frame.
    Linear { vx: f32, vy: f32 },
    /// The mask is fixed to the scene, hiding the same content in every frame.
    FollowContent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSpec {
    pub shape: MaskShape,
    /// Centre in frame-0 pixel coordinates (high res).
    pub center: (f32, f32),
    /// Full width and height (high res).
    pub size: (f32, f32),
    pub motion: MaskMotion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub scene: Scene,
    pub motion: Motion,
    pub mask: MaskSpec,
    pub frames: usize,
    /// High-resolution frame size.
    pub height: usize,
    pub width: usize,
    /// Ratio between the high- and low-resolution variants.
    pub scale: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn low_dims(&self) -> (usize, usize) {
        (self.height / self.scale, self.width / self.scale)
    }

    fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.scale == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidConfig("synthetic spec needs frames, scale and size".into()));
        }
        if self.height % self.scale != 0 || self.width % self.scale != 0 {
            return Err(Error::NotDivisible { height: self.height, width: self.width, factor: self.scale });
        }
        Ok(())
    }

    /// Global transform of frame `k`: frame pixel → scene coordinates.
    pub fn transform(&self, k: usize) -> AffineTransform {
        match self.motion {
            Motion::Static | Motion::LocalWarp { .. } => AffineTransform::identity(),
            Motion::Pan { vx, vy } => AffineTransform::translation(k as f32 * vx, k as f32 * vy),
            Motion::AffineDrift(d) => (0..k).fold(AffineTransform::identity(), |acc, _| d.compose(&acc)),
        }
    }

    /// Local displacement of frame `k` at `(x, y)`.
    fn displacement(&self, k: usize, x: f32, y: f32) -> (f32, f32) {
        match self.motion {
            Motion::LocalWarp { amplitude, period } => {
                let a = amplitude * k as f32;
                let w = 2.0 * PI / period;
                (a * math::sin(w * y + 0.7), a * math::cos(w * x + 1.3))
            }
            _ => (0.0, 0.0),
        }
    }

    fn scene_pos(&self, t: &AffineTransform, k: usize, x: f32, y: f32) -> (f32, f32) {
        let (sx, sy) = t.apply(x, y);
        let (dx, dy) = self.displacement(k, x, y);
        (sx + dx, sy + dy)
    }

    /// High-res transform taking target pixels to reference pixels:
    /// `T_ref⁻¹ ∘ T_target`. Ignores local displacement.
    pub fn relative_transform(&self, target: usize, reference: usize) -> AffineTransform {
        let inv = self.transform(reference).inverse().expect("frame transforms are invertible");
        inv.compose(&self.transform(target))
    }

    /// [`relative_transform`](Self::relative_transform) on the low-res grid,
    /// whose pixel `x` sits at high-res `s·x + (s−1)/2`.
    pub fn relative_transform_low(&self, target: usize, reference: usize) -> AffineTransform {
        let s = self.scale as f32;
        let c = (s - 1.0) / 2.0;
        let up = AffineTransform::scale_translation(s, c, c);
        let down = up.inverse().expect("scale is positive");
        down.compose(&self.relative_transform(target, reference)).compose(&up)
    }
}

/// One rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub ground_truth: Frame,
    /// Ground truth with hole pixels set to 0.
    pub frame: Frame,
    /// 1 = hole.
    pub mask: Mask,
}

impl SynthFrame {
    /// Low-resolution `(frame, mask, ground_truth)`; the mask is any-hole.
    pub fn low(&self, s: usize) -> (Frame, Mask, Frame) {
        let mask = pyramid::downsample_mask(&self.mask, s).expect("synthetic dims divisible by scale");
        let frame = pyramid::downsample(&self.frame, s).expect("synthetic dims divisible by scale");
        let frame = frame.mul_mask(&mask.complement()).expect("same dims");
        let gt = pyramid::downsample(&self.ground_truth, s).expect("synthetic dims divisible by scale");
        (frame, mask, gt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSequence {
    pub spec: SynthSpec,
    pub frames: Vec<SynthFrame>,
    /// Frame-to-scene transforms (high res).
    pub transforms: Vec<AffineTransform>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthSequence> {
    spec.validate()?;
    let frames = (0..spec.frames).map(|k| render_frame(spec, k)).collect::<Result<Vec<_>>>()?;
    let transforms = (0..spec.frames).map(|k| spec.transform(k)).collect();
    Ok(SynthSequence { spec: spec.clone(), frames, transforms })
}

/// Render frame `k` alone, for callers that stream long sequences.
pub fn render_frame(spec: &SynthSpec, k: usize) -> Result<SynthFrame> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let blobs = blob_parts(spec);
    let tk = spec.transform(k);
    let mut rgb = alloc::vec![0.0f32; h * w * 3];
    par::rows(&mut rgb, w * 3, |y, row| {
        let mut cache = NoiseCache::new();
        for x in 0..w {
            let (sx, sy) = spec.scene_pos(&tk, k, x as f32, y as f32);
            row[x * 3..x * 3 + 3].copy_from_slice(&scene_color(spec.scene, spec.seed, sx, sy, spec.width as f32, &mut cache));
        }
    });
    let gt = Frame::new(h, w, rgb)?;
    let mut hole = alloc::vec![0.0f32; h * w];
    let margin = 4 * spec.scale;
    par::rows(&mut hole, w, |y, row| {
        if y < margin || y + margin >= h {
            return;
        }
        for x in margin..w.saturating_sub(margin) {
            let (mx, my) = mask_pos(spec, &tk, k, x as f32, y as f32);
            if in_shape(&spec.mask, &blobs, mx, my) {
                row[x] = 1.0;
            }
        }
    });
    let mask = Plane::new(h, w, hole)?;
    let frame = gt.mul_mask(&mask.complement())?;
    Ok(SynthFrame { ground_truth: gt, frame, mask })
}

/// Position in the mask's own frame: frame-0 coordinates for moving masks,
/// scene coordinates for content-fixed ones.
fn mask_pos(spec: &SynthSpec, tk: &AffineTransform, k: usize, x: f32, y: f32) -> (f32, f32) {
    match spec.mask.motion {
        MaskMotion::Static => (x, y),
        MaskMotion::Linear { vx, vy } => (x - k as f32 * vx, y - k as f32 * vy),
        MaskMotion::FollowContent => spec.scene_pos(tk, k, x, y),
    }
}

/// Offsets and radii (relative to the mask size) of the ellipses making a blob.
fn blob_parts(spec: &SynthSpec) -> Vec<[f32; 4]> {
    if spec.mask.shape != MaskShape::Blob {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xb10b);
    let mut parts = alloc::vec![[0.0, 0.0, 0.35, 0.35]];
    for _ in 0..4 {
        let rx = rng.random_range(0.12f32..0.2);
        let ry = rng.random_range(0.12f32..0.2);
        let ox = rng.random_range(-(0.5 - rx)..(0.5 - rx));
        let oy = rng.random_range(-(0.5 - ry)..(0.5 - ry));
        parts.push([ox, oy, rx, ry]);
    }
    parts
}

fn in_shape(m: &MaskSpec, blobs: &[[f32; 4]], x: f32, y: f32) -> bool {
    let (cx, cy) = m.center;
    let (sw, sh) = m.size;
    let (dx, dy) = (x - cx, y - cy);
    match m.shape {
        MaskShape::Rect => dx.abs() <= sw / 2.0 && dy.abs() <= sh / 2.0,
        MaskShape::Ellipse => {
            let (a, b) = (dx / (sw / 2.0), dy / (sh / 2.0));
            a * a + b * b <= 1.0
        }
        MaskShape::Blob => blobs.iter().any(|&[ox, oy, rx, ry]| {
            let a = (dx / sw - ox) / rx;
            let b = (dy / sh - oy) / ry;
            a * a + b * b <= 1.0
        }),
    }
}

fn hash(seed: u64, a: i64, b: i64) -> u64 {
    let mut z = seed ^ (a as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (b as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f32 {
    (hash(seed, ix, iy) >> 40) as f32 / (1u64 << 24) as f32
}

/// Corner values of the lattice cell last visited by one noise layer.
#[derive(Clone, Copy)]
struct CellCache {
    key: (i64, i64),
    corners: [f32; 4],
}

/// Per-octave cell caches for the two fractal layers.
struct NoiseCache([[CellCache; 2]; OCTAVES.len()]);

impl NoiseCache {
    fn new() -> Self {
        NoiseCache([[CellCache { key: (i64::MIN, i64::MIN), corners: [0.0; 4] }; 2]; OCTAVES.len()])
    }
}

const OCTAVES: [f32; 7] = [128.0, 64.0, 32.0, 16.0, 8.0, 4.0, 2.0];
/// `√cell` for each octave.
const AMPLITUDES: [f32; 7] = [11.313708, 8.0, 5.656854, 4.0, 2.828427, 2.0, 1.4142135];

/// `⌊v⌋` for the moderate coordinates the scenes use.
#[inline]
fn floor_i(v: f32) -> i64 {
    let i = v as i64;
    if (i as f32) > v {
        i - 1
    } else {
        i
    }
}

/// Two independent fractal value-noise layers at the same point. Each
/// octave is smoothstep-interpolated value noise on a lattice of the
/// octave's cell size, weighted by `√cell`.
fn fractal_pair(seeds: [u64; 2], x: f32, y: f32, cache: &mut NoiseCache) -> [f32; 2] {
    let mut acc = [0.0f32; 2];
    let mut norm = 0.0;
    for (i, (&cell, &amp)) in OCTAVES.iter().zip(&AMPLITUDES).enumerate() {
        // Cells are powers of two, so this is exact.
        let inv = 1.0 / cell;
        let (u, v) = (x * inv, y * inv);
        let (ix, iy) = (floor_i(u), floor_i(v));
        let (tx, ty) = (u - ix as f32, v - iy as f32);
        let (sx, sy) = (tx * tx * (3.0 - 2.0 * tx), ty * ty * (3.0 - 2.0 * ty));
        for (layer, slot) in cache.0[i].iter_mut().enumerate() {
            if slot.key != (ix, iy) {
                let seed = seeds[layer].wrapping_add(i as u64 * 7919);
                slot.key = (ix, iy);
                slot.corners = [lattice(seed, ix, iy), lattice(seed, ix + 1, iy), lattice(seed, ix, iy + 1), lattice(seed, ix + 1, iy + 1)];
            }
            let [a, b, c, d] = slot.corners;
            let top = a + (b - a) * sx;
            let bot = c + (d - c) * sx;
            acc[layer] += amp * (top + (bot - top) * sy);
        }
        norm += amp;
    }
    acc.map(|a| (0.5 + 2.2 * (a / norm - 0.5)).clamp(0.0, 1.0))
}

fn scene_color(scene: Scene, seed: u64, x: f32, y: f32, width: f32, cache: &mut NoiseCache) -> [f32; 3] {
    match scene {
        Scene::Checker { square } => {
            let c = ((math::floor(x / square) as i64 + math::floor(y / square) as i64) & 1) as f32;
            let v = 0.2 + 0.6 * c;
            [v, v, v]
        }
        Scene::TwoTexture { square } => {
            if x < width / 2.0 {
                let c = ((math::floor(x / square) as i64 + math::floor(y / square) as i64) & 1) as f32;
                let fine = ((math::floor(x) as i64 + math::floor(y) as i64) & 1) as f32;
                let v = 0.25 + 0.5 * c + 0.1 * (fine - 0.5);
                [v, 0.9 * v, 0.8 * v]
            } else {
                let t = (x + 2.0 * y) / (3.0 * square);
                let s = 0.5 + 0.4 * math::sin(2.0 * PI * t);
                [0.2 + 0.3 * s, 0.8 * s, 0.9 - 0.6 * s]
            }
        }
        Scene::PinkNoise => {
            let [base, chroma] = fractal_pair([seed, seed ^ 0xc0c0_a], x, y, cache);
            let chroma = chroma - 0.5;
            [
                (base + 0.3 * chroma).clamp(0.0, 1.0),
                base,
                (base - 0.3 * chroma).clamp(0.0, 1.0),
            ]
        }
        Scene::Gradient => {
            let u = x / width;
            let v = y / width;
            [(0.2 + 0.6 * u).clamp(0.0, 1.0), (0.3 + 0.5 * v).clamp(0.0, 1.0), 0.5]
        }
    }
}

/// Randomised spec of a standard suite. `low` is the low-resolution
/// `(height, width)`; the high-resolution frame is `scale` times larger.
pub fn suite(name: &str, seed: u64, low: (usize, usize), scale: usize, frames: usize) -> Result<SynthSpec> {
    let (h, w) = (low.0 * scale, low.1 * scale);
    let (hf, wf) = (h as f32, w as f32);
    let s = scale as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = (wf / 2.0 + rng.random_range(-0.05..0.05) * wf, hf / 2.0 + rng.random_range(-0.05..0.05) * hf);
    let shape = match rng.random_range(0..3) {
        0 => MaskShape::Rect,
        1 => MaskShape::Ellipse,
        _ => MaskShape::Blob,
    };
    let base = SynthSpec {
        scene: Scene::PinkNoise,
        motion: Motion::Static,
        mask: MaskSpec { shape, center, size: (0.12 * wf, 0.12 * hf), motion: MaskMotion::Static },
        frames,
        height: h,
        width: w,
        scale,
        seed,
    };
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let spec = match name {
        "static" => {
            let v = rng.random_range(0.04..0.06) * wf * sign;
            SynthSpec { mask: MaskSpec { size: (0.8 * v.abs(), 0.15 * hf), motion: MaskMotion::Linear { vx: v, vy: 0.0 }, ..base.mask }, ..base }
        }
        "pan" => {
            // At least two frames on each side sweep the hole completely.
            let vx = sign * math::round(rng.random_range(0.015..0.025) * wf);
            let vy = math::round(rng.random_range(-0.008..0.008) * hf);
            let mask = MaskSpec { size: (1.5 * vx.abs(), 0.12 * hf), ..base.mask };
            SynthSpec { motion: Motion::Pan { vx, vy }, mask, ..base }
        }
        "local-deform" => {
            let v = rng.random_range(0.04..0.06) * wf * sign;
            let motion = Motion::LocalWarp { amplitude: rng.random_range(0.6..1.0) * s, period: rng.random_range(0.25..0.4) * wf };
            let mask = MaskSpec { size: (0.8 * v.abs(), 0.15 * hf), motion: MaskMotion::Linear { vx: v, vy: 0.0 }, ..base.mask };
            SynthSpec { motion, mask, ..base }
        }
        "two-texture" => {
            // Squares of 4 low-res pixels line up with the patch grid.
            let square = 4.0 * s;
            let cx = math::round(rng.random_range(0.2..0.3) * wf);
            let mask = MaskSpec { shape: MaskShape::Rect, center: (cx, center.1), size: (0.1 * wf, 0.1 * hf), motion: MaskMotion::Static };
            SynthSpec { scene: Scene::TwoTexture { square }, mask, ..base }
        }
        "no-coverage" => {
            // Whole low-res pixels per frame, so the hole maps onto itself exactly.
            let vx = sign * s * math::round(rng.random_range(0.01..0.02) * low.1 as f32);
            SynthSpec { motion: Motion::Pan { vx, vy: 0.0 }, mask: MaskSpec { motion: MaskMotion::FollowContent, ..base.mask }, ..base }
        }
        other => return Err(Error::InvalidConfig(alloc::format!("unknown suite {other:?}"))),
    };
    Ok(spec)
}

/// The five standard suites with default sizes (512×512 low res, 4×, 5 frames).
pub fn standard_suites(seed: u64) -> Vec<(String, SynthSpec)> {
    SUITES
        .iter()
        .map(|&n| (String::from(n), suite(n, seed, (512, 512), pyramid::DEFAULT_SCALE, 5).expect("known suite")))
        .collect()
}
