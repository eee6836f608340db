//! Spatial aggregation: the leftover region is refined with patches of the
//! target's own known context.
//!
//! The frame is tiled into non-overlapping square patches. Patches touching
//! the leftover are hole patches; patches with no leftover pixel are context
//! patches. A hole patch is described by features pooled over the known
//! pixels around it, a context patch by features pooled over itself. After
//! per-channel standardisation across context patches, cosine similarities
//! go through a softmax with temperature `τ_s`, and every hole patch receives
//! the score-weighted sum of context patches.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::{Encoder, CHANNELS};
use crate::image::{same_dims, Frame, Mask, Plane};
use crate::{math, par};

pub const DEFAULT_PATCH: usize = 8;
/// Width of the feathered halo around the leftover, in pixels.
pub const FEATHER: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialConfig {
    pub patch: usize,
    pub temperature: f32,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        SpatialConfig { patch: DEFAULT_PATCH, temperature: 0.5 }
    }
}

/// Keep the inpainted frame inside the hole and the original outside it.
pub fn blend_for_refine(y_t1: &Frame, x_t: &Frame, hole: &Mask) -> Result<Frame> {
    same_dims(y_t1.dims(), x_t.dims())?;
    y_t1.composite(x_t, hole)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialAttention {
    pub patch: usize,
    /// Patch grid size `(rows, cols)`.
    pub grid: (usize, usize),
    /// Grid coordinates `(col, row)` of hole patches.
    pub hole_patches: Vec<(usize, usize)>,
    /// Grid coordinates `(col, row)` of context patches.
    pub context_patches: Vec<(usize, usize)>,
    /// Row-major: `scores[j * n_context + i]`.
    pub scores: Vec<f32>,
}

impl SpatialAttention {
    pub fn score(&self, hole: usize, context: usize) -> f32 {
        self.scores[hole * self.context_patches.len() + context]
    }

    pub fn row(&self, hole: usize) -> &[f32] {
        let n = self.context_patches.len();
        &self.scores[hole * n..(hole + 1) * n]
    }

    /// Highest-scoring context patch for each hole patch.
    pub fn top1(&self) -> Vec<usize> {
        (0..self.hole_patches.len())
            .map(|j| {
                let row = self.row(j);
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

fn patch_hits(mask: &Mask, px: usize, py: usize, p: usize) -> usize {
    let mut n = 0;
    for y in py * p..(py + 1) * p {
        for x in px * p..(px + 1) * p {
            if mask.get(x, y) > 0.0 {
                n += 1;
            }
        }
    }
    n
}

/// Split the patch grid into hole patches and context patches.
pub fn classify_patches(leftover: &Mask, patch: usize) -> Result<(usize, usize, Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    let (h, w) = leftover.dims();
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::NotDivisible { height: h, width: w, factor: patch });
    }
    let (gh, gw) = (h / patch, w / patch);
    let mut holes = Vec::new();
    let mut ctx = Vec::new();
    for py in 0..gh {
        for px in 0..gw {
            if patch_hits(leftover, px, py, patch) > 0 {
                holes.push((px, py));
            } else {
                ctx.push((px, py));
            }
        }
    }
    Ok((gh, gw, holes, ctx))
}

pub fn spatial_attention(f: &Frame, leftover: &Mask, encoder: &dyn Encoder, cfg: &SpatialConfig) -> Result<SpatialAttention> {
    same_dims(f.dims(), leftover.dims())?;
    let p = cfg.patch;
    let (gh, gw, holes, ctx) = classify_patches(leftover, p)?;
    if holes.is_empty() {
        return Ok(SpatialAttention { patch: p, grid: (gh, gw), hole_patches: holes, context_patches: ctx, scores: Vec::new() });
    }
    if ctx.is_empty() {
        return Err(Error::SpatialContextUnavailable);
    }
    let feats = encoder.encode(f, leftover, 1)?;
    let fm = &feats.levels[0];

    // Per-patch feature sums and known-pixel counts.
    let mut sums = vec![[0.0f64; CHANNELS]; gh * gw];
    let mut counts = vec![0usize; gh * gw];
    for py in 0..gh {
        for px in 0..gw {
            let k = py * gw + px;
            for y in py * p..(py + 1) * p {
                for x in px * p..(px + 1) * p {
                    if leftover.get(x, y) > 0.0 {
                        continue;
                    }
                    counts[k] += 1;
                    for (s, &v) in sums[k].iter_mut().zip(fm.at(x, y)) {
                        *s += v as f64;
                    }
                }
            }
        }
    }
    let ctx_desc: Vec<[f64; CHANNELS]> = ctx
        .iter()
        .map(|&(px, py)| {
            let k = py * gw + px;
            sums[k].map(|s| s / counts[k] as f64)
        })
        .collect();
    let hole_desc: Vec<[f64; CHANNELS]> = holes
        .iter()
        .map(|&(px, py)| {
            // Grow a square neighbourhood until it holds a patch worth of known pixels.
            let mut r = 1;
            loop {
                let mut acc = [0.0f64; CHANNELS];
                let mut n = 0usize;
                for qy in py.saturating_sub(r)..(py + r + 1).min(gh) {
                    for qx in px.saturating_sub(r)..(px + r + 1).min(gw) {
                        let k = qy * gw + qx;
                        n += counts[k];
                        for (a, s) in acc.iter_mut().zip(&sums[k]) {
                            *a += s;
                        }
                    }
                }
                if n >= p * p || r >= gh.max(gw) {
                    return acc.map(|a| if n > 0 { a / n as f64 } else { 0.0 });
                }
                r += 1;
            }
        })
        .collect();

    let nc = ctx_desc.len() as f64;
    let mut mean = [0.0f64; CHANNELS];
    let mut sd = [0.0f64; CHANNELS];
    for d in &ctx_desc {
        for c in 0..CHANNELS {
            mean[c] += d[c] / nc;
        }
    }
    for d in &ctx_desc {
        for c in 0..CHANNELS {
            sd[c] += (d[c] - mean[c]) * (d[c] - mean[c]) / nc;
        }
    }
    let norm = |d: &[f64; CHANNELS]| -> [f64; CHANNELS] {
        let mut z = [0.0f64; CHANNELS];
        for c in 0..CHANNELS {
            z[c] = (d[c] - mean[c]) / (math::sqrt64(sd[c]) + 1e-6);
        }
        let len = math::sqrt64(z.iter().map(|v| v * v).sum());
        if len > 0.0 {
            z.map(|v| v / len)
        } else {
            z
        }
    };
    let cz: Vec<[f64; CHANNELS]> = ctx_desc.iter().map(norm).collect();
    let hz: Vec<[f64; CHANNELS]> = hole_desc.iter().map(norm).collect();
    let inv_t = 1.0 / cfg.temperature as f64;
    let rows: Vec<Vec<f32>> = par::map(&hz, |h| {
        let logits: Vec<f64> = cz.iter().map(|c| (0..CHANNELS).map(|k| h[k] * c[k]).sum::<f64>() * inv_t).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|&l| math::exp64(l - max)).collect();
        let sum: f64 = e.iter().sum();
        e.iter().map(|v| (v / sum) as f32).collect()
    });
    Ok(SpatialAttention { patch: p, grid: (gh, gw), hole_patches: holes, context_patches: ctx, scores: rows.concat() })
}

/// Score-weighted patch sum for hole patch `j`, pixel offset `(ox, oy)`.
fn patch_value(src: &Frame, att: &SpatialAttention, scale: usize, j: usize, ox: usize, oy: usize) -> [f32; 3] {
    let p = att.patch * scale;
    let mut acc = [0.0f32; 3];
    for (i, &(cx, cy)) in att.context_patches.iter().enumerate() {
        let s = att.score(j, i);
        if s == 0.0 {
            continue;
        }
        let v = src.pixel(cx * p + ox, cy * p + oy);
        for c in 0..3 {
            acc[c] += s * v[c];
        }
    }
    acc
}

/// Aggregated patches for every hole patch, laid out per hole patch.
fn aggregate(src: &Frame, att: &SpatialAttention, scale: usize) -> Vec<Vec<[f32; 3]>> {
    let p = att.patch * scale;
    let idx: Vec<usize> = (0..att.hole_patches.len()).collect();
    par::map(&idx, |&j| {
        let mut out = Vec::with_capacity(p * p);
        for oy in 0..p {
            for ox in 0..p {
                out.push(patch_value(src, att, scale, j, ox, oy));
            }
        }
        out
    })
}

/// Transfer without feathering: leftover pixels of every hole patch get the
/// score-weighted context patch; everything else is untouched.
pub fn spatial_transfer_raw(f: &Frame, leftover: &Mask, att: &SpatialAttention) -> Frame {
    transfer(f, leftover, att, 1, None)
}

/// [`spatial_transfer_raw`] plus a linear feather over the [`FEATHER`]
/// pixels around the leftover, limited to hole patches and to `writable`.
pub fn spatial_transfer(f: &Frame, leftover: &Mask, att: &SpatialAttention, writable: &Mask) -> Frame {
    transfer(f, leftover, att, 1, Some(writable))
}

/// Shared by pixel and residual transfer; `scale` enlarges the patch grid.
pub(crate) fn transfer(f: &Frame, leftover: &Mask, att: &SpatialAttention, scale: usize, writable: Option<&Mask>) -> Frame {
    let mut out = f.clone();
    if att.hole_patches.is_empty() || att.context_patches.is_empty() {
        return out;
    }
    let p = att.patch * scale;
    let agg = aggregate(f, att, scale);
    let (h, w) = f.dims();
    for (j, &(px, py)) in att.hole_patches.iter().enumerate() {
        for oy in 0..p {
            for ox in 0..p {
                let (x, y) = (px * p + ox, py * p + oy);
                let v = agg[j][oy * p + ox];
                if leftover.get(x, y) > 0.0 {
                    out.set_pixel(x, y, v);
                    continue;
                }
                let Some(wm) = writable else { continue };
                if wm.get(x, y) == 0.0 {
                    continue;
                }
                let d = leftover_distance(leftover, x, y, h, w);
                if d <= FEATHER {
                    let a = d as f32 / (FEATHER + 1) as f32;
                    let o = f.pixel(x, y);
                    out.set_pixel(x, y, [a * o[0] + (1.0 - a) * v[0], a * o[1] + (1.0 - a) * v[1], a * o[2] + (1.0 - a) * v[2]]);
                }
            }
        }
    }
    out
}

/// Chebyshev distance to the nearest leftover pixel, or `FEATHER + 1` if none
/// is that close.
fn leftover_distance(leftover: &Mask, x: usize, y: usize, h: usize, w: usize) -> usize {
    let mut best = FEATHER + 1;
    for yy in y.saturating_sub(FEATHER)..(y + FEATHER + 1).min(h) {
        for xx in x.saturating_sub(FEATHER)..(x + FEATHER + 1).min(w) {
            if leftover.get(xx, yy) > 0.0 {
                best = best.min(x.abs_diff(xx).max(y.abs_diff(yy)));
            }
        }
    }
    best
}

/// Top-1 context patch index per pixel as a map (for debugging), with `-1`
/// outside hole patches.
pub fn top1_map(att: &SpatialAttention) -> Plane {
    let (gh, gw) = att.grid;
    let p = att.patch;
    let mut m = Plane::filled(gh * p, gw * p, -1.0);
    for (j, i) in att.top1().into_iter().enumerate() {
        let (px, py) = att.hole_patches[j];
        for y in py * p..(py + 1) * p {
            for x in px * p..(px + 1) * p {
                m.set(x, y, i as f32);
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::HandCrafted;

    fn textured(h: usize, w: usize) -> Frame {
        Frame::from_fn(h, w, |x, y| {
            let a = ((x * 13 + y * 7) % 17) as f32 / 16.0;
            [a, 1.0 - a, ((x + y) % 3) as f32 / 2.0]
        })
    }

    fn rect(h: usize, w: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Mask {
        Plane::from_fn(h, w, |x, y| if (x0..x1).contains(&x) && (y0..y1).contains(&y) { 1.0 } else { 0.0 })
    }

    #[test]
    fn blend_cases() {
        let y = Frame::filled(4, 4, [0.3; 3]);
        let x = textured(4, 4);
        assert_eq!(blend_for_refine(&y, &x, &Plane::zeros(4, 4)).unwrap(), x);
        assert_eq!(blend_for_refine(&y, &x, &Plane::filled(4, 4, 1.0)).unwrap(), y);
        let hole = rect(4, 4, 1, 1, 3, 3);
        let b = blend_for_refine(&y, &x, &hole).unwrap();
        assert_eq!(b.pixel(1, 1), [0.3; 3]);
        assert_eq!(b.pixel(0, 0), x.pixel(0, 0));
    }

    #[test]
    fn scores_are_normalised() {
        let f = textured(32, 32);
        let left = rect(32, 32, 10, 10, 20, 14);
        let att = spatial_attention(&f, &left, &HandCrafted, &SpatialConfig::default()).unwrap();
        assert_eq!(att.hole_patches.len(), 2);
        assert_eq!(att.context_patches.len(), 14);
        for j in 0..att.hole_patches.len() {
            let s: f32 = att.row(j).iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn single_context_patch_gets_everything() {
        let f = textured(16, 16);
        // Leftover everywhere except the bottom-right patch.
        let left = rect(16, 16, 8, 8, 16, 16).complement();
        let att = spatial_attention(&f, &left, &HandCrafted, &SpatialConfig::default()).unwrap();
        assert_eq!(att.context_patches, vec![(1, 1)]);
        assert!(att.scores.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn no_context_is_an_error() {
        let f = textured(16, 16);
        let r = spatial_attention(&f, &Plane::filled(16, 16, 1.0), &HandCrafted, &SpatialConfig::default());
        assert!(matches!(r, Err(Error::SpatialContextUnavailable)));
    }

    #[test]
    fn one_hot_scores_copy_the_patch() {
        let f = textured(16, 16);
        let left = rect(16, 16, 0, 0, 8, 8);
        let att = SpatialAttention {
            patch: 8,
            grid: (2, 2),
            hole_patches: vec![(0, 0)],
            context_patches: vec![(1, 0), (0, 1), (1, 1)],
            scores: vec![0.0, 0.0, 1.0],
        };
        let out = spatial_transfer_raw(&f, &left, &att);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(out.pixel(x, y), f.pixel(x + 8, y + 8));
            }
        }
        let feathered = spatial_transfer(&f, &left, &att, &left);
        assert_eq!(feathered, out);
    }

    #[test]
    fn empty_leftover_leaves_frame_alone() {
        let f = textured(16, 16);
        let z = Plane::zeros(16, 16);
        let att = spatial_attention(&f, &z, &HandCrafted, &SpatialConfig::default()).unwrap();
        assert_eq!(spatial_transfer(&f, &z, &att, &Plane::filled(16, 16, 1.0)), f);
    }

    #[test]
    fn feather_halo_is_the_only_extra_write() {
        let f = textured(24, 24);
        let left = rect(24, 24, 10, 10, 13, 13);
        let att = spatial_attention(&f, &left, &HandCrafted, &SpatialConfig::default()).unwrap();
        let out = spatial_transfer(&f, &left, &att, &Plane::filled(24, 24, 1.0));
        for y in 0..24 {
            for x in 0..24 {
                let near = (8..15).contains(&x) && (8..15).contains(&y);
                if !near {
                    assert_eq!(out.pixel(x, y), f.pixel(x, y), "({x},{y})");
                }
            }
        }
        // Nothing writable: only the leftover changes.
        let out = spatial_transfer(&f, &left, &att, &Plane::zeros(24, 24));
        assert_eq!(out, spatial_transfer_raw(&f, &left, &att));
    }
}
