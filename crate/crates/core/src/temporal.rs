//! Temporal aggregation: context matching between the target and its aligned
//! references, masked softmax attention, and transfer of reference content
//! into the target hole.
//!
//! Each reference gets one scalar similarity `T_r`: the visibility-weighted
//! mean cosine between per-pixel feature vectors at the lowest pyramid level.
//! At each pixel the weights are a softmax of `T_r / τ` over the references
//! that can donate there. Pixels of the hole that no reference can see form
//! the leftover mask, which is pre-filled by push-pull diffusion.

use alloc::vec;
use alloc::vec::Vec;

use crate::alignment::AlignedReference;
use crate::error::{Error, Result};
use crate::features::{self, Encoder, FeatureMap, FeaturePyramid, CHANNELS};
use crate::image::{same_dims, Frame, Mask, Plane};
use crate::{diffusion, math, par};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalConfig {
    pub temperature: f32,
    /// `C_visible` above this counts as covered.
    pub visible_threshold: f32,
    pub pyramid_levels: usize,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig { temperature: 0.5, visible_threshold: 1e-3, pyramid_levels: features::DEFAULT_LEVELS }
    }
}

/// Where a reference is comparable with the target (`matching`) and where it
/// may donate content (`donating`).
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMaps {
    pub matching: Mask,
    pub donating: Mask,
}

pub fn visibility(target_mask: &Mask, aligned: &AlignedReference) -> VisibilityMaps {
    assert_eq!(target_mask.dims(), aligned.mask.dims());
    let (h, w) = target_mask.dims();
    let mut matching = vec![0.0f32; h * w];
    let mut donating = vec![0.0f32; h * w];
    for i in 0..h * w {
        let d = (1.0 - aligned.mask.data()[i]) * aligned.validity.data()[i];
        donating[i] = d;
        matching[i] = (1.0 - target_mask.data()[i]) * d;
    }
    VisibilityMaps { matching: Plane::from_raw(h, w, matching), donating: Plane::from_raw(h, w, donating) }
}

/// Visibility-weighted mean cosine similarity of two feature maps, or `None`
/// if nothing is jointly visible.
pub fn similarity_map(ft: &FeatureMap, fr: &FeatureMap, v: &Plane) -> Option<f32> {
    assert_eq!(ft.dims(), fr.dims());
    assert_eq!(ft.dims(), v.dims());
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (i, &vi) in v.data().iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        den += vi as f64;
        let a = &ft.data()[i * CHANNELS..(i + 1) * CHANNELS];
        let b = &fr.data()[i * CHANNELS..(i + 1) * CHANNELS];
        let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
        for c in 0..CHANNELS {
            ab += a[c] as f64 * b[c] as f64;
            aa += a[c] as f64 * a[c] as f64;
            bb += b[c] as f64 * b[c] as f64;
        }
        if aa > 0.0 && bb > 0.0 {
            num += vi as f64 * ab / math::sqrt64(aa * bb);
        }
    }
    if den == 0.0 {
        return None;
    }
    Some(((num / den) as f32).clamp(-1.0, 1.0))
}

/// Similarity at the lowest pyramid level. `v_match` is at level 0 and is
/// reduced with the all-visible rule.
pub fn similarity(ft: &FeaturePyramid, fr: &FeaturePyramid, v_match: &Plane) -> Option<f32> {
    let l = ft.level_count() - 1;
    let v = features::visibility_at_level(v_match, l);
    similarity_map(ft.lowest(), fr.lowest(), &v)
}

/// Per-pixel softmax of `T_r / τ` over references with `donating_r(p) = 1`.
/// References with an undefined similarity get zero weight everywhere.
pub fn masked_softmax(similarities: &[Option<f32>], donating: &[&Plane], temperature: f32) -> Vec<Plane> {
    assert!(temperature > 0.0);
    assert_eq!(similarities.len(), donating.len());
    if donating.is_empty() {
        return Vec::new();
    }
    let (h, w) = donating[0].dims();
    let logits: Vec<Option<f32>> = similarities.iter().map(|t| t.map(|t| t / temperature)).collect();
    let mut out: Vec<Vec<f32>> = vec![vec![0.0; h * w]; donating.len()];
    for i in 0..h * w {
        let mut max = f32::NEG_INFINITY;
        for (r, d) in donating.iter().enumerate() {
            if let Some(z) = logits[r] {
                if d.data()[i] > 0.0 && z > max {
                    max = z;
                }
            }
        }
        if max == f32::NEG_INFINITY {
            continue;
        }
        let mut sum = 0.0f32;
        for (r, d) in donating.iter().enumerate() {
            if let Some(z) = logits[r] {
                if d.data()[i] > 0.0 {
                    let e = math::exp(z - max);
                    out[r][i] = e;
                    sum += e;
                }
            }
        }
        for o in out.iter_mut() {
            o[i] /= sum;
        }
    }
    out.into_iter().map(|d| Plane::from_raw(h, w, d)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalAttention {
    /// One entry per aligned reference; `None` when nothing was comparable.
    pub similarities: Vec<Option<f32>>,
    /// Per-reference weight maps at processing resolution.
    pub weights: Vec<Plane>,
    pub visibility: Vec<VisibilityMaps>,
    pub temperature: f32,
}

impl TemporalAttention {
    /// Weights recomputed at pyramid level `l` from the shared similarities
    /// and the donating masks reduced to that level.
    pub fn weights_at_level(&self, l: usize) -> Vec<Plane> {
        if l == 0 {
            return self.weights.clone();
        }
        let donating: Vec<Plane> = self.visibility.iter().map(|v| features::visibility_at_level(&v.donating, l)).collect();
        let refs: Vec<&Plane> = donating.iter().collect();
        masked_softmax(&self.similarities, &refs, self.temperature)
    }

    /// `Σ_r S_r`, clamped to [0, 1].
    pub fn coverage(&self) -> Plane {
        let (h, w) = self.weights.first().map(|p| p.dims()).unwrap_or((0, 0));
        let mut c = vec![0.0f32; h * w];
        for p in &self.weights {
            for (a, &b) in c.iter_mut().zip(p.data()) {
                *a += b;
            }
        }
        Plane::from_raw(h, w, c.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    /// Index of the highest-weighted reference per pixel, or `None`.
    pub fn top1(&self) -> Vec<Option<usize>> {
        Self::top1_of(&self.weights)
    }

    /// [`TemporalAttention::top1`] for a bare set of weight maps.
    pub fn top1_of(weights: &[Plane]) -> Vec<Option<usize>> {
        let n = weights.first().map(|p| p.data().len()).unwrap_or(0);
        (0..n)
            .map(|i| {
                let mut best: Option<(usize, f32)> = None;
                for (r, p) in weights.iter().enumerate() {
                    let v = p.data()[i];
                    if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                        best = Some((r, v));
                    }
                }
                best.map(|(r, _)| r)
            })
            .collect()
    }
}

/// `out(p) = Σ_r S_r(p) · F_r(p)`.
pub fn attention_transfer(refs: &[&FeatureMap], weights: &[Plane]) -> FeatureMap {
    assert_eq!(refs.len(), weights.len());
    assert!(!refs.is_empty());
    let (h, w) = refs[0].dims();
    let mut out = FeatureMap::zeros(h, w);
    for (f, s) in refs.iter().zip(weights) {
        for (i, &wi) in s.data().iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            let src = &f.data()[i * CHANNELS..(i + 1) * CHANNELS];
            let dst = &mut out.data_mut()[i * CHANNELS..(i + 1) * CHANNELS];
            for c in 0..CHANNELS {
                dst[c] += wi * src[c];
            }
        }
    }
    out
}

/// Attention transfer on every level of the reference pyramids.
pub fn multiscale_transfer(refs: &[&FeaturePyramid], attention: &TemporalAttention) -> Vec<FeatureMap> {
    let levels = refs.first().map(|p| p.level_count()).unwrap_or(0);
    (0..levels)
        .map(|l| {
            let maps: Vec<&FeatureMap> = refs.iter().map(|p| &p.levels[l]).collect();
            attention_transfer(&maps, &attention.weights_at_level(l))
        })
        .collect()
}

/// `out(p) = Σ_r S_r(p) · X_r(p)` on aligned reference frames.
pub fn pixel_transfer(refs: &[&Frame], weights: &[Plane]) -> Frame {
    assert_eq!(refs.len(), weights.len());
    assert!(!refs.is_empty());
    let (h, w) = refs[0].dims();
    let mut out = Frame::zeros(h, w);
    for (f, s) in refs.iter().zip(weights) {
        for (i, &wi) in s.data().iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            for c in 0..3 {
                out.data_mut()[i * 3 + c] += wi * f.data()[i * 3 + c];
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalResult {
    pub y_t1: Frame,
    /// Hole pixels no reference could fill.
    pub leftover: Mask,
    /// Binarised `C_visible`.
    pub coverage: Mask,
    pub attention: TemporalAttention,
}

/// Fill the target hole from aligned references; the leftover is diffused.
pub fn temporal_inpaint(
    target: &Frame,
    target_mask: &Mask,
    aligned: &[AlignedReference],
    encoder: &dyn Encoder,
    cfg: &TemporalConfig,
) -> Result<TemporalResult> {
    if aligned.is_empty() {
        return Err(Error::NoUsableReference);
    }
    same_dims(target.dims(), target_mask.dims())?;
    for a in aligned {
        same_dims(target.dims(), a.frame.dims())?;
    }
    let levels = cfg.pyramid_levels;
    let ft = encoder.encode(target, target_mask, levels)?;
    let per_ref: Vec<Result<(VisibilityMaps, Option<f32>)>> = par::map(aligned, |a| {
        let v = visibility(target_mask, a);
        let fr = encoder.encode(&a.frame, &a.mask, levels)?;
        let t = similarity(&ft, &fr, &v.matching);
        Ok((v, t))
    });
    let mut vis = Vec::with_capacity(aligned.len());
    let mut sims = Vec::with_capacity(aligned.len());
    for r in per_ref {
        let (v, t) = r?;
        vis.push(v);
        sims.push(t);
    }
    let donating: Vec<&Plane> = vis.iter().map(|v| &v.donating).collect();
    let weights = masked_softmax(&sims, &donating, cfg.temperature);
    let attention = TemporalAttention { similarities: sims, weights, visibility: vis, temperature: cfg.temperature };

    let coverage = attention.coverage().binarize(cfg.visible_threshold);
    let leftover = target_mask.mul(&coverage.complement())?;
    let frames: Vec<&Frame> = aligned.iter().map(|a| &a.frame).collect();
    let transferred = pixel_transfer(&frames, &attention.weights);

    let (h, w) = target.dims();
    let mut y = target.clone();
    for i in 0..h * w {
        if target_mask.data()[i] > 0.0 && coverage.data()[i] > 0.0 {
            y.data_mut()[i * 3..i * 3 + 3].copy_from_slice(&transferred.data()[i * 3..i * 3 + 3]);
        }
    }
    let y_t1 = if leftover.any() { diffusion::fill_frame(&y, &leftover) } else { y };
    Ok(TemporalResult { y_t1, leftover, coverage, attention })
}
