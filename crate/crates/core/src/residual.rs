//! Full-resolution recovery by residual aggregation.
//!
//! The low-resolution result is upsampled into the hole. Where a reference
//! donated content, the references' high-frequency residuals are warped with
//! the rescaled alignments and added with the temporal attention weights.
//! Where none did, residual patches from the target's own context are added
//! with the spatial attention scores.

use alloc::vec::Vec;

use crate::alignment::Alignment;
use crate::error::Result;
use crate::image::{same_dims, Frame, Mask, Plane};
use crate::spatial::SpatialAttention;
use crate::{diffusion, par, pyramid, spatial};

/// Which residual stages run on top of the upsampled low-resolution result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssemblyMode {
    /// Bilinear upsampling only.
    Bilinear,
    /// Plus temporal residual aggregation.
    Temporal,
    /// Plus temporal and spatial residual aggregation.
    #[default]
    TemporalSpatial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighResAssembly {
    /// Upsampled low-res result inside the hole, raw frame outside.
    pub upsampled_base: Frame,
    pub temporal_zone: Mask,
    pub leftover_zone: Mask,
    /// After temporal residual aggregation only.
    pub temporal: Frame,
    pub result: Frame,
}

/// Full-res hole pixels whose low-res pixel received temporal content.
pub fn temporal_zone(hole: &Mask, coverage_low: &Mask, s: usize) -> Mask {
    let (h, w) = hole.dims();
    Plane::from_fn(h, w, |x, y| if hole.get(x, y) > 0.0 && coverage_low.get(x / s, y / s) > 0.0 { 1.0 } else { 0.0 })
}

/// The rest of the hole.
pub fn leftover_zone(hole: &Mask, temporal_zone: &Mask) -> Mask {
    let (h, w) = hole.dims();
    Plane::from_fn(h, w, |x, y| if hole.get(x, y) > 0.0 && temporal_zone.get(x, y) == 0.0 { 1.0 } else { 0.0 })
}

/// Upsampled low-res result composited into the raw frame's hole.
pub fn upsampled_base(x_raw: &Frame, hole: &Mask, y_low: &Frame, s: usize) -> Result<Frame> {
    same_dims(x_raw.dims(), (y_low.height() * s, y_low.width() * s))?;
    same_dims(x_raw.dims(), hole.dims())?;
    // Same arithmetic as `upsample(y_low, s).composite(x_raw, hole)`, but
    // only the hole is upsampled.
    let (h, w) = x_raw.dims();
    let xt = pyramid::axis_taps(w, y_low.width(), s);
    let yt = pyramid::axis_taps(h, y_low.height(), s);
    let mut out = x_raw.clone();
    par::rows(out.data_mut(), w * 3, |y, row| {
        for x in 0..w {
            let m = hole.get(x, y);
            if m == 0.0 {
                continue;
            }
            let up = up_at(y_low, &xt, &yt, x, y);
            for c in 0..3 {
                row[x * 3 + c] = if m == 1.0 { up[c] } else { m * up[c] + (1.0 - m) * row[x * 3 + c] };
            }
        }
    });
    Ok(out)
}

/// One pixel of `pyramid::upsample(low, s)` given that call's axis taps.
fn up_at(low: &Frame, xt: &[(usize, usize, f32)], yt: &[(usize, usize, f32)], x: usize, y: usize) -> [f32; 3] {
    let lw = low.width();
    let src = low.data();
    let (y0, y1, fy) = yt[y];
    let (x0, x1, fx) = xt[x];
    let mut out = [0.0f32; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let top = src[(y0 * lw + x0) * 3 + c] * (1.0 - fx) + src[(y0 * lw + x1) * 3 + c] * fx;
        let bot = src[(y1 * lw + x0) * 3 + c] * (1.0 - fx) + src[(y1 * lw + x1) * 3 + c] * fx;
        *o = top * (1.0 - fy) + bot * fy;
    }
    out
}

/// Residual of a raw full-res frame against its own low-res version with the
/// hole diffused away; zero inside the hole.
pub fn reference_residual(raw: &Frame, hole: &Mask, s: usize) -> Result<Frame> {
    let low_mask = pyramid::downsample_mask(hole, s)?;
    let low = pyramid::downsample(raw, s)?;
    let low = if low_mask.any() { diffusion::fill_frame(&low, &low_mask) } else { low };
    let mut r = pyramid::residual_of(raw, &low, s);
    if hole.any() {
        r = r.mul_mask(&hole.complement())?;
    }
    Ok(r)
}

/// A full-res residual that can be sampled at arbitrary positions.
pub trait ResidualField {
    fn dims(&self) -> (usize, usize);
    /// Bilinear sample, `None` outside the image.
    fn sample(&self, x: f32, y: f32) -> Option<[f32; 3]>;
}

impl ResidualField for Frame {
    fn dims(&self) -> (usize, usize) {
        Frame::dims(self)
    }

    fn sample(&self, x: f32, y: f32) -> Option<[f32; 3]> {
        Frame::sample(self, x, y)
    }
}

/// [`reference_residual`] evaluated on demand. Only the pixels a warp
/// actually reads are computed; values match the materialised residual
/// bit for bit.
pub struct ReferenceResidual {
    raw: Frame,
    hole: Mask,
    low: Frame,
    xt: Vec<(usize, usize, f32)>,
    yt: Vec<(usize, usize, f32)>,
}

impl ReferenceResidual {
    pub fn new(raw: Frame, hole: Mask, s: usize) -> Result<Self> {
        same_dims(raw.dims(), hole.dims())?;
        let low_mask = pyramid::downsample_mask(&hole, s)?;
        let low = pyramid::downsample(&raw, s)?;
        let low = if low_mask.any() { diffusion::fill_frame(&low, &low_mask) } else { low };
        let (h, w) = raw.dims();
        let xt = pyramid::axis_taps(w, low.width(), s);
        let yt = pyramid::axis_taps(h, low.height(), s);
        Ok(ReferenceResidual { raw, hole, low, xt, yt })
    }

    fn value(&self, x: usize, y: usize) -> [f32; 3] {
        let up = up_at(&self.low, &self.xt, &self.yt, x, y);
        let keep = 1.0 - self.hole.get(x, y);
        let raw = self.raw.pixel(x, y);
        [(raw[0] - up[0]) * keep, (raw[1] - up[1]) * keep, (raw[2] - up[2]) * keep]
    }

    pub fn to_frame(&self) -> Frame {
        let (h, w) = self.raw.dims();
        Frame::from_fn(h, w, |x, y| self.value(x, y))
    }
}

impl ResidualField for ReferenceResidual {
    fn dims(&self) -> (usize, usize) {
        self.raw.dims()
    }

    fn sample(&self, x: f32, y: f32) -> Option<[f32; 3]> {
        let (h, w) = self.raw.dims();
        let (x0, x1, fx) = crate::image::taps(x, w)?;
        let (y0, y1, fy) = crate::image::taps(y, h)?;
        let (a, b, c, d) = (self.value(x0, y0), self.value(x1, y0), self.value(x0, y1), self.value(x1, y1));
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let top = a[k] * (1.0 - fx) + b[k] * fx;
            let bot = c[k] * (1.0 - fx) + d[k] * fx;
            *o = top * (1.0 - fy) + bot * fy;
        }
        Some(out)
    }
}

/// Sample position at full resolution for a low-res alignment.
fn full_res_position(alignment: &Alignment, s: usize, x: usize, y: usize) -> (f32, f32) {
    let (xf, yf) = (x as f32, y as f32);
    match alignment {
        Alignment::Affine(t) => t.rescaled(s).apply(xf, yf),
        Alignment::Flow(f) => {
            let (h, w) = f.dims();
            let sf = s as f32;
            let lx = ((xf + 0.5) / sf - 0.5).clamp(0.0, (w - 1) as f32);
            let ly = ((yf + 0.5) / sf - 0.5).clamp(0.0, (h - 1) as f32);
            let u = f.u.sample(lx, ly).unwrap_or(0.0) * sf;
            let v = f.v.sample(lx, ly).unwrap_or(0.0) * sf;
            (xf + u, yf + v)
        }
    }
}

/// Adds weighted, aligned residuals one reference at a time, so only one
/// full-res reference residual has to be alive at once.
pub struct TemporalResidualAccumulator<'a> {
    out: Frame,
    zone: &'a Mask,
    scale: usize,
}

impl<'a> TemporalResidualAccumulator<'a> {
    pub fn new(base: &Frame, zone: &'a Mask, scale: usize) -> Self {
        assert_eq!(base.dims(), zone.dims());
        TemporalResidualAccumulator { out: base.clone(), zone, scale }
    }

    /// `out(p) += S↑(p) · R(align(p))` on the zone; `weights` is low-res.
    pub fn add<R: ResidualField + Sync + ?Sized>(&mut self, residual: &R, alignment: &Alignment, weights: &Plane) {
        let (h, w) = self.out.dims();
        assert_eq!(residual.dims(), (h, w));
        let s = self.scale;
        let zone = self.zone;
        par::rows(self.out.data_mut(), w * 3, |y, row| {
            for x in 0..w {
                if zone.get(x, y) == 0.0 {
                    continue;
                }
                let wt = weights.get(x / s, y / s);
                if wt == 0.0 {
                    continue;
                }
                let (sx, sy) = full_res_position(alignment, s, x, y);
                if let Some(r) = residual.sample(sx, sy) {
                    for c in 0..3 {
                        row[x * 3 + c] += wt * r[c];
                    }
                }
            }
        });
    }

    pub fn finish(self) -> Frame {
        self.out
    }
}

pub fn temporal_residual_aggregate(
    ref_residuals: &[&Frame],
    alignments: &[&Alignment],
    weights: &[&Plane],
    base: &Frame,
    temporal_zone: &Mask,
    s: usize,
) -> Frame {
    assert_eq!(ref_residuals.len(), alignments.len());
    assert_eq!(ref_residuals.len(), weights.len());
    let mut acc = TemporalResidualAccumulator::new(base, temporal_zone, s);
    for ((r, a), w) in ref_residuals.iter().zip(alignments).zip(weights) {
        acc.add(*r, a, w);
    }
    acc.finish()
}

/// Adds score-weighted context residual patches (grid scaled by `s`) to the
/// leftover zone.
pub fn spatial_residual_aggregate(target_residual: &Frame, att: &SpatialAttention, base: &Frame, leftover_zone: &Mask, s: usize) -> Frame {
    let mut out = base.clone();
    if att.hole_patches.is_empty() || att.context_patches.is_empty() || !leftover_zone.any() {
        return out;
    }
    let (h, w) = base.dims();
    let transferred = spatial::transfer(target_residual, leftover_zone, att, s, None);
    for i in 0..h * w {
        if leftover_zone.data()[i] > 0.0 {
            for c in 0..3 {
                out.data_mut()[i * 3 + c] += transferred.data()[i * 3 + c];
            }
        }
    }
    out
}

/// One aligned reference as seen by [`assemble`].
pub struct ResidualSource<'a> {
    pub source_index: usize,
    pub alignment: &'a Alignment,
    /// Low-res temporal weights of this reference.
    pub weights: &'a Plane,
}

pub struct AssemblyInputs<'a> {
    pub x_raw: &'a Frame,
    /// Full-res hole mask.
    pub hole: &'a Mask,
    /// Low-res inpainted frame.
    pub y_low: &'a Frame,
    /// Binarised low-res `C_visible`.
    pub coverage_low: &'a Mask,
    pub spatial: Option<&'a SpatialAttention>,
    pub scale: usize,
    pub mode: AssemblyMode,
}

/// Build the full-resolution frame. `residual_of(index)` returns the full-res
/// residual of reference `index`; it is called once per reference even when
/// several aligned variants share it.
pub fn assemble<R: ResidualField + Sync>(
    inputs: &AssemblyInputs<'_>,
    sources: &[ResidualSource<'_>],
    residual_of: &mut dyn FnMut(usize) -> Result<R>,
) -> Result<HighResAssembly> {
    let s = inputs.scale;
    let hole = inputs.hole;
    same_dims(inputs.x_raw.dims(), hole.dims())?;
    let (h, w) = hole.dims();
    if !hole.any() {
        return Ok(HighResAssembly {
            upsampled_base: inputs.x_raw.clone(),
            temporal_zone: Plane::zeros(h, w),
            leftover_zone: Plane::zeros(h, w),
            temporal: inputs.x_raw.clone(),
            result: inputs.x_raw.clone(),
        });
    }
    let base = upsampled_base(inputs.x_raw, hole, inputs.y_low, s)?;
    let tz = temporal_zone(hole, inputs.coverage_low, s);
    let lz = leftover_zone(hole, &tz);

    let temporal = if inputs.mode != AssemblyMode::Bilinear && tz.any() {
        let mut acc = TemporalResidualAccumulator::new(&base, &tz, s);
        let mut order: Vec<usize> = (0..sources.len()).collect();
        order.sort_by_key(|&i| sources[i].source_index);
        let mut cached: Option<(usize, R)> = None;
        for i in order {
            let src = &sources[i];
            if src.weights.data().iter().all(|&v| v == 0.0) {
                continue;
            }
            if cached.as_ref().map(|c| c.0) != Some(src.source_index) {
                // Release the previous residual before loading the next one.
                drop(cached.take());
                cached = Some((src.source_index, residual_of(src.source_index)?));
            }
            let r = &cached.as_ref().expect("just filled").1;
            acc.add(r, src.alignment, src.weights);
        }
        acc.finish()
    } else {
        base.clone()
    };

    let result = match (inputs.mode, inputs.spatial) {
        (AssemblyMode::TemporalSpatial, Some(att)) if lz.any() => {
            let low = pyramid::downsample(&temporal, s)?;
            let r = pyramid::residual_of(&temporal, &low, s);
            spatial_residual_aggregate(&r, att, &temporal, &lz, s)
        }
        _ => temporal.clone(),
    };
    Ok(HighResAssembly { upsampled_base: base, temporal_zone: tz, leftover_zone: lz, temporal, result })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{AffineTransform, FlowField};
    use alloc::vec;

    fn detailed(h: usize, w: usize) -> Frame {
        Frame::from_fn(h, w, |x, y| {
            let a = ((x * 7 + y * 3) % 5) as f32 / 4.0;
            [a, ((x ^ y) & 1) as f32, 0.5 * a]
        })
    }

    fn rect(h: usize, w: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Mask {
        Plane::from_fn(h, w, |x, y| if (x0..x1).contains(&x) && (y0..y1).contains(&y) { 1.0 } else { 0.0 })
    }

    #[test]
    fn zones_partition_the_hole() {
        let hole = rect(16, 16, 3, 3, 13, 11);
        let cov = Plane::from_fn(4, 4, |x, _| if x < 2 { 1.0 } else { 0.0 });
        let tz = temporal_zone(&hole, &cov, 4);
        let lz = leftover_zone(&hole, &tz);
        for i in 0..256 {
            let (t, l, m) = (tz.data()[i], lz.data()[i], hole.data()[i]);
            assert!(t * l == 0.0);
            assert_eq!(t + l, m);
        }
    }

    #[test]
    fn identity_single_reference_reconstructs_exactly() {
        let s = 4;
        let gt = detailed(32, 32);
        let low = pyramid::downsample(&gt, s).unwrap();
        let hole = rect(32, 32, 8, 8, 24, 20);
        let x_raw = gt.mul_mask(&hole.complement()).unwrap();
        let base = upsampled_base(&x_raw, &hole, &low, s).unwrap();
        let r = pyramid::residual_of(&gt, &low, s);
        let ones = Plane::filled(8, 8, 1.0);
        for a in [Alignment::Affine(AffineTransform::identity()), Alignment::Flow(FlowField::zeros(8, 8))] {
            let out = temporal_residual_aggregate(&[&r], &[&a], &[&ones], &base, &hole, s);
            for (p, q) in out.data().iter().zip(gt.data()) {
                assert!((p - q).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn zero_residual_or_weights_return_base() {
        let base = detailed(16, 16);
        let zone = rect(16, 16, 2, 2, 10, 10);
        let a = Alignment::Affine(AffineTransform::identity());
        let out = temporal_residual_aggregate(&[&Frame::zeros(16, 16)], &[&a], &[&Plane::filled(4, 4, 1.0)], &base, &zone, 4);
        assert_eq!(out, base);
        let out = temporal_residual_aggregate(&[&detailed(16, 16)], &[&a], &[&Plane::zeros(4, 4)], &base, &zone, 4);
        assert_eq!(out, base);
    }

    #[test]
    fn one_hot_spatial_residual_copies_patch() {
        let s = 2;
        let res = detailed(32, 32);
        let base = Frame::filled(32, 32, [0.5; 3]);
        let zone = rect(32, 32, 0, 0, 16, 16);
        let att = SpatialAttention {
            patch: 8,
            grid: (2, 2),
            hole_patches: vec![(0, 0)],
            context_patches: vec![(1, 0), (0, 1), (1, 1)],
            scores: vec![0.0, 1.0, 0.0],
        };
        let out = spatial_residual_aggregate(&res, &att, &base, &zone, s);
        for y in 0..16 {
            for x in 0..16 {
                let r = res.pixel(x, y + 16);
                let o = out.pixel(x, y);
                for c in 0..3 {
                    assert_eq!(o[c], 0.5 + r[c]);
                }
            }
        }
        assert_eq!(spatial_residual_aggregate(&Frame::zeros(32, 32), &att, &base, &zone, s), base);
    }

    #[test]
    fn empty_hole_returns_raw_frame() {
        let x = detailed(16, 16);
        let inputs = AssemblyInputs {
            x_raw: &x,
            hole: &Plane::zeros(16, 16),
            y_low: &Frame::zeros(4, 4),
            coverage_low: &Plane::zeros(4, 4),
            spatial: None,
            scale: 4,
            mode: AssemblyMode::TemporalSpatial,
        };
        let out = assemble(&inputs, &[], &mut |_| -> Result<Frame> { unreachable!() }).unwrap();
        assert_eq!(out.result, x);
    }

    #[test]
    fn assembly_only_writes_the_hole() {
        let s = 4;
        let gt = detailed(32, 32);
        let hole = rect(32, 32, 5, 9, 21, 19);
        let x = gt.mul_mask(&hole.complement()).unwrap();
        let y_low = Frame::filled(8, 8, [0.2, 0.4, 0.6]);
        let cov = Plane::from_fn(8, 8, |x, _| if x < 4 { 1.0 } else { 0.0 });
        let a = Alignment::Affine(AffineTransform::translation(0.5, 0.0));
        let wts = Plane::filled(8, 8, 1.0);
        let inputs = AssemblyInputs { x_raw: &x, hole: &hole, y_low: &y_low, coverage_low: &cov, spatial: None, scale: s, mode: AssemblyMode::Temporal };
        let sources = [ResidualSource { source_index: 3, alignment: &a, weights: &wts }];
        let out = assemble(&inputs, &sources, &mut |i| {
            assert_eq!(i, 3);
            Ok(pyramid::decompose(&gt, s).unwrap().residual)
        })
        .unwrap();
        for i in 0..32 * 32 {
            if hole.data()[i] == 0.0 {
                assert_eq!(&out.result.data()[i * 3..i * 3 + 3], &x.data()[i * 3..i * 3 + 3]);
            }
        }
        assert_ne!(out.result, out.upsampled_base);
    }

    #[test]
    fn lazy_residual_matches_materialised() {
        let gt = detailed(32, 24);
        let hole = rect(32, 24, 5, 9, 15, 22);
        let raw = gt.mul_mask(&hole.complement()).unwrap();
        let full = reference_residual(&raw, &hole, 4).unwrap();
        let lazy = ReferenceResidual::new(raw, hole, 4).unwrap();
        assert_eq!(lazy.to_frame(), full);
        for (x, y) in [(0.0, 0.0), (3.25, 7.5), (22.9, 31.0), (10.5, 0.1), (-0.5, 3.0), (23.5, 2.0)] {
            assert_eq!(ResidualField::sample(&lazy, x, y), full.sample(x, y));
        }
    }

    #[test]
    fn upsampled_base_matches_composite() {
        let raw = detailed(32, 32);
        let y_low = pyramid::downsample(&detailed(32, 32).mul_mask(&rect(32, 32, 0, 0, 9, 32)).unwrap(), 4).unwrap();
        let mut hole = rect(32, 32, 4, 6, 20, 27);
        hole.set(1, 1, 0.25);
        let want = pyramid::upsample(&y_low, 4).composite(&raw, &hole).unwrap();
        assert_eq!(upsampled_base(&raw, &hole, &y_low, 4).unwrap(), want);
    }

    #[test]
    fn reference_residual_is_zero_in_hole() {
        let gt = detailed(16, 16);
        let hole = rect(16, 16, 4, 4, 8, 8);
        let r = reference_residual(&gt.mul_mask(&hole.complement()).unwrap(), &hole, 2).unwrap();
        for i in 0..256 {
            if hole.data()[i] > 0.0 {
                assert_eq!(&r.data()[i * 3..i * 3 + 3], &[0.0; 3]);
            }
        }
    }
}
