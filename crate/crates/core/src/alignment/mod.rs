//! Joint alignment of reference frames to a target frame.
//!
//! Two branches run side by side. The affine branch registers every
//! reference with a global 2×3 transform, which reaches far-away frames
//! under camera motion. The flow branch estimates a dense displacement field
//! for temporally close references, which follows local motion. Both kinds
//! of aligned reference are handed to temporal aggregation.
//!
//! All warps use backward sampling: output pixel `p` of an aligned reference
//! reads the reference at `T(p)` (affine) or `p + flow(p)` (flow).

mod affine;
mod flow;
mod warp;

use alloc::vec::Vec;

pub use affine::{estimate_affine, masked_l1, AffineConfig, InverseCompositional};
pub use flow::{estimate_flow, estimate_flow_masked, FlowConfig, PyramidalLucasKanade};
pub use warp::{warp_affine, warp_flow};

use crate::error::{Error, Result};
use crate::image::{Frame, Mask, Plane};
use crate::{par, pyramid};

/// Minimum fraction of jointly visible pixels for a reference to be usable.
pub const MIN_OVERLAP: f64 = 0.01;

/// Maps a target pixel `(x, y)` to the reference sample position
/// `(a11*x + a12*y + tx, a21*x + a22*y + ty)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub a11: f32,
    pub a12: f32,
    pub a21: f32,
    pub a22: f32,
    pub tx: f32,
    pub ty: f32,
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineTransform {
    pub const fn identity() -> Self {
        AffineTransform { a11: 1.0, a12: 0.0, a21: 0.0, a22: 1.0, tx: 0.0, ty: 0.0 }
    }

    pub const fn translation(tx: f32, ty: f32) -> Self {
        AffineTransform { a11: 1.0, a12: 0.0, a21: 0.0, a22: 1.0, tx, ty }
    }

    /// Uniform scale about the origin followed by a translation.
    pub const fn scale_translation(scale: f32, tx: f32, ty: f32) -> Self {
        AffineTransform { a11: scale, a12: 0.0, a21: 0.0, a22: scale, tx, ty }
    }

    #[inline]
    pub fn apply(&self, x: f32, y: f32) -> (f32, f32) {
        (self.a11 * x + self.a12 * y + self.tx, self.a21 * x + self.a22 * y + self.ty)
    }

    pub fn det(&self) -> f32 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Finite and with a plausible scale: determinant in [0.25, 4].
    pub fn is_sane(&self) -> bool {
        let all = [self.a11, self.a12, self.a21, self.a22, self.tx, self.ty];
        let det = self.det();
        all.iter().all(|v| v.is_finite()) && (0.25..=4.0).contains(&det)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &AffineTransform) -> AffineTransform {
        let (a, b) = (self, other);
        AffineTransform {
            a11: a.a11 * b.a11 + a.a12 * b.a21,
            a12: a.a11 * b.a12 + a.a12 * b.a22,
            a21: a.a21 * b.a11 + a.a22 * b.a21,
            a22: a.a21 * b.a12 + a.a22 * b.a22,
            tx: a.a11 * b.tx + a.a12 * b.ty + a.tx,
            ty: a.a21 * b.tx + a.a22 * b.ty + a.ty,
        }
    }

    pub fn inverse(&self) -> Option<AffineTransform> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let (i11, i12, i21, i22) = (self.a22 / det, -self.a12 / det, -self.a21 / det, self.a11 / det);
        Some(AffineTransform {
            a11: i11,
            a12: i12,
            a21: i21,
            a22: i22,
            tx: -(i11 * self.tx + i12 * self.ty),
            ty: -(i21 * self.tx + i22 * self.ty),
        })
    }

    /// Express a transform estimated on an image downsampled by `s` in the
    /// pixel grid of the original image (pixel centres `x_full = s*x + (s-1)/2`).
    pub fn rescaled(&self, s: usize) -> AffineTransform {
        let sf = s as f32;
        let c = (sf - 1.0) / 2.0;
        AffineTransform {
            tx: sf * self.tx + c - (self.a11 + self.a12) * c,
            ty: sf * self.ty + c - (self.a21 + self.a22) * c,
            ..*self
        }
    }
}

/// Dense backward displacement: target pixel `p` reads the reference at
/// `p + (u(p), v(p))`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub u: Plane,
    pub v: Plane,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        FlowField { u: Plane::zeros(height, width), v: Plane::zeros(height, width) }
    }

    pub fn uniform(height: usize, width: usize, u: f32, v: f32) -> Self {
        FlowField { u: Plane::filled(height, width, u), v: Plane::filled(height, width, v) }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.u.dims()
    }

    /// Bilinear upsample by `s` with displacements scaled by `s`.
    pub fn rescaled(&self, s: usize) -> FlowField {
        let sf = s as f32;
        FlowField {
            u: pyramid::upsample_plane(&self.u, s).map(|v| v * sf),
            v: pyramid::upsample_plane(&self.v, s).map(|v| v * sf),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Alignment {
    Affine(AffineTransform),
    Flow(FlowField),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Affine,
    Flow,
}

impl Alignment {
    pub fn branch(&self) -> Branch {
        match self {
            Alignment::Affine(_) => Branch::Affine,
            Alignment::Flow(_) => Branch::Flow,
        }
    }

    /// The same alignment on a grid `s` times finer.
    pub fn rescaled(&self, s: usize) -> Alignment {
        match self {
            Alignment::Affine(t) => Alignment::Affine(t.rescaled(s)),
            Alignment::Flow(f) => Alignment::Flow(f.rescaled(s)),
        }
    }

    pub fn warp(&self, frame: &Frame, mask: &Mask) -> AlignedReference {
        match self {
            Alignment::Affine(t) => warp_affine(frame, mask, t),
            Alignment::Flow(f) => warp_flow(frame, mask, f),
        }
    }
}

/// A reference frame resampled into the target's pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedReference {
    pub frame: Frame,
    /// Warped hole mask; 1 wherever the sample is a hole or out of bounds.
    pub mask: Mask,
    /// 1 where the sample position fell inside the reference image.
    pub validity: Mask,
    pub source_index: usize,
    pub alignment: Alignment,
}

impl AlignedReference {
    pub fn branch(&self) -> Branch {
        self.alignment.branch()
    }
}

pub trait AffineEstimator: Sync {
    fn estimate(&self, target: &Frame, target_mask: &Mask, reference: &Frame, ref_mask: &Mask) -> Result<AffineTransform>;
}

pub trait FlowEstimator: Sync {
    fn estimate(&self, target: &Frame, target_mask: &Mask, reference: &Frame, ref_mask: &Mask) -> FlowField;
}

/// Which alignment branches feed temporal aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignmentMode {
    #[default]
    Joint,
    AffineOnly,
    FlowOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointConfig {
    /// References at most this many frames away also get a flow variant.
    pub flow_radius: usize,
    pub mode: AlignmentMode,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig { flow_radius: 2, mode: AlignmentMode::Joint }
    }
}

/// A reference frame offered for alignment.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceInput<'a> {
    pub index: usize,
    pub frame: &'a Frame,
    pub mask: &'a Mask,
}

/// Fraction of pixels visible in both frames at identity.
pub fn joint_coverage(target_mask: &Mask, ref_mask: &Mask) -> f64 {
    let n = target_mask.data().len() as f64;
    let both: f64 = target_mask
        .data()
        .iter()
        .zip(ref_mask.data())
        .map(|(&a, &b)| ((1.0 - a) * (1.0 - b)) as f64)
        .sum();
    both / n
}

/// Align every reference with the affine branch and, for references within
/// `cfg.flow_radius` frames of the target, with the flow branch as well.
/// Output order: affine variants in reference order, then flow variants.
pub fn joint_align(
    target: &Frame,
    target_mask: &Mask,
    target_index: usize,
    refs: &[ReferenceInput<'_>],
    cfg: &JointConfig,
    affine: &dyn AffineEstimator,
    flow: &dyn FlowEstimator,
) -> Result<Vec<AlignedReference>> {
    if refs.is_empty() {
        return Err(Error::NoUsableReference);
    }
    for r in refs {
        crate::image::same_dims(target.dims(), r.frame.dims())?;
        crate::image::same_dims(target.dims(), r.mask.dims())?;
    }
    crate::image::same_dims(target.dims(), target_mask.dims())?;

    let want_affine = cfg.mode != AlignmentMode::FlowOnly;
    let want_flow = cfg.mode != AlignmentMode::AffineOnly;

    let affine_out: Vec<Option<AlignedReference>> = par::map(refs, |r| {
        if !want_affine {
            return None;
        }
        if joint_coverage(target_mask, r.mask) < MIN_OVERLAP {
            log::debug!("reference {} skipped: insufficient overlap", r.index);
            return None;
        }
        match affine.estimate(target, target_mask, r.frame, r.mask) {
            Ok(t) => {
                let mut a = warp_affine(r.frame, r.mask, &t);
                a.source_index = r.index;
                Some(a)
            }
            Err(e) => {
                log::debug!("reference {} dropped from affine branch: {e}", r.index);
                None
            }
        }
    });
    let flow_out: Vec<Option<AlignedReference>> = par::map(refs, |r| {
        if !want_flow || r.index.abs_diff(target_index) > cfg.flow_radius {
            return None;
        }
        if joint_coverage(target_mask, r.mask) < MIN_OVERLAP {
            return None;
        }
        let field = flow.estimate(target, target_mask, r.frame, r.mask);
        let mut a = warp_flow(r.frame, r.mask, &field);
        a.source_index = r.index;
        Some(a)
    });

    let out: Vec<AlignedReference> = affine_out.into_iter().chain(flow_out).flatten().collect();
    if out.is_empty() {
        return Err(Error::NoUsableReference);
    }
    Ok(out)
}
