//! Frame-by-frame orchestration.
//!
//! Each frame is padded, downsampled and inpainted at low resolution from a
//! window of neighbouring frames, then brought back to full resolution by
//! residual aggregation. Completed frames replace their raw counterparts in
//! the reference pool, so later frames can borrow content that was itself
//! inpainted.

use alloc::collections::BTreeMap;
use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::alignment::{
    joint_align, AffineEstimator, AlignmentMode, FlowEstimator, InverseCompositional, JointConfig, PyramidalLucasKanade,
    ReferenceInput,
};
use crate::error::{Error, Result};
use crate::features::{Encoder, HandCrafted};
use crate::image::{into_unpadded, pad_owned, same_dims, unpad, Frame, Mask, PadRecord, Plane};
use crate::residual::{assemble, AssemblyInputs, AssemblyMode, HighResAssembly, ReferenceResidual, ResidualSource};
use crate::spatial::{self, SpatialAttention, SpatialConfig};
use crate::temporal::{temporal_inpaint, TemporalConfig};
use crate::{diffusion, pyramid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub scale: usize,
    /// Maximum number of neighbouring frames offered as references.
    pub reference_window: usize,
    pub flow_radius: usize,
    pub temperature: f32,
    pub spatial_temperature: f32,
    pub patch: usize,
    pub visible_threshold: f32,
    pub emit_intermediates: bool,
    pub pyramid_levels: usize,
    pub alignment: AlignmentMode,
    pub assembly: AssemblyMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scale: pyramid::DEFAULT_SCALE,
            reference_window: 20,
            flow_radius: 2,
            temperature: 0.5,
            spatial_temperature: 0.5,
            patch: spatial::DEFAULT_PATCH,
            visible_threshold: 1e-3,
            emit_intermediates: false,
            pyramid_levels: crate::features::DEFAULT_LEVELS,
            alignment: AlignmentMode::Joint,
            assembly: AssemblyMode::TemporalSpatial,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if ![1, 2, 4, 8].contains(&self.scale) {
            return bad("scale must be one of 1, 2, 4, 8");
        }
        if self.reference_window == 0 {
            return bad("reference_window must be >= 1");
        }
        if self.patch == 0 {
            return bad("patch must be >= 1");
        }
        if !(self.temperature > 0.0) || !(self.spatial_temperature > 0.0) {
            return bad("temperatures must be positive");
        }
        if !(0.0..1.0).contains(&self.visible_threshold) {
            return bad("visible_threshold must lie in [0, 1)");
        }
        if self.pyramid_levels == 0 || self.pyramid_levels > 6 {
            return bad("pyramid_levels must lie in 1..=6");
        }
        Ok(())
    }

    /// Frames are padded to a multiple of this so that every low-res
    /// pyramid level and the patch grid divide evenly.
    pub fn pad_multiple(&self) -> usize {
        let coarse = 1usize << (self.pyramid_levels - 1);
        self.scale * lcm(self.patch, coarse)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    let (mut x, mut y) = (a, b);
    while y != 0 {
        (x, y) = (y, x % y);
    }
    a / x * b
}

/// Source and sink of frames. Indices run over `0..len()`.
pub trait FrameStore {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Raw frame and its hole mask (1 = hole) at full resolution.
    fn raw(&self, index: usize) -> Result<(Frame, Mask)>;

    /// Just the hole mask of [`FrameStore::raw`].
    fn raw_mask(&self, index: usize) -> Result<Mask> {
        self.raw(index).map(|(_, m)| m)
    }

    /// A frame previously passed to [`FrameStore::store_completed`].
    fn completed(&self, index: usize) -> Result<Frame>;

    fn store_completed(&mut self, index: usize, frame: Frame) -> Result<()>;

    fn store_intermediates(&mut self, _index: usize, _data: Intermediates) -> Result<()> {
        Ok(())
    }

    /// Whether [`FrameStore::store_stages`] should be called.
    fn wants_stages(&self) -> bool {
        false
    }

    fn store_stages(&mut self, _index: usize, _stages: Stages) -> Result<()> {
        Ok(())
    }
}

/// Full-resolution output after each assembly stage. Stages the configured
/// mode does not run repeat the previous one.
#[derive(Debug, Clone, PartialEq)]
pub struct Stages {
    pub bilinear: Frame,
    pub temporal: Frame,
    pub result: Frame,
}

/// Low-resolution diagnostics for one frame, cropped to the unpadded extent.
#[derive(Debug, Clone, PartialEq)]
pub struct Intermediates {
    pub y_low: Frame,
    pub leftover: Mask,
    pub coverage: Mask,
    /// Source frame index of the strongest temporal donor, or -1.
    pub temporal_top1: Plane,
    /// Index of the strongest context patch per hole patch pixel, or -1.
    pub spatial_top1: Option<Plane>,
}

/// What happened to one frame.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrameReport {
    pub index: usize,
    /// Aligned reference variants that entered temporal aggregation.
    pub aligned_references: usize,
    pub hole_pixels: usize,
    /// Low-res hole pixels no reference could fill.
    pub leftover_pixels: usize,
    /// No reference aligned; the frame went through the spatial path only.
    pub spatial_only: bool,
    /// The leftover had no context patch; it keeps the diffusion fill.
    pub no_spatial_context: bool,
}

#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    pub frames: Vec<Frame>,
    pub masks: Vec<Mask>,
    pub completed: Vec<Option<Frame>>,
    pub intermediates: Vec<Option<Intermediates>>,
    /// Filled only after [`MemoryStore::capture_stages`].
    pub stages: Option<Vec<Option<Stages>>>,
}

impl MemoryStore {
    pub fn new(frames: Vec<Frame>, masks: Vec<Mask>) -> Result<Self> {
        if frames.len() != masks.len() {
            return Err(Error::InvalidConfig(format!("{} frames but {} masks", frames.len(), masks.len())));
        }
        let n = frames.len();
        Ok(MemoryStore { frames, masks, completed: alloc::vec![None; n], intermediates: alloc::vec![None; n], stages: None })
    }

    pub fn capture_stages(mut self) -> Self {
        self.stages = Some(alloc::vec![None; self.frames.len()]);
        self
    }

    pub fn outputs(&self) -> Vec<&Frame> {
        self.completed.iter().flatten().collect()
    }
}

impl FrameStore for MemoryStore {
    fn len(&self) -> usize {
        self.frames.len()
    }

    fn raw(&self, index: usize) -> Result<(Frame, Mask)> {
        Ok((self.frames[index].clone(), self.masks[index].clone()))
    }

    fn raw_mask(&self, index: usize) -> Result<Mask> {
        Ok(self.masks[index].clone())
    }

    fn completed(&self, index: usize) -> Result<Frame> {
        self.completed[index]
            .clone()
            .ok_or_else(|| Error::Store { index, message: "frame not completed yet".into() })
    }

    fn store_completed(&mut self, index: usize, frame: Frame) -> Result<()> {
        self.completed[index] = Some(frame);
        Ok(())
    }

    fn store_intermediates(&mut self, index: usize, data: Intermediates) -> Result<()> {
        self.intermediates[index] = Some(data);
        Ok(())
    }

    fn wants_stages(&self) -> bool {
        self.stages.is_some()
    }

    fn store_stages(&mut self, index: usize, stages: Stages) -> Result<()> {
        if let Some(v) = self.stages.as_mut() {
            v[index] = Some(stages);
        }
        Ok(())
    }
}

/// A frame as the reference pool sees it at low resolution.
struct PoolEntry {
    /// Hole diffused away.
    frame: Frame,
    /// Raw hole, or the leftover once the frame is completed.
    mask: Mask,
    completed: bool,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    encoder: Box<dyn Encoder>,
    affine: Box<dyn AffineEstimator>,
    flow: Box<dyn FlowEstimator>,
    pool: BTreeMap<usize, PoolEntry>,
    dims: Option<(usize, usize)>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        Self::with_components(cfg, Box::new(HandCrafted), Box::new(InverseCompositional::default()), Box::new(PyramidalLucasKanade::default()))
    }

    pub fn with_components(
        cfg: PipelineConfig,
        encoder: Box<dyn Encoder>,
        affine: Box<dyn AffineEstimator>,
        flow: Box<dyn FlowEstimator>,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline { cfg, encoder, affine, flow, pool: BTreeMap::new(), dims: None })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Process every frame of `store` in temporal order.
    pub fn run(&mut self, store: &mut dyn FrameStore) -> Result<Vec<FrameReport>> {
        self.pool.clear();
        self.dims = None;
        (0..store.len()).map(|t| self.process_frame(store, t)).collect()
    }

    /// Reference indices for frame `t`: the `reference_window` nearest
    /// frames, in temporal order.
    pub fn reference_indices(&self, t: usize, len: usize) -> Vec<usize> {
        let mut c: Vec<usize> = (0..len).filter(|&j| j != t).collect();
        c.sort_by_key(|&j| (j.abs_diff(t), j));
        c.truncate(self.cfg.reference_window);
        c.sort_unstable();
        c
    }

    fn load_padded(&mut self, store: &dyn FrameStore, index: usize) -> Result<(Frame, Mask, PadRecord)> {
        let (f, m) = store.raw(index)?;
        same_dims(f.dims(), m.dims())?;
        match self.dims {
            None => self.dims = Some(f.dims()),
            Some(d) => same_dims(d, f.dims())?,
        }
        pad_owned(f, self.cfg.pad_multiple(), m.into_binarized(0.5))
    }

    fn ensure_raw_entry(&mut self, store: &dyn FrameStore, index: usize) -> Result<()> {
        if self.pool.contains_key(&index) {
            return Ok(());
        }
        let (f, m, _) = self.load_padded(store, index)?;
        let s = self.cfg.scale;
        let low = pyramid::downsample(&f, s)?;
        let mask = pyramid::downsample_mask(&m, s)?;
        let frame = if mask.any() { diffusion::fill_frame(&low, &mask) } else { low };
        self.pool.insert(index, PoolEntry { frame, mask, completed: false });
        Ok(())
    }

    /// Full-res residual of a pool frame, with its untrusted pixels zeroed.
    fn residual_of(&self, store: &dyn FrameStore, index: usize) -> Result<ReferenceResidual> {
        let s = self.cfg.scale;
        let m = self.cfg.pad_multiple();
        let entry = self.pool.get(&index).ok_or(Error::Store { index, message: "reference left the pool".into() })?;
        if entry.completed {
            let hole = store.raw_mask(index)?.into_binarized(0.5);
            let done = store.completed(index)?;
            let (done, hole, _) = pad_owned(done, m, hole)?;
            let untrusted = hole.mul(&pyramid::upsample_nearest(&entry.mask, s))?;
            ReferenceResidual::new(done, untrusted, s)
        } else {
            let (raw, hole) = store.raw(index)?;
            let (raw, hole, _) = pad_owned(raw, m, hole.into_binarized(0.5))?;
            ReferenceResidual::new(raw, hole, s)
        }
    }

    /// Inpaint frame `t` and hand the result to the store.
    pub fn process_frame(&mut self, store: &mut dyn FrameStore, t: usize) -> Result<FrameReport> {
        let cfg = self.cfg;
        let s = cfg.scale;
        let (x_raw, hole, record) = self.load_padded(store, t)?;
        let mut report = FrameReport { index: t, hole_pixels: hole.count_nonzero(), ..FrameReport::default() };

        // Drop pool entries that no later frame can reach.
        let keep_from = t.saturating_sub(cfg.reference_window);
        self.pool.retain(|&j, _| j >= keep_from);

        let x_low = pyramid::downsample(&x_raw, s)?;
        let m_low = pyramid::downsample_mask(&hole, s)?;
        if !hole.any() {
            store.store_completed(t, unpad(&x_raw, &record))?;
            if cfg.emit_intermediates {
                let (lh, lw) = x_low.dims();
                store.store_intermediates(t, self.intermediates(&record, &x_low, &m_low, &Plane::zeros(lh, lw), &Plane::filled(lh, lw, -1.0), None))?;
            }
            self.pool.insert(t, PoolEntry { frame: x_low, mask: m_low, completed: true });
            return Ok(report);
        }

        let refs = self.reference_indices(t, store.len());
        for &j in &refs {
            self.ensure_raw_entry(&*store, j)?;
        }
        let x_low_filled = diffusion::fill_frame(&x_low, &m_low);
        let inputs: Vec<ReferenceInput<'_>> = refs
            .iter()
            .map(|&j| {
                let e = &self.pool[&j];
                ReferenceInput { index: j, frame: &e.frame, mask: &e.mask }
            })
            .collect();
        let jcfg = JointConfig { flow_radius: cfg.flow_radius, mode: cfg.alignment };
        let aligned = match joint_align(&x_low_filled, &m_low, t, &inputs, &jcfg, &*self.affine, &*self.flow) {
            Ok(a) => a,
            Err(Error::NoUsableReference) => {
                log::info!("frame {t}: no usable reference, spatial path only");
                report.spatial_only = true;
                Vec::new()
            }
            Err(e) => return Err(e),
        };
        report.aligned_references = aligned.len();

        let (lh, lw) = x_low.dims();
        let (y_t1, leftover, coverage, weights) = if aligned.is_empty() {
            (x_low_filled.clone(), m_low.clone(), Plane::zeros(lh, lw), Vec::new())
        } else {
            let tcfg = TemporalConfig { temperature: cfg.temperature, visible_threshold: cfg.visible_threshold, pyramid_levels: cfg.pyramid_levels };
            let r = temporal_inpaint(&x_low, &m_low, &aligned, &*self.encoder, &tcfg)?;
            (r.y_t1, r.leftover, r.coverage, r.attention.weights)
        };
        report.leftover_pixels = leftover.count_nonzero();

        let mut spatial_att: Option<SpatialAttention> = None;
        let y_low = if leftover.any() {
            let f = spatial::blend_for_refine(&y_t1, &x_low, &m_low)?;
            let scfg = SpatialConfig { patch: cfg.patch, temperature: cfg.spatial_temperature };
            match spatial::spatial_attention(&f, &leftover, &*self.encoder, &scfg) {
                Ok(att) => {
                    let y = spatial::spatial_transfer(&f, &leftover, &att, &m_low);
                    spatial_att = Some(att);
                    y
                }
                Err(Error::SpatialContextUnavailable) => {
                    log::info!("frame {t}: no context patch for the leftover, keeping the diffusion fill");
                    report.no_spatial_context = true;
                    f
                }
                Err(e) => return Err(e),
            }
        } else {
            y_t1
        };

        let sources: Vec<ResidualSource<'_>> = aligned
            .iter()
            .zip(&weights)
            .map(|(a, w)| ResidualSource { source_index: a.source_index, alignment: &a.alignment, weights: w })
            .collect();
        let inputs = AssemblyInputs {
            x_raw: &x_raw,
            hole: &hole,
            y_low: &y_low,
            coverage_low: &coverage,
            spatial: spatial_att.as_ref(),
            scale: s,
            mode: cfg.assembly,
        };
        let assembled = {
            let this = &*self;
            let st = &*store;
            assemble(&inputs, &sources, &mut |j| this.residual_of(st, j))?
        };
        // Outside the hole the raw frame is authoritative.
        let HighResAssembly { mut upsampled_base, mut temporal, result: mut out, .. } = assembled;
        out.composite_in_place(&x_raw, &hole)?;
        if store.wants_stages() {
            upsampled_base.composite_in_place(&x_raw, &hole)?;
            temporal.composite_in_place(&x_raw, &hole)?;
            let stages = Stages {
                bilinear: into_unpadded(upsampled_base, &record),
                temporal: into_unpadded(temporal, &record),
                result: unpad(&out, &record),
            };
            store.store_stages(t, stages)?;
        } else {
            drop((upsampled_base, temporal));
        }
        drop(x_raw);

        if cfg.emit_intermediates {
            let mut top1 = Plane::filled(lh, lw, -1.0);
            if !aligned.is_empty() {
                let att_top = crate::temporal::TemporalAttention::top1_of(&weights);
                for (i, r) in att_top.into_iter().enumerate() {
                    if let Some(r) = r {
                        top1.data_mut()[i] = aligned[r].source_index as f32;
                    }
                }
            }
            let sp = spatial_att.as_ref().map(spatial::top1_map);
            let data = self.intermediates(&record, &y_low, &leftover, &coverage, &top1, sp);
            store.store_intermediates(t, data)?;
        }

        store.store_completed(t, into_unpadded(out, &record))?;
        self.pool.insert(t, PoolEntry { frame: y_low, mask: leftover, completed: true });
        Ok(report)
    }

    fn intermediates(&self, record: &PadRecord, y_low: &Frame, leftover: &Mask, coverage: &Mask, top1: &Plane, sp: Option<Plane>) -> Intermediates {
        let s = self.cfg.scale;
        let (ph, pw) = y_low.dims();
        let h = (ph * s - record.top - record.bottom).div_ceil(s);
        let w = (pw * s - record.left - record.right).div_ceil(s);
        Intermediates {
            y_low: y_low.crop(0, 0, h, w),
            leftover: leftover.crop(0, 0, h, w),
            coverage: coverage.crop(0, 0, h, w),
            temporal_top1: top1.crop(0, 0, h, w),
            spatial_top1: sp.map(|p| p.crop(0, 0, h, w)),
        }
    }
}
