//! Metric and loss reports over frame directories.

use std::fmt::Write as _;
use std::path::Path;

use strav_core::alignment::{joint_align, InverseCompositional, JointConfig, PyramidalLucasKanade, ReferenceInput};
use strav_core::features::HandCrafted;
use strav_core::image::pad_to_multiple;
use strav_core::losses::{self, EncoderFeatures, LossInputs, LossReport, LossWeights, MeanLuma, SequenceSample};
use strav_core::metrics::{self, MetricReport};
use strav_core::pipeline::PipelineConfig;
use strav_core::temporal::{temporal_inpaint, TemporalConfig};
use strav_core::{pyramid, Error as CoreError, Frame, Mask, Plane};

use crate::error::{Error, Result};
use crate::io;

/// `frame,l1,psnr,ssim` rows, then a `mean` row; six decimals.
pub fn metrics_csv(rows: &[MetricReport]) -> String {
    let mut s = String::from("frame,l1,psnr,ssim\n");
    let line = |s: &mut String, label: &str, r: &MetricReport| {
        writeln!(s, "{label},{:.6},{:.6},{:.6}", r.l1, r.psnr, r.ssim).expect("string write");
    };
    for (i, r) in rows.iter().enumerate() {
        line(&mut s, &i.to_string(), r);
    }
    if let Some(m) = metrics::mean_report(rows) {
        line(&mut s, "mean", &m);
    }
    s
}

/// Per-frame metrics between two directories of equally named frames,
/// optionally restricted to the masks in `region`.
pub fn compare_dirs(a: &Path, b: &Path, region: Option<&Path>) -> Result<Vec<MetricReport>> {
    let fa = io::list_images(a)?;
    let fb = io::list_images(b)?;
    let names = |v: &[std::path::PathBuf]| v.iter().map(|p| p.file_name().map(|n| n.to_owned())).collect::<Vec<_>>();
    if names(&fa) != names(&fb) {
        return Err(Error::Layout(format!("{} and {} hold different frames", a.display(), b.display())));
    }
    let regions = match region {
        Some(dir) => {
            let r = io::list_images(dir)?;
            if names(&r) != names(&fa) {
                return Err(Error::Layout(format!("{} does not match the compared frames", dir.display())));
            }
            Some(r)
        }
        None => None,
    };
    let mut out = Vec::with_capacity(fa.len());
    for (i, (pa, pb)) in fa.iter().zip(&fb).enumerate() {
        let x = io::read_frame(pa)?;
        let y = io::read_frame(pb)?;
        let frame_err = |e: CoreError| Error::Core(CoreError::Store { index: i, message: e.to_string() });
        let r = match &regions {
            Some(r) => metrics::region_metrics(&x, &y, &io::read_mask(&r[i])?).map_err(frame_err)?,
            None => metrics::frame_metrics(&x, &y).map_err(frame_err)?,
        };
        out.push(r);
    }
    Ok(out)
}

/// Directories describing one inpainted sequence.
pub struct LossJob<'a> {
    pub frames: &'a Path,
    pub masks: &'a Path,
    pub ground_truth: &'a Path,
    pub outputs: &'a Path,
}

/// The loss suite on one sequence, evaluated at the pipeline's processing
/// resolution. References are the raw neighbouring frames, aligned and
/// attended exactly as the pipeline would; the completed outputs stand in
/// for both `Y` and the generator output `X̃`.
pub fn sequence_losses(job: &LossJob<'_>, cfg: &PipelineConfig) -> Result<LossReport> {
    cfg.validate()?;
    let frames = io::read_frames(job.frames)?;
    let masks = io::read_masks(job.masks)?;
    let gt = io::read_frames(job.ground_truth)?;
    let outputs = io::read_frames(job.outputs)?;
    let n = frames.len();
    if n == 0 || masks.len() != n || gt.len() != n || outputs.len() != n {
        return Err(Error::Layout("frames, masks, ground truth and outputs must hold the same number of PNGs".into()));
    }
    let s = cfg.scale;
    let low = |f: &Frame, m: &Mask| -> strav_core::Result<Frame> {
        let (p, _, _) = pad_to_multiple(f, cfg.pad_multiple(), m)?;
        pyramid::downsample(&p, s)
    };
    let mut sample = SequenceSample { inputs: vec![], masks: vec![], ground_truth: vec![], outputs: vec![] };
    for t in 0..n {
        let m = masks[t].binarize(0.5);
        let (_, pm, _) = pad_to_multiple(&frames[t], cfg.pad_multiple(), &m)?;
        let ml = pyramid::downsample_mask(&pm, s)?;
        sample.inputs.push(low(&frames[t], &m)?.mul_mask(&ml.complement())?);
        sample.masks.push(ml);
        sample.ground_truth.push(low(&gt[t], &m)?);
        sample.outputs.push(low(&outputs[t], &m)?);
    }

    let joint = JointConfig { flow_radius: cfg.flow_radius, mode: cfg.alignment };
    let tcfg = TemporalConfig { temperature: cfg.temperature, visible_threshold: cfg.visible_threshold, pyramid_levels: cfg.pyramid_levels };
    let (affine, flow) = (InverseCompositional::default(), PyramidalLucasKanade::default());
    let mut aligned = Vec::with_capacity(n);
    let mut coverage = Vec::with_capacity(n);
    let mut leftovers = Vec::with_capacity(n);
    for t in 0..n {
        let mut idx: Vec<usize> = (0..n).filter(|&j| j != t).collect();
        idx.sort_by_key(|&j| (j.abs_diff(t), j));
        idx.truncate(cfg.reference_window);
        idx.sort_unstable();
        let refs: Vec<ReferenceInput<'_>> =
            idx.iter().map(|&j| ReferenceInput { index: j, frame: &sample.inputs[j], mask: &sample.masks[j] }).collect();
        let (x, m) = (&sample.inputs[t], &sample.masks[t]);
        let a = match joint_align(x, m, t, &refs, &joint, &affine, &flow) {
            Ok(a) => a,
            Err(CoreError::NoUsableReference) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let (cov, left) = if a.is_empty() {
            (Plane::zeros(m.height(), m.width()), m.clone())
        } else {
            let r = temporal_inpaint(x, m, &a, &HandCrafted, &tcfg)?;
            (r.coverage, r.leftover)
        };
        aligned.push(a);
        coverage.push(cov);
        leftovers.push(left);
    }
    let generated = sample.outputs.clone();
    let inputs = LossInputs { sample: &sample, aligned: &aligned, coverage: &coverage, leftovers: &leftovers, generated: &generated };
    Ok(losses::evaluate(&inputs, &EncoderFeatures { levels: cfg.pyramid_levels }, &MeanLuma)?)
}

/// One `key=value` line per term, then the weighted total.
pub fn losses_text(r: &LossReport, w: &LossWeights) -> String {
    let mut s = String::new();
    for (k, v) in r.as_array() {
        writeln!(s, "{k}={v:.6}").expect("string write");
    }
    writeln!(s, "total={:.6}", losses::total(r, w)).expect("string write");
    s
}
