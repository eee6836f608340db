//! The training loss suite, evaluated as a diagnostic.
//!
//! Every masked L1 term is the sum of absolute differences over the active
//! region divided by the number of active values (pixels × 3 channels); an
//! empty region contributes 0. Sequence losses are averaged over the `N`
//! frames. The perceptual feature extractor and the critic are pluggable.

use alloc::vec::Vec;

use crate::alignment::AlignedReference;
use crate::error::{Error, Result};
use crate::features::{self, FeatureMap, CHANNELS};
use crate::image::{same_dims, Frame, Mask, Plane, LUMA};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub align: f64,
    pub hole_visible: f64,
    pub hole_leftover: f64,
    pub non_hole: f64,
    pub perceptual: f64,
    pub style: f64,
    pub rec: f64,
    pub adv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            align: 5.0,
            hole_visible: 10.0,
            hole_leftover: 20.0,
            non_hole: 6.0,
            perceptual: 0.01,
            style: 24.0,
            rec: 1.2,
            adv: 0.001,
        }
    }
}

/// One value per loss term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub align: f64,
    pub hole_visible: f64,
    pub hole_leftover: f64,
    pub non_hole: f64,
    pub perceptual: f64,
    pub style: f64,
    pub rec: f64,
    pub adv: f64,
}

impl LossReport {
    pub fn as_array(&self) -> [(&'static str, f64); 8] {
        [
            ("align", self.align),
            ("hole_visible", self.hole_visible),
            ("hole_leftover", self.hole_leftover),
            ("non_hole", self.non_hole),
            ("perceptual", self.perceptual),
            ("style", self.style),
            ("rec", self.rec),
            ("adv", self.adv),
        ]
    }
}

/// Weighted sum of the eight terms.
pub fn total(l: &LossReport, w: &LossWeights) -> f64 {
    w.align * l.align
        + w.hole_visible * l.hole_visible
        + w.hole_leftover * l.hole_leftover
        + w.non_hole * l.non_hole
        + w.perceptual * l.perceptual
        + w.style * l.style
        + w.rec * l.rec
        + w.adv * l.adv
}

/// Frames of one training-style sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    /// Inputs `X^t` (holes zeroed).
    pub inputs: Vec<Frame>,
    pub masks: Vec<Mask>,
    pub ground_truth: Vec<Frame>,
    /// Completed frames `Y^t`.
    pub outputs: Vec<Frame>,
}

impl SequenceSample {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.inputs.len();
        if n == 0 || self.masks.len() != n || self.ground_truth.len() != n || self.outputs.len() != n {
            return Err(Error::InvalidConfig("sample needs matching non-empty frame lists".into()));
        }
        let d = self.inputs[0].dims();
        for t in 0..n {
            same_dims(d, self.inputs[t].dims())?;
            same_dims(d, self.masks[t].dims())?;
            same_dims(d, self.ground_truth[t].dims())?;
            same_dims(d, self.outputs[t].dims())?;
        }
        Ok(())
    }
}

/// `Σ region·|a − b| / (3·Σ region)`, or 0 for an empty region.
pub fn masked_l1(a: &Frame, b: &Frame, region: &Plane) -> f64 {
    assert_eq!(a.dims(), b.dims());
    assert_eq!(a.dims(), region.dims());
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (i, &r) in region.data().iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        let r = r as f64;
        for c in 0..3 {
            num += r * (a.data()[i * 3 + c] as f64 - b.data()[i * 3 + c] as f64).abs();
        }
        den += 3.0 * r;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// `aligned[t]` holds the references aligned to frame `t`.
pub fn l_align(sample: &SequenceSample, aligned: &[Vec<AlignedReference>]) -> Result<f64> {
    sample.validate()?;
    if aligned.len() != sample.len() {
        return Err(Error::InvalidConfig("one aligned list per frame expected".into()));
    }
    let mut acc = 0.0;
    let mut active = false;
    for (t, refs) in aligned.iter().enumerate() {
        let vis_t = sample.masks[t].complement();
        for a in refs {
            let region = vis_t.mul(&a.mask.complement())?;
            active |= region.any();
            acc += masked_l1(&sample.inputs[t], &a.frame, &region);
        }
    }
    if !active {
        log::warn!("alignment loss has no jointly visible pixels");
    }
    Ok(acc / sample.len() as f64)
}

fn per_frame_l1(sample: &SequenceSample, regions: impl Fn(usize) -> Result<Plane>) -> Result<f64> {
    sample.validate()?;
    let mut acc = 0.0;
    for t in 0..sample.len() {
        acc += masked_l1(&sample.outputs[t], &sample.ground_truth[t], &regions(t)?);
    }
    Ok(acc / sample.len() as f64)
}

/// L1 over `M^t ⊙ C_visible^t`.
pub fn l_hole_visible(sample: &SequenceSample, coverage: &[Plane]) -> Result<f64> {
    per_frame_l1(sample, |t| sample.masks[t].mul(coverage.get(t).ok_or(Error::InvalidConfig("coverage per frame".into()))?))
}

/// L1 over the leftover masks.
pub fn l_hole_leftover(sample: &SequenceSample, leftovers: &[Mask]) -> Result<f64> {
    per_frame_l1(sample, |t| leftovers.get(t).cloned().ok_or(Error::InvalidConfig("leftover per frame".into())))
}

/// L1 over `1 − M^t`.
pub fn l_non_hole(sample: &SequenceSample) -> Result<f64> {
    per_frame_l1(sample, |t| Ok(sample.masks[t].complement()))
}

/// `M·Y + (1 − M)·X`.
pub fn y_comb(y: &Frame, x: &Frame, m: &Mask) -> Result<Frame> {
    same_dims(y.dims(), x.dims())?;
    same_dims(y.dims(), m.dims())?;
    let mut out = x.clone();
    for (i, &mi) in m.data().iter().enumerate() {
        for c in 0..3 {
            let k = i * 3 + c;
            out.data_mut()[k] = mi * y.data()[k] + (1.0 - mi) * x.data()[k];
        }
    }
    Ok(out)
}

/// `C×C` Gram matrix normalised by `C·H·W`, row-major.
pub fn gram(f: &FeatureMap) -> Vec<f64> {
    let (h, w) = f.dims();
    let mut g = alloc::vec![0.0f64; CHANNELS * CHANNELS];
    for px in f.data().chunks_exact(CHANNELS) {
        for a in 0..CHANNELS {
            let fa = px[a] as f64;
            if fa == 0.0 {
                continue;
            }
            for b in a..CHANNELS {
                g[a * CHANNELS + b] += fa * px[b] as f64;
            }
        }
    }
    let norm = (CHANNELS * h * w) as f64;
    for a in 0..CHANNELS {
        for b in a..CHANNELS {
            let v = g[a * CHANNELS + b] / norm;
            g[a * CHANNELS + b] = v;
            g[b * CHANNELS + a] = v;
        }
    }
    g
}

/// Multi-level feature extractor used by the perceptual and style terms.
pub trait FeatureExtractor {
    fn extract(&self, f: &Frame) -> Result<Vec<FeatureMap>>;
}

/// The hand-crafted encoder pyramid with no holes.
#[derive(Debug, Clone, Copy)]
pub struct EncoderFeatures {
    pub levels: usize,
}

impl Default for EncoderFeatures {
    fn default() -> Self {
        EncoderFeatures { levels: features::DEFAULT_LEVELS }
    }
}

impl FeatureExtractor for EncoderFeatures {
    fn extract(&self, f: &Frame) -> Result<Vec<FeatureMap>> {
        let (h, w) = f.dims();
        Ok(features::encode(f, &Plane::zeros(h, w), self.levels)?.levels)
    }
}

fn mean_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).abs()).sum::<f64>() / a.len() as f64
}

fn mean_abs_diff64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn feature_loss(sample: &SequenceSample, phi: &dyn FeatureExtractor, level_loss: impl Fn(&FeatureMap, &FeatureMap) -> f64) -> Result<f64> {
    sample.validate()?;
    let mut acc = 0.0;
    for t in 0..sample.len() {
        let comb = y_comb(&sample.outputs[t], &sample.inputs[t], &sample.masks[t])?;
        let a = phi.extract(&comb)?;
        let b = phi.extract(&sample.ground_truth[t])?;
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::InvalidConfig("feature extractor returned no levels".into()));
        }
        let p = a.len() as f64;
        acc += a.iter().zip(&b).map(|(x, y)| level_loss(x, y)).sum::<f64>() / p;
    }
    Ok(acc / sample.len() as f64)
}

/// Mean absolute feature difference per level, averaged over levels and frames.
pub fn l_perceptual(sample: &SequenceSample, phi: &dyn FeatureExtractor) -> Result<f64> {
    feature_loss(sample, phi, |a, b| mean_abs_diff(a.data(), b.data()))
}

/// Mean absolute Gram-matrix difference per level, averaged over levels and frames.
pub fn l_style(sample: &SequenceSample, phi: &dyn FeatureExtractor) -> Result<f64> {
    feature_loss(sample, phi, |a, b| mean_abs_diff64(&gram(a), &gram(b)))
}

/// Generator reconstruction loss: leftover term plus complement term.
pub fn l_rec(generated: &[Frame], inputs: &[Frame], leftovers: &[Mask]) -> Result<f64> {
    let n = generated.len();
    if n == 0 || inputs.len() != n || leftovers.len() != n {
        return Err(Error::InvalidConfig("reconstruction loss needs matching lists".into()));
    }
    let mut acc = 0.0;
    for t in 0..n {
        same_dims(generated[t].dims(), inputs[t].dims())?;
        same_dims(generated[t].dims(), leftovers[t].dims())?;
        acc += masked_l1(&generated[t], &inputs[t], &leftovers[t]);
        acc += masked_l1(&generated[t], &inputs[t], &leftovers[t].complement());
    }
    Ok(acc / n as f64)
}

/// Scores a generated frame; higher means more realistic.
pub trait Critic {
    fn score(&self, f: &Frame) -> f64;
}

/// Mean luma of the frame.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanLuma;

impl Critic for MeanLuma {
    fn score(&self, f: &Frame) -> f64 {
        let n = (f.height() * f.width()) as f64;
        f.data()
            .chunks_exact(3)
            .map(|p| (LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2]) as f64)
            .sum::<f64>()
            / n
    }
}

/// `−mean_t critic(X̃^t)`.
pub fn l_adv(generated: &[Frame], critic: &dyn Critic) -> f64 {
    if generated.is_empty() {
        return 0.0;
    }
    -generated.iter().map(|f| critic.score(f)).sum::<f64>() / generated.len() as f64
}

/// Everything needed to evaluate the full suite on one sample.
pub struct LossInputs<'a> {
    pub sample: &'a SequenceSample,
    pub aligned: &'a [Vec<AlignedReference>],
    pub coverage: &'a [Plane],
    pub leftovers: &'a [Mask],
    /// Generator outputs `X̃^t`.
    pub generated: &'a [Frame],
}

pub fn evaluate(inputs: &LossInputs<'_>, phi: &dyn FeatureExtractor, critic: &dyn Critic) -> Result<LossReport> {
    let s = inputs.sample;
    Ok(LossReport {
        align: l_align(s, inputs.aligned)?,
        hole_visible: l_hole_visible(s, inputs.coverage)?,
        hole_leftover: l_hole_leftover(s, inputs.leftovers)?,
        non_hole: l_non_hole(s)?,
        perceptual: l_perceptual(s, phi)?,
        style: l_style(s, phi)?,
        rec: l_rec(inputs.generated, &s.inputs, inputs.leftovers)?,
        adv: l_adv(inputs.generated, critic),
    })
}
