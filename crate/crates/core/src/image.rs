//! Image value types and elementwise primitives.
//!
//! Pixels are `f32`. Colour frames are interleaved RGB, row-major. Residual
//! frames reuse [`Frame`] and may hold negative values.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Rec. 601 luma weights.
pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// Out-of-range tolerance for bilinear sample coordinates. Coordinates within
/// this distance of the border are clamped onto it.
const SAMPLE_EPS: f32 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

/// Single-channel H×W map: masks, visibility maps, luma, flow components.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

/// Hole mask; 1 marks a hole (or otherwise unusable) pixel.
pub type Mask = Plane;

/// Padding added on each side by [`pad_to_multiple`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PadRecord {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl PadRecord {
    pub fn is_empty(&self) -> bool {
        *self == PadRecord::default()
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidImage("zero-sized image"));
    }
    Ok(())
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width * 3 {
            return Err(Error::InvalidImage("buffer length is not H*W*3"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidImage("non-finite sample"));
        }
        Ok(Frame { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        assert!(height > 0 && width > 0, "zero-sized frame");
        let mut data = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            data.extend_from_slice(&rgb);
        }
        Frame { height, width, data }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "zero-sized frame");
        Frame { height, width, data: vec![0.0; height * width * 3] }
    }

    /// Build from a per-pixel function `f(x, y) -> rgb`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        assert!(height > 0 && width > 0, "zero-sized frame");
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Frame { height, width, data }
    }

    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * 3);
        Frame { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn channel(&self, c: usize) -> Plane {
        assert!(c < 3);
        let data = self.data.chunks_exact(3).map(|p| p[c]).collect();
        Plane::from_raw(self.height, self.width, data)
    }

    pub fn luma(&self) -> Plane {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
            .collect();
        Plane::from_raw(self.height, self.width, data)
    }

    /// Per-channel product with a mask.
    pub fn mul_mask(&self, mask: &Mask) -> Result<Frame> {
        same_dims(self.dims(), mask.dims())?;
        let data = self
            .data
            .chunks_exact(3)
            .zip(mask.data())
            .flat_map(|(p, &m)| [p[0] * m, p[1] * m, p[2] * m])
            .collect();
        Ok(Frame::from_raw(self.height, self.width, data))
    }

    /// `self` where `mask` is 1, `other` where it is 0, linear in between.
    /// [`Frame::composite`] written over `self`.
    pub fn composite_in_place(&mut self, other: &Frame, mask: &Mask) -> Result<()> {
        same_dims(self.dims(), other.dims())?;
        same_dims(self.dims(), mask.dims())?;
        for (i, &m) in mask.data().iter().enumerate() {
            if m == 1.0 {
                continue;
            }
            for c in 0..3 {
                let k = i * 3 + c;
                self.data[k] = if m == 0.0 { other.data[k] } else { m * self.data[k] + (1.0 - m) * other.data[k] };
            }
        }
        Ok(())
    }

    pub fn composite(&self, other: &Frame, mask: &Mask) -> Result<Frame> {
        same_dims(self.dims(), other.dims())?;
        same_dims(self.dims(), mask.dims())?;
        let mut out = other.clone();
        for (i, &m) in mask.data().iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for c in 0..3 {
                let k = i * 3 + c;
                out.data[k] = if m == 1.0 {
                    self.data[k]
                } else {
                    m * self.data[k] + (1.0 - m) * other.data[k]
                };
            }
        }
        Ok(out)
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Frame {
        assert!(top + height <= self.height && left + width <= self.width);
        let mut data = Vec::with_capacity(height * width * 3);
        for y in top..top + height {
            let row = (y * self.width + left) * 3;
            data.extend_from_slice(&self.data[row..row + width * 3]);
        }
        Frame::from_raw(height, width, data)
    }

    /// Bilinear sample at a continuous pixel coordinate; `None` outside
    /// `[0, W-1] x [0, H-1]`.
    #[inline]
    pub fn sample(&self, x: f32, y: f32) -> Option<[f32; 3]> {
        let (x0, x1, fx) = taps(x, self.width)?;
        let (y0, y1, fy) = taps(y, self.height)?;
        let w = self.width;
        let a = (y0 * w + x0) * 3;
        let b = (y0 * w + x1) * 3;
        let c = (y1 * w + x0) * 3;
        let d = (y1 * w + x1) * 3;
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let top = self.data[a + k] * (1.0 - fx) + self.data[b + k] * fx;
            let bot = self.data[c + k] * (1.0 - fx) + self.data[d + k] * fx;
            *o = top * (1.0 - fy) + bot * fy;
        }
        Some(out)
    }
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::InvalidImage("buffer length is not H*W"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidImage("non-finite sample"));
        }
        Ok(Plane { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        assert!(height > 0 && width > 0, "zero-sized plane");
        Plane { height, width, data: vec![value; height * width] }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(height > 0 && width > 0, "zero-sized plane");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane { height, width, data }
    }

    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Plane { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn mul(&self, other: &Plane) -> Result<Plane> {
        same_dims(self.dims(), other.dims())?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Ok(Plane::from_raw(self.height, self.width, data))
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Plane {
        Plane::from_raw(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    /// `1 - m`
    pub fn complement(&self) -> Plane {
        self.map(|v| 1.0 - v)
    }

    /// 1 where the value exceeds `threshold`, else 0.
    pub fn binarize(&self, threshold: f32) -> Plane {
        self.map(|v| if v > threshold { 1.0 } else { 0.0 })
    }

    pub fn into_binarized(mut self, threshold: f32) -> Plane {
        for v in &mut self.data {
            *v = if *v > threshold { 1.0 } else { 0.0 };
        }
        self
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    /// Number of strictly positive entries.
    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&v| v > 0.0)
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Plane {
        assert!(top + height <= self.height && left + width <= self.width);
        let mut data = Vec::with_capacity(height * width);
        for y in top..top + height {
            let row = y * self.width + left;
            data.extend_from_slice(&self.data[row..row + width]);
        }
        Plane::from_raw(height, width, data)
    }

    #[inline]
    pub fn sample(&self, x: f32, y: f32) -> Option<f32> {
        let (x0, x1, fx) = taps(x, self.width)?;
        let (y0, y1, fy) = taps(y, self.height)?;
        let w = self.width;
        let top = self.data[y0 * w + x0] * (1.0 - fx) + self.data[y0 * w + x1] * fx;
        let bot = self.data[y1 * w + x0] * (1.0 - fx) + self.data[y1 * w + x1] * fx;
        Some(top * (1.0 - fy) + bot * fy)
    }
}

#[inline]
pub(crate) fn taps(x: f32, len: usize) -> Option<(usize, usize, f32)> {
    let hi = (len - 1) as f32;
    if !(x >= -SAMPLE_EPS && x <= hi + SAMPLE_EPS) {
        return None;
    }
    let x = x.clamp(0.0, hi);
    let x0 = math::floor(x) as usize;
    let fx = x - x0 as f32;
    let x1 = (x0 + 1).min(len - 1);
    Some((x0, x1, fx))
}

pub(crate) fn same_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Pad a frame and its mask so both dimensions become the smallest multiples
/// of `multiple`. Padding goes to the bottom and right; padded frame pixels
/// replicate the nearest edge pixel and padded mask pixels are non-hole.
pub fn pad_to_multiple(frame: &Frame, multiple: usize, mask: &Mask) -> Result<(Frame, Mask, PadRecord)> {
    if multiple == 0 {
        return Err(Error::InvalidConfig("padding multiple must be >= 1".into()));
    }
    same_dims(frame.dims(), mask.dims())?;
    let (h, w) = frame.dims();
    let ph = h.div_ceil(multiple) * multiple;
    let pw = w.div_ceil(multiple) * multiple;
    let record = PadRecord { top: 0, bottom: ph - h, left: 0, right: pw - w };
    if record.is_empty() {
        return Ok((frame.clone(), mask.clone(), record));
    }
    let mut data = Vec::with_capacity(ph * pw * 3);
    let mut mdata = Vec::with_capacity(ph * pw);
    for y in 0..ph {
        let sy = y.min(h - 1);
        for x in 0..pw {
            let sx = x.min(w - 1);
            data.extend_from_slice(&frame.pixel(sx, sy));
            mdata.push(if x < w && y < h { mask.get(x, y) } else { 0.0 });
        }
    }
    Ok((Frame::from_raw(ph, pw, data), Plane::from_raw(ph, pw, mdata), record))
}

/// [`pad_to_multiple`] on owned buffers; returns them untouched when no
/// padding is needed.
pub fn pad_owned(frame: Frame, multiple: usize, mask: Mask) -> Result<(Frame, Mask, PadRecord)> {
    if multiple == 0 {
        return Err(Error::InvalidConfig("padding multiple must be >= 1".into()));
    }
    same_dims(frame.dims(), mask.dims())?;
    let (h, w) = frame.dims();
    if h % multiple == 0 && w % multiple == 0 {
        return Ok((frame, mask, PadRecord { top: 0, bottom: 0, left: 0, right: 0 }));
    }
    pad_to_multiple(&frame, multiple, &mask)
}

/// [`unpad`] that hands the frame back when nothing was padded.
pub fn into_unpadded(frame: Frame, record: &PadRecord) -> Frame {
    if record.is_empty() {
        frame
    } else {
        unpad(&frame, record)
    }
}

/// Invert [`pad_to_multiple`] for a frame.
pub fn unpad(frame: &Frame, record: &PadRecord) -> Frame {
    let h = frame.height() - record.top - record.bottom;
    let w = frame.width() - record.left - record.right;
    frame.crop(record.top, record.left, h, w)
}

pub fn unpad_plane(plane: &Plane, record: &PadRecord) -> Plane {
    let h = plane.height() - record.top - record.bottom;
    let w = plane.width() - record.left - record.right;
    plane.crop(record.top, record.left, h, w)
}
