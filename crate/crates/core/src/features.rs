//! Deterministic multi-scale feature encoder.
//!
//! Each pyramid level carries eight channels per pixel: luma, R, G, B,
//! absolute horizontal and vertical luma gradients, 3×3 box-blurred luma and
//! 3×3 local standard deviation of luma. Level `l` is computed on the frame
//! box-downsampled by `2^l`, and every feature under the level's hole mask is
//! zero.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::{Frame, Mask, Plane};
use crate::{math, pyramid};

pub const CHANNELS: usize = 8;
pub const DEFAULT_LEVELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    /// Interleaved, `CHANNELS` per pixel.
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        FeatureMap { height, width, data: vec![0.0; height * width * CHANNELS] }
    }

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * CHANNELS {
            return Err(Error::InvalidImage("feature buffer length is not H*W*C"));
        }
        Ok(FeatureMap { height, width, data })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * CHANNELS;
        &self.data[i..i + CHANNELS]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * CHANNELS;
        &mut self.data[i..i + CHANNELS]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    pub levels: Vec<FeatureMap>,
    /// Hole mask used at each level.
    pub masks: Vec<Mask>,
}

impl FeaturePyramid {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn lowest(&self) -> &FeatureMap {
        self.levels.last().expect("pyramid has at least one level")
    }
}

/// Pluggable feature encoder.
pub trait Encoder: Sync {
    fn encode(&self, frame: &Frame, mask: &Mask, levels: usize) -> Result<FeaturePyramid>;
}

/// The hand-crafted eight-channel encoder.
#[derive(Debug, Clone, Copy, Default)]
pub struct HandCrafted;

impl Encoder for HandCrafted {
    fn encode(&self, frame: &Frame, mask: &Mask, levels: usize) -> Result<FeaturePyramid> {
        encode(frame, mask, levels)
    }
}

pub fn encode(frame: &Frame, mask: &Mask, levels: usize) -> Result<FeaturePyramid> {
    if levels == 0 {
        return Err(Error::InvalidConfig("encoder needs at least one level".into()));
    }
    crate::image::same_dims(frame.dims(), mask.dims())?;
    let factor = 1usize << (levels - 1);
    let (h, w) = frame.dims();
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::NotDivisible { height: h, width: w, factor });
    }
    let mut maps = Vec::with_capacity(levels);
    let mut masks = Vec::with_capacity(levels);
    for l in 0..levels {
        let s = 1usize << l;
        let f = pyramid::downsample(frame, s)?;
        let m = pyramid::downsample_mask(mask, s)?;
        maps.push(encode_level(&f, &m));
        masks.push(m);
    }
    Ok(FeaturePyramid { levels: maps, masks })
}

/// Features of a single level.
pub fn encode_level(frame: &Frame, mask: &Mask) -> FeatureMap {
    let (h, w) = frame.dims();
    let luma = frame.luma();
    let l = luma.data();
    let at = |x: isize, y: isize| -> f32 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        l[yc * w + xc]
    };
    let mut out = FeatureMap::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) > 0.0 {
                continue;
            }
            let (xi, yi) = (x as isize, y as isize);
            let mut win = [0.0f32; 9];
            let mut k = 0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    win[k] = at(xi + dx, yi + dy);
                    k += 1;
                }
            }
            let mean = win.iter().sum::<f32>() / 9.0;
            let var = win.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / 9.0;
            let px = frame.pixel(x, y);
            let dst = out.at_mut(x, y);
            dst[0] = l[y * w + x];
            dst[1] = px[0];
            dst[2] = px[1];
            dst[3] = px[2];
            dst[4] = ((at(xi + 1, yi) - at(xi - 1, yi)) * 0.5).abs();
            dst[5] = ((at(xi, yi + 1) - at(xi, yi - 1)) * 0.5).abs();
            dst[6] = mean;
            dst[7] = math::sqrt(var);
        }
    }
    out
}

/// Visibility map at pyramid level `l`: a block is visible only if every
/// pixel in it is.
pub fn visibility_at_level(v: &Plane, l: usize) -> Plane {
    if l == 0 {
        return v.clone();
    }
    let holes = v.complement();
    pyramid::downsample_mask(&holes, 1 << l)
        .expect("visibility map divisible by level factor")
        .complement()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(h: usize, w: usize) -> Frame {
        Frame::from_fn(h, w, |x, y| {
            let a = ((x * 13 + y * 7) % 17) as f32 / 16.0;
            let b = ((x * 5 + y * 11) % 9) as f32 / 8.0;
            [a, b, 0.5 * (a + b)]
        })
    }

    #[test]
    fn constant_gray() {
        let p = encode(&Frame::filled(8, 8, [0.5; 3]), &Plane::zeros(8, 8), 3).unwrap();
        assert_eq!(p.level_count(), 3);
        for map in &p.levels {
            for px in map.data().chunks_exact(CHANNELS) {
                for c in [0, 1, 2, 3, 6] {
                    assert!((px[c] - 0.5).abs() < 1e-6);
                }
                assert_eq!(px[4], 0.0);
                assert_eq!(px[5], 0.0);
                assert_eq!(px[7], 0.0);
            }
        }
    }

    #[test]
    fn fully_masked_is_zero() {
        let p = encode(&textured(8, 8), &Plane::filled(8, 8, 1.0), 3).unwrap();
        assert!(p.levels.iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn deterministic() {
        let f = textured(16, 16);
        let m = Plane::from_fn(16, 16, |x, y| if x == 3 && y > 4 { 1.0 } else { 0.0 });
        assert_eq!(encode(&f, &m, 3).unwrap(), encode(&f, &m, 3).unwrap());
    }

    #[test]
    fn holes_are_zero_at_every_level() {
        let f = textured(16, 16);
        let m = Plane::from_fn(16, 16, |x, y| if (5..9).contains(&x) && (2..4).contains(&y) { 1.0 } else { 0.0 });
        let p = encode(&f, &m, 3).unwrap();
        for (map, mask) in p.levels.iter().zip(&p.masks) {
            for y in 0..map.height() {
                for x in 0..map.width() {
                    if mask.get(x, y) > 0.0 {
                        assert!(map.at(x, y).iter().all(|&v| v == 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn divisibility_enforced() {
        let r = encode(&textured(10, 12), &Plane::zeros(10, 12), 3);
        assert!(matches!(r, Err(Error::NotDivisible { factor: 4, .. })));
    }

    #[test]
    fn translation_covariance_interior() {
        let big = textured(24, 24);
        let a = big.crop(2, 2, 16, 16);
        let b = big.crop(2, 5, 16, 16); // shifted by 3 columns
        let z = Plane::zeros(16, 16);
        let fa = encode_level(&a, &z);
        let fb = encode_level(&b, &z);
        for y in 1..15 {
            for x in 1..12 {
                assert_eq!(fa.at(x + 3, y), fb.at(x, y));
            }
        }
    }

    #[test]
    fn visibility_downsample_requires_full_block() {
        let mut v = Plane::filled(4, 4, 1.0);
        v.set(0, 0, 0.0);
        let d = visibility_at_level(&v, 1);
        assert_eq!(d.data(), &[0.0, 1.0, 1.0, 1.0]);
    }
}
