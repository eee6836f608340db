//! Resampling and the single-split residual decomposition.
//!
//! Downsampling is an s×s box average; upsampling is bilinear with
//! half-pixel-centred sampling and edge clamping. The residual of a frame is
//! whatever the down/up round trip loses, so `upsample(low) + residual`
//! reproduces the input.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::{Frame, Mask, Plane};
use crate::math;
use crate::par;

/// Default downsampling factor between input and processing resolution.
pub const DEFAULT_SCALE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualDecomposition {
    pub low: Frame,
    pub residual: Frame,
    pub scale: usize,
}

impl ResidualDecomposition {
    pub fn reconstruct(&self) -> Frame {
        let up = upsample(&self.low, self.scale);
        let data = up.data().iter().zip(self.residual.data()).map(|(a, b)| a + b).collect();
        Frame::from_raw(up.height(), up.width(), data)
    }
}

fn check_divisible(h: usize, w: usize, s: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::InvalidConfig("scale must be >= 1".into()));
    }
    if h % s != 0 || w % s != 0 {
        return Err(Error::NotDivisible { height: h, width: w, factor: s });
    }
    Ok(())
}

/// Box-average each s×s block.
pub fn downsample(f: &Frame, s: usize) -> Result<Frame> {
    let (h, w) = f.dims();
    check_divisible(h, w, s)?;
    if s == 1 {
        return Ok(f.clone());
    }
    let (oh, ow) = (h / s, w / s);
    let inv = 1.0 / (s * s) as f32;
    let src = f.data();
    let mut out = alloc::vec![0.0f32; oh * ow * 3];
    par::rows(&mut out, ow * 3, |oy, row| {
        for ox in 0..ow {
            let mut acc = [0.0f32; 3];
            for dy in 0..s {
                let base = ((oy * s + dy) * w + ox * s) * 3;
                for px in src[base..base + s * 3].chunks_exact(3) {
                    acc[0] += px[0];
                    acc[1] += px[1];
                    acc[2] += px[2];
                }
            }
            row[ox * 3] = acc[0] * inv;
            row[ox * 3 + 1] = acc[1] * inv;
            row[ox * 3 + 2] = acc[2] * inv;
        }
    });
    Ok(Frame::from_raw(oh, ow, out))
}

/// Box-average a single plane.
pub fn downsample_plane(p: &Plane, s: usize) -> Result<Plane> {
    let (h, w) = p.dims();
    check_divisible(h, w, s)?;
    if s == 1 {
        return Ok(p.clone());
    }
    let (oh, ow) = (h / s, w / s);
    let inv = 1.0 / (s * s) as f32;
    let src = p.data();
    let mut out = alloc::vec![0.0f32; oh * ow];
    par::rows(&mut out, ow, |oy, row| {
        for (ox, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for dy in 0..s {
                let base = (oy * s + dy) * w + ox * s;
                acc += src[base..base + s].iter().sum::<f32>();
            }
            *o = acc * inv;
        }
    });
    Ok(Plane::from_raw(oh, ow, out))
}

/// Downsample a hole mask: a block containing any hole pixel is a hole.
pub fn downsample_mask(m: &Mask, s: usize) -> Result<Mask> {
    let (h, w) = m.dims();
    check_divisible(h, w, s)?;
    if s == 1 {
        return Ok(m.binarize(0.0));
    }
    let (oh, ow) = (h / s, w / s);
    let mut out = alloc::vec![0.0f32; oh * ow];
    for oy in 0..oh {
        for dy in 0..s {
            let row = &m.data()[(oy * s + dy) * w..(oy * s + dy + 1) * w];
            for ox in 0..ow {
                if row[ox * s..(ox + 1) * s].iter().any(|&v| v > 0.0) {
                    out[oy * ow + ox] = 1.0;
                }
            }
        }
    }
    Ok(Plane::from_raw(oh, ow, out))
}

/// Bilinear taps along one axis for an upsampling factor `s`.
pub(crate) fn axis_taps(out_len: usize, in_len: usize, s: usize) -> Vec<(usize, usize, f32)> {
    let hi = (in_len - 1) as f32;
    (0..out_len)
        .map(|o| {
            let u = ((o as f32 + 0.5) / s as f32 - 0.5).clamp(0.0, hi);
            let i0 = math::floor(u) as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, u - i0 as f32)
        })
        .collect()
}

/// Bilinear upsample by an integer factor.
pub fn upsample(f: &Frame, s: usize) -> Frame {
    assert!(s >= 1, "scale must be >= 1");
    if s == 1 {
        return f.clone();
    }
    let (h, w) = f.dims();
    let (oh, ow) = (h * s, w * s);
    let xt = axis_taps(ow, w, s);
    let yt = axis_taps(oh, h, s);
    let src = f.data();
    let mut out = alloc::vec![0.0f32; oh * ow * 3];
    par::rows(&mut out, ow * 3, |oy, row| {
        let (y0, y1, fy) = yt[oy];
        let r0 = &src[y0 * w * 3..(y0 + 1) * w * 3];
        let r1 = &src[y1 * w * 3..(y1 + 1) * w * 3];
        for (ox, &(x0, x1, fx)) in xt.iter().enumerate() {
            for c in 0..3 {
                let top = r0[x0 * 3 + c] * (1.0 - fx) + r0[x1 * 3 + c] * fx;
                let bot = r1[x0 * 3 + c] * (1.0 - fx) + r1[x1 * 3 + c] * fx;
                row[ox * 3 + c] = top * (1.0 - fy) + bot * fy;
            }
        }
    });
    Frame::from_raw(oh, ow, out)
}

pub fn upsample_plane(p: &Plane, s: usize) -> Plane {
    assert!(s >= 1, "scale must be >= 1");
    if s == 1 {
        return p.clone();
    }
    let (h, w) = p.dims();
    let (oh, ow) = (h * s, w * s);
    let xt = axis_taps(ow, w, s);
    let yt = axis_taps(oh, h, s);
    let src = p.data();
    let mut out = alloc::vec![0.0f32; oh * ow];
    par::rows(&mut out, ow, |oy, row| {
        let (y0, y1, fy) = yt[oy];
        for (ox, &(x0, x1, fx)) in xt.iter().enumerate() {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            row[ox] = top * (1.0 - fy) + bot * fy;
        }
    });
    Plane::from_raw(oh, ow, out)
}

/// Nearest-neighbour (block replication) upsample.
pub fn upsample_nearest(p: &Plane, s: usize) -> Plane {
    assert!(s >= 1, "scale must be >= 1");
    if s == 1 {
        return p.clone();
    }
    let (h, w) = p.dims();
    Plane::from_fn(h * s, w * s, |x, y| p.get(x / s, y / s))
}

/// Split `f` into its downsampled version and the detail the round trip loses.
pub fn decompose(f: &Frame, s: usize) -> Result<ResidualDecomposition> {
    let low = downsample(f, s)?;
    let residual = residual_of(f, &low, s);
    Ok(ResidualDecomposition { low, residual, scale: s })
}

/// `f - upsample(low, s)`
pub fn residual_of(f: &Frame, low: &Frame, s: usize) -> Frame {
    let up = upsample(low, s);
    debug_assert_eq!(up.dims(), f.dims());
    let data = f.data().iter().zip(up.data()).map(|(a, b)| a - b).collect();
    Frame::from_raw(f.height(), f.width(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(h: usize, w: usize, seed: u32) -> Frame {
        let mut state = seed.wrapping_mul(2654435761).wrapping_add(1);
        Frame::from_fn(h, w, |_, _| {
            let mut px = [0.0; 3];
            for v in &mut px {
                state ^= state << 13;
                state ^= state >> 17;
                state ^= state << 5;
                *v = (state % 1000) as f32 / 999.0;
            }
            px
        })
    }

    #[test]
    fn constant_images_survive_resampling() {
        let f = Frame::filled(8, 8, [0.3, 0.6, 0.9]);
        for s in [1, 2, 4, 8] {
            let d = downsample(&f, s).unwrap();
            assert!(d.data().iter().zip([0.3f32, 0.6, 0.9].iter().cycle()).all(|(a, b)| (a - b).abs() < 1e-6));
            let u = upsample(&d, s);
            assert_eq!(u.dims(), (8, 8));
            assert!(u.data().iter().zip([0.3f32, 0.6, 0.9].iter().cycle()).all(|(a, b)| (a - b).abs() < 1e-6));
        }
    }

    #[test]
    fn block_mean_closed_form() {
        let f = Frame::new(2, 2, [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0].to_vec()).unwrap();
        assert_eq!(downsample(&f, 2).unwrap().pixel(0, 0), [0.5; 3]);
    }

    #[test]
    fn scale_one_is_identity() {
        let f = noise(6, 5, 3);
        assert_eq!(downsample(&f, 1).unwrap(), f);
        assert_eq!(upsample(&f, 1), f);
    }

    #[test]
    fn single_pixel_extends() {
        let f = Frame::filled(1, 1, [0.7; 3]);
        let u = upsample(&f, 4);
        assert_eq!(u.dims(), (4, 4));
        assert!(u.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn non_divisible_is_rejected() {
        let f = Frame::zeros(6, 5);
        assert!(matches!(downsample(&f, 2), Err(Error::NotDivisible { .. })));
        assert!(matches!(decompose(&f, 4), Err(Error::NotDivisible { .. })));
    }

    #[test]
    fn mask_any_hole_poisons_block() {
        let mut m = Plane::zeros(4, 4);
        m.set(3, 0, 0.2);
        let d = downsample_mask(&m, 2).unwrap();
        assert_eq!(d.data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_residual_is_zero() {
        let d = decompose(&Frame::filled(16, 16, [0.4; 3]), 4).unwrap();
        assert!(d.residual.data().iter().all(|&v| v.abs() < 1e-7));
    }

    #[test]
    fn checkerboard_split() {
        let f = Frame::from_fn(8, 8, |x, y| [((x + y) % 2) as f32; 3]);
        let d = decompose(&f, 2).unwrap();
        assert!(d.low.data().iter().all(|&v| v == 0.5));
        for y in 0..8 {
            for x in 0..8 {
                let expect = if (x + y) % 2 == 1 { 0.5 } else { -0.5 };
                assert_eq!(d.residual.pixel(x, y), [expect; 3]);
            }
        }
    }

    #[test]
    fn residual_of_upsampled_ramp_is_zero_away_from_border() {
        // down(up(x)) == x holds for locally linear x, which is where the
        // round trip leaves no residual; edge clamping breaks linearity in
        // the outermost low-res pixel.
        let n = 10;
        let low = Frame::from_fn(n, n, |x, y| {
            let v = 0.1 + 0.05 * x as f32 + 0.03 * y as f32;
            [v, 0.5 * v, 0.9 - v]
        });
        for s in [2, 4, 8] {
            let g = upsample(&low, s);
            let d = decompose(&g, s).unwrap();
            let (h, w) = g.dims();
            for y in 2 * s..h - 2 * s {
                for x in 2 * s..w - 2 * s {
                    for v in d.residual.pixel(x, y) {
                        assert!(v.abs() < 1e-5, "s={s} ({x},{y}) {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn detail_energy_grows_with_scale() {
        let f = Frame::from_fn(64, 64, |x, y| {
            let v = 0.5 + 0.25 * ((x as f32) * 0.9).sin() * ((y as f32) * 0.45).cos() + 0.1 * ((x * y) as f32 * 0.01).sin();
            [v, v * 0.8, 1.0 - v]
        });
        let energy = |s| {
            let d = decompose(&f, s).unwrap();
            d.residual.data().iter().map(|v| v.abs() as f64).sum::<f64>() / d.residual.data().len() as f64
        };
        let e: Vec<f64> = [1, 2, 4, 8].iter().map(|&s| energy(s)).collect();
        assert_eq!(e[0], 0.0);
        assert!(e[1] > 0.0 && e[1] < e[2] && e[2] < e[3], "{e:?}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn reconstruction_identity(seed in 0u32..10_000, s in proptest::sample::select(alloc::vec![2usize, 4, 8]), bh in 1usize..5, bw in 1usize..5) {
            let f = noise(bh * s, bw * s, seed);
            let d = decompose(&f, s).unwrap();
            let r = d.reconstruct();
            for (a, b) in r.data().iter().zip(f.data()) {
                proptest::prop_assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}
