//! L1, PSNR and SSIM between frames.
//!
//! PSNR assumes a [0, 1] range and is capped at [`PSNR_CAP`] dB. SSIM is the
//! single-scale form on luma with an 11×11 Gaussian window (σ = 1.5),
//! `C1 = 0.01²`, `C2 = 0.03²`, averaged over window positions that fit
//! inside the image.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::{same_dims, Frame, Mask, Plane};
use crate::math;

pub const PSNR_CAP: f64 = 99.0;
const RADIUS: usize = 5;
const SIGMA: f64 = 1.5;
const C1: f64 = 1e-4;
const C2: f64 = 9e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub l1: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn l1(a: &Frame, b: &Frame) -> Result<f64> {
    same_dims(a.dims(), b.dims())?;
    let n = a.data().len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (*x as f64 - *y as f64).abs()).sum::<f64>() / n)
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * math::log10_64(1.0 / mse)).min(PSNR_CAP)
}

pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    same_dims(a.dims(), b.dims())?;
    let n = a.data().len() as f64;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| {
        let d = *x as f64 - *y as f64;
        d * d
    }).sum::<f64>() / n;
    Ok(psnr_from_mse(mse))
}

fn gaussian() -> [f64; 2 * RADIUS + 1] {
    let mut k = [0.0f64; 2 * RADIUS + 1];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - RADIUS as f64;
        *v = math::exp64(-d * d / (2.0 * SIGMA * SIGMA));
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Gaussian-weighted mean of `src` at every valid window centre.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let d = 2 * RADIUS;
    let (ow, oh) = (w - d, h - d);
    let mut tmp = vec![0.0f64; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..=d).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0f64; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..=d).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// SSIM at every valid window centre, row-major over `(h − 10) × (w − 10)`.
fn ssim_values(a: &Frame, b: &Frame) -> Result<(usize, usize, Vec<f64>)> {
    same_dims(a.dims(), b.dims())?;
    let (h, w) = a.dims();
    if h <= 2 * RADIUS || w <= 2 * RADIUS {
        return Err(Error::InvalidImage("SSIM needs frames of at least 11×11"));
    }
    let la: Vec<f64> = a.luma().data().iter().map(|&v| v as f64).collect();
    let lb: Vec<f64> = b.luma().data().iter().map(|&v| v as f64).collect();
    let k = gaussian();
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
    let ma = filter_valid(&la, w, h, &k);
    let mb = filter_valid(&lb, w, h, &k);
    let saa = filter_valid(&prod(&la, &la), w, h, &k);
    let sbb = filter_valid(&prod(&lb, &lb), w, h, &k);
    let sab = filter_valid(&prod(&la, &lb), w, h, &k);
    let vals: Vec<f64> = (0..ma.len())
        .map(|i| {
            let (mx, my) = (ma[i], mb[i]);
            let vx = saa[i] - mx * mx;
            let vy = sbb[i] - my * my;
            let cxy = sab[i] - mx * my;
            ((2.0 * mx * my + C1) * (2.0 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2))
        })
        .collect();
    Ok((h - 2 * RADIUS, w - 2 * RADIUS, vals))
}

pub fn ssim_map(a: &Frame, b: &Frame) -> Result<Plane> {
    let (h, w, v) = ssim_values(a, b)?;
    Plane::new(h, w, v.into_iter().map(|x| x as f32).collect())
}

pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    let (_, _, v) = ssim_values(a, b)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

pub fn frame_metrics(a: &Frame, b: &Frame) -> Result<MetricReport> {
    Ok(MetricReport { l1: l1(a, b)?, psnr: psnr(a, b)?, ssim: ssim(a, b)? })
}

/// Metrics restricted to `region`. SSIM averages the map over valid window
/// centres inside the region, or over the whole map if none are.
pub fn region_metrics(a: &Frame, b: &Frame, region: &Mask) -> Result<MetricReport> {
    same_dims(a.dims(), b.dims())?;
    same_dims(a.dims(), region.dims())?;
    if !region.any() {
        return Err(Error::EmptyRegion);
    }
    let (mut abs, mut sq, mut n) = (0.0f64, 0.0f64, 0.0f64);
    for (i, &r) in region.data().iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        for c in 0..3 {
            let d = a.data()[i * 3 + c] as f64 - b.data()[i * 3 + c] as f64;
            abs += d.abs();
            sq += d * d;
        }
        n += 3.0;
    }
    let (mh, mw, map) = ssim_values(a, b)?;
    let (mut s, mut k) = (0.0f64, 0usize);
    for y in 0..mh {
        for x in 0..mw {
            if region.get(x + RADIUS, y + RADIUS) > 0.0 {
                s += map[y * mw + x];
                k += 1;
            }
        }
    }
    let ssim = if k > 0 { s / k as f64 } else { map.iter().sum::<f64>() / map.len() as f64 };
    Ok(MetricReport { l1: abs / n, psnr: psnr_from_mse(sq / n), ssim })
}

/// Arithmetic mean of per-frame reports.
pub fn mean_report(reports: &[MetricReport]) -> Option<MetricReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    Some(MetricReport {
        l1: reports.iter().map(|r| r.l1).sum::<f64>() / n,
        psnr: reports.iter().map(|r| r.psnr).sum::<f64>() / n,
        ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(h: usize, w: usize) -> Frame {
        Frame::from_fn(h, w, |x, y| {
            let a = ((x * 13 + y * 7) % 17) as f32 / 16.0;
            [a, 1.0 - a, ((x + 2 * y) % 5) as f32 / 4.0]
        })
    }

    #[test]
    fn psnr_closed_forms() {
        let a = Frame::filled(16, 16, [0.2; 3]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let b = Frame::filled(16, 16, [0.7; 3]);
        assert!((psnr(&a, &b).unwrap() - 6.0206).abs() < 1e-4);
        let c = Frame::filled(16, 16, [0.3; 3]);
        assert!((psnr(&a, &c).unwrap() - 20.0).abs() < 1e-6);
        assert_eq!(psnr(&a, &c).unwrap(), psnr(&c, &a).unwrap());
    }

    #[test]
    fn psnr_decreases_with_error() {
        let a = Frame::filled(12, 12, [0.1; 3]);
        let mut last = f64::INFINITY;
        for k in 1..8 {
            let b = Frame::filled(12, 12, [0.1 + 0.1 * k as f32; 3]);
            let p = psnr(&a, &b).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn l1_cases() {
        let a = textured(12, 12);
        assert_eq!(l1(&a, &a).unwrap(), 0.0);
        let z = Frame::filled(4, 4, [0.2; 3]);
        let o = Frame::filled(4, 4, [0.3; 3]);
        assert!((l1(&z, &o).unwrap() - 0.1).abs() < 1e-6);
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = textured(20, 24);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = Frame::from_fn(20, 24, |x, y| a.pixel((x + 1) % 24, y));
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
    }

    #[test]
    fn ssim_constant_offset_closed_form() {
        // Zero variance: SSIM = (2μaμb + C1) / (μa² + μb² + C1).
        let a = Frame::filled(16, 16, [0.4; 3]);
        let b = Frame::filled(16, 16, [0.5; 3]);
        let (ma, mb) = (a.luma().get(0, 0) as f64, b.luma().get(0, 0) as f64);
        let want = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        let got = ssim(&a, &b).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} {want}");
    }

    #[test]
    fn region_cases() {
        let a = textured(16, 16);
        let b = Frame::from_fn(16, 16, |x, y| {
            let p = a.pixel(x, y);
            if x < 8 {
                p
            } else {
                [p[0] + 0.1, p[1], p[2]]
            }
        });
        assert!(matches!(region_metrics(&a, &b, &Plane::zeros(16, 16)), Err(Error::EmptyRegion)));
        let all = region_metrics(&a, &b, &Plane::filled(16, 16, 1.0)).unwrap();
        let glob = frame_metrics(&a, &b).unwrap();
        assert!((all.l1 - glob.l1).abs() < 1e-12 && (all.psnr - glob.psnr).abs() < 1e-9 && (all.ssim - glob.ssim).abs() < 1e-12);
        let left = Plane::from_fn(16, 16, |x, _| if x < 8 { 1.0 } else { 0.0 });
        let right = left.complement();
        assert_eq!(region_metrics(&a, &b, &left).unwrap().l1, 0.0);
        assert!((region_metrics(&a, &b, &right).unwrap().l1 - 0.1 / 3.0).abs() < 1e-6);
    }
}
