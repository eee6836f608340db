//! Dense pyramidal Lucas-Kanade flow with masked support.
//!
//! At every level the reference is warped by the current flow and a 2×2
//! structure tensor is accumulated over a square window of pixels visible in
//! both frames. Pixels whose window is textureless keep the flow inherited
//! from the coarser level; pixels whose window has too little visible support
//! (typically inside the target hole) get the flow diffused in from their
//! supported surroundings.

use alloc::vec;
use alloc::vec::Vec;

use super::affine::half_plane;
use super::{FlowEstimator, FlowField};
use crate::diffusion;
use crate::image::{Frame, Mask, Plane};
use crate::{math, par};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub levels: usize,
    /// Odd window side.
    pub window: usize,
    pub iterations: usize,
    /// Minimum smaller eigenvalue of the support-normalised structure tensor.
    pub min_eigen: f32,
    /// Minimum fraction of the window that must be jointly visible.
    pub min_support: f32,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { levels: 4, window: 7, iterations: 3, min_eigen: 1e-5, min_support: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PyramidalLucasKanade {
    pub cfg: FlowConfig,
}

impl FlowEstimator for PyramidalLucasKanade {
    fn estimate(&self, target: &Frame, target_mask: &Mask, reference: &Frame, ref_mask: &Mask) -> FlowField {
        estimate_flow_masked(target, Some(target_mask), reference, Some(ref_mask), &self.cfg)
    }
}

/// Flow from `target` to `reference` with no holes.
pub fn estimate_flow(target: &Frame, reference: &Frame, levels: usize) -> FlowField {
    let cfg = FlowConfig { levels, ..FlowConfig::default() };
    estimate_flow_masked(target, None, reference, None, &cfg)
}

struct Lvl {
    w: usize,
    h: usize,
    t: Vec<f32>,
    i: Vec<f32>,
    vt: Vec<f32>,
    vr: Vec<f32>,
}

pub fn estimate_flow_masked(
    target: &Frame,
    target_mask: Option<&Mask>,
    reference: &Frame,
    ref_mask: Option<&Mask>,
    cfg: &FlowConfig,
) -> FlowField {
    assert_eq!(target.dims(), reference.dims());
    let (h, w) = target.dims();
    let ones = || vec![1.0f32; w * h];
    let mut pyr = vec![Lvl {
        w,
        h,
        t: target.luma().data().to_vec(),
        i: reference.luma().data().to_vec(),
        vt: target_mask.map(|m| m.complement().data().to_vec()).unwrap_or_else(ones),
        vr: ref_mask.map(|m| m.complement().data().to_vec()).unwrap_or_else(ones),
    }];
    for _ in 1..cfg.levels.max(1) {
        let l = pyr.last().unwrap();
        if l.w < 2 * cfg.window || l.h < 2 * cfg.window {
            break;
        }
        let next = Lvl {
            w: l.w.div_ceil(2),
            h: l.h.div_ceil(2),
            t: half_plane(&l.t, l.w, l.h),
            i: half_plane(&l.i, l.w, l.h),
            // A partially visible block is treated as a hole.
            vt: half_plane(&l.vt, l.w, l.h).into_iter().map(|v| if v >= 1.0 { 1.0 } else { 0.0 }).collect(),
            vr: half_plane(&l.vr, l.w, l.h).into_iter().map(|v| if v >= 1.0 { 1.0 } else { 0.0 }).collect(),
        };
        pyr.push(next);
    }

    let coarsest = pyr.last().unwrap();
    let mut u = vec![0.0f32; coarsest.w * coarsest.h];
    let mut v = vec![0.0f32; coarsest.w * coarsest.h];
    let mut prev: Option<(usize, usize)> = None;
    for l in pyr.iter().rev() {
        if let Some((pw, ph)) = prev {
            u = upsample2(&u, pw, ph, l.w, l.h);
            v = upsample2(&v, pw, ph, l.w, l.h);
        }
        lk_level(l, &mut u, &mut v, cfg);
        prev = Some((l.w, l.h));
    }
    let (wf, hf) = (w as f32, h as f32);
    for x in &mut u {
        *x = x.clamp(-wf, wf);
    }
    for y in &mut v {
        *y = y.clamp(-hf, hf);
    }
    FlowField { u: Plane::from_raw(h, w, u), v: Plane::from_raw(h, w, v) }
}

/// Upsample a flow component by 2 onto a `(w, h)` grid, doubling values.
fn upsample2(src: &[f32], sw: usize, sh: usize, w: usize, h: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let cy = ((y as f32 + 0.5) / 2.0 - 0.5).clamp(0.0, (sh - 1) as f32);
        let y0 = cy as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let fy = cy - y0 as f32;
        for x in 0..w {
            let cx = ((x as f32 + 0.5) / 2.0 - 0.5).clamp(0.0, (sw - 1) as f32);
            let x0 = cx as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let fx = cx - x0 as f32;
            let top = src[y0 * sw + x0] * (1.0 - fx) + src[y0 * sw + x1] * fx;
            let bot = src[y1 * sw + x0] * (1.0 - fx) + src[y1 * sw + x1] * fx;
            out.push(2.0 * (top * (1.0 - fy) + bot * fy));
        }
    }
    out
}

#[cfg(test)]
/// Separable box sum with the given radius; borders sum what exists.
fn box_sum(src: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut tmp = vec![0.0f64; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let mut acc = 0.0f64;
        for x in 0..=r.min(w - 1) {
            acc += row[x];
        }
        for x in 0..w {
            tmp[y * w + x] = acc;
            if x + r + 1 < w {
                acc += row[x + r + 1];
            }
            if x >= r {
                acc -= row[x - r];
            }
        }
    }
    let mut out = vec![0.0f64; w * h];
    for x in 0..w {
        let mut acc = 0.0f64;
        for y in 0..=r.min(h - 1) {
            acc += tmp[y * w + x];
        }
        for y in 0..h {
            out[y * w + x] = acc;
            if y + r + 1 < h {
                acc += tmp[(y + r + 1) * w + x];
            }
            if y >= r {
                acc -= tmp[(y - r) * w + x];
            }
        }
    }
    out
}

/// Binomial blur of the visible samples only, renormalised by the blurred
/// visibility so hole content does not leak into the surroundings.
fn masked_binomial(src: &[f32], vis: &[f32], w: usize, h: usize) -> Vec<f32> {
    let num: Vec<f32> = src.iter().zip(vis).map(|(a, b)| a * b).collect();
    let num = binomial(&num, w, h);
    let den = binomial(vis, w, h);
    num.iter().zip(&den).zip(src).map(|((n, d), s)| if *d > 1e-6 { n / d } else { *s }).collect()
}

/// Separable `[1 4 6 4 1] / 16` blur with clamped borders.
fn binomial(src: &[f32], w: usize, h: usize) -> Vec<f32> {
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (0..5).map(|k| K[k] * src[y * w + (x + k).saturating_sub(2).min(w - 1)]).sum();
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (0..5).map(|k| K[k] * tmp[(y + k).saturating_sub(2).min(h - 1) * w + x]).sum();
        }
    }
    out
}

fn lk_level(l: &Lvl, u: &mut [f32], v: &mut [f32], cfg: &FlowConfig) {
    let (w, h) = (l.w, l.h);
    let n = w * h;
    let r = cfg.window / 2;
    let win_area = (cfg.window * cfg.window) as f64;
    let tb = masked_binomial(&l.t, &l.vt, w, h);
    let ib = masked_binomial(&l.i, &l.vr, w, h);

    // Samples whose smoothing footprint is entirely visible; elsewhere the
    // renormalised blur differs from what the other frame sees.
    let tfull: Vec<bool> = binomial(&l.vt, w, h).iter().map(|&d| d >= 1.0 - 1e-5).collect();
    let rfull: Vec<bool> = binomial(&l.vr, w, h).iter().map(|&d| d >= 1.0 - 1e-5).collect();

    // Gradients that would reach into the hole are left out of the windows.
    let mut gok = vec![true; n];
    let mut gx = vec![0.0f32; n];
    let mut gy = vec![0.0f32; n];
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            gok[y * w + x] = [y * w + xl, y * w + xr, yu * w + x, yd * w + x].iter().all(|&j| tfull[j]);
            if xr > xl {
                gx[y * w + x] = (tb[y * w + xr] - tb[y * w + xl]) / (xr - xl) as f32;
            }
            if yd > yu {
                gy[y * w + x] = (tb[yd * w + x] - tb[yu * w + x]) / (yd - yu) as f32;
            }
        }
    }

    // Target pixels that may enter a window, packed as (gx, gy, tb, usable).
    let tp: Vec<[f32; 4]> = (0..n).map(|j| [gx[j], gy[j], tb[j], if tfull[j] && gok[j] { 1.0 } else { 0.0 }]).collect();
    // corner[k][j]: every reference sample the bilinear footprint `k` needs
    // from anchor `j` exists and is visible. Bit 0 of `k` is the right
    // neighbour, bit 1 the lower one.
    let corner: [Vec<bool>; 4] = core::array::from_fn(|k| {
        let (dx, dy) = (k & 1, k >> 1);
        (0..n)
            .map(|j| {
                let (x, y) = (j % w, j / w);
                if x + dx >= w || y + dy >= h {
                    return false;
                }
                (0..=dy).all(|oy| (0..=dx).all(|ox| rfull[(y + oy) * w + x + ox]))
            })
            .collect()
    });
    // Padded so the right and lower neighbour rows can always be sliced;
    // the padding is never read where `corner` holds.
    let mut ibp = ib;
    ibp.resize(n + w + 1, 0.0);

    // Each window is warped by its centre pixel's displacement, so the
    // bilinear weights are shared by the whole window.
    let solve = |x: usize, y: usize, mut fu: f32, mut fv: f32| -> (f32, f32, bool) {
        let (x0, x1) = (x.saturating_sub(r) as isize, (x + r).min(w - 1) as isize);
        let (y0, y1) = (y.saturating_sub(r) as isize, (y + r).min(h - 1) as isize);
        for _ in 0..cfg.iterations {
            let (iu, iv) = (math::floor(fu), math::floor(fv));
            let (ax, ay) = (fu - iu, fv - iv);
            let (iu, iv) = (iu as isize, iv as isize);
            let ux = ax > 1e-3;
            let uy = ay > 1e-3;
            let k = usize::from(ux) | (usize::from(uy) << 1);
            let ok = &corner[k];
            let (w00, w10, w01, w11) = ((1.0 - ax) * (1.0 - ay), ax * (1.0 - ay), (1.0 - ax) * ay, ax * ay);
            let lo_x = x0.max(-iu);
            let hi_x = x1.min(w as isize - 1 - iu);
            let lo_y = y0.max(-iv);
            let hi_y = y1.min(h as isize - 1 - iv);
            let (mut sw, mut sxx, mut sxy, mut syy, mut sxt, mut syt) = (0u32, 0.0f32, 0.0f32, 0.0f32, 0.0f32, 0.0f32);
            if lo_x <= hi_x {
                let len = (hi_x - lo_x + 1) as usize;
                for yy in lo_y..=hi_y {
                    let t0 = yy as usize * w + lo_x as usize;
                    let a = ((yy + iv) as usize * w) as isize + lo_x + iu;
                    let a = a as usize;
                    let trow = &tp[t0..t0 + len];
                    let okrow = &ok[a..a + len];
                    let (r00, r10) = (&ibp[a..a + len], &ibp[a + 1..a + 1 + len]);
                    let (r01, r11) = (&ibp[a + w..a + w + len], &ibp[a + w + 1..a + w + 1 + len]);
                    for i in 0..len {
                        let t = trow[i];
                        if t[3] == 0.0 || !okrow[i] {
                            continue;
                        }
                        let mut ivl = w00 * r00[i];
                        if ux {
                            ivl += w10 * r10[i];
                        }
                        if uy {
                            ivl += w01 * r01[i];
                            if ux {
                                ivl += w11 * r11[i];
                            }
                        }
                        let (a, b) = (t[0], t[1]);
                        let e = ivl - t[2];
                        sw += 1;
                        sxx += a * a;
                        sxy += a * b;
                        syy += b * b;
                        sxt += a * e;
                        syt += b * e;
                    }
                }
            }
            if (sw as f64) < cfg.min_support as f64 * win_area {
                return (fu, fv, true);
            }
            let k = 1.0 / sw as f64;
            let (a, b, c) = (sxx as f64 * k, sxy as f64 * k, syy as f64 * k);
            let tr = a + c;
            let det = a * c - b * b;
            let disc = math::sqrt64((tr * tr - 4.0 * det).max(0.0));
            let lmin = 0.5 * (tr - disc);
            if lmin < cfg.min_eigen as f64 || det <= 0.0 {
                break;
            }
            let (bx, by) = (-(sxt as f64) * k, -(syt as f64) * k);
            let du = ((c * bx - b * by) / det).clamp(-2.0, 2.0) as f32;
            let dv = ((a * by - b * bx) / det).clamp(-2.0, 2.0) as f32;
            fu += du;
            fv += dv;
            if du.abs() + dv.abs() < 1e-3 {
                break;
            }
        }
        (fu, fv, false)
    };

    let mut out = vec![(0.0f32, 0.0f32, false); n];
    {
        let (u, v) = (&*u, &*v);
        par::rows(&mut out, w, |y, row| {
            for (x, o) in row.iter_mut().enumerate() {
                *o = solve(x, y, u[y * w + x], v[y * w + x]);
            }
        });
    }
    let mut unsupported = vec![0.0f32; n];
    for (i, &(a, b, bad)) in out.iter().enumerate() {
        u[i] = a;
        v[i] = b;
        unsupported[i] = if bad { 1.0 } else { 0.0 };
    }
    let hole = Plane::from_raw(h, w, unsupported);
    if hole.any() && hole.count_nonzero() < n {
        let fu = diffusion::fill_plane(&Plane::from_raw(h, w, u.to_vec()), &hole);
        let fv = diffusion::fill_plane(&Plane::from_raw(h, w, v.to_vec()), &hole);
        u.copy_from_slice(fu.data());
        v.copy_from_slice(fv.data());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_sum_matches_naive() {
        let (w, h) = (7, 5);
        let src: Vec<f64> = (0..w * h).map(|i| (i * 37 % 11) as f64).collect();
        let out = box_sum(&src, w, h, 2);
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for yy in y.saturating_sub(2)..=(y + 2).min(h - 1) {
                    for xx in x.saturating_sub(2)..=(x + 2).min(w - 1) {
                        s += src[yy * w + xx];
                    }
                }
                assert!((out[y * w + x] - s).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flat_images_give_zero_flow() {
        let f = Frame::filled(32, 32, [0.4; 3]);
        let g = Frame::filled(32, 32, [0.6; 3]);
        let flow = estimate_flow(&f, &g, 3);
        assert!(flow.u.data().iter().chain(flow.v.data()).all(|&x| x == 0.0));
    }
}
