//! Masked, robust inverse-compositional affine registration.
//!
//! Coarse-to-fine Gauss-Newton on the target's luma. Each iteration warps the
//! reference with the current estimate, reweights residuals so the objective
//! behaves like an L1 distance over pixels visible in both frames, and
//! composes the inverse of the incremental warp into the estimate.
//!
//! Parameters live in normalised coordinates (centred, scaled by half the
//! larger side) so that the same warp is valid at every pyramid level.
//! A coarse exhaustive translation search seeds the first level.

use alloc::vec::Vec;

use super::{joint_coverage, warp_affine, AffineEstimator, AffineTransform, MIN_OVERLAP};
use crate::error::{Error, Result};
use crate::image::{Frame, Mask, Plane};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineConfig {
    pub levels: usize,
    pub max_iters: usize,
    /// Stop a level once the parameter update norm drops below this.
    pub step_tol: f64,
    /// Residual floor for the L1 reweighting.
    pub robust_delta: f32,
    /// Seed with an exhaustive integer translation search.
    pub search: bool,
    /// The search runs on the first pyramid level whose larger side is at
    /// most this many pixels.
    pub search_size: usize,
}

impl Default for AffineConfig {
    fn default() -> Self {
        AffineConfig { levels: 3, max_iters: 50, step_tol: 1e-4, robust_delta: 0.02, search: true, search_size: 32 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct InverseCompositional {
    pub cfg: AffineConfig,
}

impl AffineEstimator for InverseCompositional {
    fn estimate(&self, target: &Frame, target_mask: &Mask, reference: &Frame, ref_mask: &Mask) -> Result<AffineTransform> {
        estimate_affine(target, target_mask, reference, ref_mask, &self.cfg)
    }
}

/// Mean absolute luma difference between the target and the warped reference
/// over pixels visible in both. Returns `(mean, pixel count)`.
pub fn masked_l1(target: &Frame, target_mask: &Mask, reference: &Frame, ref_mask: &Mask, t: &AffineTransform) -> (f64, usize) {
    let warped = warp_affine(reference, ref_mask, t);
    let tl = target.luma();
    let rl = warped.frame.luma();
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for i in 0..tl.data().len() {
        if target_mask.data()[i] == 0.0 && warped.mask.data()[i] == 0.0 {
            sum += (tl.data()[i] - rl.data()[i]).abs() as f64;
            n += 1;
        }
    }
    if n == 0 {
        (f64::INFINITY, 0)
    } else {
        (sum / n as f64, n)
    }
}

/// Register `reference` onto `target`. The returned transform never has a
/// larger masked L1 residual than the identity.
pub fn estimate_affine(
    target: &Frame,
    target_mask: &Mask,
    reference: &Frame,
    ref_mask: &Mask,
    cfg: &AffineConfig,
) -> Result<AffineTransform> {
    crate::image::same_dims(target.dims(), reference.dims())?;
    crate::image::same_dims(target.dims(), target_mask.dims())?;
    crate::image::same_dims(target.dims(), ref_mask.dims())?;
    if joint_coverage(target_mask, ref_mask) < MIN_OVERLAP {
        return Err(Error::AlignmentUnavailable);
    }

    let base = Level::new(target.luma(), target_mask.complement(), reference.luma(), ref_mask.complement());
    let mut pyr = alloc::vec![base];
    for _ in 1..cfg.levels.max(1) {
        let last = pyr.last().unwrap();
        if last.w < 8 || last.h < 8 {
            break;
        }
        let next = last.half();
        pyr.push(next);
    }

    let mut m = Warp::IDENTITY;
    if cfg.search {
        let coarsest = pyr.last().unwrap();
        let (dx, dy) = translation_search(coarsest, cfg.search_size);
        m.0[4] = dx as f64 / coarsest.n as f64;
        m.0[5] = dy as f64 / coarsest.n as f64;
    }

    for level in pyr.iter().rev() {
        m = level.refine(m, cfg);
    }

    let est = pyr[0].to_pixel(&m);
    if !est.is_sane() {
        return Ok(AffineTransform::identity());
    }
    let (e_id, n_id) = masked_l1(target, target_mask, reference, ref_mask, &AffineTransform::identity());
    let (e_est, n_est) = masked_l1(target, target_mask, reference, ref_mask, &est);
    let visible = target_mask.data().iter().filter(|&&v| v == 0.0).count();
    let enough = n_est as f64 >= 0.1 * visible as f64 || n_est >= n_id;
    if enough && e_est <= e_id {
        Ok(est)
    } else {
        Ok(AffineTransform::identity())
    }
}

/// Normalised-coordinate affine warp `[a11, a12, a21, a22, b1, b2]`.
#[derive(Debug, Clone, Copy)]
struct Warp([f64; 6]);

impl Warp {
    const IDENTITY: Warp = Warp([1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);

    fn compose(&self, o: &Warp) -> Warp {
        let (a, b) = (&self.0, &o.0);
        Warp([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
            a[0] * b[4] + a[1] * b[5] + a[4],
            a[2] * b[4] + a[3] * b[5] + a[5],
        ])
    }

    fn inverse(&self) -> Option<Warp> {
        let a = &self.0;
        let det = a[0] * a[3] - a[1] * a[2];
        if det.abs() < 1e-12 {
            return None;
        }
        let (i0, i1, i2, i3) = (a[3] / det, -a[1] / det, -a[2] / det, a[0] / det);
        Some(Warp([i0, i1, i2, i3, -(i0 * a[4] + i1 * a[5]), -(i2 * a[4] + i3 * a[5])]))
    }
}

struct Level {
    w: usize,
    h: usize,
    tgt: Vec<f32>,
    gx: Vec<f32>,
    gy: Vec<f32>,
    vt: Vec<f32>,
    img: Vec<f32>,
    vr: Vec<f32>,
    /// Normalisation scale: half of the larger side.
    n: f32,
    cx: f32,
    cy: f32,
}

impl Level {
    fn new(tgt: Plane, vt: Plane, img: Plane, vr: Plane) -> Level {
        let (h, w) = tgt.dims();
        let t = tgt.data();
        let mut gx = alloc::vec![0.0f32; w * h];
        let mut gy = alloc::vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let xl = x.saturating_sub(1);
                let xr = (x + 1).min(w - 1);
                let yu = y.saturating_sub(1);
                let yd = (y + 1).min(h - 1);
                if xr > xl {
                    gx[y * w + x] = (t[y * w + xr] - t[y * w + xl]) / (xr - xl) as f32;
                }
                if yd > yu {
                    gy[y * w + x] = (t[yd * w + x] - t[yu * w + x]) / (yd - yu) as f32;
                }
            }
        }
        Level {
            w,
            h,
            tgt: tgt.data().to_vec(),
            gx,
            gy,
            vt: vt.data().to_vec(),
            img: img.data().to_vec(),
            vr: vr.data().to_vec(),
            n: w.max(h) as f32 / 2.0,
            cx: (w as f32 - 1.0) / 2.0,
            cy: (h as f32 - 1.0) / 2.0,
        }
    }

    fn half(&self) -> Level {
        let h2 = |src: &[f32]| half_plane(src, self.w, self.h);
        let (w, h) = (self.w.div_ceil(2), self.h.div_ceil(2));
        Level::new(
            Plane::from_raw(h, w, h2(&self.tgt)),
            Plane::from_raw(h, w, h2(&self.vt)),
            Plane::from_raw(h, w, h2(&self.img)),
            Plane::from_raw(h, w, h2(&self.vr)),
        )
    }

    #[inline]
    fn sample(&self, buf: &[f32], x: f32, y: f32) -> Option<f32> {
        let hi_x = (self.w - 1) as f32;
        let hi_y = (self.h - 1) as f32;
        if !(x >= 0.0 && x <= hi_x && y >= 0.0 && y <= hi_y) {
            return None;
        }
        let x0 = x as usize;
        let y0 = y as usize;
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let top = buf[y0 * self.w + x0] * (1.0 - fx) + buf[y0 * self.w + x1] * fx;
        let bot = buf[y1 * self.w + x0] * (1.0 - fx) + buf[y1 * self.w + x1] * fx;
        Some(top * (1.0 - fy) + bot * fy)
    }

    fn to_pixel(&self, m: &Warp) -> AffineTransform {
        let a = &m.0;
        let (n, cx, cy) = (self.n as f64, self.cx as f64, self.cy as f64);
        // x' = n*(A*(x - c)/n + b) + c = A x + n b + c - A c
        AffineTransform {
            a11: a[0] as f32,
            a12: a[1] as f32,
            a21: a[2] as f32,
            a22: a[3] as f32,
            tx: (n * a[4] + cx - (a[0] * cx + a[1] * cy)) as f32,
            ty: (n * a[5] + cy - (a[2] * cx + a[3] * cy)) as f32,
        }
    }

    /// Gauss-Newton iterations at this level.
    fn refine(&self, mut m: Warp, cfg: &AffineConfig) -> Warp {
        let n = self.n;
        for _ in 0..cfg.max_iters {
            let mut hess = [0.0f64; 21];
            let mut grad = [0.0f64; 6];
            let mut used = 0usize;
            let a = m.0.map(|v| v as f32);
            for y in 0..self.h {
                let v = (y as f32 - self.cy) / n;
                for x in 0..self.w {
                    let i = y * self.w + x;
                    let vt = self.vt[i];
                    if vt <= 0.0 {
                        continue;
                    }
                    let (gx, gy) = (self.gx[i], self.gy[i]);
                    if gx == 0.0 && gy == 0.0 {
                        continue;
                    }
                    let u = (x as f32 - self.cx) / n;
                    let sx = n * (a[0] * u + a[1] * v + a[4]) + self.cx;
                    let sy = n * (a[2] * u + a[3] * v + a[5]) + self.cy;
                    let Some(iv) = self.sample(&self.img, sx, sy) else { continue };
                    let vr = self.sample(&self.vr, sx, sy).unwrap_or(0.0);
                    let wgt = vt * vr;
                    if wgt <= 0.0 {
                        continue;
                    }
                    let e = iv - self.tgt[i];
                    let wgt = (wgt / e.abs().max(cfg.robust_delta)) as f64;
                    let (gxn, gyn) = ((gx * n) as f64, (gy * n) as f64);
                    let (u, v) = (u as f64, v as f64);
                    let j = [gxn * u, gxn * v, gyn * u, gyn * v, gxn, gyn];
                    let mut k = 0;
                    for r in 0..6 {
                        let wj = wgt * j[r];
                        grad[r] += wj * e as f64;
                        for c in r..6 {
                            hess[k] += wj * j[c];
                            k += 1;
                        }
                    }
                    used += 1;
                }
            }
            if used < 6 {
                break;
            }
            let Some(dp) = solve6(&hess, &grad) else { break };
            let inc = Warp([1.0 + dp[0], dp[1], dp[2], 1.0 + dp[3], dp[4], dp[5]]);
            let Some(inv) = inc.inverse() else { break };
            m = m.compose(&inv);
            let norm = dp.iter().map(|d| d * d).sum::<f64>();
            if crate::math::sqrt64(norm) < cfg.step_tol {
                break;
            }
        }
        m
    }
}

/// Exhaustive integer translation search on a small pyramid level; returns
/// the translation in that level's pixels.
fn translation_search(level: &Level, search_size: usize) -> (i64, i64) {
    // Work on a further-reduced copy if the level is still large.
    let mut chain: Vec<Level> = Vec::new();
    let mut cur_w = level.w;
    let mut cur_h = level.h;
    while cur_w.max(cur_h) > search_size && cur_w >= 8 && cur_h >= 8 {
        let next = match chain.last() {
            Some(l) => l.half(),
            None => level.half(),
        };
        cur_w = next.w;
        cur_h = next.h;
        chain.push(next);
    }
    let coarse = chain.last().unwrap_or(level);
    let rx = (coarse.w / 2) as i64;
    let ry = (coarse.h / 2) as i64;
    let mut best = (0i64, 0i64);
    let mut best_cost = shift_cost(coarse, 0, 0).unwrap_or(f64::INFINITY);
    for dy in -ry..=ry {
        for dx in -rx..=rx {
            if let Some(c) = shift_cost(coarse, dx, dy) {
                if c < best_cost {
                    best_cost = c;
                    best = (dx, dy);
                }
            }
        }
    }
    // Walk back up, refining by ±1 at each level.
    let mut levels: Vec<&Level> = chain.iter().rev().skip(1).collect();
    levels.push(level);
    if chain.is_empty() {
        levels.clear();
    }
    for l in levels {
        let (cx, cy) = (best.0 * 2, best.1 * 2);
        best = (cx, cy);
        let mut bc = shift_cost(l, cx, cy).unwrap_or(f64::INFINITY);
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(c) = shift_cost(l, cx + dx, cy + dy) {
                    if c < bc {
                        bc = c;
                        best = (cx + dx, cy + dy);
                    }
                }
            }
        }
    }
    best
}

fn shift_cost(l: &Level, dx: i64, dy: i64) -> Option<f64> {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    let mut visible = 0usize;
    for y in 0..l.h {
        let sy = y as i64 + dy;
        for x in 0..l.w {
            let i = y * l.w + x;
            if l.vt[i] < 0.5 {
                continue;
            }
            visible += 1;
            let sx = x as i64 + dx;
            if sx < 0 || sy < 0 || sx >= l.w as i64 || sy >= l.h as i64 {
                continue;
            }
            let j = sy as usize * l.w + sx as usize;
            if l.vr[j] < 0.5 {
                continue;
            }
            sum += (l.img[j] - l.tgt[i]).abs() as f64;
            n += 1;
        }
    }
    if n == 0 || (n as f64) < 0.25 * visible as f64 {
        None
    } else {
        Some(sum / n as f64)
    }
}

/// 2× box reduction with ceil dimensions (odd edges average what exists).
pub(crate) fn half_plane(src: &[f32], w: usize, h: usize) -> Vec<f32> {
    let (w2, h2) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = Vec::with_capacity(w2 * h2);
    for y in 0..h2 {
        for x in 0..w2 {
            let mut acc = 0.0f32;
            let mut k = 0.0f32;
            for dy in 0..2 {
                for dx in 0..2 {
                    let (sx, sy) = (2 * x + dx, 2 * y + dy);
                    if sx < w && sy < h {
                        acc += src[sy * w + sx];
                        k += 1.0;
                    }
                }
            }
            out.push(acc / k);
        }
    }
    out
}

/// Solve the symmetric 6×6 system given by its packed upper triangle.
fn solve6(packed: &[f64; 21], rhs: &[f64; 6]) -> Option<[f64; 6]> {
    let mut a = [[0.0f64; 7]; 6];
    let mut k = 0;
    for r in 0..6 {
        for c in r..6 {
            a[r][c] = packed[k];
            a[c][r] = packed[k];
            k += 1;
        }
        a[r][6] = rhs[r];
    }
    for col in 0..6 {
        let piv = (col..6).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..6 {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..7 {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut x = [0.0; 6];
    for r in 0..6 {
        x[r] = a[r][6] / a[r][r];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}
