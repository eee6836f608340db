//! Push-pull hole filling.
//!
//! Known samples are pulled up a 2× pyramid as weighted averages, then the
//! coarse estimates are pushed back down and blended into pixels with
//! missing weight. The result is a smooth membrane over the hole that
//! matches the surrounding averages; it stands in for hallucinated content.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::{Frame, Mask, Plane};

struct Level {
    h: usize,
    w: usize,
    /// Normalised values (not premultiplied).
    v: Vec<f32>,
    wt: Vec<f32>,
}

fn pull(prev: &Level, ch: usize) -> Level {
    let h = prev.h.div_ceil(2);
    let w = prev.w.div_ceil(2);
    let mut v = vec![0.0f32; h * w * ch];
    let mut wt = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f32; 8];
            let mut ws = 0.0f32;
            for dy in 0..2 {
                for dx in 0..2 {
                    let (sx, sy) = (2 * x + dx, 2 * y + dy);
                    if sx >= prev.w || sy >= prev.h {
                        continue;
                    }
                    let i = sy * prev.w + sx;
                    let pw = prev.wt[i];
                    if pw <= 0.0 {
                        continue;
                    }
                    ws += pw;
                    for c in 0..ch {
                        acc[c] += pw * prev.v[i * ch + c];
                    }
                }
            }
            let o = y * w + x;
            if ws > 0.0 {
                for c in 0..ch {
                    v[o * ch + c] = acc[c] / ws;
                }
            }
            wt[o] = ws.min(1.0);
        }
    }
    Level { h, w, v, wt }
}

/// Fill samples according to their `known` weight in [0,1] (1 = keep). The
/// buffer is interleaved with `ch` channels (at most 8). Fully known samples
/// are returned unchanged; with no known sample at all the output is zero.
pub fn push_pull(values: &[f32], ch: usize, h: usize, w: usize, known: &[f32]) -> Vec<f32> {
    assert!((1..=8).contains(&ch));
    assert_eq!(values.len(), h * w * ch);
    assert_eq!(known.len(), h * w);
    let mut levels = vec![Level {
        h,
        w,
        v: values.to_vec(),
        wt: known.iter().map(|&k| k.clamp(0.0, 1.0)).collect(),
    }];
    while levels.last().map(|l| l.h > 1 || l.w > 1).unwrap_or(false) {
        let next = pull(levels.last().unwrap(), ch);
        levels.push(next);
    }
    // Coarsest level: anything with no weight is zero already.
    for li in (0..levels.len() - 1).rev() {
        let (fine, coarse) = {
            let (a, b) = levels.split_at_mut(li + 1);
            (&mut a[li], &b[0])
        };
        for y in 0..fine.h {
            let cy = ((y as f32 + 0.5) / 2.0 - 0.5).clamp(0.0, (coarse.h - 1) as f32);
            let y0 = cy as usize;
            let y1 = (y0 + 1).min(coarse.h - 1);
            let fy = cy - y0 as f32;
            for x in 0..fine.w {
                let i = y * fine.w + x;
                let wf = fine.wt[i];
                if wf >= 1.0 {
                    continue;
                }
                let cx = ((x as f32 + 0.5) / 2.0 - 0.5).clamp(0.0, (coarse.w - 1) as f32);
                let x0 = cx as usize;
                let x1 = (x0 + 1).min(coarse.w - 1);
                let fx = cx - x0 as f32;
                for c in 0..ch {
                    let at = |yy: usize, xx: usize| coarse.v[(yy * coarse.w + xx) * ch + c];
                    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                    let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                    let est = top * (1.0 - fy) + bot * fy;
                    let k = i * ch + c;
                    fine.v[k] = if wf > 0.0 { wf * fine.v[k] + (1.0 - wf) * est } else { est };
                }
            }
        }
    }
    levels.swap_remove(0).v
}

/// Fill the pixels of `f` where `hole` is 1 from the surrounding content.
pub fn fill_frame(f: &Frame, hole: &Mask) -> Frame {
    assert_eq!(f.dims(), hole.dims());
    if !hole.any() {
        return f.clone();
    }
    let known: Vec<f32> = hole.data().iter().map(|&m| 1.0 - m).collect();
    let (h, w) = f.dims();
    let mut out = push_pull(f.data(), 3, h, w, &known);
    // Keep non-hole samples bit-identical.
    for (i, &m) in hole.data().iter().enumerate() {
        if m == 0.0 {
            out[i * 3..i * 3 + 3].copy_from_slice(&f.data()[i * 3..i * 3 + 3]);
        }
    }
    Frame::from_raw(h, w, out)
}

pub fn fill_plane(p: &Plane, hole: &Mask) -> Plane {
    assert_eq!(p.dims(), hole.dims());
    if !hole.any() {
        return p.clone();
    }
    let known: Vec<f32> = hole.data().iter().map(|&m| 1.0 - m).collect();
    let (h, w) = p.dims();
    let mut out = push_pull(p.data(), 1, h, w, &known);
    for (i, &m) in hole.data().iter().enumerate() {
        if m == 0.0 {
            out[i] = p.data()[i];
        }
    }
    Plane::from_raw(h, w, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_surround_fills_constant() {
        let f = Frame::filled(13, 9, [0.2, 0.4, 0.6]);
        let hole = Plane::from_fn(13, 9, |x, y| if (2..7).contains(&x) && (3..10).contains(&y) { 1.0 } else { 0.0 });
        let g = fill_frame(&f.mul_mask(&hole.complement()).unwrap(), &hole);
        for (a, b) in g.data().iter().zip(f.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn known_pixels_untouched() {
        let f = Frame::from_fn(8, 8, |x, y| [x as f32 / 8.0, y as f32 / 8.0, 0.5]);
        let hole = Plane::from_fn(8, 8, |x, _| if x == 3 { 1.0 } else { 0.0 });
        let g = fill_frame(&f, &hole);
        for y in 0..8 {
            for x in 0..8 {
                if x != 3 {
                    assert_eq!(g.pixel(x, y), f.pixel(x, y));
                }
            }
        }
        // Interpolates between neighbours.
        let v = g.pixel(3, 4)[0];
        assert!(v > 2.0 / 8.0 && v < 4.0 / 8.0, "{v}");
    }

    #[test]
    fn nothing_known_gives_zero() {
        let p = Plane::filled(5, 5, 0.7);
        let hole = Plane::filled(5, 5, 1.0);
        assert!(fill_plane(&p, &hole).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fill_stays_within_known_range() {
        let p = Plane::from_fn(16, 16, |x, y| ((x * 7 + y * 3) % 11) as f32 / 10.0);
        let hole = Plane::from_fn(16, 16, |x, y| if (4..12).contains(&x) && (5..9).contains(&y) { 1.0 } else { 0.0 });
        let g = fill_plane(&p, &hole);
        assert!(g.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
