use alloc::vec;

use super::{AffineTransform, AlignedReference, Alignment, FlowField};
use crate::image::{Frame, Mask, Plane};
use crate::par;

/// Backward-warp with a per-pixel sampling position.
fn warp_with(reference: &Frame, ref_mask: &Mask, pos: impl Fn(usize, usize) -> (f32, f32) + Sync + Send) -> (Frame, Mask, Mask) {
    let (h, w) = reference.dims();
    // One row = w pixels × (3 colour + mask + validity).
    let mut buf = vec![0.0f32; h * w * 5];
    par::rows(&mut buf, w * 5, |y, row| {
        for x in 0..w {
            let (sx, sy) = pos(x, y);
            let o = x * 5;
            match reference.sample(sx, sy) {
                Some(rgb) => {
                    row[o..o + 3].copy_from_slice(&rgb);
                    let m = ref_mask.sample(sx, sy).unwrap_or(1.0);
                    row[o + 3] = if m > 0.5 { 1.0 } else { 0.0 };
                    row[o + 4] = 1.0;
                }
                None => {
                    row[o + 3] = 1.0;
                }
            }
        }
    });
    let mut rgb = vec![0.0f32; h * w * 3];
    let mut mask = vec![0.0f32; h * w];
    let mut valid = vec![0.0f32; h * w];
    for (i, px) in buf.chunks_exact(5).enumerate() {
        rgb[i * 3..i * 3 + 3].copy_from_slice(&px[..3]);
        mask[i] = px[3];
        valid[i] = px[4];
    }
    (Frame::from_raw(h, w, rgb), Plane::from_raw(h, w, mask), Plane::from_raw(h, w, valid))
}

/// Resample a reference through an affine transform. Samples landing outside
/// the reference are invalid and count as holes; the warped mask is
/// thresholded at 0.5.
pub fn warp_affine(reference: &Frame, ref_mask: &Mask, t: &AffineTransform) -> AlignedReference {
    assert_eq!(reference.dims(), ref_mask.dims());
    let t = *t;
    let (frame, mask, validity) = warp_with(reference, ref_mask, move |x, y| t.apply(x as f32, y as f32));
    AlignedReference { frame, mask, validity, source_index: 0, alignment: Alignment::Affine(t) }
}

/// Resample a reference through a dense flow field.
pub fn warp_flow(reference: &Frame, ref_mask: &Mask, flow: &FlowField) -> AlignedReference {
    assert_eq!(reference.dims(), ref_mask.dims());
    assert_eq!(reference.dims(), flow.dims());
    let (u, v) = (&flow.u, &flow.v);
    let (frame, mask, validity) = warp_with(reference, ref_mask, |x, y| (x as f32 + u.get(x, y), y as f32 + v.get(x, y)));
    AlignedReference { frame, mask, validity, source_index: 0, alignment: Alignment::Flow(flow.clone()) }
}
