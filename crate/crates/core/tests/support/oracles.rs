//! Scalar-loop reference implementations checked against the library on
//! random small instances. Each check panics on the first mismatch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use strav_core::alignment::{AffineTransform, AlignedReference, Alignment};
use strav_core::features::{self, FeatureMap, FeaturePyramid, CHANNELS};
use strav_core::losses::{self, EncoderFeatures, FeatureExtractor, LossInputs, MeanLuma, SequenceSample};
use strav_core::spatial::{self, SpatialConfig};
use strav_core::temporal::{multiscale_transfer, TemporalAttention, VisibilityMaps};
use strav_core::{Frame, Mask, Plane};

pub const INSTANCES: u64 = 24;
const TOL: f64 = 1e-6;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn frame(r: &mut ChaCha8Rng, h: usize, w: usize) -> Frame {
    Frame::from_fn(h, w, |_, _| [r.random(), r.random(), r.random()])
}

fn mask(r: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> Mask {
    Plane::from_fn(h, w, |_, _| if r.random_bool(p) { 1.0 } else { 0.0 })
}

fn feature_map(r: &mut ChaCha8Rng, h: usize, w: usize) -> FeatureMap {
    FeatureMap::new(h, w, (0..h * w * CHANNELS).map(|_| r.random_range(-1.0f32..1.0)).collect()).unwrap()
}

fn close(a: f64, b: f64, what: &str) {
    assert!((a - b).abs() <= TOL, "{what}: {a} vs {b}");
}

pub fn attention_transfer_level0() {
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let (h, w) = (4 * r.random_range(1..5), 4 * r.random_range(1..5));
        let n = r.random_range(1..6);
        let temperature = r.random_range(0.1f32..2.0);
        let similarities: Vec<Option<f32>> =
            (0..n).map(|_| if r.random_bool(0.15) { None } else { Some(r.random_range(-1.0f32..1.0)) }).collect();
        let donating: Vec<Mask> = (0..n).map(|_| mask(&mut r, h, w, 0.6)).collect();
        let pyramids: Vec<FeaturePyramid> = (0..n)
            .map(|_| FeaturePyramid {
                levels: (0..3).map(|l| feature_map(&mut r, h >> l, w >> l)).collect(),
                masks: (0..3).map(|l| Plane::zeros(h >> l, w >> l)).collect(),
            })
            .collect();
        let refs: Vec<&Mask> = donating.iter().collect();
        let attention = TemporalAttention {
            similarities: similarities.clone(),
            weights: strav_core::temporal::masked_softmax(&similarities, &refs, temperature),
            visibility: donating.iter().map(|d| VisibilityMaps { matching: d.clone(), donating: d.clone() }).collect(),
            temperature,
        };
        let pyr_refs: Vec<&FeaturePyramid> = pyramids.iter().collect();
        let got = &multiscale_transfer(&pyr_refs, &attention)[0];

        for y in 0..h {
            for x in 0..w {
                let mut z = vec![0.0f64; n];
                let mut sum = 0.0f64;
                let mut max = f64::NEG_INFINITY;
                for k in 0..n {
                    if let Some(t) = similarities[k] {
                        if donating[k].get(x, y) > 0.0 {
                            max = max.max(t as f64 / temperature as f64);
                        }
                    }
                }
                for k in 0..n {
                    if let Some(t) = similarities[k] {
                        if donating[k].get(x, y) > 0.0 {
                            z[k] = (t as f64 / temperature as f64 - max).exp();
                            sum += z[k];
                        }
                    }
                }
                for c in 0..CHANNELS {
                    let mut want = 0.0f64;
                    if sum > 0.0 {
                        for k in 0..n {
                            want += z[k] / sum * pyramids[k].levels[0].at(x, y)[c] as f64;
                        }
                    }
                    close(got.at(x, y)[c] as f64, want, "attention transfer");
                }
            }
        }
    }
}

pub fn spatial_transfer_before_feathering() {
    let encoder = features::HandCrafted;
    let mut checked = 0;
    for seed in 0..INSTANCES {
        let mut r = rng(100 + seed);
        let patch = [2usize, 4][r.random_range(0..2)];
        let (gh, gw) = (r.random_range(2..6), r.random_range(2..6));
        let (h, w) = (gh * patch, gw * patch);
        let f = frame(&mut r, h, w);
        let mut leftover = Plane::zeros(h, w);
        // A random rectangle of leftover pixels that leaves some context.
        let (x0, y0) = (r.random_range(0..w - 1), r.random_range(0..h - 1));
        let (x1, y1) = (r.random_range(x0 + 1..w.min(x0 + 2 * patch) + 1), r.random_range(y0 + 1..h.min(y0 + 2 * patch) + 1));
        for y in y0..y1 {
            for x in x0..x1 {
                leftover.set(x, y, 1.0);
            }
        }
        let cfg = SpatialConfig { patch, temperature: r.random_range(0.2f32..1.5) };
        let Ok(att) = spatial::spatial_attention(&f, &leftover, &encoder, &cfg) else { continue };
        let got = spatial::spatial_transfer_raw(&f, &leftover, &att);

        let is_hole_patch = |px: usize, py: usize| (py * patch..(py + 1) * patch).any(|y| (px * patch..(px + 1) * patch).any(|x| leftover.get(x, y) > 0.0));
        let context: Vec<(usize, usize)> = (0..gh).flat_map(|py| (0..gw).map(move |px| (px, py))).filter(|&(px, py)| !is_hole_patch(px, py)).collect();
        assert_eq!(context, att.context_patches);
        for y in 0..h {
            for x in 0..w {
                let mut want = f.pixel(x, y).map(|v| v as f64);
                if leftover.get(x, y) > 0.0 {
                    let j = att.hole_patches.iter().position(|&q| q == (x / patch, y / patch)).expect("hole patch");
                    let row_sum: f64 = (0..context.len()).map(|i| att.score(j, i) as f64).sum();
                    close(row_sum, 1.0, "score row sum");
                    want = [0.0; 3];
                    for (i, &(cx, cy)) in context.iter().enumerate() {
                        let v = f.pixel(cx * patch + x % patch, cy * patch + y % patch);
                        for c in 0..3 {
                            want[c] += att.score(j, i) as f64 * v[c] as f64;
                        }
                    }
                }
                for c in 0..3 {
                    close(got.pixel(x, y)[c] as f64, want[c], "spatial transfer");
                }
            }
        }
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} instances had spatial context");
}

fn gram_oracle(f: &FeatureMap) -> Vec<f64> {
    let (h, w) = f.dims();
    let mut g = vec![0.0f64; CHANNELS * CHANNELS];
    for a in 0..CHANNELS {
        for b in 0..CHANNELS {
            let mut s = 0.0f64;
            for y in 0..h {
                for x in 0..w {
                    s += f.at(x, y)[a] as f64 * f.at(x, y)[b] as f64;
                }
            }
            g[a * CHANNELS + b] = s / (CHANNELS * h * w) as f64;
        }
    }
    g
}

pub fn gram_matrices() {
    for seed in 0..INSTANCES {
        let mut r = rng(200 + seed);
        let (h, w) = (r.random_range(1..12), r.random_range(1..12));
        let f = feature_map(&mut r, h, w);
        for (a, b) in losses::gram(&f).iter().zip(gram_oracle(&f)) {
            close(*a, b, "gram");
        }
    }
}

/// Mean of `|a − b|` over pixels with `region = 1`, per channel value.
fn l1_oracle(a: &Frame, b: &Frame, region: impl Fn(usize, usize) -> f64) -> f64 {
    let (h, w) = a.dims();
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for y in 0..h {
        for x in 0..w {
            let m = region(x, y);
            for c in 0..3 {
                num += m * (a.pixel(x, y)[c] as f64 - b.pixel(x, y)[c] as f64).abs();
                den += m;
            }
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn feature_term(phi: &dyn FeatureExtractor, s: &SequenceSample, level: impl Fn(&FeatureMap, &FeatureMap) -> f64) -> f64 {
    let n = s.inputs.len();
    let mut acc = 0.0;
    for t in 0..n {
        let (h, w) = s.inputs[t].dims();
        let comb = Frame::from_fn(h, w, |x, y| {
            let m = s.masks[t].get(x, y);
            let (o, i) = (s.outputs[t].pixel(x, y), s.inputs[t].pixel(x, y));
            [m * o[0] + (1.0 - m) * i[0], m * o[1] + (1.0 - m) * i[1], m * o[2] + (1.0 - m) * i[2]]
        });
        let a = phi.extract(&comb).unwrap();
        let b = phi.extract(&s.ground_truth[t]).unwrap();
        acc += a.iter().zip(&b).map(|(p, q)| level(p, q)).sum::<f64>() / a.len() as f64;
    }
    acc / n as f64
}

pub fn all_eight_losses() {
    let phi = EncoderFeatures::default();
    for seed in 0..INSTANCES {
        let mut r = rng(300 + seed);
        let (h, w) = (4 * r.random_range(2..5), 4 * r.random_range(2..5));
        let n = r.random_range(1..4);
        let gt: Vec<Frame> = (0..n).map(|_| frame(&mut r, h, w)).collect();
        let masks: Vec<Mask> = (0..n).map(|_| mask(&mut r, h, w, 0.3)).collect();
        let inputs: Vec<Frame> = gt
            .iter()
            .zip(&masks)
            .map(|(g, m)| Frame::from_fn(h, w, |x, y| g.pixel(x, y).map(|v| v * (1.0 - m.get(x, y)))))
            .collect();
        let outputs: Vec<Frame> = (0..n).map(|_| frame(&mut r, h, w)).collect();
        let sample = SequenceSample { inputs, masks, ground_truth: gt, outputs };
        let aligned: Vec<Vec<AlignedReference>> = (0..n)
            .map(|t| {
                (0..r.random_range(0..3))
                    .map(|k| AlignedReference {
                        frame: frame(&mut r, h, w),
                        mask: mask(&mut r, h, w, 0.4),
                        validity: Plane::filled(h, w, 1.0),
                        source_index: t + k + 1,
                        alignment: Alignment::Affine(AffineTransform::default()),
                    })
                    .collect()
            })
            .collect();
        let coverage: Vec<Plane> = (0..n).map(|_| mask(&mut r, h, w, 0.5)).collect();
        let leftovers: Vec<Mask> = (0..n).map(|_| mask(&mut r, h, w, 0.2)).collect();
        let generated: Vec<Frame> = (0..n).map(|_| frame(&mut r, h, w)).collect();
        let got = losses::evaluate(
            &LossInputs { sample: &sample, aligned: &aligned, coverage: &coverage, leftovers: &leftovers, generated: &generated },
            &phi,
            &MeanLuma,
        )
        .unwrap();

        let nf = n as f64;
        let s = &sample;
        let mut align = 0.0;
        for t in 0..n {
            for a in &aligned[t] {
                align += l1_oracle(&s.inputs[t], &a.frame, |x, y| ((1.0 - s.masks[t].get(x, y)) * (1.0 - a.mask.get(x, y))) as f64);
            }
        }
        let per_frame = |region: &dyn Fn(usize, usize, usize) -> f64| {
            (0..n).map(|t| l1_oracle(&s.outputs[t], &s.ground_truth[t], |x, y| region(t, x, y))).sum::<f64>() / nf
        };
        let hole_visible = per_frame(&|t, x, y| (s.masks[t].get(x, y) * coverage[t].get(x, y)) as f64);
        let hole_leftover = per_frame(&|t, x, y| leftovers[t].get(x, y) as f64);
        let non_hole = per_frame(&|t, x, y| 1.0 - s.masks[t].get(x, y) as f64);
        let perceptual = feature_term(&phi, s, |a, b| {
            a.data().iter().zip(b.data()).map(|(p, q)| (*p as f64 - *q as f64).abs()).sum::<f64>() / a.data().len() as f64
        });
        let style = feature_term(&phi, s, |a, b| {
            let (ga, gb) = (gram_oracle(a), gram_oracle(b));
            ga.iter().zip(&gb).map(|(p, q)| (p - q).abs()).sum::<f64>() / ga.len() as f64
        });
        let rec = (0..n)
            .map(|t| {
                l1_oracle(&generated[t], &s.inputs[t], |x, y| leftovers[t].get(x, y) as f64)
                    + l1_oracle(&generated[t], &s.inputs[t], |x, y| 1.0 - leftovers[t].get(x, y) as f64)
            })
            .sum::<f64>()
            / nf;
        let adv = -generated
            .iter()
            .map(|g| {
                let mut acc = 0.0f64;
                for y in 0..h {
                    for x in 0..w {
                        let p = g.pixel(x, y);
                        acc += 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
                    }
                }
                acc / (h * w) as f64
            })
            .sum::<f64>()
            / nf;

        close(got.align, align / nf, "align");
        close(got.hole_visible, hole_visible, "hole_visible");
        close(got.hole_leftover, hole_leftover, "hole_leftover");
        close(got.non_hole, non_hole, "non_hole");
        close(got.perceptual, perceptual, "perceptual");
        close(got.style, style, "style");
        close(got.rec, rec, "rec");
        close(got.adv, adv, "adv");
    }
}
