//! PNG frame directories. Colour frames are 8-bit RGB; masks are 8-bit
//! grayscale with 255 marking the hole.

use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use strav_core::{Frame, Mask, Plane};

use crate::error::{io, Error, Result};

/// PNG files in `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        let png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if png && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Zero-padded file name for frame `i`.
pub fn frame_name(i: usize) -> String {
    format!("{i:05}.png")
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn rgb_to_frame(img: &RgbImage) -> Frame {
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Frame::new(h as usize, w as usize, data).expect("buffer matches dimensions")
}

pub fn frame_to_rgb(f: &Frame) -> RgbImage {
    let data = f.data().iter().map(|&v| quantize(v)).collect();
    RgbImage::from_raw(f.width() as u32, f.height() as u32, data).expect("buffer matches dimensions")
}

pub fn gray_to_mask(img: &GrayImage) -> Mask {
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| if v >= 128 { 1.0 } else { 0.0 }).collect();
    Plane::new(h as usize, w as usize, data).expect("buffer matches dimensions")
}

pub fn mask_to_gray(m: &Mask) -> GrayImage {
    let data = m.data().iter().map(|&v| if v > 0.0 { 255 } else { 0 }).collect();
    GrayImage::from_raw(m.width() as u32, m.height() as u32, data).expect("buffer matches dimensions")
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| Error::Image { path: path.into(), source })
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    Ok(open(path)?.into_rgb8())
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    Ok(rgb_to_frame(&read_rgb(path)?))
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    Ok(gray_to_mask(&open(path)?.into_luma8()))
}

fn save<P, C>(path: &Path, img: &ImageBuffer<P, C>) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save(path).map_err(|source| Error::Image { path: path.into(), source })
}

pub fn write_frame(path: &Path, f: &Frame) -> Result<()> {
    save(path, &frame_to_rgb(f))
}

pub fn write_mask(path: &Path, m: &Mask) -> Result<()> {
    save(path, &mask_to_gray(m))
}

/// Index maps (−1 = none) as 16-bit grayscale holding `index + 1`.
pub fn write_index_map(path: &Path, p: &Plane) -> Result<()> {
    let data = p.data().iter().map(|&v| if v < 0.0 { 0 } else { (v as u32 + 1).min(u16::MAX as u32) as u16 }).collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(p.width() as u32, p.height() as u32, data).expect("buffer matches dimensions");
    save(path, &img)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io(dir))
}

/// Writes a sequence as numbered PNGs.
pub fn write_frames(dir: &Path, frames: &[Frame]) -> Result<()> {
    create_dir(dir)?;
    frames.iter().enumerate().try_for_each(|(i, f)| write_frame(&dir.join(frame_name(i)), f))
}

pub fn write_masks(dir: &Path, masks: &[Mask]) -> Result<()> {
    create_dir(dir)?;
    masks.iter().enumerate().try_for_each(|(i, m)| write_mask(&dir.join(frame_name(i)), m))
}

pub fn read_frames(dir: &Path) -> Result<Vec<Frame>> {
    list_images(dir)?.iter().map(|p| read_frame(p)).collect()
}

pub fn read_masks(dir: &Path) -> Result<Vec<Mask>> {
    list_images(dir)?.iter().map(|p| read_mask(p)).collect()
}
