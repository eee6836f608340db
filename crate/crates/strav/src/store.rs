//! A [`FrameStore`] over PNG directories. Frames are decoded on demand and
//! not cached, so full-resolution memory stays independent of the
//! reference window.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use strav_core::pipeline::{FrameStore, Intermediates};
use strav_core::{Frame, Mask};

use crate::error::{Error, Result};
use crate::io;

pub const INTERMEDIATES_DIR: &str = "intermediates";

pub struct DirStore {
    frames: Vec<PathBuf>,
    masks: Vec<PathBuf>,
    names: Vec<OsString>,
    out: PathBuf,
}

impl DirStore {
    /// Pairs frames with masks by file name; the sets must match exactly.
    pub fn open(frames: &Path, masks: &Path, out: &Path) -> Result<Self> {
        let f = io::list_images(frames)?;
        let m = io::list_images(masks)?;
        let names: Vec<OsString> = f.iter().map(|p| p.file_name().expect("listed file").to_owned()).collect();
        let mask_names: Vec<OsString> = m.iter().map(|p| p.file_name().expect("listed file").to_owned()).collect();
        if names != mask_names {
            return Err(Error::Layout(format!(
                "{} and {} do not hold the same file names ({} frames, {} masks)",
                frames.display(),
                masks.display(),
                names.len(),
                mask_names.len()
            )));
        }
        if names.is_empty() {
            return Err(Error::Layout(format!("no PNG frames in {}", frames.display())));
        }
        io::create_dir(out)?;
        Ok(DirStore { frames: f, masks: m, names, out: out.into() })
    }

    pub fn output_path(&self, index: usize) -> PathBuf {
        self.out.join(&self.names[index])
    }

    pub fn names(&self) -> &[OsString] {
        &self.names
    }

    fn stem(&self, index: usize) -> String {
        Path::new(&self.names[index]).file_stem().expect("listed file").to_string_lossy().into_owned()
    }
}

fn store_err(index: usize) -> impl FnOnce(Error) -> strav_core::Error {
    move |e| strav_core::Error::Store { index, message: e.to_string() }
}

impl FrameStore for DirStore {
    fn len(&self) -> usize {
        self.frames.len()
    }

    fn raw(&self, index: usize) -> strav_core::Result<(Frame, Mask)> {
        let f = io::read_frame(&self.frames[index]).map_err(store_err(index))?;
        let m = io::read_mask(&self.masks[index]).map_err(store_err(index))?;
        Ok((f, m))
    }

    fn raw_mask(&self, index: usize) -> strav_core::Result<Mask> {
        io::read_mask(&self.masks[index]).map_err(store_err(index))
    }

    fn completed(&self, index: usize) -> strav_core::Result<Frame> {
        io::read_frame(&self.output_path(index)).map_err(store_err(index))
    }

    fn store_completed(&mut self, index: usize, frame: Frame) -> strav_core::Result<()> {
        io::write_frame(&self.output_path(index), &frame).map_err(store_err(index))
    }

    fn store_intermediates(&mut self, index: usize, data: Intermediates) -> strav_core::Result<()> {
        let dir = self.out.join(INTERMEDIATES_DIR);
        let stem = self.stem(index);
        let path = |kind: &str| dir.join(format!("{stem}_{kind}.png"));
        (|| -> Result<()> {
            io::create_dir(&dir)?;
            io::write_frame(&path("y_low"), &data.y_low)?;
            io::write_mask(&path("leftover"), &data.leftover)?;
            io::write_mask(&path("coverage"), &data.coverage)?;
            io::write_index_map(&path("temporal_top1"), &data.temporal_top1)?;
            if let Some(sp) = &data.spatial_top1 {
                io::write_index_map(&path("spatial_top1"), sp)?;
            }
            Ok(())
        })()
        .map_err(store_err(index))
    }
}
