//! High-resolution video inpainting by spatial-temporal residual aggregation.
//!
//! Frames are inpainted at a reduced resolution: references are aligned to
//! the target with a global affine branch and a dense flow branch, their
//! content is blended into the hole with masked attention, and any region no
//! reference can see is refined from the target's own context patches. The
//! full-resolution result is recovered by adding back high-frequency
//! residuals from the references and from the target's context, weighted by
//! the same attention scores and warped with the same alignments.
//!
//! The crate is `no_std` + `alloc`. Enable `std` for `std::error::Error`
//! impls, and `parallel` to spread per-reference work across a rayon pool
//! (results stay bit-identical to the sequential build).
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod alignment;
pub mod diffusion;
pub mod error;
pub mod features;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod pyramid;
pub mod residual;
pub mod spatial;
pub mod synthgen;
pub mod temporal;

mod math;
mod par;

pub use error::{Error, Result};
pub use image::{Frame, Mask, PadRecord, Plane};
