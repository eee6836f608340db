//! Frame-directory IO, configuration files and reports around
//! [`strav_core`].

pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod store;

pub use error::{Error, Result};
pub use strav_core as core;
