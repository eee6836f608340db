use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two images that must share a size do not.
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// Zero-sized image, buffer of the wrong length, or non-finite sample.
    InvalidImage(&'static str),
    /// Image dimensions are not divisible by a required factor.
    NotDivisible { height: usize, width: usize, factor: usize },
    /// Too little jointly visible content to register a reference.
    AlignmentUnavailable,
    /// Every reference failed to align.
    NoUsableReference,
    /// The leftover region has no hole-free patch to copy from.
    SpatialContextUnavailable,
    /// A metric was restricted to an empty region.
    EmptyRegion,
    InvalidConfig(String),
    /// Failure reported by a frame store.
    Store { index: usize, message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => write!(
                f,
                "dimension mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::InvalidImage(why) => write!(f, "invalid image: {why}"),
            Error::NotDivisible { height, width, factor } => {
                write!(f, "{height}x{width} is not divisible by {factor}")
            }
            Error::AlignmentUnavailable => f.write_str("insufficient overlap for alignment"),
            Error::NoUsableReference => f.write_str("no usable reference frame"),
            Error::SpatialContextUnavailable => f.write_str("no hole-free context patch"),
            Error::EmptyRegion => f.write_str("region is empty"),
            Error::InvalidConfig(why) => write!(f, "invalid config: {why}"),
            Error::Store { index, message } => write!(f, "frame {index}: {message}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
