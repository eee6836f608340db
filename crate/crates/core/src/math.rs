//! Float helpers that work without `std`. `libm` is used unconditionally so
//! results do not depend on the platform's math library.

#[inline]
pub fn sqrt(x: f32) -> f32 {
    libm::sqrtf(x)
}

#[inline]
pub fn sqrt64(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f32) -> f32 {
    libm::expf(x)
}

#[inline]
pub fn exp64(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn floor(x: f32) -> f32 {
    libm::floorf(x)
}

#[inline]
pub fn log10_64(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn sin(x: f32) -> f32 {
    libm::sinf(x)
}

#[inline]
pub fn cos(x: f32) -> f32 {
    libm::cosf(x)
}

#[inline]
pub fn round(x: f32) -> f32 {
    libm::roundf(x)
}

