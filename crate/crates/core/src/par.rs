use alloc::vec::Vec;

/// Order-preserving map. With `parallel` the items are spread over the
/// current rayon pool; output order (and therefore any later reduction) is
/// identical to the sequential build.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Fill `out` row by row; `f(y, row)` writes row `y`.
#[cfg(feature = "parallel")]
pub fn rows<T, F>(out: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    use rayon::prelude::*;
    if width == 0 {
        return;
    }
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| f(y, row));
}

#[cfg(not(feature = "parallel"))]
pub fn rows<T, F>(out: &mut [T], width: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    if width == 0 {
        return;
    }
    out.chunks_mut(width).enumerate().for_each(|(y, row)| f(y, row));
}
