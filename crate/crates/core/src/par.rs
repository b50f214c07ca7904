//! Data-parallel helpers. With the `parallel` feature they run on rayon's
//! pool; without it (or with [`Exec::Sequential`]) they run in order.
//! Reductions combine per-chunk partial sums in a fixed order, so results do
//! not depend on the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution policy for the kernels that expose one explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    fn parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Chunk length for deterministic chunked reductions.
const CHUNK: usize = 4096;

pub fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    map_indices_with(Exec::default(), n, f)
}

pub fn map_indices_with<T: Send>(exec: Exec, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    if exec.parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

pub fn map_slice<S: Sync, T: Send>(xs: &[S], f: impl Fn(&S) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    return xs.par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    xs.iter().map(f).collect()
}

/// Σ f(i) for i < n, summed per fixed-size chunk then across chunks in order.
pub fn sum_indices(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    sum_indices_with(Exec::default(), n, f)
}

pub fn sum_indices_with(exec: Exec, n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    let chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        (lo..hi).map(&f).sum::<f64>()
    };
    let parts = map_indices_with(exec, chunks, partial);
    parts.iter().sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    sum_indices(a.len(), |i| a[i] * b[i])
}

pub fn dot_with(exec: Exec, a: &[f64], b: &[f64]) -> f64 {
    sum_indices_with(exec, a.len(), |i| a[i] * b[i])
}

/// Applies `f(i, &mut out[i])` to every element.
pub fn for_each_mut<T: Send>(exec: Exec, out: &mut [T], f: impl Fn(usize, &mut T) + Sync + Send) {
    #[cfg(feature = "parallel")]
    if exec.parallel() {
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            for (k, v) in chunk.iter_mut().enumerate() {
                f(c * CHUNK + k, v);
            }
        });
        return;
    }
    let _ = exec;
    out.iter_mut().enumerate().for_each(|(i, v)| f(i, v));
}

/// Sizes the global worker pool; a no-op without the `parallel` feature.
/// Fails if the pool was already initialized.
pub fn set_threads(n: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    return rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string());
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        Ok(())
    }
}
