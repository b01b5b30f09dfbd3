//! Order-preserving parallel maps. Results come back indexed, and callers
//! reduce them sequentially, so sums do not depend on the worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter_mut().enumerate().for_each(|(i, t)| f(i, t));
    }
}

/// Number of fixed-size chunks a Monte Carlo job of `n` samples is cut into.
/// Chunk `c` always covers the same sample indices, whatever the thread count.
pub const MC_CHUNK: usize = 8192;

pub fn chunk_bounds(n: usize, c: usize) -> (usize, usize) {
    let lo = c * MC_CHUNK;
    (lo, ((c + 1) * MC_CHUNK).min(n))
}

pub fn n_chunks(n: usize) -> usize {
    n.div_ceil(MC_CHUNK)
}

/// Component-wise moments of a `k`-valued Monte Carlo integrand over `n`
/// samples. Chunk `c` draws from stream `c` of `key`; chunks are merged in
/// index order.
pub fn mc_moments<F>(n: usize, k: usize, key: crate::rng::StreamKey, f: F) -> Vec<crate::gauss::Moments>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng, &mut [f64]) + Sync + Send,
{
    let parts = map_range(n_chunks(n), |c| {
        let (lo, hi) = chunk_bounds(n, c);
        let mut rng = key.stream(c as u64);
        let mut acc = vec![crate::gauss::Moments::default(); k];
        let mut buf = vec![0.0; k];
        for _ in lo..hi {
            f(&mut rng, &mut buf);
            for (a, v) in acc.iter_mut().zip(&buf) {
                a.push(*v);
            }
        }
        acc
    });
    let mut out = vec![crate::gauss::Moments::default(); k];
    for p in &parts {
        for (o, q) in out.iter_mut().zip(p) {
            o.merge(q);
        }
    }
    out
}
