//! Deterministic batch parallelism.
//!
//! Work is split into a fixed number of contiguous chunks independent of the
//! thread count, each chunk accumulates sequentially, and chunk results are
//! returned in order. Reductions over the returned accumulators are therefore
//! bit-identical for any degree of parallelism.

use rayon::prelude::*;

use crate::error::Result;

const CHUNKS: usize = 8;

pub(crate) fn chunked<A, T, M, F>(n: usize, make: M, body: F) -> Result<(Vec<A>, Vec<T>)>
where
    A: Send,
    T: Send,
    M: Fn() -> A + Sync,
    F: Fn(usize, &mut A) -> Result<T> + Sync,
{
    let chunks = CHUNKS.min(n.max(1));
    let per = n.div_ceil(chunks);
    let parts: Vec<Result<(A, Vec<T>)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = make();
            let lo = (c * per).min(n);
            let hi = ((c + 1) * per).min(n);
            let mut out = Vec::with_capacity(hi - lo);
            for i in lo..hi {
                out.push(body(i, &mut acc)?);
            }
            Ok((acc, out))
        })
        .collect();
    let mut accs = Vec::with_capacity(chunks);
    let mut outs = Vec::with_capacity(n);
    for p in parts {
        let (a, o) = p?;
        accs.push(a);
        outs.extend(o);
    }
    Ok((accs, outs))
}

/// Order-preserving fallible parallel map.
pub(crate) fn map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    (0..n).into_par_iter().map(&f).collect()
}
