//! Data-parallel reductions with a fixed chunking, so results are bitwise
//! identical for any number of worker threads.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::Result;

/// Samples per work item.
pub(crate) const CHUNK: usize = 32;

pub(crate) fn chunks(count: usize) -> Vec<Range<usize>> {
    (0..count)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(count))
        .collect()
}

/// Sums the `width`-long vectors produced by `f` over fixed-size chunks of
/// `0..count`, reducing in chunk order.
pub(crate) fn chunked_sum<F>(count: usize, width: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(Range<usize>, &mut [f64]) -> Result<()> + Sync,
{
    let partials = chunks(count)
        .into_par_iter()
        .map(|r| {
            let mut acc = vec![0.0; width];
            f(r, &mut acc)?;
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![0.0; width];
    for p in partials {
        for (t, x) in total.iter_mut().zip(p) {
            *t += x;
        }
    }
    Ok(total)
}

/// Scalar version of [`chunked_sum`].
pub(crate) fn chunked_sum_scalar<F>(count: usize, f: F) -> Result<f64>
where
    F: Fn(Range<usize>) -> Result<f64> + Sync,
{
    let partials = chunks(count)
        .into_par_iter()
        .map(&f)
        .collect::<Result<Vec<_>>>()?;
    Ok(partials.into_iter().sum())
}
