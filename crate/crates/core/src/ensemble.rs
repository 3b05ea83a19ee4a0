//! Deterministic parallel map-reduce over trajectory indices.
//!
//! Work is cut into fixed-size chunks independent of the thread count; chunk
//! results are merged strictly in chunk order, so floating-point sums are
//! identical for any number of workers. Runs on the ambient rayon pool.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::Result;

/// Trajectories per chunk.
pub const CHUNK: usize = 64;

/// Default bound on `trajectories * steps` for one ensemble request.
pub const DEFAULT_CAPACITY: f64 = 2e10;

pub fn map_reduce<A, W, M>(n: usize, chunk: usize, work: W, mut merge: M) -> Result<Option<A>>
where
    A: Send,
    W: Fn(Range<usize>) -> Result<A> + Sync,
    M: FnMut(&mut A, A),
{
    let chunk = chunk.max(1);
    let chunks = n.div_ceil(chunk);
    let parts: Vec<Result<A>> = (0..chunks)
        .into_par_iter()
        .map(|c| work(c * chunk..((c + 1) * chunk).min(n)))
        .collect();
    let mut acc: Option<A> = None;
    for part in parts {
        let part = part?;
        match acc.as_mut() {
            Some(a) => merge(a, part),
            None => acc = Some(part),
        }
    }
    Ok(acc)
}

/// Reject requests whose total step count exceeds `cap`.
pub fn check_capacity(trajectories: usize, steps: usize, cap: f64) -> Result<()> {
    let requested = trajectories as f64 * steps as f64;
    if requested > cap {
        return Err(crate::Error::Capacity { requested, cap });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_order_is_fixed() {
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                map_reduce(
                    1000,
                    7,
                    |r| Ok(r.map(|i| 1.0 / (i as f64 + 1.0)).sum::<f64>()),
                    |a, b| *a += b,
                )
            })
            .unwrap()
            .unwrap()
        };
        assert_eq!(run(1).to_bits(), run(3).to_bits());
    }

    #[test]
    fn first_error_in_chunk_order_wins() {
        let out: Result<Option<()>> = map_reduce(
            10,
            2,
            |r| {
                if r.start >= 4 {
                    Err(crate::Error::InvalidStep { dt: r.start as f64 })
                } else {
                    Ok(())
                }
            },
            |_, _| {},
        );
        assert_eq!(out.unwrap_err(), crate::Error::InvalidStep { dt: 4.0 });
    }
}
