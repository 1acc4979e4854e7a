//! Deterministic node-parallel execution.
//!
//! Maps are embarrassingly parallel (each item writes its own slot), so any
//! partition of the index space yields identical output. Reductions are made
//! thread-count independent by accumulating over fixed-size chunks and then
//! folding the chunk partials sequentially in chunk order. Changing the
//! thread count reassigns chunks to threads but never changes the order in
//! which partials are combined, so floating-point results are bit-stable.

use std::sync::atomic::{AtomicUsize, Ordering};

/// Items per reduction chunk. Fixed: must not depend on the thread count.
pub const REDUCE_CHUNK: usize = 4096;

static THREADS: AtomicUsize = AtomicUsize::new(1);

/// Sets the worker thread count (>= 1). Affects speed only, never results.
pub fn set_thread_count(k: usize) {
    THREADS.store(k.max(1), Ordering::Relaxed);
}

pub fn thread_count() -> usize {
    THREADS.load(Ordering::Relaxed).max(1)
}

/// Fills `out` (viewed as `out.len()/stride` items of `stride` elements)
/// by calling `f(item, slot)` for every item.
pub fn fill_slice<T, F>(out: &mut [T], stride: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    assert!(stride > 0 && out.len().is_multiple_of(stride));
    let n = out.len() / stride;
    let t = thread_count().min(n.max(1));
    if t <= 1 || n < 2 * REDUCE_CHUNK {
        for (i, slot) in out.chunks_mut(stride).enumerate() {
            f(i, slot);
        }
        return;
    }
    let per = n.div_ceil(t);
    std::thread::scope(|scope| {
        for (block_idx, block) in out.chunks_mut(per * stride).enumerate() {
            let f = &f;
            scope.spawn(move || {
                let base = block_idx * per;
                for (j, slot) in block.chunks_mut(stride).enumerate() {
                    f(base + j, slot);
                }
            });
        }
    });
}

/// Allocates and fills a `Vec` of `n * stride` elements via [`fill_slice`].
pub fn par_fill<T, F>(n: usize, stride: usize, init: T, f: F) -> Vec<T>
where
    T: Clone + Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    let mut out = vec![init; n * stride];
    fill_slice(&mut out, stride, f);
    out
}

/// Deterministic reduction over `0..n`.
///
/// `f` folds one index into a chunk-local accumulator; `merge` combines two
/// accumulators. Chunk partials are merged in ascending chunk order.
pub fn par_reduce<R, F, M>(n: usize, identity: R, f: F, merge: M) -> R
where
    R: Clone + Send + Sync,
    F: Fn(R, usize) -> R + Sync,
    M: Fn(R, R) -> R,
{
    if n == 0 {
        return identity;
    }
    let n_chunks = n.div_ceil(REDUCE_CHUNK);
    let partials = par_fill(n_chunks, 1, identity.clone(), |c, slot| {
        let lo = c * REDUCE_CHUNK;
        let hi = (lo + REDUCE_CHUNK).min(n);
        let mut acc = identity.clone();
        for i in lo..hi {
            acc = f(acc, i);
        }
        slot[0] = acc;
    });
    let mut total = partials[0].clone();
    for p in &partials[1..] {
        total = merge(total, p.clone());
    }
    total
}

/// Deterministic sum of `f(i)` over `0..n`.
pub fn par_sum<F: Fn(usize) -> f64 + Sync>(n: usize, f: F) -> f64 {
    par_reduce(n, 0.0, |acc, i| acc + f(i), |a, b| a + b)
}

/// Deterministic max of `f(i)` over `0..n` (`-inf` when empty).
pub fn par_max<F: Fn(usize) -> f64 + Sync>(n: usize, f: F) -> f64 {
    par_reduce(n, f64::NEG_INFINITY, |acc: f64, i| acc.max(f(i)), f64::max)
}

/// Deterministic min of `f(i)` over `0..n` (`+inf` when empty).
pub fn par_min<F: Fn(usize) -> f64 + Sync>(n: usize, f: F) -> f64 {
    par_reduce(n, f64::INFINITY, |acc: f64, i| acc.min(f(i)), f64::min)
}
