//! Deterministic task execution.
//!
//! The experiment protocol in [`crate::simlab`] evaluates many independent
//! replicates, each of which writes a fixed-width block of statistics. The
//! [`Executor`] trait abstracts *where* those blocks are computed without
//! affecting *what* they contain: each task owns a disjoint slice of the
//! output, and every task derives its randomness from its own index, so any
//! scheduling — sequential, striped across threads, whatever — produces
//! bit-identical results.
//!
//! This crate ships the sequential executor. Companion crates with access to
//! `std` can provide thread pools by implementing the same trait.

/// Runs `tasks` independent jobs, each filling its own `width`-sized block
/// of the output buffer.
pub trait Executor: Sync {
    /// Evaluate `job(t, block_t)` for every `t` in `0..tasks`, where
    /// `block_t` is `out[t * width .. (t + 1) * width]`.
    ///
    /// `out.len()` must equal `tasks * width`. Implementations may run jobs
    /// in any order and on any thread, but each job must be invoked exactly
    /// once and see only its own block.
    fn run(
        &self,
        tasks: usize,
        width: usize,
        out: &mut [f64],
        job: &(dyn Fn(usize, &mut [f64]) + Sync),
    );
}

/// Runs every task on the calling thread, in index order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn run(
        &self,
        tasks: usize,
        width: usize,
        out: &mut [f64],
        job: &(dyn Fn(usize, &mut [f64]) + Sync),
    ) {
        assert_eq!(out.len(), tasks * width, "output buffer size mismatch");
        for (t, block) in out.chunks_mut(width.max(1)).take(tasks).enumerate() {
            job(t, block);
        }
    }
}
