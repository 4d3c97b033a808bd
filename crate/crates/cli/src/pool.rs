//! Scoped-thread executor for the long-running protocols.
//!
//! Tasks write disjoint output blocks and derive all randomness from
//! their own index, so any split across workers produces byte-identical
//! results; the pool only changes wall-clock time. The worker count
//! comes from the `EFS_THREADS` environment variable, where `0` or an
//! unparsable value falls back to the machine's available parallelism.

use efs_core::exec::Executor;

/// Fixed-size pool of scoped worker threads.
pub struct ThreadPool {
    workers: usize,
}

impl ThreadPool {
    /// Pool sized by `EFS_THREADS` (0 = auto-detect).
    pub fn from_env() -> Self {
        let requested = std::env::var("EFS_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .unwrap_or(0);
        let workers = if requested == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            requested
        };
        Self { workers }
    }
}

impl Executor for ThreadPool {
    fn run(
        &self,
        tasks: usize,
        width: usize,
        out: &mut [f64],
        job: &(dyn Fn(usize, &mut [f64]) + Sync),
    ) {
        assert_eq!(out.len(), tasks * width, "output buffer size mismatch");
        let per = tasks.div_ceil(self.workers.max(1));
        let mut blocks: Vec<(usize, &mut [f64])> =
            out.chunks_mut(width.max(1)).take(tasks).enumerate().collect();
        std::thread::scope(|scope| {
            while !blocks.is_empty() {
                let take = per.min(blocks.len());
                let chunk: Vec<(usize, &mut [f64])> = blocks.drain(..take).collect();
                scope.spawn(move || {
                    for (t, block) in chunk {
                        job(t, block);
                    }
                });
            }
        });
    }
}
