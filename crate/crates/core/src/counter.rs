//! Kernel-launch counting.
//!
//! Every eager kernel in [`crate::tensor`] increments the counters exactly
//! once per call, regardless of how many samples the call covers. Batching
//! ratios are defined over this count, so it has to be observable and
//! resettable between measurements.
//!
//! Two counters are kept in sync: a process-global one (what the CLI reports)
//! and a thread-local one. [`counting`] measures the thread-local counter, so
//! a measurement only sees launches made by the calling thread — recording
//! and execution are single-threaded per scope, which makes this exact.

use std::cell::Cell;
use std::sync::atomic::{AtomicU64, Ordering};

static LAUNCHES: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static LOCAL_LAUNCHES: Cell<u64> = const { Cell::new(0) };
}

/// Process-global number of kernel launches since start or the last [`reset`].
pub fn launches() -> u64 {
    LAUNCHES.load(Ordering::Relaxed)
}

/// Resets the global launch count to zero.
pub fn reset() {
    LAUNCHES.store(0, Ordering::Relaxed);
}

/// Launches made by the current thread.
pub fn thread_launches() -> u64 {
    LOCAL_LAUNCHES.with(|c| c.get())
}

pub(crate) fn bump() {
    LAUNCHES.fetch_add(1, Ordering::Relaxed);
    LOCAL_LAUNCHES.with(|c| c.set(c.get() + 1));
}

/// Runs `f` and returns its result together with the number of kernel
/// launches it performed on this thread.
pub fn counting<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let before = thread_launches();
    let out = f();
    (out, thread_launches() - before)
}
