//! Process-wide instrumentation counters. Tests use these to assert that
//! dense reference paths never run inside production code paths and that the
//! grid search reuses compressions/factorizations as promised.

use std::sync::atomic::{AtomicU64, Ordering};

/// Dense kernel assemblies (oracle-capped path).
pub static DENSE_KERNEL_CALLS: AtomicU64 = AtomicU64::new(0);
/// Entries into any dense oracle routine.
pub static ORACLE_CALLS: AtomicU64 = AtomicU64::new(0);
/// Completed HSS compressions.
pub static COMPRESSIONS: AtomicU64 = AtomicU64::new(0);
/// Completed shifted factorizations.
pub static FACTORIZATIONS: AtomicU64 = AtomicU64::new(0);
/// Completed ADMM runs.
pub static ADMM_RUNS: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Snapshot {
    pub dense_kernel_calls: u64,
    pub oracle_calls: u64,
    pub compressions: u64,
    pub factorizations: u64,
    pub admm_runs: u64,
}

pub fn snapshot() -> Snapshot {
    Snapshot {
        dense_kernel_calls: DENSE_KERNEL_CALLS.load(Ordering::Relaxed),
        oracle_calls: ORACLE_CALLS.load(Ordering::Relaxed),
        compressions: COMPRESSIONS.load(Ordering::Relaxed),
        factorizations: FACTORIZATIONS.load(Ordering::Relaxed),
        admm_runs: ADMM_RUNS.load(Ordering::Relaxed),
    }
}
