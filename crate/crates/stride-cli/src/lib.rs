//! Library surface of the `stride` binary: command implementations, the
//! live benchmark, run manifests, and SVG emission. Kept as a library so
//! integration tests can drive commands in-process.

pub mod commands;
pub mod livesim;
pub mod manifest;
pub mod svg;

/// Cap the rayon worker pool from `STRIDE_THREADS` (ignored when unset or
/// unparsable; must run before any parallel work).
pub fn init_thread_cap() {
    if let Ok(v) = std::env::var("STRIDE_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
