//! Early-exit quality enhancement for compressed images.
//!
//! A no-reference quality score built on discrete Tchebichef moments decides
//! when a progressive chain of enhancement stages may stop. Alongside it sit
//! an analytical MAC model of the nested-UNet backbone and tooling to build
//! JPEG ladders and evaluate them.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod flopsmodel;
pub mod imagecore;
pub mod iqam;
pub mod pipeline;
pub mod tchebichef;

pub use error::{Error, Result};
pub use imagecore::{CodecKind, Plane};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "RBQE_THREADS";

/// Sizes the global rayon pool from `RBQE_THREADS` if it is set to a
/// positive integer. Must run before any parallel work; later calls, or a
/// pool that already exists, leave things as they are.
pub fn init_threads_from_env() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "{THREADS_ENV} must be a positive integer, got '{v}'"
        ))
    })?;
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}
