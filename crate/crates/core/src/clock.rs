//! Single-host monotonic clock shared by every stream in the process.

use once_cell::sync::Lazy;
use std::time::Instant;

static EPOCH: Lazy<Instant> = Lazy::new(Instant::now);

/// Seconds since the process-wide epoch.
pub fn now_s() -> f64 {
    EPOCH.elapsed().as_secs_f64()
}

/// Converts an [`Instant`] to the same timeline as [`now_s`].
pub fn instant_s(t: Instant) -> f64 {
    t.saturating_duration_since(*EPOCH).as_secs_f64()
}
