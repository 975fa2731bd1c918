//! Float helpers routed through `libm` so the crate builds without `std`.

pub use libm::{atan2, cos, exp, fabs as abs, log as ln, pow as powf, sin, sqrt};

/// Base-2 logarithm.
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

/// `x log2 x` with the conventional continuous extension `0 log 0 = 0`.
pub fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * log2(x)
    }
}
