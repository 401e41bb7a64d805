//! Configuration, orchestration, diagnostics and artifact output for the
//! multitask representation learning simulator.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod output;

pub use config::{ExperimentConfig, Kind};
pub use error::{LabError, Result};

/// Median of a non-empty slice (mean of the two middle values when even);
/// NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
