//! Fixtures shared by the benchmarks.

use nbselect::{Dataset, SyntheticSpec};

/// Synthetic data with `features` columns, a third of them informative.
pub fn fixture(rows: usize, features: usize, seed: u64) -> Dataset {
    let informative = features.div_ceil(3);
    SyntheticSpec {
        rows,
        informative,
        noise: features - informative,
        seed,
        ..Default::default()
    }
    .generate()
}
