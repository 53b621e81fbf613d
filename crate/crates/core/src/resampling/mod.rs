//! Seeded randomness, out-of-bootstrap splits and the percentile bootstrap.

mod bootstrap;
mod rng;
mod split;

pub use bootstrap::{
    bootstrap_distribution, percentile_bootstrap_ci, BootstrapDistribution, ConfidenceInterval,
    DEFAULT_RESAMPLES,
};
pub use rng::RngStream;
pub use split::{oob_split, SplitRecord, SplitSpec};
