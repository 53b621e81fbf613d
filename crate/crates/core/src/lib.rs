//! Variance-aware benchmarking of machine-learning pipelines.
//!
//! The crate is organised around the life of a benchmark:
//!
//! - [`measurements`]: score records with seed provenance, ingestion and pairing.
//! - [`resampling`]: reproducible random streams, out-of-bootstrap splits and the
//!   percentile bootstrap.
//! - [`estimators`]: the ideal estimator (one hyperparameter search per replicate) and
//!   the cheaper fixed-search estimator, over any [`pipeline::PipelineAdapter`].
//! - [`variance`]: per-source variance tables, the binomial test-set model, the
//!   correlated-mean variance formula and MSE decompositions.
//! - [`comparison`]: average comparison, z-test threshold, the P(A>B) test and
//!   Noether sample sizes.
//! - [`hpo`]: grid, noisy grid and random search.
//! - [`synthpipe`]: a synthetic pipeline with closed-form risk and variance.
//! - [`simulate`]: Monte-Carlo error rates of the decision criteria.
//! - [`cli`]: the `varbench` command-line front end.

// `!(x >= lo)` style checks are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod comparison;
pub mod error;
pub mod estimators;
pub mod hpo;
pub mod measurements;
pub mod normal;
pub mod pipeline;
pub mod resampling;
pub mod simulate;
pub mod stats;
pub mod synthpipe;
pub mod variance;

pub use error::{Error, Result};
