//! The learner abstraction the estimators drive.

use crate::hpo::HyperParams;
use crate::measurements::SeedMap;
use crate::resampling::{RngStream, SplitSpec};
use crate::Result;

/// A training pipeline seen from the outside: fit-and-evaluate on a split, and a
/// hyperparameter search.
///
/// Both operations must be deterministic in their inputs: `train_eval` in
/// `(split, params, seeds)`, `hopt` additionally in the state of `stream`.
pub trait PipelineAdapter: Sync {
    /// Fits with `params` on the training part of `split` and returns the empirical
    /// risk on its test part.
    fn train_eval(&self, split: &SplitSpec, params: &HyperParams, seeds: &SeedMap) -> Result<f64>;

    /// Runs a hyperparameter search with a budget of `budget` fits.
    fn hopt(
        &self,
        split: &SplitSpec,
        seeds: &SeedMap,
        budget: usize,
        stream: &mut RngStream,
    ) -> Result<HyperParams>;
}

impl<P: PipelineAdapter + ?Sized> PipelineAdapter for &P {
    fn train_eval(&self, split: &SplitSpec, params: &HyperParams, seeds: &SeedMap) -> Result<f64> {
        (**self).train_eval(split, params, seeds)
    }

    fn hopt(
        &self,
        split: &SplitSpec,
        seeds: &SeedMap,
        budget: usize,
        stream: &mut RngStream,
    ) -> Result<HyperParams> {
        (**self).hopt(split, seeds, budget, stream)
    }
}
