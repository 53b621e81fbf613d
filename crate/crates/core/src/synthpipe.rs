//! A synthetic learning pipeline with closed-form expected risk and variance.
//!
//! Risk at hyperparameters λ is
//!
//! ```text
//! r₀ + Σᵢ cᵢ (uᵢ(λ) − uᵢ(λ°))² + Σₛ εₛ,    εₛ ~ N(0, sdₛ²)
//! ```
//!
//! where `u` maps a value into search coordinates (log10 on log dimensions) and each
//! `εₛ` is a pure function of the seed of source `s`. Components are additive and
//! independent, so their variances sum exactly. Hyperparameter-search variance arises
//! mechanically from the sampler's randomness.
//!
//! In binomial mode the returned risk is the error rate on `n_test` Bernoulli trials
//! with accuracy `clamp(1 − risk)`; the draws are keyed by the data-split seed.

use std::collections::BTreeMap;

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::hpo::{run_hopt, Dimension, HyperParams, SearchMethod, SearchSpace};
use crate::measurements::{SeedMap, VarianceSource};
use crate::pipeline::PipelineAdapter;
use crate::resampling::{RngStream, SplitSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinomialNoise {
    pub n_test: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticPipelineConfig {
    pub base_risk: f64,
    pub optimum: HyperParams,
    pub curvature: BTreeMap<String, f64>,
    pub component_sds: BTreeMap<VarianceSource, f64>,
    #[serde(default)]
    pub test_noise: Option<BinomialNoise>,
    pub space: SearchSpace,
    #[serde(default)]
    pub method: SearchMethod,
}

impl Default for SyntheticPipelineConfig {
    /// A two-hyperparameter pipeline whose data-split noise dominates, with a random
    /// search that leaves a visible hyperparameter-search component at small budgets.
    fn default() -> Self {
        use VarianceSource::*;
        Self {
            base_risk: 0.1,
            optimum: [("dropout".to_string(), 0.3), ("lr".to_string(), 10f64.powf(-2.5))]
                .into_iter()
                .collect(),
            curvature: [("dropout".to_string(), 0.16), ("lr".to_string(), 0.16)].into(),
            component_sds: [
                (DataSplit, 0.012),
                (DataOrder, 0.004),
                (DataAugment, 0.003),
                (WeightsInit, 0.006),
                (Dropout, 0.003),
                (Numerical, 0.001),
            ]
            .into(),
            test_noise: None,
            space: SearchSpace::new(vec![
                Dimension::log10("lr", 1e-4, 1e-1),
                Dimension::linear("dropout", 0.0, 0.8),
            ])
            .unwrap(),
            method: SearchMethod::Random,
        }
    }
}

impl SyntheticPipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.base_risk.is_finite() {
            return Err(Error::Config("base_risk must be finite".into()));
        }
        for d in self.space.dims() {
            match self.curvature.get(&d.name) {
                Some(c) if *c > 0.0 => {}
                _ => return Err(Error::Config(format!("dimension `{}` needs a positive curvature", d.name))),
            }
            if self.optimum.get(&d.name).is_none() {
                return Err(Error::Config(format!("optimum has no value for `{}`", d.name)));
            }
        }
        if let Some(name) = self.curvature.keys().find(|k| self.space.dim(k).is_none()) {
            return Err(Error::Config(format!("curvature for unknown dimension `{name}`")));
        }
        if let Some((s, sd)) = self.component_sds.iter().find(|(_, sd)| !(**sd >= 0.0)) {
            return Err(Error::Config(format!("component sd for `{s}` must be >= 0, got {sd}")));
        }
        if self.test_noise.is_some_and(|t| t.n_test == 0) {
            return Err(Error::Config("binomial n_test must be positive".into()));
        }
        Ok(())
    }

    /// Noise-free risk at `params`.
    pub fn expected_risk(&self, params: &HyperParams) -> Result<f64> {
        let mut r = self.base_risk;
        for d in self.space.dims() {
            let x = params
                .get(&d.name)
                .ok_or_else(|| Error::Pipeline(format!("hyperparameter `{}` missing", d.name)))?;
            let opt = self.optimum.get(&d.name).unwrap();
            let du = d.to_search(x) - d.to_search(opt);
            r += self.curvature[&d.name] * du * du;
        }
        Ok(r)
    }

    pub fn sum_component_variance(&self) -> f64 {
        self.component_sds.values().map(|s| s * s).sum()
    }
}

/// Closed-form moments of a single replicate risk.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroundTruth {
    pub mu: f64,
    /// Total variance of one replicate: component variances plus binomial variance.
    pub sigma_sq: f64,
    pub components: BTreeMap<VarianceSource, f64>,
    pub binomial_variance: f64,
}

impl GroundTruth {
    /// Var(μ̂_k) = σ²/k for an estimator averaging k independent replicates.
    pub fn mean_variance(&self, k: usize) -> f64 {
        self.sigma_sq / k as f64
    }
}

/// Moments at `params`, or at the optimum when `None`.
///
/// In binomial mode with accuracy τ = τ₀ − Σε the test-set variance is
/// E[τ(1 − τ)]/n = (τ₀(1 − τ₀) − Σ sdₛ²)/n, ignoring clamping at 0 and 1.
pub fn ground_truth(cfg: &SyntheticPipelineConfig, params: Option<&HyperParams>) -> Result<GroundTruth> {
    cfg.validate()?;
    let mu = cfg.expected_risk(params.unwrap_or(&cfg.optimum))?;
    let components: BTreeMap<VarianceSource, f64> =
        cfg.component_sds.iter().map(|(s, sd)| (*s, sd * sd)).collect();
    let comp_sum: f64 = components.values().sum();
    let binomial_variance = match cfg.test_noise {
        Some(BinomialNoise { n_test }) => {
            let tau = (1.0 - mu).clamp(0.0, 1.0);
            ((tau * (1.0 - tau) - comp_sum) / n_test as f64).max(0.0)
        }
        None => 0.0,
    };
    Ok(GroundTruth {
        mu,
        sigma_sq: comp_sum + binomial_variance,
        components,
        binomial_variance,
    })
}

#[derive(Clone, Debug)]
pub struct SyntheticPipeline {
    cfg: SyntheticPipelineConfig,
}

impl SyntheticPipeline {
    pub fn new(cfg: SyntheticPipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &SyntheticPipelineConfig {
        &self.cfg
    }

    fn component(source: VarianceSource, seed: u64) -> f64 {
        RngStream::derive(seed, &[("synthpipe", source.index())]).standard_normal()
    }

    /// Risk for one fit. Same seeds give the same perturbations.
    pub fn synth_train_eval(&self, params: &HyperParams, seeds: &SeedMap) -> Result<f64> {
        let mut risk = self.cfg.expected_risk(params)?;
        for (src, sd) in &self.cfg.component_sds {
            let seed = seeds
                .get(src)
                .ok_or_else(|| Error::Pipeline(format!("no seed for source `{src}`")))?;
            if *sd > 0.0 {
                risk += sd * Self::component(*src, *seed);
            }
        }
        if let Some(BinomialNoise { n_test }) = self.cfg.test_noise {
            let seed = seeds
                .get(&VarianceSource::DataSplit)
                .ok_or_else(|| Error::Pipeline("binomial mode needs a data-split seed".into()))?;
            let tau = (1.0 - risk).clamp(0.0, 1.0);
            let mut s = RngStream::derive(*seed, &[("synthpipe-test", 0)]);
            let correct = Binomial::new(n_test, tau)
                .map_err(|e| Error::Pipeline(e.to_string()))?
                .sample(&mut s);
            risk = 1.0 - correct as f64 / n_test as f64;
        }
        Ok(risk)
    }
}

impl PipelineAdapter for SyntheticPipeline {
    fn train_eval(&self, _split: &SplitSpec, params: &HyperParams, seeds: &SeedMap) -> Result<f64> {
        self.synth_train_eval(params, seeds)
    }

    fn hopt(&self, split: &SplitSpec, seeds: &SeedMap, budget: usize, stream: &mut RngStream) -> Result<HyperParams> {
        let run = run_hopt(self, &self.cfg.space, self.cfg.method, budget, split, seeds, stream)?;
        Ok(run.best().clone())
    }
}
