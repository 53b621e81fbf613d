//! Monte-Carlo study of decision criteria.
//!
//! Two algorithms are simulated with a chosen true P(A>B), either through the ideal
//! estimator (k i.i.d. normal runs) or the biased one (a shared bias per realization,
//! then k conditionally i.i.d. runs). For every true P(A>B) on a grid we count how
//! often each criterion declares A better.
//!
//! True P(A>B) maps to a mean shift through the normal model,
//! P(A>B) = Φ(Δμ / √(σ_A² + σ_B²)); P(A>B) = 1 is an infinite shift.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{compare_pab, ComparisonConfig, TiePolicy, Verdict};
use crate::measurements::{PairedScores, Polarity};
use crate::normal;
use crate::resampling::{RngStream, DEFAULT_RESAMPLES};
use crate::stats::mean;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// One run per algorithm; A wins when it leads by more than δ.
    SinglePoint,
    /// Means of k runs; A wins when it leads by more than δ.
    AverageDelta,
    /// The P(A>B) test; A wins on a significant and meaningful verdict.
    PabTest,
    /// One-sided z-test on the means with the true variances.
    Oracle,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::SinglePoint,
        Criterion::AverageDelta,
        Criterion::PabTest,
        Criterion::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::SinglePoint => "single_point",
            Criterion::AverageDelta => "average_delta",
            Criterion::PabTest => "pab_test",
            Criterion::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEstimator {
    Ideal,
    Biased,
}

impl SimEstimator {
    pub fn name(self) -> &'static str {
        match self {
            SimEstimator::Ideal => "ideal",
            SimEstimator::Biased => "biased",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for SimEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    H0,
    NeitherH0NorH1,
    H1,
}

impl Region {
    pub fn of(true_pab: f64, gamma: f64) -> Self {
        if true_pab <= 0.5 {
            Region::H0
        } else if true_pab >= gamma {
            Region::H1
        } else {
            Region::NeitherH0NorH1
        }
    }
}

/// Variances are in metric units squared; `sigma` is the per-run standard deviation
/// of the ideal estimator and sets the P(A>B) ↔ Δμ mapping for both estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub k: usize,
    pub sigma: f64,
    /// Variance of the biased estimator's shared bias, Var(μ̃_k | ξ).
    pub var_biased_mean: f64,
    /// Variance of one run given the bias, Var(R̂_e | ξ).
    pub var_cond: f64,
    pub repetitions: usize,
    pub pab_grid: Vec<f64>,
    pub criteria: BTreeSet<Criterion>,
    pub estimators: BTreeSet<SimEstimator>,
    /// δ = delta_multiplier · sigma for the single-point and average criteria.
    pub delta_multiplier: f64,
    pub gamma: f64,
    /// Level of the oracle z-test.
    pub alpha: f64,
    pub ci_level: f64,
    pub bootstrap_resamples: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            k: 50,
            sigma: 1.0,
            // Measured on the default synthetic pipeline with a random search at
            // budget 20, rescaled to sigma = 1.
            var_biased_mean: DEFAULT_VAR_BIASED_MEAN,
            var_cond: DEFAULT_VAR_COND,
            repetitions: 10_000,
            pab_grid: (0..=12).map(|i| 0.4 + 0.05 * i as f64).map(|p| (p * 100.0).round() / 100.0).collect(),
            criteria: Criterion::ALL.into(),
            estimators: [SimEstimator::Ideal, SimEstimator::Biased].into(),
            delta_multiplier: 1.9952,
            gamma: 0.75,
            alpha: 0.05,
            ci_level: 0.95,
            bootstrap_resamples: DEFAULT_RESAMPLES,
        }
    }
}

pub const DEFAULT_VAR_BIASED_MEAN: f64 = 0.34;
pub const DEFAULT_VAR_COND: f64 = 0.68;

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::domain("simulation needs k >= 2"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain("sigma must be positive"));
        }
        if !(self.var_biased_mean >= 0.0 && self.var_cond >= 0.0) {
            return Err(Error::domain("variances must be >= 0"));
        }
        if self.repetitions < 100 {
            return Err(Error::domain(format!(
                "rate estimates need at least 100 repetitions, got {}",
                self.repetitions
            )));
        }
        if let Some(p) = self.pab_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::domain(format!("P(A>B) grid value {p} is outside [0, 1]")));
        }
        if !(self.delta_multiplier >= 0.0) {
            return Err(Error::domain("delta_multiplier must be >= 0"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain("alpha must lie in (0, 1)"));
        }
        self.comparison(self.gamma).validate()
    }

    fn comparison(&self, gamma: f64) -> ComparisonConfig {
        ComparisonConfig {
            gamma,
            alpha: self.alpha,
            ci_level: self.ci_level,
            bootstrap_resamples: self.bootstrap_resamples,
            tie_policy: TiePolicy::HalfCredit,
            ..ComparisonConfig::default()
        }
    }

    fn warn_if_noisy(&self) {
        if self.repetitions < 1000 {
            log::warn!(
                "{} repetitions per point: rate standard errors reach {:.1} points",
                self.repetitions,
                50.0 / (self.repetitions as f64).sqrt()
            );
        }
    }
}

/// P(A>B) under the normal model for a mean shift of `delta_mu`. With both sigmas
/// zero the outcome is deterministic: 1, 0 or 0.5 for a tie.
pub fn pab_from_mean_shift(delta_mu: f64, sigma_a: f64, sigma_b: f64) -> f64 {
    let s = (sigma_a * sigma_a + sigma_b * sigma_b).sqrt();
    if s == 0.0 {
        return if delta_mu > 0.0 {
            1.0
        } else if delta_mu < 0.0 {
            0.0
        } else {
            0.5
        };
    }
    normal::cdf(delta_mu / s)
}

/// Inverse of [`pab_from_mean_shift`]; infinite at P(A>B) ∈ {0, 1}.
pub fn mean_shift_from_pab(pab: f64, sigma_a: f64, sigma_b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pab) {
        return Err(Error::domain(format!("P(A>B) must lie in [0, 1], got {pab}")));
    }
    let s = (sigma_a * sigma_a + sigma_b * sigma_b).sqrt();
    if s == 0.0 {
        return Err(Error::domain("both sigmas are zero; the mean shift is not identified"));
    }
    Ok(normal::quantile(pab) * s)
}

/// `k` i.i.d. runs from N(mu, sigma²).
pub fn simulate_ideal_run(mu: f64, sigma: f64, k: usize, stream: &mut RngStream) -> Vec<f64> {
    (0..k).map(|_| stream.normal(mu, sigma)).collect()
}

/// One biased realization: a bias `b ~ N(0, var_bias)`, then `k` runs from
/// N(mu + b, var_cond).
pub fn simulate_biased_run(mu: f64, var_bias: f64, var_cond: f64, k: usize, stream: &mut RngStream) -> Vec<f64> {
    let b = stream.normal(0.0, var_bias.sqrt());
    let sd = var_cond.sqrt();
    (0..k).map(|_| stream.normal(mu + b, sd)).collect()
}

/// Everything one grid point needs.
struct PointSetting<'a> {
    cfg: &'a SimulationConfig,
    estimator: SimEstimator,
    k: usize,
    delta_mu: f64,
    delta: f64,
    comparison: ComparisonConfig,
}

impl PointSetting<'_> {
    fn draw(&self, mu: f64, stream: &mut RngStream) -> Vec<f64> {
        match self.estimator {
            SimEstimator::Ideal => simulate_ideal_run(mu, self.cfg.sigma, self.k, stream),
            SimEstimator::Biased => {
                simulate_biased_run(mu, self.cfg.var_biased_mean, self.cfg.var_cond, self.k, stream)
            }
        }
    }

    fn mean_variance(&self) -> f64 {
        match self.estimator {
            SimEstimator::Ideal => self.cfg.sigma.powi(2) / self.k as f64,
            SimEstimator::Biased => self.cfg.var_biased_mean + self.cfg.var_cond / self.k as f64,
        }
    }

    /// Decisions of every criterion on one repetition, indexed like `Criterion::ALL`.
    fn decide(&self, criteria: &BTreeSet<Criterion>, stream: &RngStream) -> Result<[bool; 4]> {
        let a = self.draw(self.delta_mu, &mut stream.child("a", 0));
        let b = self.draw(0.0, &mut stream.child("b", 0));
        let mut out = [false; 4];
        for (i, c) in Criterion::ALL.iter().enumerate() {
            if !criteria.contains(c) {
                continue;
            }
            out[i] = match c {
                Criterion::SinglePoint => a[0] - b[0] > self.delta,
                Criterion::AverageDelta => mean(&a) - mean(&b) > self.delta,
                Criterion::Oracle => {
                    let thr = normal::upper_quantile(self.cfg.alpha) * (2.0 * self.mean_variance()).sqrt();
                    mean(&a) - mean(&b) > thr
                }
                Criterion::PabTest => {
                    let pairs = PairedScores::from_values(a.iter().copied().zip(b.iter().copied()), Polarity::HigherIsBetter)?;
                    compare_pab(&pairs, &self.comparison, &stream.child("bootstrap", 0))?.verdict
                        == Verdict::SignificantAndMeaningful
                }
            };
        }
        Ok(out)
    }

    fn rates(&self, criteria: &BTreeSet<Criterion>, repetitions: usize, stream: &RngStream) -> Result<[f64; 4]> {
        let counts = (0..repetitions)
            .into_par_iter()
            .map(|r| self.decide(criteria, &stream.child("rep", r as u64)))
            .try_fold(
                || [0usize; 4],
                |mut acc, d| {
                    for (n, hit) in acc.iter_mut().zip(d?) {
                        *n += hit as usize;
                    }
                    Ok::<_, Error>(acc)
                },
            )
            .try_reduce(
                || [0usize; 4],
                |mut x, y| {
                    for (a, b) in x.iter_mut().zip(y) {
                        *a += b;
                    }
                    Ok(x)
                },
            )?;
        Ok(counts.map(|n| n as f64 / repetitions as f64))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub estimator: SimEstimator,
    pub criterion: Criterion,
    pub true_pab: f64,
    pub region: Region,
    /// Fraction of repetitions declaring A better.
    pub rate: f64,
    /// Binomial standard error of `rate`.
    pub std_error: f64,
    pub repetitions: usize,
}

fn rate_point(estimator: SimEstimator, criterion: Criterion, true_pab: f64, gamma: f64, rate: f64, reps: usize) -> RatePoint {
    RatePoint {
        estimator,
        criterion,
        true_pab,
        region: Region::of(true_pab, gamma),
        rate,
        std_error: (rate * (1.0 - rate) / reps as f64).sqrt(),
        repetitions: reps,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCurves {
    pub points: Vec<RatePoint>,
}

impl RateCurves {
    pub fn point(&self, estimator: SimEstimator, criterion: Criterion, true_pab: f64) -> Option<&RatePoint> {
        self.points
            .iter()
            .find(|p| p.estimator == estimator && p.criterion == criterion && (p.true_pab - true_pab).abs() < 1e-9)
    }

    pub fn rate(&self, estimator: SimEstimator, criterion: Criterion, true_pab: f64) -> Option<f64> {
        self.point(estimator, criterion, true_pab).map(|p| p.rate)
    }

    /// Mean rate over the grid points of one region.
    pub fn region_mean(&self, estimator: SimEstimator, criterion: Criterion, region: Region) -> Option<f64> {
        let rates: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.estimator == estimator && p.criterion == criterion && p.region == region)
            .map(|p| p.rate)
            .collect();
        (!rates.is_empty()).then(|| mean(&rates))
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Detection rate of every configured criterion and estimator at every grid point.
///
/// Repetition `r` at grid point `g` for estimator `e` uses
/// `stream.child("estimator", e).child("point", g).child("rep", r)`.
pub fn detection_rates(cfg: &SimulationConfig, stream: &RngStream) -> Result<RateCurves> {
    cfg.validate()?;
    cfg.warn_if_noisy();
    let delta = cfg.delta_multiplier * cfg.sigma;
    let mut points = Vec::new();
    for &estimator in &cfg.estimators {
        let es = stream.child("estimator", estimator.index());
        for (g, &pab) in cfg.pab_grid.iter().enumerate() {
            let setting = PointSetting {
                cfg,
                estimator,
                k: cfg.k,
                delta_mu: mean_shift_from_pab(pab, cfg.sigma, cfg.sigma)?,
                delta,
                comparison: cfg.comparison(cfg.gamma),
            };
            let rates = setting.rates(&cfg.criteria, cfg.repetitions, &es.child("point", g as u64))?;
            for (i, c) in Criterion::ALL.iter().enumerate() {
                if cfg.criteria.contains(c) {
                    points.push(rate_point(estimator, *c, pab, cfg.gamma, rates[i], cfg.repetitions));
                }
            }
        }
    }
    Ok(RateCurves { points })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub estimator: SimEstimator,
    pub criterion: Criterion,
    pub true_pab: f64,
    pub sample_size: usize,
    pub gamma: f64,
    pub rate: f64,
    pub std_error: f64,
    pub repetitions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurves {
    /// Rates against sample size at the configured γ.
    pub by_sample_size: Vec<SweepPoint>,
    /// Rates against γ at the configured k.
    pub by_gamma: Vec<SweepPoint>,
}

impl RobustnessCurves {
    /// Both sweeps in one table; `sweep` is `sample_size` or `gamma`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "sweep",
            "estimator",
            "criterion",
            "true_pab",
            "sample_size",
            "gamma",
            "rate",
            "std_error",
            "repetitions",
        ])?;
        for (sweep, pts) in [("sample_size", &self.by_sample_size), ("gamma", &self.by_gamma)] {
            for p in pts.iter() {
                w.write_record([
                    sweep.to_string(),
                    p.estimator.to_string(),
                    p.criterion.to_string(),
                    p.true_pab.to_string(),
                    p.sample_size.to_string(),
                    p.gamma.to_string(),
                    p.rate.to_string(),
                    p.std_error.to_string(),
                    p.repetitions.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Detection rates against sample size and against γ at each grid P(A>B). The average
/// criterion's δ follows γ as δ = Φ⁻¹(γ)·σ in both sweeps.
///
/// Streams: `stream.child("sample-size", i)` and `stream.child("gamma", j)`, then
/// estimator and point as in [`detection_rates`].
pub fn robustness_sweep(
    cfg: &SimulationConfig,
    sample_sizes: &[usize],
    gammas: &[f64],
    stream: &RngStream,
) -> Result<RobustnessCurves> {
    cfg.validate()?;
    cfg.warn_if_noisy();
    if sample_sizes.iter().any(|&n| n < 2) {
        return Err(Error::domain("sample sizes must be >= 2"));
    }
    let sweep = |k: usize, gamma: f64, s: &RngStream| -> Result<Vec<SweepPoint>> {
        let comparison = cfg.comparison(gamma);
        comparison.validate()?;
        let mut out = Vec::new();
        for &estimator in &cfg.estimators {
            let es = s.child("estimator", estimator.index());
            for (g, &pab) in cfg.pab_grid.iter().enumerate() {
                let setting = PointSetting {
                    cfg,
                    estimator,
                    k,
                    delta_mu: mean_shift_from_pab(pab, cfg.sigma, cfg.sigma)?,
                    delta: normal::quantile(gamma) * cfg.sigma,
                    comparison,
                };
                let rates = setting.rates(&cfg.criteria, cfg.repetitions, &es.child("point", g as u64))?;
                for (i, c) in Criterion::ALL.iter().enumerate() {
                    if cfg.criteria.contains(c) {
                        out.push(SweepPoint {
                            estimator,
                            criterion: *c,
                            true_pab: pab,
                            sample_size: k,
                            gamma,
                            rate: rates[i],
                            std_error: (rates[i] * (1.0 - rates[i]) / cfg.repetitions as f64).sqrt(),
                            repetitions: cfg.repetitions,
                        });
                    }
                }
            }
        }
        Ok(out)
    };
    let mut by_sample_size = Vec::new();
    for (i, &n) in sample_sizes.iter().enumerate() {
        by_sample_size.extend(sweep(n, cfg.gamma, &stream.child("sample-size", i as u64))?);
    }
    let mut by_gamma = Vec::new();
    for (j, &g) in gammas.iter().enumerate() {
        by_gamma.extend(sweep(cfg.k, g, &stream.child("gamma", j as u64))?);
    }
    Ok(RobustnessCurves { by_sample_size, by_gamma })
}
