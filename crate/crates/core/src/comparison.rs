//! Decision criteria for "is A better than B".
//!
//! The recommended criterion is [`compare_pab`]: estimate the probability that A
//! outperforms B on a paired replicate, bootstrap a confidence interval, and call the
//! improvement significant when the interval excludes 0.5 and meaningful when it also
//! reaches past γ.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::measurements::{PairedScores, Polarity};
use crate::normal;
use crate::resampling::{percentile_bootstrap_ci, ConfidenceInterval, RngStream, DEFAULT_RESAMPLES};
use crate::{Error, Result};

/// How a tie between paired scores is counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Half a win for each side; keeps P(A>B) + P(B>A) = 1.
    #[default]
    HalfCredit,
    /// Ties are losses for A.
    Strict,
}

impl std::str::FromStr for TiePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" | "half_credit" => Ok(Self::HalfCredit),
            "strict" => Ok(Self::Strict),
            _ => Err(Error::domain(format!("unknown tie policy `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparisonConfig {
    /// Meaningfulness threshold on P(A>B).
    pub gamma: f64,
    /// False-positive rate.
    pub alpha: f64,
    /// False-negative rate, used for sample-size planning.
    pub beta: f64,
    /// Threshold of the average comparison, in metric units.
    pub delta: f64,
    pub ci_level: f64,
    pub bootstrap_resamples: usize,
    pub tie_policy: TiePolicy,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            gamma: 0.75,
            alpha: 0.05,
            beta: 0.05,
            delta: 0.0,
            ci_level: 0.95,
            bootstrap_resamples: DEFAULT_RESAMPLES,
            tie_policy: TiePolicy::HalfCredit,
        }
    }
}

impl ComparisonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.5 && self.gamma < 1.0) {
            return Err(Error::domain(format!("gamma must lie in (0.5, 1), got {}", self.gamma)));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("ci_level", self.ci_level)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::domain(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.delta >= 0.0) {
            return Err(Error::domain(format!("delta must be >= 0, got {}", self.delta)));
        }
        if self.bootstrap_resamples < 100 {
            return Err(Error::domain("bootstrap_resamples must be >= 100"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NotSignificant,
    SignificantNotMeaningful,
    SignificantAndMeaningful,
}

impl Verdict {
    /// Applies the interval-endpoint rules.
    pub fn from_interval(ci: &ConfidenceInterval, gamma: f64) -> Self {
        if ci.lower <= 0.5 {
            Verdict::NotSignificant
        } else if ci.upper <= gamma {
            Verdict::SignificantNotMeaningful
        } else {
            Verdict::SignificantAndMeaningful
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::NotSignificant => "not significant",
            Verdict::SignificantNotMeaningful => "significant, not meaningful",
            Verdict::SignificantAndMeaningful => "significant and meaningful",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonDecision {
    pub p_a_gt_b: f64,
    pub ci: ConfidenceInterval,
    pub verdict: Verdict,
    pub k: usize,
    pub config: ComparisonConfig,
}

/// Credit A earns on one pair: 1 for a win, 0 for a loss, tie per policy.
fn credit(a: f64, b: f64, polarity: Polarity, tie: TiePolicy) -> f64 {
    let (a, b) = match polarity {
        Polarity::HigherIsBetter => (a, b),
        Polarity::LowerIsBetter => (b, a),
    };
    if a > b {
        1.0
    } else if a == b {
        match tie {
            TiePolicy::HalfCredit => 0.5,
            TiePolicy::Strict => 0.0,
        }
    } else {
        0.0
    }
}

fn credits(pairs: &PairedScores, tie: TiePolicy) -> Vec<f64> {
    pairs
        .pairs()
        .iter()
        .map(|p| credit(p.a, p.b, pairs.polarity(), tie))
        .collect()
}

/// Proportion of pairs on which A beats B.
pub fn prob_outperform(pairs: &PairedScores, tie: TiePolicy) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::domain("P(A>B) needs at least one pair"));
    }
    let c = credits(pairs, tie);
    Ok(c.iter().sum::<f64>() / c.len() as f64)
}

/// The P(A>B) test. The interval resamples pairs with `stream` (not advanced).
pub fn compare_pab(pairs: &PairedScores, cfg: &ComparisonConfig, stream: &RngStream) -> Result<ComparisonDecision> {
    cfg.validate()?;
    if pairs.len() < 2 {
        return Err(Error::domain(format!("the P(A>B) test needs k >= 2 pairs, got {}", pairs.len())));
    }
    let c = credits(pairs, cfg.tie_policy);
    let p = c.iter().sum::<f64>() / c.len() as f64;
    let stat = |idx: &[usize]| idx.iter().map(|&i| c[i]).sum::<f64>() / idx.len() as f64;
    let ci = percentile_bootstrap_ci(stat, c.len(), cfg.bootstrap_resamples, cfg.ci_level, stream)?;
    Ok(ComparisonDecision {
        p_a_gt_b: p,
        verdict: Verdict::from_interval(&ci, cfg.gamma),
        ci,
        k: pairs.len(),
        config: *cfg,
    })
}

/// [`compare_pab`] with the stream every front end derives from a plain seed.
pub fn compare_pab_seeded(pairs: &PairedScores, cfg: &ComparisonConfig, seed: u64) -> Result<ComparisonDecision> {
    compare_pab(pairs, cfg, &RngStream::derive(seed, &[("compare", 0)]))
}

/// Average comparison: true iff A's mean beats B's by strictly more than `delta`.
pub fn compare_average(mean_a: f64, mean_b: f64, delta: f64, polarity: Polarity) -> bool {
    polarity.orient(mean_a - mean_b) > delta
}

/// Smallest difference of means a one-sided z-test at level `alpha` declares
/// significant with `k` runs per side.
pub fn z_test_min_difference(sigma_a: f64, sigma_b: f64, k: usize, alpha: f64) -> Result<f64> {
    if !(sigma_a >= 0.0 && sigma_b >= 0.0) {
        return Err(Error::domain("standard deviations must be >= 0"));
    }
    if k == 0 {
        return Err(Error::domain("k must be >= 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(normal::upper_quantile(alpha) * ((sigma_a * sigma_a + sigma_b * sigma_b) / k as f64).sqrt())
}

/// Noether's minimum number of paired runs to detect P(A>B) = γ with false-positive
/// rate α and false-negative rate β.
pub fn noether_sample_size(gamma: f64, alpha: f64, beta: f64) -> Result<u64> {
    if gamma == 0.5 {
        return Err(Error::domain("gamma = 0.5 needs infinitely many runs"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::domain(format!("{name} must lie in (0, 1), got {v}")));
        }
    }
    let num = normal::quantile(1.0 - alpha) - normal::quantile(beta);
    let den = 6f64.sqrt() * (0.5 - gamma);
    let n = (num / den).powi(2);
    // Guard against 28.999999999 style rounding of exact integers.
    let r = n.round();
    Ok(if (n - r).abs() < 1e-9 { r } else { n.ceil() } as u64)
}
