//! Variance by source, the binomial test-set model, the correlated-mean variance law
//! and the bias/variance split of an estimator's error.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::measurements::{GroupKey, ScoreRecord, ScoreSet, VarianceSource};
use crate::resampling::{percentile_bootstrap_ci, ConfidenceInterval, RngStream};
use crate::stats::{mean, pearson, population_variance, sample_variance};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceVariance {
    pub runs: usize,
    /// Sample variance (n − 1 denominator), metric².
    pub variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<ConfidenceInterval>,
    #[serde(skip)]
    values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    pub per_source: BTreeMap<VarianceSource, SourceVariance>,
    pub reference: VarianceSource,
}

impl VarianceTable {
    /// Each source's variance as a fraction of the reference source's.
    pub fn ratios(&self) -> Result<BTreeMap<VarianceSource, f64>> {
        let r = self
            .per_source
            .get(&self.reference)
            .ok_or_else(|| Error::domain(format!("reference source `{}` not measured", self.reference)))?;
        if r.variance <= 0.0 {
            return Err(Error::domain(format!("reference source `{}` has zero variance", self.reference)));
        }
        Ok(self.per_source.iter().map(|(s, v)| (*s, v.variance / r.variance)).collect())
    }

    pub fn variance(&self, source: VarianceSource) -> Option<f64> {
        self.per_source.get(&source).map(|v| v.variance)
    }

    /// Adds percentile-bootstrap intervals over each source's sample variance.
    /// Source `s` resamples with `stream.child("variance-ci", s.index())`.
    pub fn add_bootstrap_cis(&mut self, level: f64, resamples: usize, stream: &RngStream) -> Result<()> {
        for (s, v) in self.per_source.iter_mut() {
            let values = &v.values;
            let stat = |idx: &[usize]| {
                let xs: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
                sample_variance(&xs).unwrap_or(0.0)
            };
            v.ci = Some(percentile_bootstrap_ci(
                stat,
                values.len(),
                resamples,
                level,
                &stream.child("variance-ci", s.index()),
            )?);
        }
        Ok(())
    }
}

/// Splits the records of one (task, algorithm) group by the single source each varies.
///
/// A source varies when its seed takes more than one value. With several varying
/// sources, each one's fixed value is its most frequent seed, and every record must
/// differ from those fixed values in at most one source. A record that differs in none
/// is a valid draw for every varying source and joins each of their groups.
fn split_by_source<'a>(
    key: &GroupKey,
    records: &[&'a ScoreRecord],
    declared: &BTreeSet<VarianceSource>,
) -> Result<BTreeMap<VarianceSource, Vec<&'a ScoreRecord>>> {
    let mut counts: BTreeMap<VarianceSource, BTreeMap<u64, usize>> = BTreeMap::new();
    for r in records {
        for s in declared {
            *counts.entry(*s).or_default().entry(r.seeds[s]).or_default() += 1;
        }
    }
    let varying: Vec<VarianceSource> = counts
        .iter()
        .filter(|(_, c)| c.len() > 1)
        .map(|(s, _)| *s)
        .collect();
    match varying.len() {
        0 => {
            return Err(Error::Protocol(format!(
                "group {key} varies no declared seed; cannot attribute its variance"
            )))
        }
        1 => return Ok([(varying[0], records.to_vec())].into()),
        _ => {}
    }
    let mut fixed = BTreeMap::new();
    for s in &varying {
        let (seed, n) = counts[s].iter().max_by_key(|(seed, n)| (**n, std::cmp::Reverse(**seed))).unwrap();
        if *n == 1 {
            return Err(Error::Protocol(format!(
                "group {key} varies {} together with other sources in every run",
                s.name()
            )));
        }
        fixed.insert(*s, *seed);
    }
    let mut groups: BTreeMap<VarianceSource, Vec<&ScoreRecord>> = BTreeMap::new();
    let mut neutral = Vec::new();
    for r in records {
        let diff: Vec<VarianceSource> = varying.iter().copied().filter(|s| r.seeds[s] != fixed[s]).collect();
        match diff.as_slice() {
            [] => neutral.push(*r),
            [s] => groups.entry(*s).or_default().push(*r),
            many => {
                let names: Vec<&str> = many.iter().map(|s| s.name()).collect();
                return Err(Error::Protocol(format!(
                    "group {key}: replicate {} varies {} sources at once ({})",
                    r.replicate_id,
                    many.len(),
                    names.join(", ")
                )));
            }
        }
    }
    for g in groups.values_mut() {
        g.extend(neutral.iter().copied());
    }
    Ok(groups)
}

/// Per-source variance for every (task, algorithm) group of `set`.
///
/// Records of a group are attributed to the single seed they vary (see the rules on
/// mixed groups below); each source needs at least two runs, and `reference` must be
/// among the measured sources.
///
/// Mixed groups: when a group holds several single-source studies, each source's fixed
/// seed is its most frequent value and a run must differ from the fixed seeds in at
/// most one source.
pub fn decompose_variance(set: &ScoreSet, reference: VarianceSource) -> Result<BTreeMap<GroupKey, VarianceTable>> {
    let mut out = BTreeMap::new();
    for (key, records) in set.groups() {
        let mut per_source = BTreeMap::new();
        for (source, rs) in split_by_source(&key, &records, set.declared_sources())? {
            let values: Vec<f64> = rs.iter().map(|r| r.value).collect();
            let variance = sample_variance(&values).ok_or_else(|| {
                Error::Protocol(format!("group {key}: source {} has a single run", source.name()))
            })?;
            per_source.insert(
                source,
                SourceVariance {
                    runs: values.len(),
                    variance,
                    ci: None,
                    values,
                },
            );
        }
        if !per_source.contains_key(&reference) {
            return Err(Error::Protocol(format!(
                "group {key}: reference source `{}` was not varied",
                reference.name()
            )));
        }
        out.insert(key, VarianceTable { per_source, reference });
    }
    if out.is_empty() {
        return Err(Error::domain("no records"));
    }
    Ok(out)
}

#[derive(Serialize)]
struct VarianceRow<'a> {
    task: &'a str,
    algorithm: &'a str,
    source: &'static str,
    runs: usize,
    variance: f64,
    std: f64,
    ratio: f64,
    ci_lower: Option<f64>,
    ci_upper: Option<f64>,
}

/// One CSV row per (task, algorithm, source); `ratio` is relative to the reference.
pub fn write_variance_csv<W: Write>(tables: &BTreeMap<GroupKey, VarianceTable>, out: &mut W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (key, t) in tables {
        let ratios = t.ratios().unwrap_or_default();
        for (s, v) in &t.per_source {
            w.serialize(VarianceRow {
                task: &key.task,
                algorithm: &key.algorithm,
                source: s.name(),
                runs: v.runs,
                variance: v.variance,
                std: v.variance.sqrt(),
                ratio: ratios.get(s).copied().unwrap_or(f64::NAN),
                ci_lower: v.ci.map(|c| c.lower),
                ci_upper: v.ci.map(|c| c.upper),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Standard deviation of the observed accuracy on `n_test` i.i.d. test examples when
/// the true accuracy is `tau`.
pub fn binomial_sd(tau: f64, n_test: u64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(format!("tau must lie in (0, 1), got {tau}")));
    }
    if n_test == 0 {
        return Err(Error::domain("n_test must be >= 1"));
    }
    Ok((tau * (1.0 - tau) / n_test as f64).sqrt())
}

/// Variance of the mean of `k` measurements with common variance `var_cond` and
/// average pairwise correlation `rho`.
pub fn biased_estimator_variance(var_cond: f64, rho: f64, k: usize) -> Result<f64> {
    if !(var_cond >= 0.0) {
        return Err(Error::domain(format!("variance must be >= 0, got {var_cond}")));
    }
    if k == 0 {
        return Err(Error::domain("k must be >= 1"));
    }
    let floor = if k >= 2 { -1.0 / (k - 1) as f64 } else { -1.0 };
    if !(rho >= floor && rho <= 1.0) {
        return Err(Error::domain(format!(
            "rho = {rho} is outside [{floor}, 1], the valid range for k = {k}"
        )));
    }
    let k = k as f64;
    Ok(var_cond / k + (k - 1.0) / k * rho * var_cond)
}

/// Average Pearson correlation between replicate positions, computed across
/// repetitions. `matrix[r][i]` is replicate `i` of repetition `r`.
pub fn estimate_rho(matrix: &[Vec<f64>]) -> Result<f64> {
    if matrix.len() < 2 {
        return Err(Error::domain("estimating rho needs at least 2 repetitions"));
    }
    let k = matrix[0].len();
    if k < 2 {
        return Err(Error::domain("estimating rho needs at least 2 replicates"));
    }
    if matrix.iter().any(|row| row.len() != k) {
        return Err(Error::domain("risk matrix rows have different lengths"));
    }
    let cols: Vec<Vec<f64>> = (0..k).map(|i| matrix.iter().map(|row| row[i]).collect()).collect();
    let (mut sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
    for i in 0..k {
        for j in i + 1..k {
            match pearson(&cols[i], &cols[j]) {
                Some(r) => {
                    sum += r;
                    used += 1;
                }
                None => skipped += 1,
            }
        }
    }
    if skipped > 0 {
        log::warn!("estimate_rho: skipped {skipped} replicate pairs with zero variance");
    }
    if used == 0 {
        return Err(Error::domain("every replicate pair has zero variance; rho is undefined"));
    }
    Ok(sum / used as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseDecomposition {
    pub bias_sq: f64,
    /// Population variance (denominator m) of the estimates, so that
    /// `mse = bias_sq + variance` holds exactly.
    pub variance: f64,
    pub mse: f64,
    pub rho: f64,
}

/// Splits the mean squared error of `estimates` around `true_mu` into bias² and
/// variance. `rho` is carried through for reporting.
pub fn mse_decompose(estimates: &[f64], true_mu: f64, rho: f64) -> Result<MseDecomposition> {
    if estimates.len() < 2 {
        return Err(Error::domain("the MSE decomposition needs at least 2 estimates"));
    }
    let m = mean(estimates);
    Ok(MseDecomposition {
        bias_sq: (m - true_mu).powi(2),
        variance: population_variance(estimates),
        mse: estimates.iter().map(|e| (e - true_mu).powi(2)).sum::<f64>() / estimates.len() as f64,
        rho,
    })
}
