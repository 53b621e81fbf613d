//! Estimators of the expected empirical risk of a pipeline.
//!
//! [`ideal_estimate`] re-runs the hyperparameter search for every replicate, costing
//! O(k·T) fits. [`fixed_hopt_estimate`] searches once and then re-randomizes only the
//! chosen sources, costing O(k + T) fits, at the price of correlated replicates.
//!
//! Seeds: replicate `i` draws its seeds from `root.child("replicate", i)`; the
//! out-of-bootstrap split is a function of the data-split seed and the search stream a
//! function of the HOpt seed, so every replicate can be replayed from its seed map.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::measurements::{SeedMap, VarianceSource};
use crate::pipeline::PipelineAdapter;
use crate::resampling::{oob_split, RngStream, SplitSpec};
use crate::stats::{mean, sample_std};
use crate::{Error, Result};

/// Split sizes and search budget shared by all replicates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSetup {
    pub source_size: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Hyperparameter-search budget T (fits per search).
    pub budget: usize,
}

impl Default for EstimatorSetup {
    fn default() -> Self {
        Self {
            source_size: 1000,
            train_size: 1000,
            test_size: 300,
            budget: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EstimatorVariant {
    Ideal,
    /// One search, then `k` replicates re-randomizing only these sources.
    FixedHOpt(BTreeSet<VarianceSource>),
}

impl EstimatorVariant {
    pub fn fixed_init() -> Self {
        Self::FixedHOpt([VarianceSource::WeightsInit].into())
    }

    pub fn fixed_data() -> Self {
        Self::FixedHOpt([VarianceSource::DataSplit].into())
    }

    pub fn fixed_all() -> Self {
        Self::FixedHOpt(VarianceSource::training())
    }

    pub fn varied(&self) -> BTreeSet<VarianceSource> {
        match self {
            Self::Ideal => VarianceSource::ALL.into(),
            Self::FixedHOpt(v) => v.clone(),
        }
    }
}

impl fmt::Display for EstimatorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ideal => f.write_str("ideal"),
            Self::FixedHOpt(v) if *v == VarianceSource::training() => f.write_str("fixed_all"),
            Self::FixedHOpt(v) if v.is_empty() => f.write_str("fixed_none"),
            Self::FixedHOpt(v) => {
                let names: Vec<&str> = v.iter().map(|s| s.name()).collect();
                write!(f, "fixed_{}", names.join("+"))
            }
        }
    }
}

impl std::str::FromStr for EstimatorVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => return Ok(Self::Ideal),
            "fixed_all" => return Ok(Self::fixed_all()),
            "fixed_none" => return Ok(Self::FixedHOpt(BTreeSet::new())),
            _ => {}
        }
        let rest = s
            .strip_prefix("fixed_")
            .ok_or_else(|| Error::domain(format!("unknown estimator variant `{s}`")))?;
        let set = rest.split('+').map(str::parse).collect::<Result<BTreeSet<_>>>()?;
        Ok(Self::FixedHOpt(set))
    }
}

impl TryFrom<String> for EstimatorVariant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EstimatorVariant> for String {
    fn from(v: EstimatorVariant) -> Self {
        v.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub variant: String,
    pub k: usize,
    pub mean: f64,
    /// Sample standard deviation (k − 1 denominator); `None` when k = 1.
    pub std: Option<f64>,
    pub hopt_count: usize,
    pub varied: BTreeSet<VarianceSource>,
    pub per_replicate_risks: Vec<f64>,
    /// Seeds of every replicate, for replay.
    pub replicate_seeds: Vec<SeedMap>,
}

impl EstimatorReport {
    fn new(variant: String, varied: BTreeSet<VarianceSource>, hopt_count: usize, reps: Vec<(f64, SeedMap)>) -> Self {
        let (risks, seeds): (Vec<f64>, Vec<SeedMap>) = reps.into_iter().unzip();
        Self {
            variant,
            k: risks.len(),
            mean: mean(&risks),
            std: sample_std(&risks),
            hopt_count,
            varied,
            per_replicate_risks: risks,
            replicate_seeds: seeds,
        }
    }
}

/// Draws one seed per variance source from `stream`.
pub fn draw_seeds(stream: &RngStream) -> SeedMap {
    VarianceSource::ALL
        .iter()
        .map(|s| (*s, stream.child("seed", s.index()).seed()))
        .collect()
}

/// The out-of-bootstrap split determined by a seed map's data-split seed.
pub fn split_for(seeds: &SeedMap, setup: &EstimatorSetup) -> Result<SplitSpec> {
    let mut s = RngStream::derive(seeds[&VarianceSource::DataSplit], &[("oob", 0)]);
    oob_split(setup.source_size, setup.train_size, setup.test_size, None, &mut s)
}

fn hopt_stream(seeds: &SeedMap) -> RngStream {
    RngStream::derive(seeds[&VarianceSource::HOpt], &[("hopt", 0)])
}

fn check(k: usize, setup: &EstimatorSetup) -> Result<()> {
    if k == 0 {
        return Err(Error::domain("estimators need k >= 1"));
    }
    if setup.budget == 0 {
        return Err(Error::domain("search budget T must be >= 1"));
    }
    Ok(())
}

fn wrap(replicate: usize, seeds: &SeedMap) -> impl FnOnce(Error) -> Error + '_ {
    move |e| Error::Replicate {
        replicate,
        seeds: seeds.clone(),
        source: Box::new(e),
    }
}

/// Ideal estimator: each of the `k` replicates draws fresh seeds, a fresh split, runs
/// its own search and then one fit. Replicates run in parallel; results do not depend
/// on the number of workers.
pub fn ideal_estimate<P: PipelineAdapter + ?Sized>(
    pipeline: &P,
    setup: &EstimatorSetup,
    k: usize,
    root: &RngStream,
) -> Result<EstimatorReport> {
    check(k, setup)?;
    let reps = (1..=k)
        .into_par_iter()
        .map(|i| {
            let seeds = draw_seeds(&root.child("replicate", i as u64));
            let run = || -> Result<f64> {
                let split = split_for(&seeds, setup)?;
                let params = pipeline.hopt(&split, &seeds, setup.budget, &mut hopt_stream(&seeds))?;
                pipeline.train_eval(&split, &params, &seeds)
            };
            let risk = run().map_err(wrap(i, &seeds))?;
            Ok((risk, seeds))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimatorReport::new(
        EstimatorVariant::Ideal.to_string(),
        VarianceSource::ALL.into(),
        k,
        reps,
    ))
}

/// Biased estimator: one search on an initial split, then `k` replicates that redraw
/// only the sources in `varied`; other sources keep their initial seeds (so without
/// `DataSplit` in `varied`, every replicate reuses the search split).
pub fn fixed_hopt_estimate<P: PipelineAdapter + ?Sized>(
    pipeline: &P,
    setup: &EstimatorSetup,
    k: usize,
    varied: &BTreeSet<VarianceSource>,
    root: &RngStream,
) -> Result<EstimatorReport> {
    check(k, setup)?;
    if varied.contains(&VarianceSource::HOpt) {
        return Err(Error::domain("the fixed-search estimator cannot vary the HOpt source"));
    }
    let initial = draw_seeds(&root.child("initial", 0));
    let params = (|| {
        let split = split_for(&initial, setup)?;
        pipeline.hopt(&split, &initial, setup.budget, &mut hopt_stream(&initial))
    })()
    .map_err(wrap(0, &initial))?;

    let reps = (1..=k)
        .into_par_iter()
        .map(|i| {
            let fresh = draw_seeds(&root.child("replicate", i as u64));
            let mut seeds = initial.clone();
            for s in varied {
                seeds.insert(*s, fresh[s]);
            }
            let risk = split_for(&seeds, setup)
                .and_then(|split| pipeline.train_eval(&split, &params, &seeds))
                .map_err(wrap(i, &seeds))?;
            Ok((risk, seeds))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimatorReport::new(
        EstimatorVariant::FixedHOpt(varied.clone()).to_string(),
        varied.clone(),
        1,
        reps,
    ))
}

pub fn run_variant<P: PipelineAdapter + ?Sized>(
    pipeline: &P,
    setup: &EstimatorSetup,
    variant: &EstimatorVariant,
    k: usize,
    root: &RngStream,
) -> Result<EstimatorReport> {
    match variant {
        EstimatorVariant::Ideal => ideal_estimate(pipeline, setup, k, root),
        EstimatorVariant::FixedHOpt(v) => fixed_hopt_estimate(pipeline, setup, k, v, root),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyRow {
    pub variant: String,
    pub k: usize,
    pub repetitions: usize,
    /// Mean of the estimator over repetitions.
    pub mean: f64,
    /// Standard deviation of the estimator over repetitions.
    pub std_error: f64,
    /// std_error ± its approximate sd, std/√(2(R − 1)) for R normal values.
    pub band_lower: f64,
    pub band_upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    /// Per variant, the repetitions × k_max matrix of replicate risks.
    #[serde(skip)]
    pub risks: BTreeMap<String, Vec<Vec<f64>>>,
}

impl StudyTable {
    pub fn row(&self, variant: &str, k: usize) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.variant == variant && r.k == k)
    }

    /// Plot-ready CSV, one row per (variant, k).
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Measures how the spread of each estimator shrinks with `k`.
///
/// Every repetition runs each variant once with `k = max(k_grid)` and reads the
/// estimator at smaller `k` from the prefix of its replicates. Repetition `r` uses
/// `root.child("repetition", r)` for every variant, so variants share random numbers.
pub fn estimator_study<P: PipelineAdapter + ?Sized>(
    pipeline: &P,
    setup: &EstimatorSetup,
    k_grid: &[usize],
    repetitions: usize,
    variants: &[EstimatorVariant],
    root: &RngStream,
) -> Result<StudyTable> {
    if repetitions < 2 {
        return Err(Error::domain("an estimator study needs at least 2 repetitions"));
    }
    let k_max = *k_grid.iter().max().ok_or_else(|| Error::domain("empty k grid"))?;
    if k_grid.contains(&0) {
        return Err(Error::domain("k values must be >= 1"));
    }
    let mut rows = Vec::new();
    let mut risks = BTreeMap::new();
    for variant in variants {
        let matrix = (0..repetitions)
            .into_par_iter()
            .map(|r| {
                run_variant(pipeline, setup, variant, k_max, &root.child("repetition", r as u64))
                    .map(|rep| rep.per_replicate_risks)
            })
            .collect::<Result<Vec<_>>>()?;
        for &k in k_grid {
            let means: Vec<f64> = matrix.iter().map(|row| mean(&row[..k])).collect();
            let sd = sample_std(&means).unwrap_or(0.0);
            let band = sd / (2.0 * (repetitions - 1) as f64).sqrt();
            rows.push(StudyRow {
                variant: variant.to_string(),
                k,
                repetitions,
                mean: mean(&means),
                std_error: sd,
                band_lower: sd - band,
                band_upper: sd + band,
            });
        }
        risks.insert(variant.to_string(), matrix);
    }
    Ok(StudyTable { rows, risks })
}
