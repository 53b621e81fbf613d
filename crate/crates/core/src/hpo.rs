//! Search spaces, the grid / noisy-grid / random samplers, and a single-split search
//! driver.
//!
//! Log-scaled dimensions are handled in log10 coordinates throughout: grid spacing,
//! noisy-grid perturbations and random draws all happen there and are mapped back.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::measurements::SeedMap;
use crate::pipeline::PipelineAdapter;
use crate::resampling::{RngStream, SplitSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log10,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub scale: Scale,
}

impl Dimension {
    pub fn linear(name: &str, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            scale: Scale::Linear,
        }
    }

    pub fn log10(name: &str, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            scale: Scale::Log10,
        }
    }

    /// Maps a value into search coordinates (log10 for log dims).
    pub fn to_search(&self, x: f64) -> f64 {
        match self.scale {
            Scale::Linear => x,
            Scale::Log10 => x.log10(),
        }
    }

    pub fn from_search(&self, u: f64) -> f64 {
        match self.scale {
            Scale::Linear => u,
            Scale::Log10 => 10f64.powf(u),
        }
    }

    fn search_bounds(&self) -> (f64, f64) {
        (self.to_search(self.lower), self.to_search(self.upper))
    }

    /// Grid step Δ in search coordinates for `n` values per dimension.
    pub fn step(&self, n: usize) -> f64 {
        let (a, b) = self.search_bounds();
        (b - a) / (n - 1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dimension>", into = "Vec<Dimension>")]
pub struct SearchSpace {
    dims: Vec<Dimension>,
}

impl TryFrom<Vec<Dimension>> for SearchSpace {
    type Error = Error;

    fn try_from(dims: Vec<Dimension>) -> Result<Self> {
        Self::new(dims)
    }
}

impl From<SearchSpace> for Vec<Dimension> {
    fn from(s: SearchSpace) -> Self {
        s.dims
    }
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::domain("search space has no dimensions"));
        }
        for (i, d) in dims.iter().enumerate() {
            if !(d.lower < d.upper) || !d.lower.is_finite() || !d.upper.is_finite() {
                return Err(Error::domain(format!(
                    "dimension `{}` needs lower < upper, got [{}, {}]",
                    d.name, d.lower, d.upper
                )));
            }
            if d.scale == Scale::Log10 && d.lower <= 0.0 {
                return Err(Error::domain(format!("log dimension `{}` needs a positive lower bound", d.name)));
            }
            if dims[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::domain(format!("dimension `{}` appears twice", d.name)));
            }
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn dim(&self, name: &str) -> Option<&Dimension> {
        self.dims.iter().find(|d| d.name == name)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperParams(pub BTreeMap<String, f64>);

impl HyperParams {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_owned(), value);
    }
}

impl FromIterator<(String, f64)> for HyperParams {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(", "))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Grid,
    NoisyGrid,
    #[default]
    Random,
    /// Reserved; model-based search is not provided.
    Bayesian,
}

impl std::str::FromStr for SearchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(SearchMethod::Grid),
            "noisy_grid" | "noisy-grid" => Ok(SearchMethod::NoisyGrid),
            "random" => Ok(SearchMethod::Random),
            "bayesian" => Ok(SearchMethod::Bayesian),
            o => Err(Error::domain(format!("unknown search method `{o}`"))),
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::domain(format!("grids need at least 2 values per dimension, got {n}")));
    }
    Ok(())
}

// Cartesian product of per-dimension coordinates (search space), first dim slowest.
fn product(space: &SearchSpace, axes: &[Vec<f64>]) -> Vec<HyperParams> {
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    let mut counters = vec![0usize; axes.len()];
    for _ in 0..total {
        out.push(
            space
                .dims
                .iter()
                .zip(axes)
                .zip(&counters)
                .map(|((d, axis), &j)| (d.name.clone(), d.from_search(axis[j])))
                .collect(),
        );
        for k in (0..axes.len()).rev() {
            counters[k] += 1;
            if counters[k] < axes[k].len() {
                break;
            }
            counters[k] = 0;
        }
    }
    out
}

fn axis(a: f64, b: f64, n: usize) -> Vec<f64> {
    let step = (b - a) / (n - 1) as f64;
    (0..n).map(|j| a + step * j as f64).collect()
}

/// Grid search candidates: `p_ij = a_i + Δ_i (j - 1)` on every dimension, all `n^d`
/// combinations.
pub fn grid_candidates(space: &SearchSpace, n: usize) -> Result<Vec<HyperParams>> {
    check_n(n)?;
    let axes: Vec<Vec<f64>> = space
        .dims
        .iter()
        .map(|d| {
            let (a, b) = d.search_bounds();
            axis(a, b, n)
        })
        .collect();
    Ok(product(space, &axes))
}

/// Noisy grid: endpoints are redrawn as `ã ~ U(a - Δ/2, a + Δ/2)` and likewise for
/// `b̃`, then the grid is rebuilt from the perturbed endpoints. Each grid point equals
/// the deterministic one in expectation.
pub fn noisy_grid_candidates(space: &SearchSpace, n: usize, stream: &mut RngStream) -> Result<Vec<HyperParams>> {
    check_n(n)?;
    let axes: Vec<Vec<f64>> = space
        .dims
        .iter()
        .map(|d| {
            let (a, b) = d.search_bounds();
            let half = d.step(n) / 2.0;
            let a_t = stream.uniform_in(a - half, a + half);
            let b_t = stream.uniform_in(b - half, b + half);
            axis(a_t, b_t, n)
        })
        .collect();
    Ok(product(space, &axes))
}

/// `budget` independent uniform points (log-uniform on log dims). With
/// `extension_n = Some(n)` each dimension is widened by `Δ/2` on both sides, Δ being
/// the step of an `n`-point grid; with `None` the box is used as is.
pub fn random_candidates(
    space: &SearchSpace,
    budget: usize,
    extension_n: Option<usize>,
    stream: &mut RngStream,
) -> Result<Vec<HyperParams>> {
    if budget == 0 {
        return Err(Error::domain("random search budget must be positive"));
    }
    if let Some(n) = extension_n {
        check_n(n)?;
    }
    let boxes: Vec<(f64, f64)> = space
        .dims
        .iter()
        .map(|d| {
            let (a, b) = d.search_bounds();
            let ext = extension_n.map_or(0.0, |n| d.step(n) / 2.0);
            (a - ext, b + ext)
        })
        .collect();
    Ok((0..budget)
        .map(|_| {
            space
                .dims
                .iter()
                .zip(&boxes)
                .map(|(d, &(lo, hi))| (d.name.clone(), d.from_search(stream.uniform_in(lo, hi))))
                .collect()
        })
        .collect())
}

/// Largest `n ≥ 2` with `n^d ≤ budget` (2 when even that exceeds the budget).
pub fn grid_size_for_budget(budget: usize, dims: usize) -> usize {
    let mut n = 2usize;
    while (n + 1).checked_pow(dims as u32).is_some_and(|c| c <= budget) {
        n += 1;
    }
    n
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trial {
    pub iteration: usize,
    pub params: HyperParams,
    pub validation_risk: f64,
    pub best_validation_risk: f64,
}

/// Outcome of one search: every evaluated candidate in order and the incumbent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoptRun {
    pub trials: Vec<Trial>,
    pub best_index: usize,
}

impl HoptRun {
    pub fn best(&self) -> &HyperParams {
        &self.trials[self.best_index].params
    }

    pub fn best_risk(&self) -> f64 {
        self.trials[self.best_index].validation_risk
    }

    /// Best-so-far trace as CSV: `iteration`, one column per dimension,
    /// `validation_risk`, `best_validation_risk`, `test_risk` (empty when not given).
    pub fn write_csv<W: Write>(&self, space: &SearchSpace, test_risks: Option<&[f64]>, out: &mut W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string()];
        header.extend(space.dims().iter().map(|d| d.name.clone()));
        header.extend(["validation_risk", "best_validation_risk", "test_risk"].map(String::from));
        w.write_record(&header)?;
        for (i, t) in self.trials.iter().enumerate() {
            let mut row = vec![t.iteration.to_string()];
            row.extend(space.dims().iter().map(|d| t.params.get(&d.name).unwrap_or(f64::NAN).to_string()));
            row.push(t.validation_risk.to_string());
            row.push(t.best_validation_risk.to_string());
            row.push(test_risks.and_then(|r| r.get(i)).map_or(String::new(), f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Generates the candidate list a method would evaluate under `budget`.
///
/// Grid and noisy grid use the largest `n` with `n^d ≤ budget`; random search draws
/// `budget` points in the box widened by half that grid's step, so that all three
/// methods cover the same region.
pub fn candidates_for_budget(
    space: &SearchSpace,
    method: SearchMethod,
    budget: usize,
    stream: &mut RngStream,
) -> Result<Vec<HyperParams>> {
    if budget == 0 {
        return Err(Error::domain("search budget must be positive"));
    }
    let n = grid_size_for_budget(budget, space.dims().len());
    let mut c = match method {
        SearchMethod::Grid => grid_candidates(space, n)?,
        SearchMethod::NoisyGrid => noisy_grid_candidates(space, n, stream)?,
        SearchMethod::Random => random_candidates(space, budget, Some(n), stream)?,
        SearchMethod::Bayesian => return Err(Error::Unsupported("Bayesian optimization")),
    };
    c.truncate(budget);
    Ok(c)
}

/// Evaluates up to `budget` candidates on one split and returns the trace; the
/// incumbent is the minimal validation risk, ties going to the earliest candidate.
pub fn run_hopt<P: PipelineAdapter + ?Sized>(
    pipeline: &P,
    space: &SearchSpace,
    method: SearchMethod,
    budget: usize,
    split: &SplitSpec,
    seeds: &SeedMap,
    stream: &mut RngStream,
) -> Result<HoptRun> {
    let candidates = candidates_for_budget(space, method, budget, stream)?;
    let mut trials = Vec::with_capacity(candidates.len());
    let mut best_index = 0;
    let mut best = f64::INFINITY;
    for (i, params) in candidates.into_iter().enumerate() {
        let risk = pipeline.train_eval(split, &params, seeds).map_err(|e| Error::Candidate {
            index: i,
            params: params.clone(),
            source: Box::new(e),
        })?;
        if risk.is_nan() {
            return Err(Error::Candidate {
                index: i,
                params,
                source: Box::new(Error::Pipeline("risk is NaN".into())),
            });
        }
        if risk < best {
            best = risk;
            best_index = i;
        }
        trials.push(Trial {
            iteration: i + 1,
            params,
            validation_risk: risk,
            best_validation_risk: best,
        });
    }
    Ok(HoptRun { trials, best_index })
}
