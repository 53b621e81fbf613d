//! Python module `varbench_py`: marshaling around the `varbench` core.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

use varbench::comparison::{self, ComparisonConfig, TiePolicy};
use varbench::estimators::{self, EstimatorSetup, EstimatorVariant};
use varbench::hpo::HyperParams;
use varbench::measurements::{PairedScores, Polarity, SeedMap, VarianceSource};
use varbench::resampling::{self, RngStream};
use varbench::simulate::{self as sim, SimulationConfig};
use varbench::synthpipe::{self, SyntheticPipelineConfig};
use varbench::variance;

fn err(e: varbench::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn tie(s: &str) -> PyResult<TiePolicy> {
    s.parse().map_err(err)
}

fn polarity(s: &str) -> PyResult<Polarity> {
    match s {
        "higher" => Ok(Polarity::HigherIsBetter),
        "lower" => Ok(Polarity::LowerIsBetter),
        _ => Err(PyValueError::new_err(format!("polarity must be 'higher' or 'lower', got {s:?}"))),
    }
}

fn paired(pairs: Vec<(f64, f64)>, pol: &str) -> PyResult<PairedScores> {
    PairedScores::from_values(pairs, polarity(pol)?).map_err(err)
}

/// P(A>B) test on paired scores. Same inputs and seed give the same result as
/// `varbench compare --seed`.
#[pyfunction]
#[pyo3(signature = (pairs, *, seed, gamma=0.75, alpha=0.05, bootstrap_k=1000, ci_level=0.95, tie_policy="half", polarity="higher"))]
#[allow(clippy::too_many_arguments)]
fn compare_pab<'py>(
    py: Python<'py>,
    pairs: Vec<(f64, f64)>,
    seed: u64,
    gamma: f64,
    alpha: f64,
    bootstrap_k: usize,
    ci_level: f64,
    tie_policy: &str,
    polarity: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let pairs = paired(pairs, polarity)?;
    let cfg = ComparisonConfig {
        gamma,
        alpha,
        bootstrap_resamples: bootstrap_k,
        ci_level,
        tie_policy: tie(tie_policy)?,
        ..ComparisonConfig::default()
    };
    let d = py
        .detach(|| comparison::compare_pab_seeded(&pairs, &cfg, seed))
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("p_a_gt_b", d.p_a_gt_b)?;
    out.set_item("ci_lower", d.ci.lower)?;
    out.set_item("ci_upper", d.ci.upper)?;
    out.set_item("ci_level", d.ci.level)?;
    out.set_item("resamples", d.ci.resamples)?;
    out.set_item("k", d.k)?;
    let verdict = match d.verdict {
        comparison::Verdict::NotSignificant => "not_significant",
        comparison::Verdict::SignificantNotMeaningful => "significant_not_meaningful",
        comparison::Verdict::SignificantAndMeaningful => "significant_and_meaningful",
    };
    out.set_item("verdict", verdict)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (pairs, *, tie_policy="half", polarity="higher"))]
fn prob_outperform(pairs: Vec<(f64, f64)>, tie_policy: &str, polarity: &str) -> PyResult<f64> {
    comparison::prob_outperform(&paired(pairs, polarity)?, tie(tie_policy)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (gamma=0.75, alpha=0.05, beta=0.05))]
fn noether_sample_size(gamma: f64, alpha: f64, beta: f64) -> PyResult<u64> {
    comparison::noether_sample_size(gamma, alpha, beta).map_err(err)
}

/// Percentile interval of `statistic(indices)` over `resamples` bootstrap index
/// vectors drawn from `RngStream::new(seed)`.
#[pyfunction]
#[pyo3(signature = (statistic, data_size, *, seed, resamples=1000, level=0.95))]
fn percentile_bootstrap_ci(
    statistic: Bound<'_, PyAny>,
    data_size: usize,
    seed: u64,
    resamples: usize,
    level: f64,
) -> PyResult<(f64, f64)> {
    // Python errors are recorded and re-raised after the core returns.
    let failure = std::cell::RefCell::new(None::<PyErr>);
    let stat = |idx: &[usize]| -> f64 {
        if failure.borrow().is_some() {
            return 0.0;
        }
        match statistic.call1((idx.to_vec(),)).and_then(|v| v.extract::<f64>()) {
            Ok(v) => v,
            Err(e) => {
                *failure.borrow_mut() = Some(e);
                0.0
            }
        }
    };
    let ci = resampling::percentile_bootstrap_ci(stat, data_size, resamples, level, &RngStream::new(seed));
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let ci = ci.map_err(err)?;
    Ok((ci.lower, ci.upper))
}

/// Out-of-bootstrap split; the stream is `RngStream::derive(seed, [("oob", 0)])`,
/// as in the core estimators.
#[pyfunction]
#[pyo3(signature = (source_size, n, n_test, *, seed, strata=None))]
fn oob_split<'py>(
    py: Python<'py>,
    source_size: usize,
    n: usize,
    n_test: usize,
    seed: u64,
    strata: Option<Vec<u32>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut s = RngStream::derive(seed, &[("oob", 0)]);
    let split = resampling::oob_split(source_size, n, n_test, strata.as_deref(), &mut s).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("train", split.train_indices().to_vec())?;
    out.set_item("test", split.test_indices().to_vec())?;
    out.set_item("truncated", split.truncated())?;
    Ok(out)
}

// Structured values cross the boundary as JSON, so Python sees plain dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = value.py().import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn or_default<T: DeserializeOwned + Default>(value: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    value.map(from_py).transpose().map(Option::unwrap_or_default)
}

#[pyfunction]
fn binomial_sd(tau: f64, n_test: u64) -> PyResult<f64> {
    variance::binomial_sd(tau, n_test).map_err(err)
}

#[pyfunction]
fn biased_estimator_variance(var_cond: f64, rho: f64, k: usize) -> PyResult<f64> {
    variance::biased_estimator_variance(var_cond, rho, k).map_err(err)
}

/// Detection-rate curves; `config` holds `SimulationConfig` fields, unset ones keep
/// their defaults. Streams match `varbench simulate --seed`.
#[pyfunction]
#[pyo3(signature = (*, seed, config=None))]
fn detection_rates<'py>(
    py: Python<'py>,
    seed: u64,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: SimulationConfig = or_default(config)?;
    let curves = py
        .detach(|| sim::detection_rates(&cfg, &RngStream::new(seed)))
        .map_err(err)?;
    to_py(py, &curves.points)
}

/// Estimator study on a synthetic pipeline; returns one dict per (variant, k).
#[pyfunction]
#[pyo3(signature = (*, seed, k_grid, repetitions, variants=None, setup=None, pipeline=None))]
fn estimator_study<'py>(
    py: Python<'py>,
    seed: u64,
    k_grid: Vec<usize>,
    repetitions: usize,
    variants: Option<Vec<String>>,
    setup: Option<&Bound<'py, PyAny>>,
    pipeline: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let variants: Vec<EstimatorVariant> = variants
        .unwrap_or_else(|| vec!["ideal".into(), "fixed_all".into()])
        .iter()
        .map(|v| v.parse().map_err(err))
        .collect::<PyResult<_>>()?;
    let setup: EstimatorSetup = or_default(setup)?;
    let pipe = synthpipe::SyntheticPipeline::new(or_default(pipeline)?).map_err(err)?;
    let table = py
        .detach(|| estimators::estimator_study(&pipe, &setup, &k_grid, repetitions, &variants, &RngStream::new(seed)))
        .map_err(err)?;
    to_py(py, &table.rows)
}

/// The synthetic pipeline: a quadratic risk surface plus one Gaussian perturbation
/// per seeded source.
#[pyclass(frozen)]
struct SyntheticPipeline {
    inner: synthpipe::SyntheticPipeline,
}

#[pymethods]
impl SyntheticPipeline {
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg: SyntheticPipelineConfig = or_default(config)?;
        Ok(Self {
            inner: synthpipe::SyntheticPipeline::new(cfg).map_err(err)?,
        })
    }

    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.config())
    }

    fn expected_risk(&self, params: HyperParamsArg) -> PyResult<f64> {
        self.inner.config().expected_risk(&params.0).map_err(err)
    }

    /// Risk of one fit; `seeds` maps source names (`data`, `init`, ...) to seeds.
    fn train_eval(&self, params: HyperParamsArg, seeds: &Bound<'_, PyAny>) -> PyResult<f64> {
        let seeds: SeedMap = from_py(seeds)?;
        self.inner.synth_train_eval(&params.0, &seeds).map_err(err)
    }

    /// Closed-form mean and variance of one replicate at `params` (the optimum if omitted).
    #[pyo3(signature = (params=None))]
    fn ground_truth<'py>(&self, py: Python<'py>, params: Option<HyperParamsArg>) -> PyResult<Bound<'py, PyAny>> {
        let truth = synthpipe::ground_truth(self.inner.config(), params.as_ref().map(|p| &p.0)).map_err(err)?;
        to_py(py, &truth)
    }

    #[staticmethod]
    fn sources() -> Vec<&'static str> {
        VarianceSource::ALL.iter().map(|s| s.name()).collect()
    }
}

struct HyperParamsArg(HyperParams);

impl<'a, 'py> FromPyObject<'a, 'py> for HyperParamsArg {
    type Error = PyErr;

    fn extract(obj: Borrowed<'a, 'py, PyAny>) -> PyResult<Self> {
        Ok(Self(HyperParams(obj.extract()?)))
    }
}

#[pymodule]
fn varbench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<SyntheticPipeline>()?;
    m.add_function(wrap_pyfunction!(binomial_sd, m)?)?;
    m.add_function(wrap_pyfunction!(biased_estimator_variance, m)?)?;
    m.add_function(wrap_pyfunction!(detection_rates, m)?)?;
    m.add_function(wrap_pyfunction!(estimator_study, m)?)?;
    m.add_function(wrap_pyfunction!(compare_pab, m)?)?;
    m.add_function(wrap_pyfunction!(prob_outperform, m)?)?;
    m.add_function(wrap_pyfunction!(noether_sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(percentile_bootstrap_ci, m)?)?;
    m.add_function(wrap_pyfunction!(oob_split, m)?)?;
    Ok(())
}
