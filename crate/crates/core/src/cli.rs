//! The `varbench` command line.
//!
//! Each command prints a short human-readable summary to stdout and, with `--out`,
//! writes its machine-readable result as CSV (preceded by `#` header lines) or as a
//! JSON record document. Both forms echo the tool version, command, configuration and
//! root seed. Stochastic commands require a seed, from `--seed` or the experiment
//! file, and their output does not depend on `--workers`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::comparison::{compare_pab, ComparisonConfig, TiePolicy};
use crate::estimators::{draw_seeds, estimator_study, split_for, EstimatorSetup, EstimatorVariant};
use crate::hpo::{run_hopt, SearchMethod};
use crate::measurements::{load_scores_path, pair_scores, Polarity, Schema, VarianceSource};
use crate::resampling::RngStream;
use crate::simulate::{detection_rates, robustness_sweep, Region, SimulationConfig};
use crate::stats::{mean, sample_std};
use crate::synthpipe::{SyntheticPipeline, SyntheticPipelineConfig};
use crate::variance::{
    binomial_sd, decompose_variance, estimate_rho, mse_decompose, write_variance_csv, VarianceTable,
};
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "varbench", version, about = "Variance-aware benchmark comparisons")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Root seed of every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Where to write the machine-readable output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Form of the `--out` file.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Records,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare two algorithms with the P(A>B) test.
    Compare(CompareArgs),
    /// Minimum number of paired runs for the P(A>B) test.
    SampleSize(SampleSizeArgs),
    /// Detection rates of decision criteria on simulated benchmarks.
    Simulate(SimulateArgs),
    /// Estimator study on the synthetic pipeline.
    Estimate(EstimateArgs),
    /// Variance of scores by randomized source.
    Variance(VarianceArgs),
    /// Standard deviation of a test-set accuracy.
    BinomialSd(BinomialSdArgs),
    /// One hyperparameter search on the synthetic pipeline.
    HpoDemo(HpoDemoArgs),
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Scores file (.csv, or .json records); defaults to the experiment file's.
    pub scores: Option<PathBuf>,
    /// Experiment file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Algorithm A; defaults to the first algorithm in the file.
    #[arg(long)]
    pub a: Option<String>,
    /// Algorithm B; defaults to the second algorithm in the file.
    #[arg(long)]
    pub b: Option<String>,
    /// Restrict to one task when the file holds several.
    #[arg(long)]
    pub task: Option<String>,
    /// Meaningfulness threshold on P(A>B) [default: 0.75].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Significance level [default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bootstrap resamples [default: 1000].
    #[arg(long = "bootstrap-k", alias = "bootstrap-K")]
    pub bootstrap_k: Option<usize>,
    /// Confidence level of the interval [default: 0.95].
    #[arg(long)]
    pub ci_level: Option<f64>,
    /// `half` (ties count one half) or `strict`.
    #[arg(long, value_parser = parse_tie_policy)]
    pub tie_policy: Option<TiePolicy>,
    /// Sources whose seeds match A and B runs, comma separated; empty pairs by replicate.
    #[arg(long, value_delimiter = ',')]
    pub pair_on: Option<Vec<VarianceSource>>,
    /// `higher` or `lower` is better.
    #[arg(long, value_parser = parse_polarity)]
    pub polarity: Option<Polarity>,
}

#[derive(Debug, Args)]
pub struct SampleSizeArgs {
    /// Meaningfulness threshold on P(A>B).
    #[arg(long, default_value_t = 0.75)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Type II error rate, one minus the power.
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment file (TOML) with `[simulation]` and `[sweep]` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Simulated benchmarks per grid point.
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Runs per algorithm in each simulated benchmark.
    #[arg(long)]
    pub k: Option<usize>,
    /// Run the sample-size and γ sweeps instead of the detection-rate curves.
    #[arg(long)]
    pub sweep: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Experiment file (TOML) with `[synthpipe]` and `[estimate]` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Independent repetitions of each estimator.
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Replicate counts k, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub k_grid: Option<Vec<usize>>,
    /// Estimators: ideal, fixed_all, fixed_data, fixed_init, fixed_<src>+<src>.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<EstimatorVariant>>,
    /// Hyperparameter search budget T.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VarianceArgs {
    /// Scores file with one randomized source per study.
    pub scores: Option<PathBuf>,
    /// Experiment file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Source whose variance normalizes the ratios.
    #[arg(long, default_value = "data")]
    pub reference: VarianceSource,
    /// Bootstrap resamples for per-source intervals (needs a seed).
    #[arg(long)]
    pub ci_resamples: Option<usize>,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
}

#[derive(Debug, Args)]
pub struct BinomialSdArgs {
    /// True accuracy.
    #[arg(long)]
    pub tau: f64,
    /// Test-set size.
    #[arg(long)]
    pub n_test: u64,
    /// Also estimate the sd from this many simulated test sets (needs a seed).
    #[arg(long)]
    pub monte_carlo: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HpoDemoArgs {
    /// Experiment file (TOML) with a `[synthpipe]` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// grid, noisy_grid or random; defaults to the pipeline's method.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<SearchMethod>,
    /// Number of candidates evaluated.
    #[arg(long, default_value_t = 50)]
    pub budget: usize,
}

fn parse_tie_policy(s: &str) -> std::result::Result<TiePolicy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<SearchMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_polarity(s: &str) -> std::result::Result<Polarity, String> {
    match s {
        "higher" => Ok(Polarity::HigherIsBetter),
        "lower" => Ok(Polarity::LowerIsBetter),
        _ => Err(format!("polarity must be `higher` or `lower`, got `{s}`")),
    }
}

/// Structured experiment description; unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub seed: Option<u64>,
    pub scores: Option<ScoresSection>,
    #[serde(default)]
    pub comparison: ComparisonConfig,
    #[serde(default)]
    pub synthpipe: SyntheticPipelineConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub estimate: EstimateSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoresSection {
    /// Relative paths resolve against the experiment file's directory.
    pub path: PathBuf,
    #[serde(default)]
    pub pair_on: Vec<VarianceSource>,
    #[serde(default)]
    pub polarity: Polarity,
    pub a: Option<String>,
    pub b: Option<String>,
    pub task: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub sample_sizes: Vec<usize>,
    pub gammas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            sample_sizes: vec![5, 10, 20, 30, 50, 100],
            gammas: vec![0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.9],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub setup: EstimatorSetup,
    pub k_grid: Vec<usize>,
    pub repetitions: usize,
    pub variants: Vec<EstimatorVariant>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            setup: EstimatorSetup::default(),
            k_grid: vec![1, 2, 5, 10, 20, 50, 100],
            repetitions: 50,
            variants: vec![
                EstimatorVariant::Ideal,
                EstimatorVariant::fixed_all(),
                EstimatorVariant::fixed_data(),
                EstimatorVariant::fixed_init(),
            ],
        }
    }
}

impl ExperimentFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut exp: ExperimentFile =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let (Some(s), Some(dir)) = (exp.scores.as_mut(), path.parent()) {
            if s.path.is_relative() {
                s.path = dir.join(&s.path);
            }
        }
        Ok(exp)
    }

    fn load_opt(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// Failures split by exit code: 2 for usage, 1 for everything else.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct Header<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: Option<u64>,
    config: Value,
}

/// A finished command: its summary and machine-readable forms.
struct Output {
    summary: String,
    csv: Vec<u8>,
    records: Value,
}

fn require_seed(command: &str, flag: Option<u64>, file: Option<u64>) -> CliResult<u64> {
    flag.or(file).ok_or_else(|| {
        CliError::Usage(format!(
            "`{command}` is stochastic: pass --seed or set `seed` in the experiment file"
        ))
    })
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn render(header: &Header, out: &Output, format: OutputFormat) -> Result<Vec<u8>> {
    match format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            writeln!(buf, "# {} {}", header.tool, header.version)?;
            writeln!(buf, "# command: {}", header.command)?;
            match header.seed {
                Some(s) => writeln!(buf, "# seed: {s}")?,
                None => writeln!(buf, "# seed: none")?,
            }
            writeln!(buf, "# config: {}", serde_json::to_string(&header.config)?)?;
            buf.extend_from_slice(&out.csv);
            Ok(buf)
        }
        OutputFormat::Records => {
            let mut s = serde_json::to_string_pretty(&json!({ "header": header, "data": out.records }))?;
            s.push('\n');
            Ok(s.into_bytes())
        }
    }
}

/// Runs a parsed command line, printing the summary to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    let workers = cli.common.workers.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))?;
    let common = &cli.common;
    let (name, seed, config, output) = pool.install(|| dispatch(&cli.command, common))?;
    let header = Header {
        tool: "varbench",
        version: VERSION,
        command: name,
        seed,
        config,
    };
    stdout.write_all(output.summary.as_bytes()).map_err(Error::from)?;
    if let Some(path) = &common.out {
        let bytes = render(&header, &output, common.format)?;
        fs::write(path, bytes).map_err(Error::from)?;
    }
    Ok(())
}

type Dispatched = (&'static str, Option<u64>, Value, Output);

fn dispatch(command: &Command, common: &Common) -> CliResult<Dispatched> {
    match command {
        Command::Compare(a) => cmd_compare(a, common),
        Command::SampleSize(a) => cmd_sample_size(a),
        Command::Simulate(a) => cmd_simulate(a, common),
        Command::Estimate(a) => cmd_estimate(a, common),
        Command::Variance(a) => cmd_variance(a, common),
        Command::BinomialSd(a) => cmd_binomial_sd(a, common),
        Command::HpoDemo(a) => cmd_hpo_demo(a, common),
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn cmd_compare(args: &CompareArgs, common: &Common) -> CliResult<Dispatched> {
    let exp = ExperimentFile::load_opt(args.config.as_deref())?;
    let seed = require_seed("compare", common.seed, exp.seed)?;
    let section = exp.scores.as_ref();
    let path = args
        .scores
        .clone()
        .or_else(|| section.map(|s| s.path.clone()))
        .ok_or_else(|| CliError::Usage("no scores file given".into()))?;
    let mut cfg = exp.comparison;
    cfg.gamma = args.gamma.unwrap_or(cfg.gamma);
    cfg.alpha = args.alpha.unwrap_or(cfg.alpha);
    cfg.bootstrap_resamples = args.bootstrap_k.unwrap_or(cfg.bootstrap_resamples);
    cfg.ci_level = args.ci_level.unwrap_or(cfg.ci_level);
    cfg.tie_policy = args.tie_policy.unwrap_or(cfg.tie_policy);
    cfg.validate()?;

    let polarity = args
        .polarity
        .or(section.map(|s| s.polarity))
        .unwrap_or_default();
    let schema = Schema {
        polarity,
        ..Schema::default()
    };
    let set = load_scores_path(&path, &schema)?;
    let algorithms = set.algorithms();
    let pick = |flag: &Option<String>, file: Option<&String>, i: usize| -> CliResult<String> {
        flag.clone()
            .or_else(|| file.cloned())
            .or_else(|| algorithms.get(i).map(|s| s.to_string()))
            .ok_or_else(|| CliError::Usage(format!("the scores file has fewer than {} algorithms", i + 1)))
    };
    let a = pick(&args.a, section.and_then(|s| s.a.as_ref()), 0)?;
    let b = pick(&args.b, section.and_then(|s| s.b.as_ref()), 1)?;
    if a == b {
        return Err(CliError::Usage(format!("A and B are both `{a}`")));
    }
    let task = args.task.clone().or_else(|| section.and_then(|s| s.task.clone()));
    let pair_on: BTreeSet<VarianceSource> = match &args.pair_on {
        Some(v) => v.iter().copied().collect(),
        None => section.map(|s| s.pair_on.iter().copied().collect()).unwrap_or_default(),
    };
    let ra = set.select(task.as_deref(), &a);
    let rb = set.select(task.as_deref(), &b);
    if ra.is_empty() || rb.is_empty() {
        let missing = if ra.is_empty() { &a } else { &b };
        return Err(Error::InvalidScores(format!("no records for algorithm `{missing}`")).into());
    }
    let pairs = pair_scores(&ra, &rb, &pair_on, set.polarity())?;
    let decision = compare_pab(&pairs, &cfg, &RngStream::derive(seed, &[("compare", 0)]))?;

    let summary = format!(
        "{a} vs {b}: P(A>B) = {:.4}, {:.0}% CI [{:.4}, {:.4}], k = {}\nverdict: {}\n",
        decision.p_a_gt_b,
        100.0 * decision.ci.level,
        decision.ci.lower,
        decision.ci.upper,
        decision.k,
        decision.verdict
    );
    #[derive(Serialize)]
    struct Row<'a> {
        a: &'a str,
        b: &'a str,
        k: usize,
        p_a_gt_b: f64,
        ci_lower: f64,
        ci_upper: f64,
        ci_level: f64,
        resamples: usize,
        gamma: f64,
        verdict: crate::comparison::Verdict,
    }
    let csv = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.serialize(Row {
            a: &a,
            b: &b,
            k: decision.k,
            p_a_gt_b: decision.p_a_gt_b,
            ci_lower: decision.ci.lower,
            ci_upper: decision.ci.upper,
            ci_level: decision.ci.level,
            resamples: decision.ci.resamples,
            gamma: cfg.gamma,
            verdict: decision.verdict,
        })?;
        w.flush()?;
        Ok(())
    })?;
    let config = json!({
        "scores": path.file_name().map(|f| f.to_string_lossy().into_owned()),
        "a": a, "b": b, "task": task,
        "pair_on": pair_on,
        "polarity": set.polarity(),
        "comparison": cfg,
    });
    let records = json!({ "a": a, "b": b, "decision": decision });
    Ok(("compare", Some(seed), config, Output { summary, csv, records }))
}

/// Above this many runs the sample size is flagged as impractical.
const LARGE_SAMPLE: u64 = 200;

fn cmd_sample_size(args: &SampleSizeArgs) -> CliResult<Dispatched> {
    let n = crate::comparison::noether_sample_size(args.gamma, args.alpha, args.beta)?;
    if n > LARGE_SAMPLE {
        log::warn!(
            "gamma = {} needs {n} paired runs; thresholds this close to 0.5 are rarely affordable",
            args.gamma
        );
    }
    let csv = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["gamma", "alpha", "beta", "sample_size"])?;
        w.write_record([args.gamma.to_string(), args.alpha.to_string(), args.beta.to_string(), n.to_string()])?;
        w.flush()?;
        Ok(())
    })?;
    let config = json!({ "gamma": args.gamma, "alpha": args.alpha, "beta": args.beta });
    let records = json!({ "sample_size": n });
    Ok(("sample-size", None, config, Output { summary: format!("{n}\n"), csv, records }))
}

fn cmd_simulate(args: &SimulateArgs, common: &Common) -> CliResult<Dispatched> {
    let exp = ExperimentFile::load_opt(args.config.as_deref())?;
    let seed = require_seed("simulate", common.seed, exp.seed)?;
    let mut cfg = exp.simulation;
    cfg.repetitions = args.repetitions.unwrap_or(cfg.repetitions);
    cfg.k = args.k.unwrap_or(cfg.k);
    let root = RngStream::new(seed);
    if args.sweep {
        let curves = robustness_sweep(&cfg, &exp.sweep.sample_sizes, &exp.sweep.gammas, &root)?;
        let mut summary = String::from("rate by sample size (gamma fixed):\n");
        for p in &curves.by_sample_size {
            summary += &format!(
                "  {:<6} {:<13} P(A>B)={:<5} n={:<4} {:.3}\n",
                p.estimator, p.criterion, p.true_pab, p.sample_size, p.rate
            );
        }
        let csv = csv_bytes(|buf| curves.write_csv(buf))?;
        let config = json!({ "simulation": cfg, "sweep": exp.sweep });
        return Ok(("simulate", Some(seed), config, Output { summary, csv, records: to_json(&curves)? }));
    }
    let curves = detection_rates(&cfg, &root)?;
    let mut summary = format!(
        "detection rates, k = {}, {} repetitions per point\n{:<7} {:<14} {}\n",
        cfg.k,
        cfg.repetitions,
        "",
        "",
        cfg.pab_grid.iter().map(|p| format!("{p:>6.2}")).collect::<String>()
    );
    for &e in &cfg.estimators {
        for &c in &cfg.criteria {
            let row: String = cfg
                .pab_grid
                .iter()
                .map(|p| format!("{:>6.3}", curves.rate(e, c, *p).unwrap_or(f64::NAN)))
                .collect();
            summary += &format!("{:<7} {:<14} {row}\n", e.name(), c.name());
        }
    }
    for &e in &cfg.estimators {
        for &c in &cfg.criteria {
            if let (Some(fp), Some(tp)) = (
                curves.region_mean(e, c, Region::H0),
                curves.region_mean(e, c, Region::H1),
            ) {
                summary += &format!(
                    "{:<7} {:<14} mean rate in H0 {:.3}, mean false negatives in H1 {:.3}\n",
                    e.name(),
                    c.name(),
                    fp,
                    1.0 - tp
                );
            }
        }
    }
    let csv = csv_bytes(|buf| curves.write_csv(buf))?;
    let config = json!({ "simulation": cfg });
    Ok(("simulate", Some(seed), config, Output { summary, csv, records: to_json(&curves)? }))
}

fn cmd_estimate(args: &EstimateArgs, common: &Common) -> CliResult<Dispatched> {
    let exp = ExperimentFile::load_opt(args.config.as_deref())?;
    let seed = require_seed("estimate", common.seed, exp.seed)?;
    let mut est = exp.estimate;
    est.repetitions = args.repetitions.unwrap_or(est.repetitions);
    if let Some(k) = &args.k_grid {
        est.k_grid = k.clone();
    }
    if let Some(v) = &args.variants {
        est.variants = v.clone();
    }
    est.setup.budget = args.budget.unwrap_or(est.setup.budget);
    let pipeline = SyntheticPipeline::new(exp.synthpipe.clone())?;
    let table = estimator_study(
        &pipeline,
        &est.setup,
        &est.k_grid,
        est.repetitions,
        &est.variants,
        &RngStream::new(seed),
    )?;

    let k_max = est.k_grid.iter().copied().max().unwrap_or(1);
    // Reference value for the MSE split: the grand mean of the ideal estimator.
    let mu_ref = table
        .risks
        .get(&EstimatorVariant::Ideal.to_string())
        .map(|m| mean(&m.iter().flatten().copied().collect::<Vec<_>>()));
    let mut summary = format!(
        "estimator study, {} repetitions, search budget {}\n{:<24} {:>5} {:>12} {:>12}\n",
        est.repetitions, est.setup.budget, "variant", "k", "mean", "std_error"
    );
    for r in &table.rows {
        summary += &format!("{:<24} {:>5} {:>12.6} {:>12.6}\n", r.variant, r.k, r.mean, r.std_error);
    }
    let mut extra = BTreeMap::new();
    for (variant, matrix) in &table.risks {
        let rho = if k_max >= 2 { estimate_rho(matrix).ok() } else { None };
        let means: Vec<f64> = matrix.iter().map(|row| mean(row)).collect();
        let mse = match (mu_ref, rho) {
            (Some(mu), Some(rho)) => Some(mse_decompose(&means, mu, rho)?),
            _ => None,
        };
        if let Some(m) = &mse {
            summary += &format!(
                "{variant:<24} k = {k_max}: rho {:.3}, bias² {:.3e}, variance {:.3e}, mse {:.3e}\n",
                m.rho, m.bias_sq, m.variance, m.mse
            );
        }
        extra.insert(variant.clone(), json!({ "rho": rho, "mse": mse, "std_at_k_max": sample_std(&means) }));
    }
    let csv = csv_bytes(|buf| table.write_csv(buf))?;
    let config = json!({ "estimate": est, "synthpipe": exp.synthpipe });
    let records = json!({ "rows": table.rows, "k_max": k_max, "by_variant": extra });
    Ok(("estimate", Some(seed), config, Output { summary, csv, records }))
}

fn cmd_variance(args: &VarianceArgs, common: &Common) -> CliResult<Dispatched> {
    let exp = ExperimentFile::load_opt(args.config.as_deref())?;
    let path = args
        .scores
        .clone()
        .or_else(|| exp.scores.as_ref().map(|s| s.path.clone()))
        .ok_or_else(|| CliError::Usage("no scores file given".into()))?;
    let seed = match args.ci_resamples {
        Some(_) => Some(require_seed("variance --ci-resamples", common.seed, exp.seed)?),
        None => common.seed.or(exp.seed),
    };
    let set = load_scores_path(&path, &Schema::default())?;
    let mut tables = decompose_variance(&set, args.reference)?;
    if let (Some(k), Some(seed)) = (args.ci_resamples, seed) {
        let root = RngStream::derive(seed, &[("variance", 0)]);
        for (i, t) in tables.values_mut().enumerate() {
            t.add_bootstrap_cis(args.ci_level, k, &root.child("group", i as u64))?;
        }
    }
    let mut summary = String::new();
    for (key, t) in &tables {
        summary += &format!("{key} (ratios relative to {}):\n", t.reference);
        let ratios = t.ratios().unwrap_or_default();
        for (s, v) in &t.per_source {
            summary += &format!(
                "  {:<10} runs {:>4}  std {:.6}  ratio {}\n",
                s.name(),
                v.runs,
                v.variance.sqrt(),
                ratios.get(s).map_or("n/a".to_string(), |r| format!("{r:.3}"))
            );
        }
    }
    let csv = csv_bytes(|buf| write_variance_csv(&tables, buf))?;
    #[derive(Serialize)]
    struct Group<'a> {
        task: &'a str,
        algorithm: &'a str,
        table: &'a VarianceTable,
    }
    let groups: Vec<Group> = tables
        .iter()
        .map(|(k, t)| Group {
            task: &k.task,
            algorithm: &k.algorithm,
            table: t,
        })
        .collect();
    let config = json!({
        "scores": path.file_name().map(|f| f.to_string_lossy().into_owned()),
        "reference": args.reference,
        "ci_resamples": args.ci_resamples,
        "ci_level": args.ci_level,
    });
    Ok(("variance", seed, config, Output { summary, csv, records: to_json(&groups)? }))
}

fn cmd_binomial_sd(args: &BinomialSdArgs, common: &Common) -> CliResult<Dispatched> {
    let sd = binomial_sd(args.tau, args.n_test)?;
    let mut summary = format!("{sd:.6}\n");
    let (seed, mc_sd) = match args.monte_carlo {
        Some(draws) => {
            let seed = require_seed("binomial-sd --monte-carlo", common.seed, None)?;
            if draws < 2 {
                return Err(Error::domain("--monte-carlo needs at least 2 draws").into());
            }
            let mut s = RngStream::derive(seed, &[("binomial-sd", 0)]);
            let dist = rand_distr::Binomial::new(args.n_test, args.tau).map_err(|e| Error::domain(e.to_string()))?;
            let accs: Vec<f64> = (0..draws)
                .map(|_| rand_distr::Distribution::sample(&dist, &mut s) as f64 / args.n_test as f64)
                .collect();
            let mc = sample_std(&accs).unwrap_or(0.0);
            summary += &format!("monte-carlo over {draws} test sets: {mc:.6}\n");
            (Some(seed), Some(mc))
        }
        None => (None, None),
    };
    let csv = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["tau", "n_test", "sd", "monte_carlo_draws", "monte_carlo_sd"])?;
        w.write_record([
            args.tau.to_string(),
            args.n_test.to_string(),
            sd.to_string(),
            args.monte_carlo.map_or(String::new(), |d| d.to_string()),
            mc_sd.map_or(String::new(), |v| v.to_string()),
        ])?;
        w.flush()?;
        Ok(())
    })?;
    let config = json!({ "tau": args.tau, "n_test": args.n_test, "monte_carlo": args.monte_carlo });
    let records = json!({ "sd": sd, "monte_carlo_sd": mc_sd });
    Ok(("binomial-sd", seed, config, Output { summary, csv, records }))
}

fn cmd_hpo_demo(args: &HpoDemoArgs, common: &Common) -> CliResult<Dispatched> {
    let exp = ExperimentFile::load_opt(args.config.as_deref())?;
    let seed = require_seed("hpo-demo", common.seed, exp.seed)?;
    let mut cfg = exp.synthpipe;
    cfg.method = args.method.unwrap_or(cfg.method);
    let pipeline = SyntheticPipeline::new(cfg.clone())?;
    let root = RngStream::new(seed);
    let seeds = draw_seeds(&root.child("demo", 0));
    let split = split_for(&seeds, &exp.estimate.setup)?;
    let mut stream = RngStream::derive(seeds[&VarianceSource::HOpt], &[("hopt", 0)]);
    let run = run_hopt(&pipeline, &cfg.space, cfg.method, args.budget, &split, &seeds, &mut stream)?;
    // The noise-free risk stands in for a held-out test risk.
    let test: Vec<f64> = run
        .trials
        .iter()
        .map(|t| cfg.expected_risk(&t.params))
        .collect::<Result<_>>()?;
    let summary = format!(
        "{} trials with {:?} search; best {} (validation risk {:.6}, noise-free risk {:.6})\n",
        run.trials.len(),
        cfg.method,
        run.best(),
        run.best_risk(),
        test[run.best_index]
    );
    let csv = csv_bytes(|buf| run.write_csv(&cfg.space, Some(&test), buf))?;
    let config = json!({ "synthpipe": cfg, "budget": args.budget, "setup": exp.estimate.setup });
    let records = json!({ "run": run, "test_risks": test });
    Ok(("hpo-demo", Some(seed), config, Output { summary, csv, records }))
}
