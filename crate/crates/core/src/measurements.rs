//! Performance measurements with seed provenance, their ingestion, and pairing.
//!
//! Input tables are comma-separated UTF-8 with a header row. Required columns are
//! `task`, `algorithm`, `replicate` and `value`; `metric` is optional. Every column
//! named `seed_<source>` declares that source as randomized and holds its 64-bit seed
//! (`seed_data`, `seed_order`, `seed_augment`, `seed_init`, `seed_dropout`,
//! `seed_hopt`, `seed_numerical`). A source without a column was not randomized.
//!
//! The structured-record form is a JSON document, see [`ScoreSet::to_records_json`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::resampling::RngStream;
use crate::stats;
use crate::{Error, Result};

/// A source of randomness in a training and evaluation pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarianceSource {
    #[serde(rename = "data")]
    DataSplit,
    #[serde(rename = "order")]
    DataOrder,
    #[serde(rename = "augment")]
    DataAugment,
    #[serde(rename = "init")]
    WeightsInit,
    #[serde(rename = "dropout")]
    Dropout,
    #[serde(rename = "hopt")]
    HOpt,
    #[serde(rename = "numerical")]
    Numerical,
}

impl VarianceSource {
    pub const ALL: [VarianceSource; 7] = [
        VarianceSource::DataSplit,
        VarianceSource::DataOrder,
        VarianceSource::DataAugment,
        VarianceSource::WeightsInit,
        VarianceSource::Dropout,
        VarianceSource::HOpt,
        VarianceSource::Numerical,
    ];

    /// Sources of the training procedure itself (everything but HOpt).
    pub fn training() -> BTreeSet<VarianceSource> {
        Self::ALL.into_iter().filter(|s| *s != VarianceSource::HOpt).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            VarianceSource::DataSplit => "data",
            VarianceSource::DataOrder => "order",
            VarianceSource::DataAugment => "augment",
            VarianceSource::WeightsInit => "init",
            VarianceSource::Dropout => "dropout",
            VarianceSource::HOpt => "hopt",
            VarianceSource::Numerical => "numerical",
        }
    }

    pub fn index(self) -> u64 {
        Self::ALL.iter().position(|s| *s == self).unwrap() as u64
    }
}

impl fmt::Display for VarianceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VarianceSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "data" | "data_split" | "datasplit" | "split" => VarianceSource::DataSplit,
            "order" | "data_order" | "dataorder" => VarianceSource::DataOrder,
            "augment" | "data_augment" | "augmentation" => VarianceSource::DataAugment,
            "init" | "weights_init" | "weightsinit" => VarianceSource::WeightsInit,
            "dropout" => VarianceSource::Dropout,
            "hopt" | "hpo" => VarianceSource::HOpt,
            "numerical" | "noise" => VarianceSource::Numerical,
            other => return Err(Error::domain(format!("unknown variance source `{other}`"))),
        })
    }
}

pub type SeedMap = BTreeMap<VarianceSource, u64>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    #[default]
    #[serde(rename = "higher")]
    HigherIsBetter,
    #[serde(rename = "lower")]
    LowerIsBetter,
}

impl Polarity {
    /// Maps a raw metric difference onto "positive means the first value is better".
    pub fn orient(self, diff: f64) -> f64 {
        match self {
            Polarity::HigherIsBetter => diff,
            Polarity::LowerIsBetter => -diff,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub task: String,
    pub algorithm: String,
    #[serde(rename = "replicate")]
    pub replicate_id: u32,
    #[serde(rename = "metric")]
    pub metric_name: String,
    pub value: f64,
    pub seeds: SeedMap,
}

impl ScoreRecord {
    fn label(&self) -> String {
        format!("{}/{}#{}", self.task, self.algorithm, self.replicate_id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroupKey {
    pub task: String,
    pub algorithm: String,
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.task, self.algorithm)
    }
}

/// A validated collection of score records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "ScoreSetDoc")]
pub struct ScoreSet {
    polarity: Polarity,
    declared_sources: BTreeSet<VarianceSource>,
    records: Vec<ScoreRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreSetDoc {
    #[serde(default)]
    polarity: Polarity,
    declared_sources: BTreeSet<VarianceSource>,
    records: Vec<ScoreRecord>,
}

impl TryFrom<ScoreSetDoc> for ScoreSet {
    type Error = Error;

    fn try_from(doc: ScoreSetDoc) -> Result<Self> {
        ScoreSet::new(doc.records, doc.declared_sources, doc.polarity)
    }
}

impl ScoreSet {
    pub fn new(
        records: Vec<ScoreRecord>,
        declared_sources: BTreeSet<VarianceSource>,
        polarity: Polarity,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, r) in records.iter().enumerate() {
            if r.replicate_id < 1 {
                return Err(Error::InvalidScores(format!("{}: replicate ids start at 1", r.label())));
            }
            if !r.value.is_finite() {
                return Err(Error::NonFinite {
                    row: i + 1,
                    value: r.value.to_string(),
                });
            }
            if let Some(src) = declared_sources.iter().find(|s| !r.seeds.contains_key(s)) {
                return Err(Error::MissingSeed {
                    record: r.label(),
                    source_name: *src,
                });
            }
            if r.metric_name != records[0].metric_name {
                return Err(Error::InvalidScores(format!(
                    "mixed metrics `{}` and `{}`",
                    records[0].metric_name, r.metric_name
                )));
            }
            if !seen.insert((&r.task, &r.algorithm, r.replicate_id)) {
                return Err(Error::InvalidScores(format!("duplicate replicate {}", r.label())));
            }
        }
        Ok(Self {
            polarity,
            declared_sources,
            records,
        })
    }

    pub fn records(&self) -> &[ScoreRecord] {
        &self.records
    }

    pub fn declared_sources(&self) -> &BTreeSet<VarianceSource> {
        &self.declared_sources
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn with_polarity(mut self, polarity: Polarity) -> Self {
        self.polarity = polarity;
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records grouped by (task, algorithm), each group sorted by replicate id.
    pub fn groups(&self) -> BTreeMap<GroupKey, Vec<&ScoreRecord>> {
        let mut out: BTreeMap<GroupKey, Vec<&ScoreRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(GroupKey {
                task: r.task.clone(),
                algorithm: r.algorithm.clone(),
            })
            .or_default()
            .push(r);
        }
        for g in out.values_mut() {
            g.sort_by_key(|r| r.replicate_id);
        }
        out
    }

    /// The records of one algorithm, optionally restricted to a task.
    pub fn select(&self, task: Option<&str>, algorithm: &str) -> Vec<&ScoreRecord> {
        let mut v: Vec<&ScoreRecord> = self
            .records
            .iter()
            .filter(|r| r.algorithm == algorithm && task.is_none_or(|t| r.task == t))
            .collect();
        v.sort_by_key(|r| r.replicate_id);
        v
    }

    /// Distinct algorithm names in first-appearance order.
    pub fn algorithms(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.algorithm.as_str()) {
                out.push(&r.algorithm);
            }
        }
        out
    }

    /// Canonical structured-record dump: a JSON object with fields `polarity`,
    /// `declared_sources` and `records`, in that order.
    pub fn to_records_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("score sets serialize");
        s.push('\n');
        s
    }

    pub fn from_records_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Column mapping for delimited input.
#[derive(Clone, Debug)]
pub struct Schema {
    pub task: String,
    pub algorithm: String,
    pub replicate: String,
    pub metric: String,
    pub value: String,
    pub seed_prefix: String,
    /// Metric name used when the table has no metric column.
    pub default_metric: String,
    pub polarity: Polarity,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            task: "task".into(),
            algorithm: "algorithm".into(),
            replicate: "replicate".into(),
            metric: "metric".into(),
            value: "value".into(),
            seed_prefix: "seed_".into(),
            default_metric: "value".into(),
            polarity: Polarity::HigherIsBetter,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Records,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => InputFormat::Records,
            _ => InputFormat::Csv,
        }
    }
}

/// Reads a score table. For CSV, row numbers in errors count data rows from 1.
pub fn load_scores<R: Read>(mut source: R, schema: &Schema, format: InputFormat) -> Result<ScoreSet> {
    match format {
        InputFormat::Records => {
            let mut text = String::new();
            source.read_to_string(&mut text)?;
            ScoreSet::from_records_json(&text)
        }
        InputFormat::Csv => load_csv(source, schema),
    }
}

pub fn load_scores_path(path: &Path, schema: &Schema) -> Result<ScoreSet> {
    let file = std::fs::File::open(path)?;
    let set = load_scores(std::io::BufReader::new(file), schema, InputFormat::from_path(path))?;
    Ok(set)
}

fn load_csv<R: Read>(source: R, schema: &Schema) -> Result<ScoreSet> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| {
        col(name).ok_or_else(|| Error::Parse {
            row: 0,
            message: format!("missing column `{name}`"),
        })
    };
    let task_c = need(&schema.task)?;
    let alg_c = need(&schema.algorithm)?;
    let rep_c = need(&schema.replicate)?;
    let val_c = need(&schema.value)?;
    let metric_c = col(&schema.metric);

    let mut seed_cols = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(suffix) = h.strip_prefix(&schema.seed_prefix) {
            let src: VarianceSource = suffix.parse().map_err(|_| Error::Parse {
                row: 0,
                message: format!("column `{h}` names no known variance source"),
            })?;
            if seed_cols.iter().any(|(_, s)| *s == src) {
                return Err(Error::Parse {
                    row: 0,
                    message: format!("two seed columns for source `{src}`"),
                });
            }
            seed_cols.push((i, src));
        }
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let field = |c: usize| row.get(c).unwrap_or("");
        let parse_err = |message: String| Error::Parse { row: row_no, message };

        let replicate_id: u32 = field(rep_c)
            .parse()
            .map_err(|_| parse_err(format!("replicate `{}` is not a positive integer", field(rep_c))))?;
        if replicate_id == 0 {
            return Err(parse_err("replicate ids start at 1".into()));
        }
        let raw = field(val_c);
        let value: f64 = raw
            .parse()
            .map_err(|_| parse_err(format!("value `{raw}` is not a number")))?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                row: row_no,
                value: raw.to_owned(),
            });
        }
        let mut seeds = SeedMap::new();
        for &(c, src) in &seed_cols {
            let s: u64 = field(c)
                .parse()
                .map_err(|_| parse_err(format!("seed `{}` for `{src}` is not a u64", field(c))))?;
            seeds.insert(src, s);
        }
        records.push(ScoreRecord {
            task: field(task_c).to_owned(),
            algorithm: field(alg_c).to_owned(),
            replicate_id,
            metric_name: metric_c.map_or_else(|| schema.default_metric.clone(), |c| field(c).to_owned()),
            value,
            seeds,
        });
    }
    let declared = seed_cols.into_iter().map(|(_, s)| s).collect();
    ScoreSet::new(records, declared, schema.polarity)
}

/// One paired observation: performances of A and B sharing the seeds in `key`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub a: f64,
    pub b: f64,
    pub key: Vec<(VarianceSource, u64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedScores {
    pairs: Vec<ScorePair>,
    polarity: Polarity,
}

impl PairedScores {
    /// Pairs raw values directly (no seed provenance).
    pub fn from_values(values: impl IntoIterator<Item = (f64, f64)>, polarity: Polarity) -> Result<Self> {
        let pairs: Vec<ScorePair> = values
            .into_iter()
            .map(|(a, b)| ScorePair { a, b, key: Vec::new() })
            .collect();
        if pairs.is_empty() {
            return Err(Error::domain("no pairs"));
        }
        // Infinite values are allowed: they encode certain wins in simulations.
        if let Some(p) = pairs.iter().find(|p| p.a.is_nan() || p.b.is_nan()) {
            return Err(Error::domain(format!("pair ({}, {}) is NaN", p.a, p.b)));
        }
        Ok(Self { pairs, polarity })
    }

    pub fn pairs(&self) -> &[ScorePair] {
        &self.pairs
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn a_values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.a).collect()
    }

    pub fn b_values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.b).collect()
    }

    /// The same pairs with A and B exchanged.
    pub fn transposed(&self) -> Self {
        Self {
            pairs: self
                .pairs
                .iter()
                .map(|p| ScorePair {
                    a: p.b,
                    b: p.a,
                    key: p.key.clone(),
                })
                .collect(),
            polarity: self.polarity,
        }
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            pairs: self
                .pairs
                .iter()
                .map(|p| ScorePair {
                    a: f(p.a),
                    b: f(p.b),
                    key: p.key.clone(),
                })
                .collect(),
            polarity: self.polarity,
        }
    }
}

/// Pairs two groups of records.
///
/// With a non-empty `pair_on`, records are matched on the seeds of those sources; the
/// matching must be a bijection and pairs come out sorted by key. With an empty
/// `pair_on`, records are paired in replicate order.
pub fn pair_scores(
    a: &[&ScoreRecord],
    b: &[&ScoreRecord],
    pair_on: &BTreeSet<VarianceSource>,
    polarity: Polarity,
) -> Result<PairedScores> {
    if a.len() != b.len() {
        return Err(Error::UnequalGroups { a: a.len(), b: b.len() });
    }
    if a.is_empty() {
        return Err(Error::domain("cannot pair empty groups"));
    }
    if pair_on.is_empty() {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by_key(|r| r.replicate_id);
        b.sort_by_key(|r| r.replicate_id);
        let pairs = a
            .iter()
            .zip(&b)
            .map(|(x, y)| ScorePair {
                a: x.value,
                b: y.value,
                key: Vec::new(),
            })
            .collect();
        return Ok(PairedScores { pairs, polarity });
    }

    let index = |side: &[&ScoreRecord]| -> Result<BTreeMap<Vec<(VarianceSource, u64)>, f64>> {
        let mut m = BTreeMap::new();
        for r in side {
            let key = pair_key(r, pair_on)?;
            if m.insert(key.clone(), r.value).is_some() {
                return Err(Error::Ambiguous {
                    key: format_key(&key),
                    group: format!("{}/{}", r.task, r.algorithm),
                });
            }
        }
        Ok(m)
    };
    let ia = index(a)?;
    let mut ib = index(b)?;

    let mut pairs = Vec::with_capacity(ia.len());
    let mut orphans = Vec::new();
    for (key, va) in ia {
        match ib.remove(&key) {
            Some(vb) => pairs.push(ScorePair { a: va, b: vb, key }),
            None => orphans.push(format!("A[{}]", format_key(&key))),
        }
    }
    orphans.extend(ib.keys().map(|k| format!("B[{}]", format_key(k))));
    if !orphans.is_empty() {
        return Err(Error::Unmatched { orphans });
    }
    Ok(PairedScores { pairs, polarity })
}

/// Random pairing for unpaired designs: shuffles B before pairing in replicate order.
pub fn pair_scores_shuffled(
    a: &[&ScoreRecord],
    b: &[&ScoreRecord],
    polarity: Polarity,
    stream: &mut RngStream,
) -> Result<PairedScores> {
    let mut a = a.to_vec();
    a.sort_by_key(|r| r.replicate_id);
    let mut b = b.to_vec();
    b.sort_by_key(|r| r.replicate_id);
    stream.shuffle(&mut b);
    if a.len() != b.len() {
        return Err(Error::UnequalGroups { a: a.len(), b: b.len() });
    }
    PairedScores::from_values(a.iter().zip(&b).map(|(x, y)| (x.value, y.value)), polarity)
}

fn pair_key(r: &ScoreRecord, on: &BTreeSet<VarianceSource>) -> Result<Vec<(VarianceSource, u64)>> {
    on.iter()
        .map(|s| {
            r.seeds.get(s).map(|v| (*s, *v)).ok_or(Error::MissingSeed {
                record: r.label(),
                source_name: *s,
            })
        })
        .collect()
}

fn format_key(key: &[(VarianceSource, u64)]) -> String {
    key.iter().map(|(s, v)| format!("{s}={v}")).collect::<Vec<_>>().join(",")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DiagnosticKind {
    MissingSeed,
    UnequalReplicateCounts,
    ZeroVariance,
    ConstantSeed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

/// Non-fatal checks on a score set. Never fails.
pub fn validate(set: &ScoreSet) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for r in set.records() {
        for s in set.declared_sources() {
            if !r.seeds.contains_key(s) {
                out.push(Diagnostic {
                    kind: DiagnosticKind::MissingSeed,
                    message: format!("{} has no seed for `{s}`", r.label()),
                });
            }
        }
    }

    let groups = set.groups();
    let sizes: BTreeSet<usize> = groups.values().map(Vec::len).collect();
    if sizes.len() > 1 {
        let detail = groups
            .iter()
            .map(|(k, v)| format!("{k}={}", v.len()))
            .collect::<Vec<_>>()
            .join(", ");
        out.push(Diagnostic {
            kind: DiagnosticKind::UnequalReplicateCounts,
            message: format!("unequal replicate counts: {detail}"),
        });
    }

    for (key, records) in &groups {
        if records.len() < 2 {
            continue;
        }
        let values: Vec<f64> = records.iter().map(|r| r.value).collect();
        if stats::population_variance(&values) == 0.0 {
            out.push(Diagnostic {
                kind: DiagnosticKind::ZeroVariance,
                message: format!("zero variance: every value of {key} is {}", values[0]),
            });
        }
        for s in set.declared_sources() {
            let distinct: BTreeSet<Option<&u64>> = records.iter().map(|r| r.seeds.get(s)).collect();
            if distinct.len() == 1 {
                out.push(Diagnostic {
                    kind: DiagnosticKind::ConstantSeed,
                    message: format!("seed_{s} is constant within {key}; that source is not randomized"),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "task,algorithm,replicate,seed_data,seed_init,value\n\
                         t,A,1,10,100,0.81\n\
                         t,A,2,11,101,0.79\n\
                         t,B,1,10,200,0.78\n";

    fn parse(text: &str) -> Result<ScoreSet> {
        load_scores(text.as_bytes(), &Schema::default(), InputFormat::Csv)
    }

    fn two_groups(k: u32, a_seeds: impl Fn(u32) -> u64, b_seeds: impl Fn(u32) -> u64) -> ScoreSet {
        let mut text = String::from("task,algorithm,replicate,seed_data,value\n");
        for i in 1..=k {
            text += &format!("t,A,{i},{},{}\n", a_seeds(i), 0.5 + i as f64 / 100.0);
            text += &format!("t,B,{i},{},{}\n", b_seeds(i), 0.4 + i as f64 / 100.0);
        }
        parse(&text).unwrap()
    }

    #[test]
    fn loads_three_rows() {
        let set = parse(SMALL).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(
            set.declared_sources().iter().copied().collect::<Vec<_>>(),
            vec![VarianceSource::DataSplit, VarianceSource::WeightsInit]
        );
        let r = &set.records()[0];
        assert_eq!(r.metric_name, "value");
        assert_eq!(r.seeds[&VarianceSource::WeightsInit], 100);
    }

    #[test]
    fn nan_value_names_row() {
        let err = parse("task,algorithm,replicate,value\nt,A,1,0.5\nt,A,2,NaN\n").unwrap_err();
        match err {
            Error::NonFinite { row, .. } => assert_eq!(row, 2),
            e => panic!("{e}"),
        }
        assert!(parse("task,algorithm,replicate,value\nt,A,1,inf\n").is_err());
    }

    #[test]
    fn malformed_row_names_row() {
        let err = parse("task,algorithm,replicate,value\nt,A,1,0.5\nt,A,x,0.5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err}");
        let err = parse("task,algorithm,replicate,value\nt,A,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }), "{err}");
    }

    #[test]
    fn two_by_fifty() {
        let set = two_groups(50, |i| i as u64, |i| i as u64);
        assert_eq!(set.len(), 100);
        assert_eq!(set.groups().len(), 2);
        assert!(validate(&set).is_empty());
    }

    #[test]
    fn pairs_on_shared_seeds() {
        // B's seeds are a permutation of A's.
        let set = two_groups(10, |i| 7 * i as u64, |i| 7 * (11 - i) as u64);
        let on = BTreeSet::from([VarianceSource::DataSplit]);
        let a = set.select(None, "A");
        let b = set.select(None, "B");
        let p = pair_scores(&a, &b, &on, Polarity::HigherIsBetter).unwrap();
        assert_eq!(p.len(), 10);
        for pair in p.pairs() {
            let seed = pair.key[0].1;
            let ra = a.iter().find(|r| r.seeds[&VarianceSource::DataSplit] == seed).unwrap();
            let rb = b.iter().find(|r| r.seeds[&VarianceSource::DataSplit] == seed).unwrap();
            assert_eq!((pair.a, pair.b), (ra.value, rb.value));
        }
        let swapped = pair_scores(&b, &a, &on, Polarity::HigherIsBetter).unwrap();
        assert_eq!(swapped, p.transposed());
    }

    #[test]
    fn duplicate_seed_is_ambiguous() {
        let set = two_groups(3, |i| if i == 3 { 7 } else { 7 * i as u64 }, |i| i as u64);
        let on = BTreeSet::from([VarianceSource::DataSplit]);
        let err = pair_scores(&set.select(None, "A"), &set.select(None, "B"), &on, Polarity::default())
            .unwrap_err();
        assert!(matches!(err, Error::Ambiguous { .. }), "{err}");
    }

    #[test]
    fn unmatched_seed_lists_orphans() {
        let set = two_groups(3, |i| i as u64, |i| i as u64 + 1);
        let on = BTreeSet::from([VarianceSource::DataSplit]);
        match pair_scores(&set.select(None, "A"), &set.select(None, "B"), &on, Polarity::default()) {
            Err(Error::Unmatched { orphans }) => {
                assert!(orphans.contains(&"A[data=1]".to_string()));
                assert!(orphans.contains(&"B[data=4]".to_string()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_pair_on_uses_replicate_order() {
        let set = two_groups(5, |i| i as u64, |i| 100 + i as u64);
        let p = pair_scores(
            &set.select(None, "A"),
            &set.select(None, "B"),
            &BTreeSet::new(),
            Polarity::default(),
        )
        .unwrap();
        assert_eq!(p.len(), 5);
        for (i, pair) in p.pairs().iter().enumerate() {
            let r = (i + 1) as f64 / 100.0;
            assert!((pair.a - (0.5 + r)).abs() < 1e-12 && (pair.b - (0.4 + r)).abs() < 1e-12);
        }
    }

    #[test]
    fn unequal_groups_rejected_and_diagnosed() {
        let mut text = String::from("task,algorithm,replicate,value\n");
        for i in 1..=50 {
            text += &format!("t,A,{i},{}\n", i as f64);
        }
        for i in 1..=49 {
            text += &format!("t,B,{i},{}\n", i as f64);
        }
        let set = parse(&text).unwrap();
        let diags = validate(&set);
        assert!(diags.iter().any(|d| d.kind == DiagnosticKind::UnequalReplicateCounts
            && d.message.contains("unequal replicate counts")));
        let err = pair_scores(&set.select(None, "A"), &set.select(None, "B"), &BTreeSet::new(), Polarity::default())
            .unwrap_err();
        assert!(matches!(err, Error::UnequalGroups { a: 50, b: 49 }));
    }

    #[test]
    fn identical_values_warn_zero_variance() {
        let set = parse("task,algorithm,replicate,seed_data,value\nt,A,1,1,0.9\nt,A,2,2,0.9\n").unwrap();
        let diags = validate(&set);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::ZeroVariance);
        assert!(diags[0].message.contains("zero variance"));
    }

    #[test]
    fn constant_seed_column_is_flagged() {
        let set = parse("task,algorithm,replicate,seed_init,value\nt,A,1,5,0.9\nt,A,2,5,0.8\n").unwrap();
        let diags = validate(&set);
        assert!(diags.iter().any(|d| d.kind == DiagnosticKind::ConstantSeed));
    }

    #[test]
    fn unknown_seed_column_rejected() {
        assert!(parse("task,algorithm,replicate,seed_moon,value\nt,A,1,1,0.5\n").is_err());
    }

    #[test]
    fn records_round_trip() {
        let set = parse(SMALL).unwrap().with_polarity(Polarity::LowerIsBetter);
        let text = set.to_records_json();
        let back = load_scores(text.as_bytes(), &Schema::default(), InputFormat::Records).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.to_records_json(), text);
    }

    #[test]
    fn records_reject_unknown_fields_and_bad_invariants() {
        assert!(ScoreSet::from_records_json(r#"{"declared_sources":[],"records":[],"extra":1}"#).is_err());
        let missing = r#"{"declared_sources":["data"],"records":[
            {"task":"t","algorithm":"A","replicate":1,"metric":"acc","value":0.5,"seeds":{}}]}"#;
        assert!(matches!(
            ScoreSet::from_records_json(missing),
            Err(Error::Json(_))
        ));
    }

    #[test]
    fn shuffled_pairing_is_deterministic() {
        let set = two_groups(8, |i| i as u64, |i| i as u64);
        let a = set.select(None, "A");
        let b = set.select(None, "B");
        let p1 = pair_scores_shuffled(&a, &b, Polarity::default(), &mut RngStream::new(4)).unwrap();
        let p2 = pair_scores_shuffled(&a, &b, Polarity::default(), &mut RngStream::new(4)).unwrap();
        assert_eq!(p1, p2);
        let mut bs = p1.b_values();
        bs.sort_by(f64::total_cmp);
        let mut orig: Vec<f64> = b.iter().map(|r| r.value).collect();
        orig.sort_by(f64::total_cmp);
        assert_eq!(bs, orig);
    }

    #[test]
    fn source_names_parse() {
        for s in VarianceSource::ALL {
            assert_eq!(s.name().parse::<VarianceSource>().unwrap(), s);
        }
        assert_eq!("weights_init".parse::<VarianceSource>().unwrap(), VarianceSource::WeightsInit);
    }
}
