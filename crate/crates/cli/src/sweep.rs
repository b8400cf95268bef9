use std::fmt;
use std::path::Path;
use std::str::FromStr;

use lattice_search::metrics::{DecodeReport, Metric, ReportSummary};
use lattice_search::recomb::Strategy;
use lattice_search::search::Algorithm;
use serde::Serialize;

use crate::run::{create_dir, example_name, write_example, Prepared, RunSpec};
use crate::CliError;

/// A single flag varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    K,
    Budget,
    TopK,
    Lambda,
    P,
    Tau,
    Groups,
    DivStrength,
    MaxLen,
    SuffixN,
    Alpha,
    Algo,
    Recomb,
    Seed,
}

impl Axis {
    pub const ALL: [Axis; 14] = [
        Axis::K,
        Axis::Budget,
        Axis::TopK,
        Axis::Lambda,
        Axis::P,
        Axis::Tau,
        Axis::Groups,
        Axis::DivStrength,
        Axis::MaxLen,
        Axis::SuffixN,
        Axis::Alpha,
        Axis::Algo,
        Axis::Recomb,
        Axis::Seed,
    ];

    /// Sets this axis of `spec` to `value`.
    pub fn apply(self, spec: &mut RunSpec, value: &str) -> Result<(), CliError> {
        fn parse<T: FromStr>(axis: Axis, v: &str) -> Result<T, CliError> {
            v.parse()
                .map_err(|_| CliError::Config(format!("bad value {v:?} for sweep axis {axis}")))
        }
        let c = &mut spec.config;
        match self {
            Axis::K => c.k = parse(self, value)?,
            Axis::Budget => c.budget = Some(parse(self, value)?),
            Axis::TopK => c.top_k = parse(self, value)?,
            Axis::Lambda => c.lambda = parse(self, value)?,
            Axis::P => c.p = parse(self, value)?,
            Axis::Tau => c.tau = parse(self, value)?,
            Axis::Groups => c.groups = Some(parse(self, value)?),
            Axis::DivStrength => c.diversity_strength = parse(self, value)?,
            Axis::MaxLen => c.max_len = parse(self, value)?,
            Axis::SuffixN => c.recomb.suffix_n = parse(self, value)?,
            Axis::Alpha => c.recomb.alpha = parse(self, value)?,
            Axis::Algo => c.algorithm = value.parse::<Algorithm>().map_err(CliError::Config)?,
            Axis::Recomb => c.recomb.strategy = value.parse::<Strategy>().map_err(CliError::Config)?,
            Axis::Seed => c.seed = parse(self, value)?,
        }
        Ok(())
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::K => "k",
            Axis::Budget => "budget",
            Axis::TopK => "top-k",
            Axis::Lambda => "lambda",
            Axis::P => "p",
            Axis::Tau => "tau",
            Axis::Groups => "groups",
            Axis::DivStrength => "div-strength",
            Axis::MaxLen => "max-len",
            Axis::SuffixN => "suffix-n",
            Axis::Alpha => "alpha",
            Axis::Algo => "algo",
            Axis::Recomb => "recomb",
            Axis::Seed => "seed",
        })
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Axis::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| format!("unknown sweep axis {s:?}"))
    }
}

/// Runs that differ in one axis and share inputs and references.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub base: RunSpec,
    pub axis: Axis,
    pub values: Vec<String>,
}

impl SweepSpec {
    pub fn runs(&self) -> Result<Vec<RunSpec>, CliError> {
        if self.values.is_empty() {
            return Err(CliError::Config("a sweep needs at least one value".into()));
        }
        self.values
            .iter()
            .map(|v| {
                let mut spec = self.base.clone();
                self.axis.apply(&mut spec, v)?;
                Ok(spec)
            })
            .collect()
    }
}

/// One CSV row per (run, example).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub config_hash: String,
    pub example: String,
    /// `ok` or the error message.
    pub status: String,
    pub path_count: Option<u64>,
    pub path_count_saturated: Option<bool>,
    pub novel_unigrams: Option<usize>,
    pub novel_bigrams: Option<usize>,
    pub self_bleu: Option<f64>,
    pub mean_edit_distance: Option<f64>,
    pub metric: Option<Metric>,
    pub oracle_match: Option<f64>,
    pub oracle_approximate: Option<bool>,
    pub sample_match: Option<f64>,
    pub expanded: Option<usize>,
    pub pruned_ratio: Option<f64>,
}

impl SweepRow {
    fn new(axis: Axis, value: &str, hash: &str, example: String, report: Result<&DecodeReport, String>) -> Self {
        let r = report.as_ref().ok();
        Self {
            axis: axis.to_string(),
            value: value.to_owned(),
            config_hash: hash.to_owned(),
            example,
            status: report.as_ref().err().cloned().unwrap_or_else(|| "ok".into()),
            path_count: r.map(|r| r.path_count),
            path_count_saturated: r.map(|r| r.path_count_saturated),
            novel_unigrams: r.map(|r| r.novel_unigrams),
            novel_bigrams: r.map(|r| r.novel_bigrams),
            self_bleu: r.map(|r| r.self_bleu),
            mean_edit_distance: r.map(|r| r.mean_edit_distance),
            metric: r.and_then(|r| r.metric),
            oracle_match: r.and_then(|r| r.oracle_match),
            oracle_approximate: r.map(|r| r.oracle_approximate),
            sample_match: r.and_then(|r| r.sample_match),
            expanded: r.map(|r| r.expanded),
            pruned_ratio: r.and_then(|r| r.pruned_ratio),
        }
    }
}

/// One CSV row per run: the mean of every report field over the examples
/// that succeeded.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub axis: String,
    pub value: String,
    pub config_hash: String,
    pub examples: usize,
    pub failed: usize,
    pub path_count: f64,
    pub path_count_saturated: usize,
    pub novel_unigrams: f64,
    pub novel_bigrams: f64,
    pub self_bleu: f64,
    pub mean_edit_distance: f64,
    pub metric: Option<Metric>,
    pub oracle_match: Option<f64>,
    pub oracle_approximate: usize,
    pub sample_match: Option<f64>,
    pub expanded: f64,
    pub pruned_ratio: Option<f64>,
}

impl AggregateRow {
    fn new(axis: Axis, value: &str, hash: &str, failed: usize, s: &ReportSummary) -> Self {
        Self {
            axis: axis.to_string(),
            value: value.to_owned(),
            config_hash: hash.to_owned(),
            examples: s.examples,
            failed,
            path_count: s.path_count,
            path_count_saturated: s.path_count_saturated,
            novel_unigrams: s.novel_unigrams,
            novel_bigrams: s.novel_bigrams,
            self_bleu: s.self_bleu,
            mean_edit_distance: s.mean_edit_distance,
            metric: s.metric,
            oracle_match: s.oracle_match,
            oracle_approximate: s.oracle_approximate,
            sample_match: s.sample_match,
            expanded: s.expanded,
            pruned_ratio: s.pruned_ratio,
        }
    }
}

pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<AggregateRow>,
    pub summaries: Vec<ReportSummary>,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status != "ok").count()
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Runs every point of the sweep. Each run writes its per-example files
/// into `<out>/<config hash>/`; `sweep.csv` and `sweep-aggregate.csv` go
/// into `<out>`. A run or example that fails is recorded and the sweep
/// moves on.
pub fn run_sweep(sweep: &SweepSpec) -> Result<SweepOutcome, CliError> {
    let runs = sweep.runs()?;
    let prepared = Prepared::new(&sweep.base)?;
    let out = &sweep.base.out;
    create_dir(out)?;
    let n = prepared.inputs.sources.len();
    let mut rows = Vec::new();
    let mut aggregates = Vec::new();
    let mut summaries = Vec::new();
    for (spec, value) in runs.iter().zip(&sweep.values) {
        let hash = spec.config_hash();
        let view = match prepared.with_spec(spec) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("sweep {}={value}: {e}", sweep.axis);
                for i in 0..n {
                    rows.push(SweepRow::new(sweep.axis, value, &hash, example_name(i), Err(e.to_string())));
                }
                let empty = ReportSummary::new(format!("{}={value}", sweep.axis), &[]);
                aggregates.push(AggregateRow::new(sweep.axis, value, &hash, n, &empty));
                continue;
            }
        };
        let dir = out.join(&hash);
        create_dir(&dir)?;
        let mut reports = Vec::new();
        let mut failed = 0;
        for (i, ex) in view.decode_all().into_iter().enumerate() {
            match ex {
                Ok(ex) => {
                    write_example(&dir, &ex)?;
                    rows.push(SweepRow::new(sweep.axis, value, &hash, example_name(i), Ok(&ex.report)));
                    reports.push(ex.report);
                }
                Err(e) => {
                    log::warn!("sweep {}={value}, example {i}: {e}", sweep.axis);
                    failed += 1;
                    rows.push(SweepRow::new(sweep.axis, value, &hash, example_name(i), Err(e.to_string())));
                }
            }
        }
        let summary = ReportSummary::new(format!("{}={value}", sweep.axis), &reports);
        aggregates.push(AggregateRow::new(sweep.axis, value, &hash, failed, &summary));
        summaries.push(summary);
    }
    write_csv(&out.join("sweep.csv"), &rows)?;
    write_csv(&out.join("sweep-aggregate.csv"), &aggregates)?;
    Ok(SweepOutcome {
        rows,
        aggregates,
        summaries,
    })
}
