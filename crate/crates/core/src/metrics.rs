//! Diversity and quality measurements over decoded lattices.
//!
//! Sequence metrics work on any token type, usually the words of a path as
//! returned by [`Path::words`]. Lattice metrics sample paths with a uniform
//! random walk ([`Lattice::sample_path`]).

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::hash::Hash;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::{best_paths, Lattice, LatticeError, Path};
use crate::search::{SearchResult, PATH_CAP};

/// Paths sampled per lattice for self-BLEU and edit distance.
pub const DIVERSITY_SAMPLES: usize = 5;
/// Paths sampled for the sample-match score and the approximate oracle.
pub const MATCH_SAMPLES: usize = 1000;
/// Seed of the random walks that pad an approximate oracle.
pub const ORACLE_SEED: u64 = 0x5eed;

fn ngrams<T: Eq + Hash>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && seq.len() >= n {
        for w in seq.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the candidate's n-gram total.
fn overlap<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let c = ngrams(candidate, n);
    let r = ngrams(reference, n);
    let matches = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    (matches, candidate.len().saturating_sub(n - 1))
}

fn f1(matches: usize, cand_total: usize, ref_total: usize) -> f64 {
    if matches == 0 || cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let p = matches as f64 / cand_total as f64;
    let r = matches as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-n F1 between two token sequences.
///
/// ```
/// use lattice_search::metrics::rouge_n;
///
/// let f = rouge_n(&["a", "b", "c"], &["a", "c", "d"], 1);
/// assert!((f - 2.0 / 3.0).abs() < 1e-12);
/// ```
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], order: usize) -> f64 {
    let (m, total) = overlap(candidate, reference, order);
    f1(m, total, reference.len().saturating_sub(order - 1))
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F1: the longest common subsequence against both lengths.
pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> f64 {
    f1(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// Sentence BLEU-4 on `[0, 100]`.
///
/// Unigram precision is unsmoothed; orders 2 to 4 use `(m + 1) / (t + 1)`.
/// The brevity penalty is `exp(1 - r / c)` for a candidate shorter than the
/// reference. An empty candidate scores 0.
pub fn bleu<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (m, t) = overlap(candidate, reference, n);
        let p = if n == 1 {
            m as f64 / t as f64
        } else {
            (m as f64 + 1.0) / (t as f64 + 1.0)
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    100.0 * bp * (log_sum / 4.0).exp()
}

/// Token-level Levenshtein distance.
pub fn edit_distance<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

/// Reference-matching metric for oracle and sample scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "rouge1")]
    Rouge1,
    #[serde(rename = "rouge2")]
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
    #[serde(rename = "bleu")]
    Bleu,
}

impl Metric {
    pub fn score<T: Eq + Hash>(self, candidate: &[T], reference: &[T]) -> f64 {
        match self {
            Metric::Rouge1 => rouge_n(candidate, reference, 1),
            Metric::Rouge2 => rouge_n(candidate, reference, 2),
            Metric::RougeL => rouge_l(candidate, reference),
            Metric::Bleu => bleu(candidate, reference),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Rouge1 => "rouge1",
            Metric::Rouge2 => "rouge2",
            Metric::RougeL => "rougeL",
            Metric::Bleu => "bleu",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rouge1" | "r1" => Ok(Metric::Rouge1),
            "rouge2" | "r2" => Ok(Metric::Rouge2),
            "rougel" | "rl" => Ok(Metric::RougeL),
            "bleu" => Ok(Metric::Bleu),
            _ => Err(format!("unknown metric {s:?}")),
        }
    }
}

/// Incremental mean; a run of equal values averages to exactly that value.
#[derive(Default)]
struct RunningMean {
    n: usize,
    mean: f64,
}

impl RunningMean {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.mean += (x - self.mean) / self.n as f64;
    }

    fn value(&self) -> f64 {
        self.mean
    }
}

fn sample_words<'a, R: Rng + ?Sized>(lattice: &'a Lattice, m: usize, rng: &mut R) -> Result<Vec<Vec<&'a str>>, LatticeError> {
    (0..m)
        .map(|_| lattice.sample_path(rng).map(|p| p.words(lattice)))
        .collect()
}

/// Mean BLEU over all ordered pairs of `m` sampled paths.
pub fn self_bleu<R: Rng + ?Sized>(lattice: &Lattice, m: usize, rng: &mut R) -> Result<f64, LatticeError> {
    let samples = sample_words(lattice, m, rng)?;
    let mut mean = RunningMean::default();
    for (i, a) in samples.iter().enumerate() {
        for (j, b) in samples.iter().enumerate() {
            if i != j {
                mean.push(bleu(a, b));
            }
        }
    }
    Ok(if mean.n == 0 { 100.0 } else { mean.value() })
}

/// Mean edit distance over all unordered pairs of `m` sampled paths.
pub fn mean_edit_distance<R: Rng + ?Sized>(lattice: &Lattice, m: usize, rng: &mut R) -> Result<f64, LatticeError> {
    let samples = sample_words(lattice, m, rng)?;
    let mut total = 0usize;
    let mut pairs = 0usize;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            total += edit_distance(&samples[i], &samples[j]);
            pairs += 1;
        }
    }
    Ok(if pairs == 0 { 0.0 } else { total as f64 / pairs as f64 })
}

/// Distinct unigrams (over node tokens) or bigrams (over edges, merge edges
/// included) in the lattice. The start and end tokens are not counted.
pub fn novel_ngrams(lattice: &Lattice, order: usize) -> usize {
    let plain = |id| lattice.node(id).filter(|n| id != lattice.sos() && !n.is_eos);
    match order {
        1 => lattice
            .node_ids()
            .filter_map(plain)
            .map(|n| n.token)
            .collect::<HashSet<_>>()
            .len(),
        2 => lattice
            .edges()
            .filter_map(|e| Some((plain(e.src)?.token, plain(e.dst)?.token)))
            .collect::<HashSet<_>>()
            .len(),
        _ => panic!("novel n-grams are defined for orders 1 and 2"),
    }
}

/// Best reference score over the lattice's complete paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleMatch {
    pub score: f64,
    /// The lattice had more than [`PATH_CAP`] paths; the maximum is over the
    /// best-scoring [`PATH_CAP`] paths and [`MATCH_SAMPLES`] random walks.
    pub approximate: bool,
}

pub fn oracle_match<T: AsRef<str>>(lattice: &Lattice, reference: &[T], metric: Metric) -> Result<OracleMatch, LatticeError> {
    let reference: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let counts = lattice.count_paths(PATH_CAP)?;
    let best = |paths: &[Path]| {
        paths
            .iter()
            .map(|p| metric.score(&p.words(lattice), &reference))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    if !counts.saturated && counts.total <= PATH_CAP {
        let paths = lattice.enumerate_paths(PATH_CAP as usize);
        return Ok(OracleMatch {
            score: best(&paths),
            approximate: false,
        });
    }
    let mut paths = best_paths(lattice, PATH_CAP as usize)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ORACLE_SEED);
    for _ in 0..MATCH_SAMPLES {
        paths.push(lattice.sample_path(&mut rng)?);
    }
    Ok(OracleMatch {
        score: best(&paths),
        approximate: true,
    })
}

/// Mean reference score over [`MATCH_SAMPLES`] random walks.
pub fn sample_match<T: AsRef<str>, R: Rng + ?Sized>(
    lattice: &Lattice,
    reference: &[T],
    metric: Metric,
    rng: &mut R,
) -> Result<f64, LatticeError> {
    let reference: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let mut mean = RunningMean::default();
    for _ in 0..MATCH_SAMPLES {
        let p = lattice.sample_path(rng)?;
        mean.push(metric.score(&p.words(lattice), &reference));
    }
    Ok(mean.value())
}

/// Fraction of expansions that lie on no complete path of the result.
pub fn pruning_ratio(result: &SearchResult) -> Option<f64> {
    result.pruned_ratio()
}

/// Pearson correlation; `None` with fewer than two points or zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "pearson needs paired samples");
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Gaps between the best-scoring hypothesis `h*` of each example and every
/// other hypothesis, as `(model score gap, metric gap)`.
///
/// Each example lists its hypotheses as `(model score, metric value)`.
pub fn score_quality_gaps(examples: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    let mut gaps = Vec::new();
    for hyps in examples {
        let Some(best) = (0..hyps.len()).max_by(|&a, &b| hyps[a].0.total_cmp(&hyps[b].0)) else {
            continue;
        };
        let (s, q) = hyps[best];
        for (i, &(si, qi)) in hyps.iter().enumerate() {
            if i != best {
                gaps.push((s - si, q - qi));
            }
        }
    }
    gaps
}

/// Pearson correlation between model-score gaps and metric gaps to `h*`;
/// `None` with fewer than three pairs or zero variance.
pub fn score_quality_correlation(examples: &[Vec<(f64, f64)>]) -> Option<f64> {
    let gaps = score_quality_gaps(examples);
    if gaps.len() < 3 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = gaps.into_iter().unzip();
    pearson(&xs, &ys)
}

/// Per-example metric bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeReport {
    pub name: String,
    pub path_count: u64,
    /// `path_count` hit the cap and is a lower bound.
    pub path_count_saturated: bool,
    pub novel_unigrams: usize,
    pub novel_bigrams: usize,
    pub self_bleu: f64,
    pub mean_edit_distance: f64,
    pub metric: Option<Metric>,
    pub oracle_match: Option<f64>,
    pub oracle_approximate: bool,
    pub sample_match: Option<f64>,
    pub expanded: usize,
    pub pruned_ratio: Option<f64>,
}

impl DecodeReport {
    /// Measures a search result, against `reference` if one is given.
    pub fn compute<T: AsRef<str>, R: Rng + ?Sized>(
        name: impl Into<String>,
        result: &SearchResult,
        reference: Option<(&[T], Metric)>,
        rng: &mut R,
    ) -> Result<Self, LatticeError> {
        let lattice = &result.lattice;
        let counts = lattice.count_paths(PATH_CAP)?;
        let has_paths = counts.total > 0;
        let (self_bleu, ed) = if has_paths {
            (
                self_bleu(lattice, DIVERSITY_SAMPLES, rng)?,
                mean_edit_distance(lattice, DIVERSITY_SAMPLES, rng)?,
            )
        } else {
            (0.0, 0.0)
        };
        let (mut oracle, mut approx, mut sample) = (None, false, None);
        if let (Some((reference, metric)), true) = (reference, has_paths) {
            let o = oracle_match(lattice, reference, metric)?;
            oracle = Some(o.score);
            approx = o.approximate;
            sample = Some(sample_match(lattice, reference, metric, rng)?);
        }
        Ok(Self {
            name: name.into(),
            path_count: counts.total,
            path_count_saturated: counts.saturated,
            novel_unigrams: novel_ngrams(lattice, 1),
            novel_bigrams: novel_ngrams(lattice, 2),
            self_bleu,
            mean_edit_distance: ed,
            metric: reference.map(|r| r.1),
            oracle_match: oracle,
            oracle_approximate: approx,
            sample_match: sample,
            expanded: result.expanded,
            pruned_ratio: pruning_ratio(result),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

/// Mean of each [`DecodeReport`] field over a set of examples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub name: String,
    pub examples: usize,
    pub path_count: f64,
    /// Number of examples whose path count saturated.
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

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl ReportSummary {
    pub fn new(name: impl Into<String>, reports: &[DecodeReport]) -> Self {
        let avg = |f: &dyn Fn(&DecodeReport) -> f64| mean(reports.iter().map(f)).unwrap_or(0.0);
        Self {
            name: name.into(),
            examples: reports.len(),
            path_count: avg(&|r| r.path_count as f64),
            path_count_saturated: reports.iter().filter(|r| r.path_count_saturated).count(),
            novel_unigrams: avg(&|r| r.novel_unigrams as f64),
            novel_bigrams: avg(&|r| r.novel_bigrams as f64),
            self_bleu: avg(&|r| r.self_bleu),
            mean_edit_distance: avg(&|r| r.mean_edit_distance),
            metric: reports.iter().find_map(|r| r.metric),
            oracle_match: mean(reports.iter().filter_map(|r| r.oracle_match)),
            oracle_approximate: reports.iter().filter(|r| r.oracle_approximate).count(),
            sample_match: mean(reports.iter().filter_map(|r| r.sample_match)),
            expanded: avg(&|r| r.expanded as f64),
            pruned_ratio: mean(reports.iter().filter_map(|r| r.pruned_ratio)),
        }
    }
}

const COLUMNS: [&str; 10] = ["name", "|path|", "N1", "N2", "sBL", "ED", "OR", "Sp", "expanded", "pruned"];

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.digits$}"))
}

fn render(rows: &[[String; 10]]) -> String {
    let mut widths = COLUMNS.map(str::len);
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{cell:<w$}");
            } else {
                let _ = write!(out, "  {cell:>w$}");
            }
        }
        out.push('\n');
    };
    line(&mut out, &COLUMNS.map(String::from));
    for row in rows {
        line(&mut out, row);
    }
    out
}

/// Aligned text table of per-example reports.
pub fn report_table(reports: &[DecodeReport]) -> String {
    let rows: Vec<[String; 10]> = reports
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                format!("{}{}", r.path_count, if r.path_count_saturated { "+" } else { "" }),
                r.novel_unigrams.to_string(),
                r.novel_bigrams.to_string(),
                format!("{:.1}", r.self_bleu),
                format!("{:.2}", r.mean_edit_distance),
                format!("{}{}", opt(r.oracle_match, 3), if r.oracle_approximate { "~" } else { "" }),
                opt(r.sample_match, 3),
                r.expanded.to_string(),
                opt(r.pruned_ratio, 3),
            ]
        })
        .collect();
    render(&rows)
}

/// Aligned text table with one row per summary, one summary per method.
pub fn summary_table(summaries: &[ReportSummary]) -> String {
    let rows: Vec<[String; 10]> = summaries
        .iter()
        .map(|s| {
            [
                s.name.clone(),
                format!("{:.1}", s.path_count),
                format!("{:.1}", s.novel_unigrams),
                format!("{:.1}", s.novel_bigrams),
                format!("{:.1}", s.self_bleu),
                format!("{:.2}", s.mean_edit_distance),
                opt(s.oracle_match, 3),
                opt(s.sample_match, 3),
                format!("{:.1}", s.expanded),
                opt(s.pruned_ratio, 3),
            ]
        })
        .collect();
    render(&rows)
}

#[cfg(test)]
mod tests;
