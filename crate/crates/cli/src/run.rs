use std::fs;
use std::path::{Path, PathBuf};

use lattice_search::metrics::{DecodeReport, Metric, ReportSummary};
use lattice_search::recomb::events_to_json_lines;
use lattice_search::search::{decode, effective_budget, SearchConfig, TaskProfile};
use lattice_search::SearchResult;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Model, ModelSpec};
use crate::seeds::{self, Purpose};
use crate::CliError;

/// Everything needed to reproduce one decoding run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub model: ModelSpec,
    /// One source per line.
    pub input: PathBuf,
    /// References aligned with `input`.
    pub refs: Option<PathBuf>,
    /// `config.seed` is the root seed; each example gets its own.
    pub config: SearchConfig,
    /// Budget correction applied to the baselines.
    pub profile: Option<TaskProfile>,
    /// Metric for oracle and sample match; follows the profile when unset.
    pub metric: Option<Metric>,
    pub out: PathBuf,
}

impl RunSpec {
    /// The search configuration actually run: baselines get the corrected
    /// beam size under a task profile.
    pub fn effective_config(&self) -> SearchConfig {
        let mut config = self.config.clone();
        if let Some(profile) = self.profile {
            if config.algorithm.is_baseline() {
                config.k = effective_budget(profile, config.k, config.max_len).corrected_k;
            }
        }
        config
    }

    pub fn metric(&self) -> Metric {
        self.metric.unwrap_or(match self.profile {
            Some(TaskProfile::Translation) => Metric::Bleu,
            _ => Metric::Rouge2,
        })
    }

    /// Short hash of everything that affects the outputs except the input
    /// and output locations.
    pub fn config_hash(&self) -> String {
        let key = serde_json::json!({
            "model": self.model,
            "config": self.effective_config(),
            "metric": self.metric(),
            "refs": self.refs.is_some(),
        });
        seeds::short_hash(key.to_string().as_bytes())
    }
}

/// Sources and references of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Inputs {
    pub sources: Vec<String>,
    pub refs: Option<Vec<String>>,
}

fn read_lines(path: &Path, what: &str) -> Result<Vec<String>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Config(format!("cannot read {what} {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes)
        .map_err(|e| CliError::Config(format!("{what} {} is not UTF-8: {e}", path.display())))?;
    Ok(text.lines().map(str::to_owned).collect())
}

pub fn load_inputs(input: &Path, refs: Option<&Path>) -> Result<Inputs, CliError> {
    let sources = read_lines(input, "input")?;
    if sources.is_empty() {
        return Err(CliError::Config(format!("input {} has no lines", input.display())));
    }
    let refs = match refs {
        None => None,
        Some(path) => {
            let refs = read_lines(path, "reference file")?;
            if refs.len() != sources.len() {
                return Err(CliError::Config(format!(
                    "reference file has {} lines but the input has {}",
                    refs.len(),
                    sources.len()
                )));
            }
            Some(refs)
        }
    };
    Ok(Inputs { sources, refs })
}

/// A validated run with its model loaded.
pub struct Prepared {
    pub spec: RunSpec,
    pub config: SearchConfig,
    pub inputs: Inputs,
    pub model: Model,
}

impl Prepared {
    /// Validates the configuration and reads the inputs, then loads the
    /// model. Nothing is decoded.
    pub fn new(spec: &RunSpec) -> Result<Self, CliError> {
        let config = spec.effective_config();
        config.validate()?;
        let inputs = load_inputs(&spec.input, spec.refs.as_deref())?;
        let model = spec.model.load(config.top_k)?;
        Ok(Self {
            spec: spec.clone(),
            config,
            inputs,
            model,
        })
    }

    /// Same inputs and model under another specification.
    pub fn with_spec(&self, spec: &RunSpec) -> Result<RunView<'_>, CliError> {
        let config = spec.effective_config();
        config.validate()?;
        Ok(RunView {
            spec: spec.clone(),
            config,
            inputs: &self.inputs,
            model: &self.model,
        })
    }

    pub fn view(&self) -> RunView<'_> {
        RunView {
            spec: self.spec.clone(),
            config: self.config.clone(),
            inputs: &self.inputs,
            model: &self.model,
        }
    }
}

/// A run specification bound to loaded inputs and a model.
pub struct RunView<'a> {
    pub spec: RunSpec,
    pub config: SearchConfig,
    pub inputs: &'a Inputs,
    pub model: &'a Model,
}

pub struct Example {
    pub index: usize,
    pub result: SearchResult,
    pub report: DecodeReport,
}

pub fn example_name(index: usize) -> String {
    format!("{index:05}")
}

impl RunView<'_> {
    pub fn search_config(&self, index: usize) -> SearchConfig {
        let mut config = self.config.clone();
        config.seed = seeds::derive(self.spec.config.seed, index, Purpose::Search);
        config
    }

    pub fn source(&self, index: usize) -> Result<Vec<u32>, CliError> {
        Ok(self.model.encode(&self.inputs.sources[index])?)
    }

    pub fn decode_one(&self, index: usize) -> Result<Example, CliError> {
        let source = self.source(index)?;
        let result = decode(self.model.as_ref(), &source, &self.search_config(index))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(self.spec.config.seed, index, Purpose::Metrics));
        let reference: Option<Vec<&str>> = self
            .inputs
            .refs
            .as_ref()
            .map(|r| r[index].split_whitespace().collect());
        let report = DecodeReport::compute(
            example_name(index),
            &result,
            reference.as_deref().map(|r| (r, self.spec.metric())),
            &mut rng,
        )?;
        log::debug!("example {index}: {} paths, {} expanded", report.path_count, report.expanded);
        Ok(Example { index, result, report })
    }

    /// Decodes every example, in parallel unless the model is a bridge
    /// process (one connection serves one search at a time).
    pub fn decode_all(&self) -> Vec<Result<Example, CliError>> {
        let n = self.inputs.sources.len();
        if self.spec.model.is_bridge() {
            (0..n).map(|i| self.decode_one(i)).collect()
        } else {
            (0..n).into_par_iter().map(|i| self.decode_one(i)).collect()
        }
    }
}

fn write(path: PathBuf, contents: &str) -> Result<(), CliError> {
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes `NNNNN.lattice.json`, `NNNNN.lattice.dot`, `NNNNN.report.json`
/// and, when any merge was attempted, `NNNNN.merges.jsonl`.
pub fn write_example(dir: &Path, ex: &Example) -> Result<(), CliError> {
    let name = example_name(ex.index);
    write(dir.join(format!("{name}.lattice.json")), &ex.result.lattice.to_json())?;
    write(dir.join(format!("{name}.lattice.dot")), &ex.result.lattice.to_dot())?;
    write(dir.join(format!("{name}.report.json")), &ex.report.to_json())?;
    if !ex.result.events.is_empty() {
        write(dir.join(format!("{name}.merges.jsonl")), &events_to_json_lines(&ex.result.events))?;
    }
    Ok(())
}

/// Aggregate file contents, keyed by config hash.
#[derive(Serialize)]
pub struct Aggregate<'a> {
    pub config_hash: String,
    pub spec: &'a RunSpec,
    pub effective_config: &'a SearchConfig,
    pub summary: ReportSummary,
}

pub struct DecodeOutcome {
    pub config_hash: String,
    pub reports: Vec<DecodeReport>,
    pub summary: ReportSummary,
}

/// Decodes every example of `spec` and writes the per-example files plus
/// `summary-<hash>.json` into the output directory. Fails on the first
/// example that fails.
pub fn run_decode(spec: &RunSpec) -> Result<DecodeOutcome, CliError> {
    let prepared = Prepared::new(spec)?;
    let view = prepared.view();
    create_dir(&spec.out)?;
    let mut reports = Vec::new();
    for ex in view.decode_all() {
        let ex = ex?;
        write_example(&spec.out, &ex)?;
        reports.push(ex.report);
    }
    let config_hash = spec.config_hash();
    let name = format!("{}{}", spec.effective_config().algorithm, recomb_suffix(spec));
    let summary = ReportSummary::new(name, &reports);
    let agg = Aggregate {
        config_hash: config_hash.clone(),
        spec,
        effective_config: &view.config,
        summary: summary.clone(),
    };
    let json = serde_json::to_string_pretty(&agg).expect("aggregates always serialize");
    write(spec.out.join(format!("summary-{config_hash}.json")), &json)?;
    Ok(DecodeOutcome {
        config_hash,
        reports,
        summary,
    })
}

fn recomb_suffix(spec: &RunSpec) -> String {
    let r = spec.config.recomb;
    if r.enabled() {
        format!("+{}", r.strategy)
    } else {
        String::new()
    }
}
