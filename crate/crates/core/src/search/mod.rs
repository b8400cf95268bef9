//! Decoding algorithms. Every algorithm builds a [`Lattice`] and pays for
//! each model call through a [`BudgetMeter`].

mod beam;
mod bfs;
mod frontier;
mod greedy;
mod sampling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Lattice, LatticeError, NodeId, PathCounts};
use crate::model::{BudgetMeter, ModelError, ScoringModel, TokenDistribution, DEFAULT_TOP_K};
use crate::recomb::{MergeEvent, RecombConfig, Strategy};
use crate::TokenId;

pub use beam::{decode_beam, decode_diverse_beam};
pub use bfs::decode_bfs;
pub use frontier::{Frontier, FrontierEntry, Priority};
pub use greedy::decode_greedy;
pub use sampling::{decode_sampling, sampling_distribution};

/// Per-node path-count cap used throughout the metrics.
pub const PATH_CAP: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Greedy,
    Beam,
    Dbs,
    Nucleus,
    Temp,
    Bfs,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Greedy,
        Algorithm::Beam,
        Algorithm::Dbs,
        Algorithm::Nucleus,
        Algorithm::Temp,
        Algorithm::Bfs,
    ];

    /// Baselines get the budget-corrected beam size.
    pub fn is_baseline(self) -> bool {
        !matches!(self, Algorithm::Bfs | Algorithm::Greedy)
    }

    pub fn supports(self, strategy: Strategy) -> bool {
        match strategy {
            Strategy::None => true,
            Strategy::Zbeam => matches!(self, Algorithm::Beam | Algorithm::Dbs),
            Strategy::Rcb => !matches!(self, Algorithm::Greedy),
            Strategy::Zip => matches!(self, Algorithm::Bfs | Algorithm::Nucleus | Algorithm::Temp),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Greedy => "greedy",
            Algorithm::Beam => "beam",
            Algorithm::Dbs => "dbs",
            Algorithm::Nucleus => "nucleus",
            Algorithm::Temp => "temp",
            Algorithm::Bfs => "bfs",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub algorithm: Algorithm,
    /// Beam size, or number of sampled sequences.
    pub k: usize,
    /// Model-call allowance; `k * max_len` when unset.
    pub budget: Option<usize>,
    /// Expansions considered per node.
    pub top_k: usize,
    /// Per-token additive bonus in the search score.
    pub lambda: f64,
    /// Nucleus mass.
    pub p: f64,
    /// Sampling temperature.
    pub tau: f64,
    /// Diverse beam search groups; `k` when unset.
    pub groups: Option<usize>,
    pub diversity_strength: f64,
    /// Maximum number of generated tokens, end token included.
    pub max_len: usize,
    pub seed: u64,
    pub recomb: RecombConfig,
    /// Re-verify lattice invariants after every mutation.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub strict: bool,
}

impl SearchConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            k: 5,
            budget: None,
            top_k: DEFAULT_TOP_K,
            lambda: 0.0,
            p: 0.9,
            tau: 1.5,
            groups: None,
            diversity_strength: 1.5,
            max_len: 30,
            seed: 0,
            recomb: RecombConfig::default(),
            strict: false,
        }
    }

    pub fn budget(&self) -> usize {
        self.budget.unwrap_or(self.k * self.max_len)
    }

    pub fn groups(&self) -> usize {
        self.groups.unwrap_or(self.k)
    }

    /// Search score `s = sum log p + lambda * len`.
    pub fn score(&self, log_prob: f64, len: usize) -> f64 {
        log_prob + self.lambda * len as f64
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let fail = |m: String| Err(SearchError::Config(m));
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.budget() == 0 {
            return fail("budget must be positive".into());
        }
        if self.top_k == 0 {
            return fail("top-k must be at least 1".into());
        }
        if self.max_len == 0 {
            return fail("max length must be at least 1".into());
        }
        if !self.lambda.is_finite() {
            return fail(format!("lambda {} is not finite", self.lambda));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return fail(format!("nucleus p = {} is outside (0, 1]", self.p));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return fail(format!("temperature {} must be positive", self.tau));
        }
        if self.algorithm == Algorithm::Dbs {
            let g = self.groups();
            if g == 0 || self.k % g != 0 {
                return fail(format!("k = {} is not divisible by {g} groups", self.k));
            }
            if !(self.diversity_strength >= 0.0 && self.diversity_strength.is_finite()) {
                return fail(format!("diversity strength {} must be non-negative", self.diversity_strength));
            }
        }
        self.recomb.validate().map_err(SearchError::Config)?;
        if !self.algorithm.supports(self.recomb.strategy) {
            return fail(format!(
                "recombination {} is not available for {}",
                self.recomb.strategy, self.algorithm
            ));
        }
        Ok(())
    }
}

/// Budget correction for the baselines, which otherwise expand fewer nodes
/// than best-first search under the same nominal beam size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskProfile {
    Translation,
    Summarization,
    Custom(f64),
}

impl TaskProfile {
    pub fn multiplier(self) -> f64 {
        match self {
            TaskProfile::Translation => 1.5,
            TaskProfile::Summarization => 1.25,
            TaskProfile::Custom(m) => m,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct EffectiveBudget {
    pub k: usize,
    pub corrected_k: usize,
    /// `k * max_len`, the allowance of budget-metered methods.
    pub budget: usize,
    /// `corrected_k * max_len`.
    pub corrected_budget: usize,
}

pub fn effective_budget(profile: TaskProfile, k: usize, max_len: usize) -> EffectiveBudget {
    let corrected_k = ((k as f64 * profile.multiplier()).round() as usize).max(1);
    EffectiveBudget {
        k,
        corrected_k,
        budget: k * max_len,
        corrected_budget: corrected_k * max_len,
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Counters that explain how a search ended.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Nodes closed at the length limit without an end token.
    pub truncated: usize,
    /// Hypotheses cut off by budget exhaustion and closed as they were.
    pub incomplete: usize,
    /// Frontier entries dropped because their node had been merged away.
    pub stale_entries: usize,
    /// Frontier entries never popped.
    pub frontier_left: usize,
    pub merges_accepted: usize,
    pub merges_rejected: usize,
    /// The search stopped because the budget ran out.
    pub budget_exhausted: bool,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub algorithm: Algorithm,
    pub lattice: Lattice,
    /// Model calls made; equal to the number of node expansions.
    pub expanded: usize,
    pub budget: usize,
    /// Every expansion in call order (a node expanded twice by sampling
    /// chains appears twice). Ids may since have been merged away.
    pub expanded_ids: Vec<NodeId>,
    /// Terminal nodes of the returned hypotheses: best first for beam
    /// methods and greedy decoding, chain order for sampling. Empty for BFS.
    pub finished: Vec<NodeId>,
    pub paths: PathCounts,
    /// Expansions whose node no longer lies on any complete path.
    pub pruned: usize,
    pub events: Vec<MergeEvent>,
    pub diagnostics: Diagnostics,
}

impl SearchResult {
    /// Complete start-to-terminal paths, saturated at [`PATH_CAP`].
    pub fn completed(&self) -> u64 {
        self.paths.total
    }

    /// Fraction of expansions not on any complete path; `None` without
    /// expansions.
    pub fn pruned_ratio(&self) -> Option<f64> {
        (self.expanded > 0).then(|| self.pruned as f64 / self.expanded_ids.len() as f64)
    }
}

/// Runs the algorithm selected in `config`.
pub fn decode<M: ScoringModel + ?Sized>(
    model: &M,
    source: &[TokenId],
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    match config.algorithm {
        Algorithm::Greedy => decode_greedy(model, source, config),
        Algorithm::Beam => decode_beam(model, source, config),
        Algorithm::Dbs => decode_diverse_beam(model, source, config),
        Algorithm::Nucleus | Algorithm::Temp => decode_sampling(model, source, config),
        Algorithm::Bfs => decode_bfs(model, source, config),
    }
}

/// For every node id, whether it lies on some complete path.
pub fn on_complete_path(lattice: &Lattice) -> Vec<bool> {
    let fwd = lattice.reachable_from_start();
    let back = lattice.reaches_terminal();
    fwd.iter().zip(back).map(|(a, b)| *a && b).collect()
}

/// State shared by all algorithms: the lattice under construction, the
/// meter, and per-node cumulative log-probabilities.
pub(crate) struct Run<'a, M: ?Sized> {
    pub model: &'a M,
    pub source: &'a [TokenId],
    pub config: &'a SearchConfig,
    pub lattice: Lattice,
    pub meter: BudgetMeter,
    pub expanded_ids: Vec<NodeId>,
    cum: Vec<f64>,
    pub events: Vec<MergeEvent>,
    pub diag: Diagnostics,
}

impl<'a, M: ScoringModel + ?Sized> Run<'a, M> {
    pub fn new(model: &'a M, source: &'a [TokenId], config: &'a SearchConfig) -> Self {
        let sos = model.sos_id();
        let mut lattice = Lattice::new(sos, model.token_text(sos));
        lattice.set_strict(config.strict);
        Self {
            model,
            source,
            config,
            lattice,
            meter: BudgetMeter::new(config.budget()),
            expanded_ids: Vec::new(),
            cum: vec![0.0],
            events: Vec::new(),
            diag: Diagnostics::default(),
        }
    }

    /// Cumulative log-probability of the canonical path of `node`.
    pub fn log_prob(&self, node: NodeId) -> f64 {
        self.cum[node.index()]
    }

    pub fn depth(&self, node: NodeId) -> usize {
        self.lattice.node(node).map_or(0, |n| n.depth as usize)
    }

    /// One metered model call for `node`; `None` once the budget is spent.
    pub fn expand(&mut self, node: NodeId) -> Result<Option<TokenDistribution>, SearchError> {
        if self.meter.exhausted() {
            self.diag.budget_exhausted = true;
            return Ok(None);
        }
        let prefix = self.lattice.canonical_tokens(node)?;
        let dist = self.meter.score(self.model, &prefix, self.source, self.config.top_k)?;
        if !self.lattice.is_expanded(node) {
            self.lattice.set_expanded(node)?;
        }
        self.expanded_ids.push(node);
        Ok(Some(dist))
    }

    /// The `Gen` child of `parent` for `token`, created if missing. The flag
    /// tells whether it is new.
    pub fn child(&mut self, parent: NodeId, token: TokenId, log_prob: f64) -> Result<(NodeId, bool), SearchError> {
        if let Some(c) = self.lattice.gen_child_with_token(parent, token) {
            return Ok((c, false));
        }
        let eos = token == self.model.eos_id();
        let id = self
            .lattice
            .add_gen_child(parent, token, self.model.token_text(token), log_prob, eos)?;
        let total = self.cum[parent.index()] + log_prob;
        if self.cum.len() <= id.index() {
            self.cum.resize(id.index() + 1, 0.0);
        }
        self.cum[id.index()] = total;
        Ok((id, true))
    }

    pub fn is_eos(&self, node: NodeId) -> bool {
        self.lattice.node(node).is_some_and(|n| n.is_eos)
    }

    /// Closes `node` as the end of a hypothesis.
    pub fn close(&mut self, node: NodeId) -> Result<(), SearchError> {
        if !self.is_eos(node) && !self.lattice.is_terminal(node) {
            self.diag.truncated += 1;
        }
        self.lattice.mark_terminal(node)?;
        Ok(())
    }

    pub fn record(&mut self, event: MergeEvent) {
        if event.accepted {
            self.diag.merges_accepted += 1;
        } else {
            self.diag.merges_rejected += 1;
        }
        self.events.push(event);
    }

    pub fn finish(mut self, finished: Vec<NodeId>) -> Result<SearchResult, SearchError> {
        self.lattice.prune_dead_ends()?;
        let on_path = on_complete_path(&self.lattice);
        let pruned = self
            .expanded_ids
            .iter()
            .filter(|&&id| {
                let r = self.lattice.resolve(id);
                !(self.lattice.is_live(r) && on_path[r.index()])
            })
            .count();
        let paths = self.lattice.count_paths(PATH_CAP)?;
        log::debug!(
            "{}: {} expansions, {} complete paths, {} pruned",
            self.config.algorithm,
            self.meter.spent(),
            paths.total,
            pruned
        );
        Ok(SearchResult {
            algorithm: self.config.algorithm,
            expanded: self.meter.spent(),
            budget: self.meter.budget(),
            expanded_ids: self.expanded_ids,
            finished,
            paths,
            pruned,
            events: self.events,
            diagnostics: self.diag,
            lattice: self.lattice,
        })
    }
}

#[cfg(test)]
mod tests;
