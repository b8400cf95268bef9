//! Hypothesis recombination: the suffix-matching merge criterion and the
//! strategies that apply it.
//!
//! * [`Strategy::Zbeam`] only looks at nodes on the canonical paths of the
//!   current beam and merges one node.
//! * [`Strategy::Rcb`] looks up every closed node through a [`MergeIndex`]
//!   and merges one node.
//! * [`Strategy::Zip`] uses the same lookup, then keeps unifying the parents
//!   of both nodes while their tokens agree (up to `n` pairs), deleting the
//!   absorbed branch together with its unexplored successors.
//!
//! A merge never calls the model.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lattice::{Lattice, NodeId, Result};
use crate::model::{ModelError, ScoringModel};
use crate::TokenId;

pub const DEFAULT_SUFFIX_N: usize = 4;
pub const DEFAULT_ALPHA: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    None,
    Zbeam,
    Rcb,
    Zip,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::None => "none",
            Strategy::Zbeam => "zbeam",
            Strategy::Rcb => "rcb",
            Strategy::Zip => "zip",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Strategy::None),
            "zbeam" => Ok(Strategy::Zbeam),
            "rcb" => Ok(Strategy::Rcb),
            "zip" => Ok(Strategy::Zip),
            other => Err(format!("unknown recombination strategy {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecombConfig {
    pub strategy: Strategy,
    /// Number of trailing tokens that must agree.
    pub suffix_n: usize,
    /// Lengths must differ by strictly less than this many tokens.
    pub alpha: usize,
}

impl Default for RecombConfig {
    fn default() -> Self {
        Self::new(Strategy::None)
    }
}

impl RecombConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            suffix_n: DEFAULT_SUFFIX_N,
            alpha: DEFAULT_ALPHA,
        }
    }

    pub fn with_suffix(mut self, n: usize) -> Self {
        self.suffix_n = n;
        self
    }

    pub fn with_alpha(mut self, alpha: usize) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn enabled(&self) -> bool {
        self.strategy != Strategy::None
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.suffix_n == 0 {
            return Err("suffix length n must be at least 1".into());
        }
        if self.alpha == 0 {
            return Err("length tolerance alpha must be at least 1".into());
        }
        Ok(())
    }
}

/// The merge criterion on two generated-token sequences (start token
/// excluded): the last `n` tokens agree and the lengths differ by less than
/// `alpha`. Sequences shorter than `n` never match.
pub fn is_recomb(a: &[TokenId], b: &[TokenId], config: &RecombConfig) -> bool {
    let n = config.suffix_n;
    a.len() >= n && b.len() >= n && a.len().abs_diff(b.len()) < config.alpha && a[a.len() - n..] == b[b.len() - n..]
}

/// The last `n` generated tokens on the canonical path of `node`, or `None`
/// if the node is shallower than `n`.
pub fn suffix_key(lattice: &Lattice, node: NodeId, n: usize) -> Option<Vec<TokenId>> {
    let mut cur = lattice.node(node)?;
    if (cur.depth as usize) < n {
        return None;
    }
    let mut key = Vec::with_capacity(n);
    for i in 0..n {
        key.push(cur.token);
        if i + 1 < n {
            cur = lattice.node(cur.parent?)?;
        }
    }
    key.reverse();
    Some(key)
}

/// Suffix-keyed lookup of closed nodes.
#[derive(Clone, Debug, Default)]
pub struct MergeIndex {
    suffix_n: usize,
    buckets: HashMap<Vec<TokenId>, Vec<NodeId>>,
}

impl MergeIndex {
    pub fn new(suffix_n: usize) -> Self {
        Self {
            suffix_n,
            buckets: HashMap::new(),
        }
    }

    /// Files `node` under its suffix. Returns false if it is too shallow.
    pub fn insert(&mut self, lattice: &Lattice, node: NodeId) -> bool {
        match suffix_key(lattice, node, self.suffix_n) {
            Some(key) => {
                self.buckets.entry(key).or_default().push(node);
                true
            }
            None => false,
        }
    }

    /// Indexed nodes under `key` in insertion order, possibly including
    /// removed ones.
    pub fn candidates(&self, key: &[TokenId]) -> &[NodeId] {
        self.buckets.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of indexed entries, removed nodes included until purged.
    pub fn len(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Earliest-inserted live node that satisfies [`is_recomb`] with `popped`.
    /// Removed nodes met along the way are dropped from the index.
    pub fn find_target(&mut self, lattice: &Lattice, popped: NodeId, config: &RecombConfig) -> Option<NodeId> {
        let key = suffix_key(lattice, popped, self.suffix_n)?;
        let depth = lattice.node(popped)?.depth as usize;
        let bucket = self.buckets.get_mut(&key)?;
        bucket.retain(|&c| lattice.is_live(c));
        bucket.iter().copied().find(|&c| {
            c != popped && lattice.node(c).is_some_and(|n| (n.depth as usize).abs_diff(depth) < config.alpha)
        })
    }
}

/// One application of a merge strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub popped: NodeId,
    pub target: NodeId,
    pub strategy: Strategy,
    /// False if the merge would have closed a cycle and was not applied.
    pub accepted: bool,
    /// Node pairs unified.
    pub merged: usize,
    /// Unexplored successors deleted with the absorbed branch.
    pub deduplicated: usize,
    /// Expansions spent when the merge happened.
    pub step: usize,
    /// Canonical tokens of both nodes before the merge, start token first.
    pub popped_prefix: Vec<TokenId>,
    pub target_prefix: Vec<TokenId>,
}

impl MergeEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("merge events always serialize")
    }
}

/// Serializes events one JSON object per line.
pub fn events_to_json_lines(events: &[MergeEvent]) -> String {
    events.iter().map(|e| e.to_json_line() + "\n").collect()
}

pub fn events_from_json_lines(text: &str) -> std::result::Result<Vec<MergeEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

fn event(lattice: &Lattice, popped: NodeId, target: NodeId, strategy: Strategy, step: usize) -> Result<MergeEvent> {
    Ok(MergeEvent {
        popped,
        target,
        strategy,
        accepted: false,
        merged: 0,
        deduplicated: 0,
        step,
        popped_prefix: lattice.canonical_tokens(popped)?,
        target_prefix: lattice.canonical_tokens(target)?,
    })
}

/// Absorbs `popped` into `target`: a merge edge from the parent of `popped`
/// to `target`, then `popped` is removed and remapped onto `target`.
pub fn do_recomb_rcb(lattice: &mut Lattice, popped: NodeId, target: NodeId, step: usize) -> Result<MergeEvent> {
    let mut ev = event(lattice, popped, target, Strategy::Rcb, step)?;
    let Some(parent) = lattice.node(popped).and_then(|n| n.parent) else {
        lattice.note_rejected_merge();
        return Ok(ev);
    };
    if !lattice.add_mrg_edge(parent, target)? {
        return Ok(ev);
    }
    let removal = lattice.remove_subtree(popped, Some(target))?;
    ev.accepted = true;
    ev.merged = 1;
    ev.deduplicated = removal.count() - 1;
    Ok(ev)
}

/// The node pairs a zip merge of `popped` into `target` would unify,
/// deepest first.
pub fn zip_pairs(lattice: &Lattice, popped: NodeId, target: NodeId, config: &RecombConfig) -> Vec<(NodeId, NodeId)> {
    let mut pairs = vec![(popped, target)];
    let target_line: HashSet<NodeId> = match lattice.canonical_path(target) {
        Ok(p) => p.nodes.into_iter().collect(),
        Err(_) => return pairs,
    };
    while pairs.len() < config.suffix_n {
        let (pp, tt) = *pairs.last().expect("nonempty");
        let parent = |id: NodeId| lattice.node(id).and_then(|n| n.parent);
        let (Some(p), Some(t)) = (parent(pp), parent(tt)) else { break };
        let (pn, tn) = match (lattice.node(p), lattice.node(t)) {
            (Some(a), Some(b)) => (a, b),
            _ => break,
        };
        if p == lattice.sos() || t == lattice.sos() || p == t || pn.token != tn.token || target_line.contains(&p) {
            break;
        }
        if lattice.children(p).any(|c| c != pp && !lattice.is_pending(c)) {
            break;
        }
        pairs.push((p, t));
    }
    pairs
}

/// Applies the first `pairs.len()` pairs on `trial`; `None` if that would
/// drop a merge edge to avoid a cycle.
fn try_zip(original: &Lattice, trial: &mut Lattice, pairs: &[(NodeId, NodeId)]) -> Result<Option<usize>> {
    let popped = pairs[0].0;
    let (deepest, anchor_target) = pairs[pairs.len() - 1];
    let Some(anchor) = original.node(deepest).and_then(|n| n.parent) else {
        return Ok(None);
    };
    let mut dedup = 0;
    for &(p, t) in pairs {
        if !trial.is_live(p) {
            continue;
        }
        let r = trial.remove_subtree(p, Some(t))?;
        if r.dropped_cycle > 0 {
            return Ok(None);
        }
        dedup += r
            .removed
            .iter()
            .filter(|&&id| id != popped && original.is_pending(id))
            .count();
    }
    if !trial.is_live(anchor) || !trial.is_live(anchor_target) || !trial.add_mrg_edge(anchor, anchor_target)? {
        return Ok(None);
    }
    Ok(Some(dedup))
}

/// Zip merge of `popped` into `target`, falling back to fewer pairs when the
/// longer merge would close a cycle.
pub fn do_recomb_zip(
    lattice: &mut Lattice,
    popped: NodeId,
    target: NodeId,
    config: &RecombConfig,
    step: usize,
) -> Result<MergeEvent> {
    let mut ev = event(lattice, popped, target, Strategy::Zip, step)?;
    let pairs = zip_pairs(lattice, popped, target, config);
    for m in (1..=pairs.len()).rev() {
        let mut trial = lattice.clone();
        trial.set_strict(false);
        if let Some(dedup) = try_zip(lattice, &mut trial, &pairs[..m])? {
            trial.set_strict(lattice.is_strict());
            if lattice.is_strict() {
                trial.check_invariants()?;
            }
            *lattice = trial;
            ev.accepted = true;
            ev.merged = m;
            ev.deduplicated = dedup;
            return Ok(ev);
        }
    }
    lattice.note_rejected_merge();
    Ok(ev)
}

/// Merge candidates under beam-local recombination: every node on the
/// canonical path of a current beam hypothesis, in beam order.
pub fn zbeam_candidates(lattice: &Lattice, beam: &[NodeId]) -> Vec<NodeId> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &h in beam {
        if let Ok(p) = lattice.canonical_path(h) {
            for n in p.nodes {
                if n != lattice.sos() && seen.insert(n) {
                    out.push(n);
                }
            }
        }
    }
    out
}

/// First candidate whose canonical path satisfies [`is_recomb`] with that of
/// `popped`.
pub fn zbeam_target(lattice: &Lattice, candidates: &[NodeId], popped: NodeId, config: &RecombConfig) -> Option<NodeId> {
    let key = lattice.canonical_tokens(popped).ok()?;
    candidates.iter().copied().find(|&c| {
        c != popped
            && lattice
                .canonical_tokens(c)
                .is_ok_and(|t| is_recomb(&key[1..], &t[1..], config))
    })
}

/// Exact-match rate of greedy continuations of merged prefix pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MergeValidation {
    pub horizon: usize,
    pub events: usize,
    pub exact_matches: usize,
    /// `None` when there were no accepted merges.
    pub exact_match: Option<f64>,
}

/// Up to `horizon` greedy tokens after `prefix`, stopping after the end token.
pub fn greedy_continuation<M: ScoringModel + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    source: &[TokenId],
    horizon: usize,
) -> std::result::Result<Vec<TokenId>, ModelError> {
    let mut ctx = prefix.to_vec();
    let mut out = Vec::new();
    for _ in 0..horizon {
        let Some((tok, _)) = model.score(&ctx, source, 1)?.best() else { break };
        out.push(tok);
        ctx.push(tok);
        if tok == model.eos_id() {
            break;
        }
    }
    Ok(out)
}

/// For every accepted merge, compares the greedy continuations of both
/// pre-merge prefixes over `horizon` tokens.
pub fn validate_merges<M: ScoringModel + ?Sized>(
    model: &M,
    source: &[TokenId],
    events: &[MergeEvent],
    horizon: usize,
) -> std::result::Result<MergeValidation, ModelError> {
    let mut total = 0;
    let mut matches = 0;
    for ev in events.iter().filter(|e| e.accepted) {
        total += 1;
        let a = greedy_continuation(model, &ev.popped_prefix, source, horizon)?;
        let b = greedy_continuation(model, &ev.target_prefix, source, horizon)?;
        if a == b {
            matches += 1;
        }
    }
    Ok(MergeValidation {
        horizon,
        events: total,
        exact_matches: matches,
        exact_match: (total > 0).then(|| matches as f64 / total as f64),
    })
}
