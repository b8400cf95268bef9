//! The hypothesis lattice.
//!
//! Every node is one token. Nodes are connected by two kinds of edges:
//! [`EdgeKind::Gen`] edges are created when the model expands a node and
//! always form a tree rooted at the start node, while [`EdgeKind::Mrg`]
//! edges are added by recombination and reroute one hypothesis into an
//! existing node. Because only `Gen` edges ever define a node's scoring
//! context, every node keeps exactly one *canonical path* no matter how many
//! merges happen around it.
//!
//! Removed nodes are tombstoned, never reused, and remapped onto their
//! surviving representative through a [`UnionFind`].

mod io;
mod kbest;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::union_find::UnionFind;
use crate::TokenId;

pub use kbest::best_paths;

/// Dense node identifier, stable for the lifetime of a lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    #[serde(rename = "GEN")]
    Gen,
    #[serde(rename = "MRG")]
    Mrg,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeNode {
    pub id: NodeId,
    pub token: TokenId,
    pub text: String,
    /// Natural-log probability of `token` given the node's canonical prefix.
    pub log_prob: f64,
    /// The token is the model's end-of-sequence symbol.
    pub is_eos: bool,
    /// Number of generated tokens on the canonical path (the start node is 0).
    pub depth: u32,
    /// Source of the single incoming `Gen` edge.
    pub parent: Option<NodeId>,
    expanded: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} has been removed")]
    RemovedNode(NodeId),
    #[error("cycle detected through node {0}")]
    Cycle(NodeId),
    #[error("node {0} has no outgoing edge and does not end a hypothesis")]
    DeadEnd(NodeId),
    #[error("the start node cannot be removed")]
    RemoveStart,
    #[error("lattice invariant violated: {0}")]
    Invariant(String),
    #[error("malformed lattice at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

pub type Result<T, E = LatticeError> = std::result::Result<T, E>;

/// A walk through the lattice starting at the start node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    /// Token of every node on the walk, start token included.
    pub tokens: Vec<TokenId>,
    /// Sum of the stored log-probabilities of every node after the start.
    pub log_prob: f64,
}

impl Path {
    /// Number of generated tokens (the start node is not counted).
    pub fn len(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last(&self) -> NodeId {
        *self.nodes.last().expect("a path always holds the start node")
    }

    /// Generated tokens, without the start token.
    pub fn generated(&self) -> &[TokenId] {
        self.tokens.get(1..).unwrap_or(&[])
    }

    /// Surface words of the path, skipping the start node and the
    /// end-of-sequence node.
    pub fn words<'a>(&self, lattice: &'a Lattice) -> Vec<&'a str> {
        self.nodes
            .iter()
            .skip(1)
            .filter_map(|&id| lattice.node(id))
            .filter(|n| !n.is_eos)
            .map(|n| n.text.as_str())
            .collect()
    }
}

/// Result of [`Lattice::count_paths`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathCounts {
    /// Saturated number of paths from the start node, indexed by node id.
    pub per_node: Vec<u64>,
    /// Sum of the per-node counts over the terminal nodes, at most the cap.
    pub total: u64,
    /// Some per-node count hit the cap, so `total` is a lower bound.
    pub saturated: bool,
}

/// Outcome of a node removal.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Removal {
    pub removed: Vec<NodeId>,
    pub rerouted: usize,
    pub dropped_duplicate: usize,
    pub dropped_cycle: usize,
}

impl Removal {
    pub fn count(&self) -> usize {
        self.removed.len()
    }
}

#[derive(Clone, Debug)]
pub struct Lattice {
    nodes: Vec<Option<LatticeNode>>,
    out: Vec<Vec<(NodeId, EdgeKind)>>,
    inc: Vec<Vec<(NodeId, EdgeKind)>>,
    sos: NodeId,
    terminals: BTreeSet<NodeId>,
    remap: UnionFind,
    rejected_merges: usize,
    live: usize,
    strict: bool,
}

impl Lattice {
    /// A lattice holding only the start node.
    pub fn new(sos_token: TokenId, sos_text: impl Into<String>) -> Self {
        let sos = NodeId(0);
        let mut remap = UnionFind::new();
        remap.grow_to(0);
        Self {
            nodes: vec![Some(LatticeNode {
                id: sos,
                token: sos_token,
                text: sos_text.into(),
                log_prob: 0.0,
                is_eos: false,
                depth: 0,
                parent: None,
                expanded: false,
            })],
            out: vec![Vec::new()],
            inc: vec![Vec::new()],
            sos,
            terminals: BTreeSet::new(),
            remap,
            rejected_merges: 0,
            live: 1,
            strict: false,
        }
    }

    /// When enabled, every mutation re-verifies all structural invariants
    /// and panics on a violation. Quadratic; meant for tests.
    pub fn set_strict(&mut self, strict: bool) {
        self.strict = strict;
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn sos(&self) -> NodeId {
        self.sos
    }

    /// Number of live nodes.
    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    /// Number of ids ever allocated, tombstones included.
    pub fn id_capacity(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&LatticeNode> {
        self.nodes.get(id.index()).and_then(Option::as_ref)
    }

    pub fn is_live(&self, id: NodeId) -> bool {
        self.node(id).is_some()
    }

    /// Follows merge remapping to the surviving representative.
    pub fn resolve(&self, id: NodeId) -> NodeId {
        NodeId(self.remap.find(id.0))
    }

    pub fn remap(&self) -> &UnionFind {
        &self.remap
    }

    fn live_node(&self, id: NodeId) -> Result<&LatticeNode> {
        match self.nodes.get(id.index()) {
            None => Err(LatticeError::UnknownNode(id)),
            Some(None) => Err(LatticeError::RemovedNode(id)),
            Some(Some(n)) => Ok(n),
        }
    }

    /// Resolves `id` through the remap and requires the result to be live.
    pub fn resolve_live(&self, id: NodeId) -> Result<NodeId> {
        if id.index() >= self.nodes.len() {
            return Err(LatticeError::UnknownNode(id));
        }
        let r = self.resolve(id);
        self.live_node(r)?;
        Ok(r)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().flatten().map(|n| n.id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &LatticeNode> + '_ {
        self.nodes.iter().flatten()
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.node_ids().flat_map(move |src| {
            self.out[src.index()]
                .iter()
                .map(move |&(dst, kind)| Edge { src, dst, kind })
        })
    }

    pub fn edge_count(&self, kind: EdgeKind) -> usize {
        self.edges().filter(|e| e.kind == kind).count()
    }

    pub fn successors(&self, id: NodeId) -> &[(NodeId, EdgeKind)] {
        self.out.get(id.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn predecessors(&self, id: NodeId) -> &[(NodeId, EdgeKind)] {
        self.inc.get(id.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Live `Gen` children in creation order.
    pub fn children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.successors(id)
            .iter()
            .filter(|(_, k)| *k == EdgeKind::Gen)
            .map(|&(d, _)| d)
    }

    pub fn gen_child_with_token(&self, parent: NodeId, token: TokenId) -> Option<NodeId> {
        self.children(parent)
            .find(|&c| self.node(c).is_some_and(|n| n.token == token))
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId) -> bool {
        self.successors(src).iter().any(|&(d, _)| d == dst)
    }

    pub fn terminals(&self) -> &BTreeSet<NodeId> {
        &self.terminals
    }

    pub fn is_terminal(&self, id: NodeId) -> bool {
        self.terminals.contains(&id)
    }

    /// Marks `id` as the end of a complete hypothesis.
    pub fn mark_terminal(&mut self, id: NodeId) -> Result<()> {
        self.live_node(id)?;
        self.terminals.insert(id);
        Ok(())
    }

    pub fn unmark_terminal(&mut self, id: NodeId) {
        self.terminals.remove(&id);
    }

    pub fn is_expanded(&self, id: NodeId) -> bool {
        self.node(id).is_some_and(|n| n.expanded)
    }

    pub fn set_expanded(&mut self, id: NodeId) -> Result<()> {
        self.live_node(id)?;
        if let Some(Some(n)) = self.nodes.get_mut(id.index()) {
            n.expanded = true;
        }
        Ok(())
    }

    /// Live, never expanded and not terminal: an unexplored frontier node.
    pub fn is_pending(&self, id: NodeId) -> bool {
        self.node(id).is_some_and(|n| !n.expanded) && !self.is_terminal(id)
    }

    /// Number of merge edges refused because they would close a cycle.
    pub fn rejected_merges(&self) -> usize {
        self.rejected_merges
    }

    /// Records a merge refused outside [`Lattice::add_mrg_edge`].
    pub fn note_rejected_merge(&mut self) {
        self.rejected_merges += 1;
    }

    /// Expanded or terminal: the node will never be expanded again.
    pub fn is_closed(&self, id: NodeId) -> bool {
        self.is_expanded(id) || (self.is_live(id) && self.is_terminal(id))
    }

    fn push_edge(&mut self, src: NodeId, dst: NodeId, kind: EdgeKind) {
        self.out[src.index()].push((dst, kind));
        self.inc[dst.index()].push((src, kind));
    }

    /// Expands `parent` by one token, creating a node joined by a `Gen` edge.
    pub fn add_gen_child(
        &mut self,
        parent: NodeId,
        token: TokenId,
        text: impl Into<String>,
        log_prob: f64,
        is_eos: bool,
    ) -> Result<NodeId> {
        let parent = self.resolve_live(parent)?;
        let depth = self.live_node(parent)?.depth + 1;
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Some(LatticeNode {
            id,
            token,
            text: text.into(),
            log_prob,
            is_eos,
            depth,
            parent: Some(parent),
            expanded: false,
        }));
        self.out.push(Vec::new());
        self.inc.push(Vec::new());
        self.remap.grow_to(id.0);
        self.live += 1;
        self.push_edge(parent, id, EdgeKind::Gen);
        self.after_mutation();
        Ok(id)
    }

    /// Adds a merge edge unless it would close a cycle.
    ///
    /// Returns `Ok(true)` if the edge is present afterwards (an existing edge
    /// between the two nodes counts) and `Ok(false)` if it was refused.
    pub fn add_mrg_edge(&mut self, src: NodeId, dst: NodeId) -> Result<bool> {
        let src = self.resolve_live(src)?;
        let dst = self.resolve_live(dst)?;
        if self.has_edge(src, dst) {
            return Ok(true);
        }
        if self.reaches(dst, src) {
            self.rejected_merges += 1;
            return Ok(false);
        }
        self.push_edge(src, dst, EdgeKind::Mrg);
        self.after_mutation();
        Ok(true)
    }

    /// Whether `to` is reachable from `from` (a node reaches itself).
    pub fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        if from == to {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![from];
        seen[from.index()] = true;
        while let Some(cur) = stack.pop() {
            for &(next, _) in self.successors(cur) {
                if next == to {
                    return true;
                }
                if !seen[next.index()] {
                    seen[next.index()] = true;
                    stack.push(next);
                }
            }
        }
        false
    }

    /// Token ids of the canonical path, start token first.
    pub fn canonical_tokens(&self, node: NodeId) -> Result<Vec<TokenId>> {
        Ok(self.canonical_path(node)?.tokens)
    }

    /// The unique `Gen`-only path from the start node to `node`.
    pub fn canonical_path(&self, node: NodeId) -> Result<Path> {
        let mut nodes = Vec::new();
        let mut cur = Some(node);
        while let Some(id) = cur {
            let n = self.live_node(id)?;
            nodes.push(id);
            cur = n.parent;
            if nodes.len() > self.nodes.len() {
                return Err(LatticeError::Cycle(id));
            }
        }
        nodes.reverse();
        if nodes[0] != self.sos {
            return Err(LatticeError::Invariant(format!(
                "canonical path of {node} does not start at the start node"
            )));
        }
        self.path_from_nodes(&nodes)
    }

    /// Builds a [`Path`] from a node sequence, checking every hop is an edge.
    pub fn path_from_nodes(&self, nodes: &[NodeId]) -> Result<Path> {
        let mut tokens = Vec::with_capacity(nodes.len());
        let mut log_prob = 0.0;
        for (i, &id) in nodes.iter().enumerate() {
            let n = self.live_node(id)?;
            tokens.push(n.token);
            if i == 0 {
                if id != self.sos {
                    return Err(LatticeError::Invariant(format!("path starts at {id}")));
                }
            } else {
                if !self.has_edge(nodes[i - 1], id) {
                    return Err(LatticeError::Invariant(format!(
                        "no edge {} -> {id}",
                        nodes[i - 1]
                    )));
                }
                log_prob += n.log_prob;
            }
        }
        Ok(Path {
            nodes: nodes.to_vec(),
            tokens,
            log_prob,
        })
    }

    /// Live nodes in a deterministic topological order.
    pub fn topological_order(&self) -> Result<Vec<NodeId>> {
        let mut indeg = vec![0usize; self.nodes.len()];
        for e in self.edges() {
            indeg[e.dst.index()] += 1;
        }
        let mut queue: VecDeque<NodeId> = self.node_ids().filter(|n| indeg[n.index()] == 0).collect();
        let mut order = Vec::with_capacity(self.live);
        while let Some(n) = queue.pop_front() {
            order.push(n);
            for &(d, _) in self.successors(n) {
                indeg[d.index()] -= 1;
                if indeg[d.index()] == 0 {
                    queue.push_back(d);
                }
            }
        }
        if order.len() != self.live {
            let stuck = self
                .node_ids()
                .find(|n| indeg[n.index()] > 0)
                .unwrap_or(self.sos);
            return Err(LatticeError::Cycle(stuck));
        }
        Ok(order)
    }

    /// Counts start-to-node paths with every per-node count saturating at
    /// `cap`. The total sums the counts of the terminal nodes and saturates
    /// at `cap` as well.
    pub fn count_paths(&self, cap: u64) -> Result<PathCounts> {
        let order = self.topological_order()?;
        let mut per_node = vec![0u64; self.nodes.len()];
        let mut saturated = false;
        per_node[self.sos.index()] = 1.min(cap);
        for n in order {
            let here = per_node[n.index()];
            if here == 0 {
                continue;
            }
            for &(d, _) in self.successors(n) {
                let sum = per_node[d.index()].saturating_add(here);
                if sum > cap {
                    saturated = true;
                }
                per_node[d.index()] = sum.min(cap);
            }
        }
        let sum = self
            .terminals
            .iter()
            .fold(0u64, |acc, t| acc.saturating_add(per_node[t.index()]));
        saturated |= sum > cap;
        let total = sum.min(cap);
        Ok(PathCounts {
            per_node,
            total,
            saturated,
        })
    }

    /// Uniform random walk from the start node along `Gen` and `Mrg` edges
    /// until a terminal node is reached.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Path> {
        let mut nodes = vec![self.sos];
        let mut cur = self.sos;
        while !self.is_terminal(cur) {
            let succ = self.successors(cur);
            if succ.is_empty() {
                return Err(LatticeError::DeadEnd(cur));
            }
            cur = succ[rng.gen_range(0..succ.len())].0;
            nodes.push(cur);
            if nodes.len() > self.nodes.len() + 1 {
                return Err(LatticeError::Cycle(cur));
            }
        }
        self.path_from_nodes(&nodes)
    }

    /// Every complete path, depth first, stopping after `limit` paths.
    pub fn enumerate_paths(&self, limit: usize) -> Vec<Path> {
        let mut out = Vec::new();
        let mut stack: Vec<(NodeId, usize)> = vec![(self.sos, 0)];
        let mut nodes = vec![self.sos];
        while let Some(&(node, next)) = stack.last() {
            if next == 0 && self.is_terminal(node) {
                if let Ok(p) = self.path_from_nodes(&nodes) {
                    out.push(p);
                }
                if out.len() >= limit {
                    break;
                }
            }
            let succ = self.successors(node);
            if next < succ.len() {
                let child = succ[next].0;
                if let Some(top) = stack.last_mut() {
                    top.1 += 1;
                }
                stack.push((child, 0));
                nodes.push(child);
            } else {
                stack.pop();
                nodes.pop();
            }
        }
        out
    }

    /// Removes `root` and all of its `Gen` descendants.
    ///
    /// Removed ids that were not already remapped are routed to
    /// `representative`. Merge edges touching removed nodes are rerouted to
    /// the representatives of their endpoints, or dropped when that would
    /// duplicate an edge or close a cycle.
    pub fn remove_subtree(&mut self, root: NodeId, representative: Option<NodeId>) -> Result<Removal> {
        if root == self.sos {
            return Err(LatticeError::RemoveStart);
        }
        self.live_node(root)?;
        let mut doomed = vec![false; self.nodes.len()];
        let mut order = Vec::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            doomed[n.index()] = true;
            order.push(n);
            stack.extend(self.children(n));
        }
        if let Some(rep) = representative {
            self.live_node(rep)?;
            if doomed[rep.index()] {
                return Err(LatticeError::Invariant(format!(
                    "representative {rep} lies inside the removed subtree of {root}"
                )));
            }
            for &n in &order {
                if self.remap.find(n.0) == n.0 {
                    self.remap.union_into(n.0, rep.0);
                }
            }
        }
        self.remove_marked(&doomed, true)
    }

    /// Removes every live node that does not satisfy `keep`.
    ///
    /// The removed set must be closed under `Gen` descendants, otherwise a
    /// surviving node would lose its canonical path.
    pub fn retain<F: FnMut(&Lattice, NodeId) -> bool>(&mut self, mut keep: F) -> Result<Removal> {
        let mut doomed = vec![false; self.nodes.len()];
        for id in self.node_ids().collect::<Vec<_>>() {
            if id != self.sos && !keep(self, id) {
                doomed[id.index()] = true;
            }
        }
        self.remove_marked(&doomed, false)
    }

    /// Removes every node that cannot reach a terminal node.
    pub fn prune_dead_ends(&mut self) -> Result<Removal> {
        let alive = self.reaches_terminal();
        self.retain(|_, id| alive[id.index()])
    }

    /// For every id, whether that node can reach some terminal node.
    pub fn reaches_terminal(&self) -> Vec<bool> {
        let mut alive = vec![false; self.nodes.len()];
        let mut queue: VecDeque<NodeId> = self.terminals.iter().copied().collect();
        for t in &self.terminals {
            alive[t.index()] = true;
        }
        while let Some(n) = queue.pop_front() {
            for &(p, _) in self.predecessors(n) {
                if !alive[p.index()] {
                    alive[p.index()] = true;
                    queue.push_back(p);
                }
            }
        }
        alive
    }

    /// For every id, whether it is reachable from the start node.
    pub fn reachable_from_start(&self) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.sos];
        seen[self.sos.index()] = true;
        while let Some(n) = stack.pop() {
            for &(d, _) in self.successors(n) {
                if !seen[d.index()] {
                    seen[d.index()] = true;
                    stack.push(d);
                }
            }
        }
        seen
    }

    fn remove_marked(&mut self, doomed: &[bool], reroute: bool) -> Result<Removal> {
        let is_doomed = |id: NodeId| doomed.get(id.index()).copied().unwrap_or(false);
        let mut pending_mrg = Vec::new();
        let mut removed = Vec::new();
        for id in self.node_ids() {
            if !is_doomed(id) {
                continue;
            }
            if id == self.sos {
                return Err(LatticeError::RemoveStart);
            }
            removed.push(id);
            for &(d, kind) in self.successors(id) {
                if is_doomed(d) {
                    continue;
                }
                match kind {
                    EdgeKind::Gen => {
                        return Err(LatticeError::Invariant(format!(
                            "removing {id} would orphan its surviving child {d}"
                        )))
                    }
                    EdgeKind::Mrg => pending_mrg.push((id, d)),
                }
            }
            for &(s, kind) in self.predecessors(id) {
                if kind == EdgeKind::Mrg && !is_doomed(s) {
                    pending_mrg.push((s, id));
                }
            }
        }

        for &id in &removed {
            for (d, _) in std::mem::take(&mut self.out[id.index()]) {
                if !is_doomed(d) {
                    self.inc[d.index()].retain(|&(s, _)| s != id);
                }
            }
            for (s, _) in std::mem::take(&mut self.inc[id.index()]) {
                if !is_doomed(s) {
                    self.out[s.index()].retain(|&(d, _)| d != id);
                }
            }
            self.nodes[id.index()] = None;
            self.terminals.remove(&id);
            self.live -= 1;
        }

        let mut outcome = Removal {
            removed,
            ..Removal::default()
        };
        if reroute {
            for (s, d) in pending_mrg {
                let (s, d) = (self.resolve(s), self.resolve(d));
                if !self.is_live(s) || !self.is_live(d) {
                    continue;
                }
                if self.has_edge(s, d) {
                    outcome.dropped_duplicate += 1;
                } else if self.reaches(d, s) {
                    outcome.dropped_cycle += 1;
                } else {
                    self.push_edge(s, d, EdgeKind::Mrg);
                    outcome.rerouted += 1;
                }
            }
        }
        self.after_mutation();
        Ok(outcome)
    }

    fn after_mutation(&self) {
        if self.strict {
            if let Err(e) = self.check_invariants() {
                panic!("{e}");
            }
        }
    }

    /// Verifies the structural invariants: one canonical path per node,
    /// consistent depths and adjacency, and acyclicity.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |m: String| Err(LatticeError::Invariant(m));
        let sos = self.live_node(self.sos)?;
        if sos.parent.is_some() || sos.depth != 0 {
            return bad("start node must have depth 0 and no parent".into());
        }
        let mut edge_set = std::collections::HashSet::new();
        for e in self.edges() {
            if !self.is_live(e.dst) {
                return bad(format!("edge {} -> {} ends at a removed node", e.src, e.dst));
            }
            if !edge_set.insert((e.src, e.dst)) {
                return bad(format!("duplicate edge {} -> {}", e.src, e.dst));
            }
            if !self.inc[e.dst.index()].contains(&(e.src, e.kind)) {
                return bad(format!("edge {} -> {} missing from incoming list", e.src, e.dst));
            }
        }
        let incoming_total: usize = self.node_ids().map(|n| self.inc[n.index()].len()).sum();
        if incoming_total != edge_set.len() {
            return bad("incoming and outgoing adjacency disagree".into());
        }
        for n in self.nodes() {
            let gen_in: Vec<_> = self.inc[n.id.index()]
                .iter()
                .filter(|(_, k)| *k == EdgeKind::Gen)
                .collect();
            if n.id == self.sos {
                if !gen_in.is_empty() {
                    return bad("start node has an incoming generation edge".into());
                }
                continue;
            }
            let Some(parent) = n.parent else {
                return bad(format!("{} has no parent", n.id));
            };
            if gen_in.len() != 1 || gen_in[0].0 != parent {
                return bad(format!("{} must have exactly one generation edge from {parent}", n.id));
            }
            let p = self.live_node(parent)?;
            if n.depth != p.depth + 1 {
                return bad(format!("{} has depth {} under parent depth {}", n.id, n.depth, p.depth));
            }
        }
        for t in &self.terminals {
            self.live_node(*t)?;
        }
        let order = self.topological_order()?;
        // Generation-only path counts, independent of the parent pointers.
        let mut gen_paths = vec![0u64; self.nodes.len()];
        gen_paths[self.sos.index()] = 1;
        for n in &order {
            let here = gen_paths[n.index()];
            for &(d, k) in self.successors(*n) {
                if k == EdgeKind::Gen {
                    gen_paths[d.index()] = gen_paths[d.index()].saturating_add(here);
                }
            }
        }
        for n in self.node_ids() {
            if gen_paths[n.index()] != 1 {
                return bad(format!(
                    "{n} has {} canonical paths instead of exactly one",
                    gen_paths[n.index()]
                ));
            }
        }
        Ok(())
    }
}

impl PartialEq for Lattice {
    /// Structural equality: same live nodes, edges, terminals and remapping.
    fn eq(&self, other: &Self) -> bool {
        self.to_json_value() == other.to_json_value()
    }
}
