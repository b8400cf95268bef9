use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EdgeKind, Lattice, LatticeError, LatticeNode, NodeId, Result};
use crate::union_find::UnionFind;

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: NodeId,
    token: u32,
    text: String,
    logprob: f64,
    eos: bool,
    depth: u32,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    src: NodeId,
    dst: NodeId,
    kind: EdgeKind,
}

#[derive(Serialize, Deserialize)]
struct LatticeRecord {
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    sos: NodeId,
    eos: Vec<NodeId>,
    /// `[removed, representative]` pairs for merged-away ids.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    remap: Vec<[u32; 2]>,
}

impl Lattice {
    fn to_record(&self) -> LatticeRecord {
        LatticeRecord {
            nodes: self
                .nodes()
                .map(|n| NodeRecord {
                    id: n.id,
                    token: n.token,
                    text: n.text.clone(),
                    logprob: n.log_prob,
                    eos: n.is_eos,
                    depth: n.depth,
                })
                .collect(),
            edges: self
                .edges()
                .map(|e| EdgeRecord {
                    src: e.src,
                    dst: e.dst,
                    kind: e.kind,
                })
                .collect(),
            sos: self.sos,
            eos: self.terminals.iter().copied().collect(),
            remap: self.remap.remapped().map(|(a, b)| [a, b]).collect(),
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self.to_record()).expect("lattice records always serialize")
    }

    /// Pretty-printed JSON: `{nodes, edges, sos, eos}` plus `remap` when
    /// any node has been merged away.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_record()).expect("lattice records always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: LatticeRecord = serde_json::from_str(text).map_err(|e| LatticeError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_record(rec)
    }

    fn from_record(rec: LatticeRecord) -> Result<Self> {
        let structural = |m: String| LatticeError::Parse {
            line: 0,
            column: 0,
            message: m,
        };
        let max_id = rec
            .nodes
            .iter()
            .map(|n| n.id.0)
            .chain(rec.remap.iter().flat_map(|p| p.iter().copied()))
            .max()
            .unwrap_or(0);
        let cap = max_id as usize + 1;
        let mut nodes: Vec<Option<LatticeNode>> = vec![None; cap];
        for n in rec.nodes {
            let slot = &mut nodes[n.id.index()];
            if slot.is_some() {
                return Err(structural(format!("duplicate node id {}", n.id)));
            }
            *slot = Some(LatticeNode {
                id: n.id,
                token: n.token,
                text: n.text,
                log_prob: n.logprob,
                is_eos: n.eos,
                depth: n.depth,
                parent: None,
                expanded: false,
            });
        }
        if nodes.get(rec.sos.index()).is_none_or(Option::is_none) {
            return Err(structural(format!("start node {} is not listed", rec.sos)));
        }
        let live = nodes.iter().flatten().count();
        let mut lattice = Lattice {
            nodes,
            out: vec![Vec::new(); cap],
            inc: vec![Vec::new(); cap],
            sos: rec.sos,
            terminals: Default::default(),
            remap: UnionFind::new(),
            rejected_merges: 0,
            live,
            strict: false,
        };
        lattice.remap.grow_to(max_id);
        for e in rec.edges {
            if !lattice.is_live(e.src) || !lattice.is_live(e.dst) {
                return Err(structural(format!("edge {} -> {} names an unknown node", e.src, e.dst)));
            }
            if e.kind == EdgeKind::Gen {
                let child = lattice.nodes[e.dst.index()].as_mut().expect("checked live");
                if child.parent.replace(e.src).is_some() {
                    return Err(structural(format!("{} has two generation parents", e.dst)));
                }
            }
            lattice.push_edge(e.src, e.dst, e.kind);
        }
        for id in rec.eos {
            lattice.mark_terminal(id).map_err(|e| structural(e.to_string()))?;
        }
        for [from, to] in rec.remap {
            lattice.remap.union_into(from, to);
        }
        // Nodes that can no longer be expanded are closed.
        for n in lattice.nodes.iter_mut().flatten() {
            n.expanded = true;
        }
        lattice
            .check_invariants()
            .map_err(|e| structural(e.to_string()))?;
        Ok(lattice)
    }

    /// Graphviz rendering: generation edges solid, merge edges dashed.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph lattice {\n  rankdir=LR;\n  node [shape=box];\n");
        for n in self.nodes() {
            let label = n.text.replace('\\', "\\\\").replace('"', "\\\"");
            let shape = if self.is_terminal(n.id) {
                ", peripheries=2"
            } else {
                ""
            };
            let _ = writeln!(out, "  {} [label=\"{}\"{}];", n.id.0, label, shape);
        }
        for e in self.edges() {
            let style = match e.kind {
                EdgeKind::Gen => "",
                EdgeKind::Mrg => " [style=dashed, color=orange]",
            };
            let _ = writeln!(out, "  {} -> {}{};", e.src.0, e.dst.0, style);
        }
        out.push_str("}\n");
        out
    }
}
