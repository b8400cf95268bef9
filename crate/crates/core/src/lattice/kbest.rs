use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Lattice, NodeId, Path, Result};

struct Partial {
    bound: f64,
    seq: usize,
    state: usize,
    /// The path ends at `state`'s node rather than continuing past it.
    done: bool,
}

impl PartialEq for Partial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Partial {}
impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Partial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// The `k` highest-scoring complete paths, best first.
///
/// A* over partial paths with an exact completion heuristic (the best score
/// reachable from each node), so complete paths pop in score order.
pub fn best_paths(lattice: &Lattice, k: usize) -> Result<Vec<Path>> {
    let order = lattice.topological_order()?;
    let mut best_rest = vec![f64::NEG_INFINITY; lattice.id_capacity()];
    for &n in order.iter().rev() {
        let mut best = if lattice.is_terminal(n) { 0.0 } else { f64::NEG_INFINITY };
        for &(d, _) in lattice.successors(n) {
            let lp = lattice.node(d).map_or(f64::NEG_INFINITY, |x| x.log_prob);
            best = best.max(lp + best_rest[d.index()]);
        }
        best_rest[n.index()] = best;
    }

    // Arena of (node, score so far, parent state).
    let mut states: Vec<(NodeId, f64, Option<usize>)> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    let sos = lattice.sos();
    if best_rest[sos.index()].is_finite() {
        states.push((sos, 0.0, None));
        heap.push(Partial {
            bound: best_rest[sos.index()],
            seq,
            state: 0,
            done: false,
        });
    }

    let mut found = Vec::new();
    while let Some(Partial { state, done, .. }) = heap.pop() {
        if found.len() >= k {
            break;
        }
        let (node, score, _) = states[state];
        if done {
            let mut nodes = Vec::new();
            let mut cur = Some(state);
            while let Some(s) = cur {
                nodes.push(states[s].0);
                cur = states[s].2;
            }
            nodes.reverse();
            found.push(lattice.path_from_nodes(&nodes)?);
            continue;
        }
        if lattice.is_terminal(node) {
            seq += 1;
            heap.push(Partial {
                bound: score,
                seq,
                state,
                done: true,
            });
        }
        for &(d, _) in lattice.successors(node) {
            let rest = best_rest[d.index()];
            if !rest.is_finite() {
                continue;
            }
            let g = score + lattice.node(d).map_or(0.0, |x| x.log_prob);
            seq += 1;
            states.push((d, g, Some(state)));
            heap.push(Partial {
                bound: g + rest,
                seq,
                state: states.len() - 1,
                done: false,
            });
        }
    }
    Ok(found)
}
