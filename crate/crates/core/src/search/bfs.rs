use super::{Frontier, Priority, Run, SearchConfig, SearchError, SearchResult};
use crate::model::ScoringModel;
use crate::recomb::{do_recomb_rcb, do_recomb_zip, MergeIndex, Strategy};
use crate::TokenId;

/// Best-first search with depth-first completion.
///
/// The greedy child of every expansion is pushed above all finite
/// priorities, so each expansion is followed by a greedy run to an end node
/// before any other branch is explored. At most one greedy run is in flight
/// at a time; if the budget runs out during it, its last node is kept as an
/// incomplete hypothesis. Every expanded node thus ends up on a complete
/// path, and the search spends its whole budget unless the frontier
/// empties first.
pub fn decode_bfs<M: ScoringModel + ?Sized>(
    model: &M,
    source: &[TokenId],
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    let mut run = Run::new(model, source, config);
    let recomb = config.recomb;
    let mut index = MergeIndex::new(recomb.suffix_n);
    let mut frontier = Frontier::new();
    frontier.push(run.lattice.sos(), Priority::Infinite);
    let budget = run.meter.budget();
    let max_len = config.max_len;

    while let Some(entry) = frontier.peek().copied() {
        let spent = run.meter.spent();
        if spent >= budget && entry.priority != Priority::Infinite {
            break;
        }
        frontier.pop();
        let node = entry.node;
        if !run.lattice.is_live(node) {
            run.diag.stale_entries += 1;
            continue;
        }
        let depth = run.depth(node);
        let free = run.is_eos(node) || depth >= max_len;

        if recomb.enabled() {
            if let Some(target) = index.find_target(&run.lattice, node, &recomb) {
                let ev = match recomb.strategy {
                    Strategy::Zip => do_recomb_zip(&mut run.lattice, node, target, &recomb, spent)?,
                    _ => do_recomb_rcb(&mut run.lattice, node, target, spent)?,
                };
                let accepted = ev.accepted;
                run.record(ev);
                if accepted {
                    continue;
                }
            }
        }

        if free {
            run.close(node)?;
            index.insert(&run.lattice, node);
            continue;
        }
        let Some(dist) = run.expand(node)? else {
            // Only the greedy run in flight gets here.
            run.diag.incomplete += 1;
            run.lattice.mark_terminal(node)?;
            break;
        };
        index.insert(&run.lattice, node);
        if dist.is_empty() {
            // Nothing can follow: the hypothesis ends here.
            run.close(node)?;
            continue;
        }
        for (i, &(tok, lp)) in dist.entries().iter().enumerate() {
            let (child, _) = run.child(node, tok, lp)?;
            let priority = if i == 0 {
                Priority::Infinite
            } else {
                Priority::Finite(config.score(run.log_prob(child), depth + 1))
            };
            frontier.push(child, priority);
        }
    }

    run.diag.frontier_left = frontier.len();
    if run.meter.exhausted() {
        run.diag.budget_exhausted = true;
    }
    run.lattice.retain(|l, id| !l.is_pending(id))?;
    run.finish(Vec::new())
}
