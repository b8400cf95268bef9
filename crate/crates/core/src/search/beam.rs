use std::collections::{HashMap, HashSet};

use super::{Algorithm, Run, SearchConfig, SearchError, SearchResult};
use crate::lattice::NodeId;
use crate::model::{ScoringModel, TokenDistribution};
use crate::recomb::{do_recomb_rcb, zbeam_candidates, zbeam_target, MergeIndex, Strategy};
use crate::TokenId;

/// Beam search returning `k` finished hypotheses.
pub fn decode_beam<M: ScoringModel + ?Sized>(
    model: &M,
    source: &[TokenId],
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    group_beam(model, source, config, 1, 0.0)
}

/// Diverse beam search: `groups` beams of `k / groups` hypotheses decoded in
/// turn at every step, each later group penalized by `diversity_strength`
/// times the number of earlier groups that chose the same token at this
/// step (Hamming diversity).
pub fn decode_diverse_beam<M: ScoringModel + ?Sized>(
    model: &M,
    source: &[TokenId],
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    if config.algorithm == Algorithm::Dbs {
        group_beam(model, source, config, config.groups(), config.diversity_strength)
    } else {
        let mut cfg = config.clone();
        cfg.algorithm = Algorithm::Dbs;
        cfg.validate()?;
        group_beam(model, source, &cfg, cfg.groups(), cfg.diversity_strength)
    }
}

#[derive(Clone, Copy, Debug)]
struct Hyp {
    node: NodeId,
    log_prob: f64,
    len: usize,
}

#[derive(Clone, Copy, Debug)]
struct Finished {
    node: NodeId,
    score: f64,
}

struct Candidate {
    parent: usize,
    token: TokenId,
    token_lp: f64,
    log_prob: f64,
    rank_score: f64,
}

struct Group {
    beam: Vec<Hyp>,
    finished: Vec<Finished>,
    done: bool,
}

impl Group {
    /// Worst λ-adjusted score among the best `width` finished hypotheses.
    fn worst_kept(&self, width: usize) -> Option<f64> {
        if self.finished.len() < width {
            return None;
        }
        let mut scores: Vec<f64> = self.finished.iter().map(|f| f.score).collect();
        scores.sort_by(|a, b| b.total_cmp(a));
        Some(scores[width - 1])
    }
}

fn group_beam<M: ScoringModel + ?Sized>(
    model: &M,
    source: &[TokenId],
    config: &SearchConfig,
    groups: usize,
    strength: f64,
) -> Result<SearchResult, SearchError> {
    let mut run = Run::new(model, source, config);
    let width = config.k / groups;
    let eos = model.eos_id();
    let max_len = config.max_len;
    let recomb = config.recomb;
    let mut index = MergeIndex::new(recomb.suffix_n);
    let mut cache: HashMap<NodeId, TokenDistribution> = HashMap::new();
    let sos = run.lattice.sos();
    let mut state: Vec<Group> = (0..groups)
        .map(|_| Group {
            beam: vec![Hyp {
                node: sos,
                log_prob: 0.0,
                len: 0,
            }],
            finished: Vec::new(),
            done: false,
        })
        .collect();
    let mut out_of_budget = false;

    for step in 0..max_len {
        let mut chosen: HashMap<TokenId, usize> = HashMap::new();
        let mut selected: HashSet<NodeId> = HashSet::new();
        for g in 0..groups {
            if state[g].done || state[g].beam.is_empty() {
                state[g].done = true;
                continue;
            }
            let beam = state[g].beam.clone();
            let mut cands = Vec::new();
            for (i, h) in beam.iter().enumerate() {
                let dist = match cache.get(&h.node) {
                    Some(d) => d.clone(),
                    None => match run.expand(h.node)? {
                        Some(d) => {
                            cache.insert(h.node, d.clone());
                            d
                        }
                        None => {
                            out_of_budget = true;
                            break;
                        }
                    },
                };
                for &(tok, lp) in dist.entries() {
                    let penalty = strength * chosen.get(&tok).copied().unwrap_or(0) as f64;
                    let log_prob = h.log_prob + lp;
                    cands.push(Candidate {
                        parent: i,
                        token: tok,
                        token_lp: lp,
                        log_prob,
                        rank_score: config.score(log_prob, h.len + 1) - penalty,
                    });
                }
            }
            if out_of_budget {
                break;
            }
            // Stable: ties keep beam order, then token order.
            cands.sort_by(|a, b| b.rank_score.total_cmp(&a.rank_score));

            let mut next: Vec<Hyp> = Vec::new();
            let mut kept_tokens = Vec::new();
            for (rank, c) in cands.iter().enumerate() {
                if next.len() >= width {
                    break;
                }
                let parent = beam[c.parent];
                let len = parent.len + 1;
                if c.token == eos {
                    if rank < width {
                        let (node, _) = run.child(parent.node, c.token, c.token_lp)?;
                        run.close(node)?;
                        state[g].finished.push(Finished {
                            node,
                            score: config.score(c.log_prob, len),
                        });
                        kept_tokens.push(c.token);
                    }
                    continue;
                }
                let (node, created) = run.child(parent.node, c.token, c.token_lp)?;
                if len >= max_len {
                    run.close(node)?;
                    state[g].finished.push(Finished {
                        node,
                        score: config.score(c.log_prob, len),
                    });
                    kept_tokens.push(c.token);
                    continue;
                }
                if recomb.enabled() && created && !selected.contains(&node) {
                    let target = match recomb.strategy {
                        Strategy::Zbeam => {
                            let mut pool: Vec<NodeId> = beam.iter().map(|h| h.node).collect();
                            pool.extend(next.iter().map(|h| h.node));
                            let cands = zbeam_candidates(&run.lattice, &pool);
                            zbeam_target(&run.lattice, &cands, node, &recomb)
                        }
                        _ => index.find_target(&run.lattice, node, &recomb),
                    };
                    if let Some(target) = target {
                        let mut ev = do_recomb_rcb(&mut run.lattice, node, target, run.meter.spent())?;
                        ev.strategy = recomb.strategy;
                        let accepted = ev.accepted;
                        run.record(ev);
                        if accepted {
                            kept_tokens.push(c.token);
                            continue;
                        }
                    }
                }
                if recomb.strategy == Strategy::Rcb && !selected.contains(&node) {
                    index.insert(&run.lattice, node);
                }
                selected.insert(node);
                next.push(Hyp {
                    node,
                    log_prob: c.log_prob,
                    len,
                });
                kept_tokens.push(c.token);
            }
            for t in kept_tokens {
                *chosen.entry(t).or_default() += 1;
            }
            state[g].beam = next;
            if state[g].beam.is_empty() {
                state[g].done = true;
            } else if let Some(worst) = state[g].worst_kept(width) {
                let lambda = config.lambda;
                let best_live = state[g]
                    .beam
                    .iter()
                    .map(|h| h.log_prob + (lambda * (h.len + 1) as f64).max(lambda * max_len as f64))
                    .fold(f64::NEG_INFINITY, f64::max);
                if best_live <= worst {
                    state[g].done = true;
                }
            }
        }
        log::trace!("beam step {step}: {} expansions", run.meter.spent());
        if out_of_budget || state.iter().all(|g| g.done) {
            break;
        }
    }

    // Hypotheses still alive when the budget ran out are closed as they are.
    if out_of_budget {
        for g in state.iter_mut() {
            for h in &g.beam {
                if !run.lattice.is_terminal(h.node) {
                    run.diag.incomplete += 1;
                    run.lattice.mark_terminal(h.node)?;
                }
                g.finished.push(Finished {
                    node: h.node,
                    score: config.score(h.log_prob, h.len),
                });
            }
        }
    }

    let mut returned = Vec::new();
    let mut seen = HashSet::new();
    for g in &mut state {
        g.finished.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut kept = 0;
        for f in &g.finished {
            if kept == width {
                break;
            }
            let node = run.lattice.resolve(f.node);
            if run.lattice.is_live(node) && seen.insert(node) {
                returned.push((node, f.score));
                kept += 1;
            }
        }
    }
    returned.sort_by(|a, b| b.1.total_cmp(&a.1));
    let keep: HashSet<NodeId> = returned.iter().map(|r| r.0).collect();
    for t in run.lattice.terminals().clone() {
        if !keep.contains(&t) {
            run.lattice.unmark_terminal(t);
        }
    }
    let reach = run.lattice.reaches_terminal();
    run.lattice.retain(|_, id| reach[id.index()])?;
    run.finish(returned.into_iter().map(|r| r.0).collect())
}
